export interface ChildSummary {
  id: string;
  label: string;
  kind: string;
  n_attributes: number;
}

export interface NavNodeView {
  id: string;
  label: string;
  kind: string;
  level: number;
  n_attributes: number;
  parents: string[];
  children: ChildSummary[];
  attribute_id?: string;
  table_id?: string;
}

export interface TableView {
  id: string;
  name: string;
  tags: string[];
  attributes: { id: string; name: string }[];
}

export interface AttributeView {
  id: string;
  name: string;
  table_id: string;
  table_name: string;
  tags: string[];
  leaf_id: string | null;
  sample_values: string[];
}

export interface OrgSummary {
  root: string;
  gamma: number;
  n_states: number;
  n_leaves: number;
  n_tables: number;
  n_attributes: number;
  effectiveness?: number;
  mean_success?: number | null;
}
