import type { AttributeView, NavNodeView, OrgSummary, TableView } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const resp = await fetch(`${base}${path}`);
  if (!resp.ok) {
    throw new ApiError(resp.status, `GET ${path} failed with ${resp.status}`);
  }
  return (await resp.json()) as T;
}

export class NavApi {
  constructor(private base: string = "") {}

  summary(): Promise<OrgSummary> {
    return getJson(this.base, "/api/org/summary");
  }

  node(id: string): Promise<NavNodeView> {
    return getJson(this.base, `/api/node/${encodeURIComponent(id)}`);
  }

  table(id: string): Promise<TableView> {
    return getJson(this.base, `/api/table/${encodeURIComponent(id)}`);
  }

  attribute(id: string): Promise<AttributeView> {
    return getJson(this.base, `/api/attribute/${encodeURIComponent(id)}`);
  }
}
