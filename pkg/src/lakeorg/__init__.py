"""lakeorg: navigation structures over data lakes.

Builds a rooted DAG ("organization") over the textual attributes of a data
lake, optimizes it under a Markov navigation model so tables are easy to
discover, evaluates it exactly or via attribute representatives with error
bounds, enriches missing metadata with per-tag classifiers, generates
benchmarks, and serves the result for interactive browsing.
"""

from .embedding import (EmbeddingStore, TopicVector, cosine, knn,
                        load_embeddings, tokenize, topic_vector)
from .lake import Attribute, DataLake, Table, data_of_tag, ingest, load_lake, save_lake
from .organization import (Organization, State, flat_org, initial_org, label,
                           labels, levels, load_org, save_org, validate)
from .navmodel import (EvalReport, brute_force_reach, discovery_prob_attribute,
                       discovery_prob_table, effectiveness, evaluate,
                       multidim_table_prob, reach_probs, reachability,
                       success_prob_attribute, success_prob_table,
                       transition_prob)
from .optimizer import (SearchConfig, SearchTrace, accept, affected_subgraph,
                        build_multidim, choose_apply_op, op_add_parent,
                        op_delete_parent, organize, partition_tags,
                        state_to_modify)
from .approx import (Representatives, approx_effectiveness, path_error_bound,
                     select_representatives, staleness_bound,
                     transition_error_bound)
from .enrich import TagClassifier, train_classifiers, transfer_tags
from .benchgen import BenchSpec, generate, zipf_sample

__version__ = "0.1.0"
