"""Navigation probability model.

Transition softmax (branching-penalized cosine), incremental reach
propagation over the DAG, a path-enumeration oracle, discovery and success
probabilities, organization effectiveness, and report export.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import TopicVector, UndefinedSimilarityError
from .lake import DataLake, Table
from .organization import Organization

log = logging.getLogger("lakeorg.navmodel")

# A user's query topic is just a topic vector (support must be positive).
QueryTopic = TopicVector

PATH_ENUMERATION_GUARD = 1_000_000


class OrgSnapshot:
    """Index-aligned arrays for one organization, shared by all propagations.

    Column order is the (deterministic) topological order, root first.
    """

    def __init__(self, org: Organization):
        self.org = org
        self.ids: list[str] = org.topo_order()
        self.index = {sid: i for i, sid in enumerate(self.ids)}
        self.root_idx = self.index[org.root]
        n = len(self.ids)
        states = org.states
        self.children_idx: list[np.ndarray] = [
            np.array([self.index[c] for c in states[sid].children], dtype=np.int64)
            for sid in self.ids
        ]
        self.parent_idx: list[list[int]] = [
            sorted(self.index[p] for p in states[sid].parents) for sid in self.ids
        ]
        self.child_pos: list[dict[int, int]] = [
            {int(c): j for j, c in enumerate(cs)} for cs in self.children_idx
        ]
        unit = np.zeros((n, states[self.ids[0]].topic.mean.shape[0]), dtype=np.float64)
        for i, sid in enumerate(self.ids):
            unit[i] = states[sid].topic.unit()
        self.unit = unit
        self.gamma = org.gamma

    @property
    def n_states(self) -> int:
        return len(self.ids)

    def leaf_col(self, attr_id: str) -> int:
        return self.index[self.org.attr_leaf()[attr_id]]

    def weights(self, x_unit: np.ndarray, state_idx: int) -> np.ndarray:
        """Row-stochastic transition weights from one state for query rows."""
        c = self.children_idx[state_idx]
        k = x_unit @ self.unit[c].T
        z = (self.gamma / c.size) * k
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def query_rows(topics: list[TopicVector]) -> np.ndarray:
    """Unit-normalized query matrix, one row per topic."""
    return np.vstack([t.unit() for t in topics])


def propagate(snap: OrgSnapshot, x_unit: np.ndarray) -> np.ndarray:
    """Reach probability of every state for every query row (root = 1)."""
    m = x_unit.shape[0]
    reach = np.zeros((m, snap.n_states), dtype=np.float64)
    reach[:, snap.root_idx] = 1.0
    for s in range(snap.n_states):
        c = snap.children_idx[s]
        if c.size == 0:
            continue
        w = snap.weights(x_unit, s)
        reach[:, c] += w * reach[:, s][:, None]
    return reach


def recompute_columns(snap: OrgSnapshot, x_unit: np.ndarray, reach: np.ndarray,
                      affected: set[int]) -> None:
    """Recompute reach at the affected states only, in place.

    Reach values at unaffected states are trusted as-is; transition weights
    at frontier parents are recomputed (they equal their cached behaviour
    whenever the parent's child set and child topics are unchanged).
    """
    memo: dict[int, np.ndarray] = {}
    for v in range(snap.n_states):
        if v not in affected:
            continue
        if v == snap.root_idx:
            reach[:, v] = 1.0
            continue
        acc = np.zeros(x_unit.shape[0], dtype=np.float64)
        for p in snap.parent_idx[v]:
            w = memo.get(p)
            if w is None:
                w = snap.weights(x_unit, p)
                memo[p] = w
            acc += w[:, snap.child_pos[p][v]] * reach[:, p]
        reach[:, v] = acc


def _require_covered(*topics: TopicVector) -> None:
    for t in topics:
        if t.support <= 0:
            raise UndefinedSimilarityError("query/state topic has zero support")


def transition_prob(org: Organization, s: str, c: str, query: QueryTopic) -> float:
    """Softmax over ch(s) of branching-penalized cosine similarity to the query."""
    state = org.states[s]
    if c not in state.children:
        raise ValueError(f"{c} is not a child of {s}")
    _require_covered(query, *(org.states[k].topic for k in state.children))
    snap = OrgSnapshot(org)
    w = snap.weights(query.unit()[None, :], snap.index[s])[0]
    return float(w[snap.child_pos[snap.index[s]][snap.index[c]]])


def reach_probs(org: Organization, query: QueryTopic) -> dict[str, float]:
    """Reach probability of every state, evaluated incrementally (topological)."""
    _require_covered(query)
    snap = OrgSnapshot(org)
    row = propagate(snap, query.unit()[None, :])[0]
    return {sid: float(row[i]) for i, sid in enumerate(snap.ids)}


def brute_force_reach(org: Organization, s: str, query: QueryTopic,
                      max_paths: int = PATH_ENUMERATION_GUARD) -> float:
    """Oracle: sum over all root-to-s discovery sequences of the product of
    transition probabilities. Refuses when the path count exceeds the guard."""
    _require_covered(query)
    snap = OrgSnapshot(org)
    target = snap.index[s]
    counts: list[int] = [0] * snap.n_states
    counts[snap.root_idx] = 1
    for v in range(snap.n_states):
        for p in snap.parent_idx[v]:
            counts[v] += counts[p]
    if counts[target] > max_paths:
        raise ValueError(f"path count {counts[target]} exceeds guard {max_paths}")
    xu = query.unit()[None, :]
    memo: dict[int, np.ndarray] = {}

    def weight(p: int, v: int) -> float:
        w = memo.get(p)
        if w is None:
            w = snap.weights(xu, p)[0]
            memo[p] = w
        return float(w[snap.child_pos[p][v]])

    def up(v: int) -> float:
        if v == snap.root_idx:
            return 1.0
        return sum(weight(p, v) * up(p) for p in snap.parent_idx[v])

    return up(target)


def discovery_prob_attribute(org: Organization, attr) -> float:
    """Reach probability of the attribute's leaf with the attribute as query."""
    leaf = org.attr_leaf().get(attr.id)
    if leaf is None:
        raise ValueError(f"attribute {attr.id} has no leaf in this organization")
    return reach_probs(org, attr.topic)[leaf]


def complement_product(probs) -> float:
    """1 - prod(1 - p): discovery through any of several routes."""
    out = 1.0
    for p in probs:
        out *= 1.0 - p
    return 1.0 - out


def discovery_prob_table(org: Organization, table: Table, lake: DataLake) -> float:
    in_org = org.attr_leaf()
    probs = [
        discovery_prob_attribute(org, lake.attributes[a])
        for a in table.attribute_ids
        if a in in_org
    ]
    if not probs:
        raise ValueError(f"table {table.id} has no attribute in this organization")
    return complement_product(probs)


@dataclass
class EvalReport:
    """Per-attribute and per-table discovery results plus aggregates."""

    attr_discovery: dict[str, float]
    table_discovery: dict[str, float]
    effectiveness: float
    state_reach: dict[str, float]
    n_tables: int
    theta: float | None = None
    attr_success: dict[str, float] | None = None
    table_success: dict[str, float] | None = None
    mean_success: float | None = None
    excluded_tables: tuple[str, ...] = ()


def _success_vectors(lake: DataLake, attr_ids: list[str], probs: np.ndarray,
                     theta: float) -> np.ndarray:
    """Success per attribute: any sufficiently similar attribute may stand in."""
    pos = {a: i for i, a in enumerate(lake.attr_order)}
    rows = np.array([pos[a] for a in attr_ids], dtype=np.int64)
    sim = lake.similarity_matrix()[np.ix_(rows, rows)]
    out = np.empty(len(attr_ids), dtype=np.float64)
    comp = 1.0 - probs
    for i in range(len(attr_ids)):
        mask = sim[i] >= theta
        mask[i] = True  # the attribute itself always qualifies (kappa = 1)
        out[i] = 1.0 - float(np.prod(comp[mask]))
    return out


def evaluate(org: Organization, lake: DataLake, theta: float | None = None,
             attr_probs: dict[str, float] | None = None) -> EvalReport:
    """Full evaluation. ``attr_probs`` lets a caller substitute approximated
    per-attribute discovery probabilities (the report math is shared)."""
    in_org = org.attr_leaf()
    attr_ids = [a for a in lake.attr_order if a in in_org]
    if not attr_ids:
        raise ValueError("organization shares no attributes with the lake")
    snap = OrgSnapshot(org)
    if attr_probs is None:
        xu = query_rows([lake.attributes[a].topic for a in attr_ids])
        reach = propagate(snap, xu)
        probs = np.array([reach[i, snap.leaf_col(a)] for i, a in enumerate(attr_ids)])
        state_reach = {sid: float(v) for sid, v in zip(snap.ids, reach.mean(axis=0))}
    else:
        probs = np.array([attr_probs[a] for a in attr_ids], dtype=np.float64)
        state_reach = {}
    attr_discovery = {a: float(p) for a, p in zip(attr_ids, probs)}
    table_discovery: dict[str, float] = {}
    excluded: list[str] = []
    for tid in sorted(lake.tables):
        table = lake.tables[tid]
        in_scope = [a for a in table.attribute_ids if a in attr_discovery]
        if not in_scope:
            excluded.append(tid)
            continue
        table_discovery[tid] = complement_product(attr_discovery[a] for a in in_scope)
    if excluded:
        log.warning("%d tables have no in-scope attribute and are excluded", len(excluded))
    effectiveness = float(np.mean(list(table_discovery.values())))
    report = EvalReport(
        attr_discovery=attr_discovery,
        table_discovery=table_discovery,
        effectiveness=effectiveness,
        state_reach=state_reach,
        n_tables=len(table_discovery),
        excluded_tables=tuple(excluded),
    )
    if theta is not None:
        succ = _success_vectors(lake, attr_ids, probs, theta)
        report.theta = theta
        report.attr_success = {a: float(v) for a, v in zip(attr_ids, succ)}
        report.table_success = {
            tid: complement_product(
                report.attr_success[a]
                for a in lake.tables[tid].attribute_ids
                if a in report.attr_success
            )
            for tid in table_discovery
        }
        report.mean_success = float(np.mean(list(report.table_success.values())))
    return report


def effectiveness(org: Organization, lake: DataLake, theta: float | None = None) -> EvalReport:
    """Mean table discovery probability over the lake (the search objective)."""
    return evaluate(org, lake, theta=theta)


def reachability_map(org: Organization, lake: DataLake) -> dict[str, float]:
    """Mean reach of every state over all attribute query topics."""
    snap = OrgSnapshot(org)
    xu = query_rows([lake.attributes[a].topic for a in lake.attr_order])
    reach = propagate(snap, xu)
    return {sid: float(v) for sid, v in zip(snap.ids, reach.mean(axis=0))}


def reachability(org: Organization, s: str, lake: DataLake) -> float:
    return reachability_map(org, lake)[s]


def success_prob_attribute(org: Organization, attr, lake: DataLake,
                           theta: float = 0.9) -> float:
    report = evaluate(org, lake, theta=theta)
    return report.attr_success[attr.id]


def success_prob_table(org: Organization, table: Table, lake: DataLake,
                       theta: float = 0.9) -> float:
    report = evaluate(org, lake, theta=theta)
    return report.table_success[table.id]


def multidim_table_prob(orgs: list[Organization], table: Table, lake: DataLake) -> float:
    """Probability of discovering the table in any dimension (complement product).

    Dimensions holding none of the table's attributes contribute factor 1.
    """
    probs = []
    for org in orgs:
        in_org = org.attr_leaf()
        if any(a in in_org for a in table.attribute_ids):
            probs.append(discovery_prob_table(org, table, lake))
    return complement_product(probs)


def combine_reports(reports: list[EvalReport], lake: DataLake) -> EvalReport:
    """Any-dimension combination of per-dimension reports (tables only)."""
    table_ids = sorted({tid for r in reports for tid in r.table_discovery})
    table_discovery = {
        tid: complement_product(
            r.table_discovery[tid] for r in reports if tid in r.table_discovery
        )
        for tid in table_ids
    }
    combined = EvalReport(
        attr_discovery={},
        table_discovery=table_discovery,
        effectiveness=float(np.mean(list(table_discovery.values()))),
        state_reach={},
        n_tables=len(table_ids),
    )
    if all(r.table_success is not None for r in reports):
        combined.theta = reports[0].theta
        combined.table_success = {
            tid: complement_product(
                r.table_success[tid] for r in reports if tid in r.table_success
            )
            for tid in table_ids
        }
        combined.mean_success = float(np.mean(list(combined.table_success.values())))
    return combined


def monotonicity_violation_rate(org: Organization, lake: DataLake,
                                max_queries: int = 200) -> float:
    """Empirical rate of parent-child pairs where the child is *not* more
    similar to a query than its parent. Diagnostic only; the similarity
    monotonicity claim is not enforced as an invariant."""
    snap = OrgSnapshot(org)
    attr_ids = lake.attr_order[:max_queries]
    xu = query_rows([lake.attributes[a].topic for a in attr_ids])
    sims = xu @ snap.unit.T
    checked = 0
    violated = 0
    for s in range(snap.n_states):
        for c in snap.children_idx[s]:
            checked += xu.shape[0]
            violated += int(np.sum(sims[:, c] <= sims[:, s]))
    return violated / checked if checked else 0.0


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    """Per-table CSV: ``table_id,discovery_prob,success_prob``."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["table_id", "discovery_prob", "success_prob"])
        for tid in sorted(report.table_discovery):
            succ = "" if report.table_success is None else repr(report.table_success[tid])
            writer.writerow([tid, repr(report.table_discovery[tid]), succ])


def write_report_summary(report: EvalReport, path: str | Path) -> None:
    doc = {
        "effectiveness": report.effectiveness,
        "mean_success": report.mean_success,
        "n_tables": report.n_tables,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")
