"""Local search over organizations.

Sweeps states by (level, reachability), proposes parent additions and
deletions, evaluates candidates on the affected subgraph only (optionally
against attribute representatives), and accepts by the effectiveness-ratio
rule. Also: k-medoids tag partitioning and multi-dimensional builds.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .approx import Representatives, select_representatives
from .clustering import cosine_distance_matrix, kmedoids
from .lake import DataLake, restrict_to_tags
from .navmodel import (EvalReport, OrgSnapshot, combine_reports, evaluate,
                       propagate, query_rows, recompute_columns)
from .organization import (TAG, Organization, State, canonical_children,
                           combined_topic, initial_org, validate)


@dataclass
class SearchConfig:
    gamma: float = 10.0
    max_iterations: int = 1000
    plateau_window: int = 50
    plateau_epsilon: float = 1e-4
    rng_seed: int = 0
    use_representatives: bool = True
    representative_fraction: float = 0.10
    dimensions: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.representative_fraction <= 1.0:
            raise ValueError("representative_fraction must be in (0, 1]")
        if self.plateau_window < 1:
            raise ValueError("plateau_window must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.dimensions < 1:
            raise ValueError("dimensions must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    state: str
    op: str | None
    eff_before: float
    eff_candidate: float | None
    accepted: bool
    best_eff: float
    states_revisited: int
    attrs_revisited: int
    n_states: int
    n_attrs: int


@dataclass
class SearchTrace:
    records: list[IterationRecord] = field(default_factory=list)
    terminated: str = ""
    no_applicable_ops: bool = False

    def visited_state_fractions(self) -> list[float]:
        return [r.states_revisited / r.n_states for r in self.records if r.op]

    def visited_attr_fractions(self) -> list[float]:
        return [r.attrs_revisited / r.n_attrs for r in self.records if r.op]

    def to_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(vars(r), sort_keys=True) + "\n")
            fh.write(json.dumps({"terminated": self.terminated,
                                 "no_applicable_ops": self.no_applicable_ops},
                                sort_keys=True) + "\n")


def load_config(path: str | Path) -> SearchConfig:
    """SearchConfig from a JSON file whose keys mirror the dataclass fields."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {f for f in SearchConfig.__dataclass_fields__}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown search-config fields: {unknown}")
    return SearchConfig(**doc)


def save_config(cfg: SearchConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(vars(cfg), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")


def accept(p_new: float, p_old: float, rng: random.Random) -> bool:
    """Accept improvements outright, others with probability p_new / p_old."""
    if p_old <= 0.0:
        return True
    if p_new >= p_old:
        return True
    return rng.random() < p_new / p_old


# ---------------------------------------------------------------------------
# Operator planning and application
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpPlan:
    kind: str  # "add_parent" | "delete_parent"
    target: str
    new_parent: str | None = None
    eliminated: tuple[str, ...] = ()


def plan_add_parent(org: Organization, s: str,
                    reach: dict[str, float]) -> OpPlan | None:
    """Pick the most reachable eligible state one level up as a new parent."""
    if s == org.root:
        return None
    lv = org.levels()
    l = lv[s]
    if l < 2:
        return None
    state = org.states[s]
    descendants = org.reachable_from(s)
    candidates = []
    for sid, level in lv.items():
        if level != l - 1 or sid in descendants:
            continue
        cand = org.states[sid]
        if cand.is_leaf or s in cand.children:
            continue
        # leaves may only hang off tag states; non-leaves never may
        if state.is_leaf != (cand.kind == TAG):
            continue
        candidates.append(sid)
    if not candidates:
        return None
    candidates.sort(key=lambda sid: (-reach.get(sid, 0.0), sid))
    return OpPlan(kind="add_parent", target=s, new_parent=candidates[0])


def plan_delete_parent(org: Organization, s: str,
                       reach: dict[str, float]) -> OpPlan | None:
    """Eliminate the least reachable non-root parent and its multi-tag siblings."""
    state = org.states[s]
    if s == org.root or state.is_leaf:
        return None
    eligible = [p for p in state.parents if p != org.root and org.states[p].kind != TAG]
    if not eligible:
        return None
    eligible.sort(key=lambda p: (reach.get(p, 0.0), p))
    r = eligible[0]
    siblings: set[str] = set()
    for p in org.states[r].parents:
        siblings.update(org.states[p].children)
    siblings.discard(r)
    eliminated = {r}
    for x in sorted(siblings):
        st = org.states[x]
        if x == s or x == org.root or st.is_leaf or st.kind == TAG:
            continue
        if len(st.tags) == 1:
            continue  # single-tag states always survive
        eliminated.add(x)
    return OpPlan(kind="delete_parent", target=s, eliminated=tuple(sorted(eliminated)))


def _apply_add(org: Organization, plan: OpPlan,
               lake: DataLake) -> dict[str, State | None]:
    s, n = plan.target, plan.new_parent
    changes: dict[str, State | None] = {}

    def cur(sid: str) -> State:
        st = changes.get(sid, org.states[sid])
        assert st is not None
        return st

    st_s = cur(s)
    need_attrs = st_s.attribute_ids
    need_tags = st_s.tags
    changes[s] = replace(st_s, parents=st_s.parents | {n})
    stack = [n]
    seen: set[str] = set()
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        st_u = cur(u)
        if need_attrs <= st_u.attribute_ids and need_tags <= st_u.tags:
            continue  # ancestors above are supersets already
        changes[u] = replace(
            st_u,
            attribute_ids=st_u.attribute_ids | need_attrs,
            tags=st_u.tags | need_tags,
            topic=combined_topic(st_u.attribute_ids | need_attrs, lake),
        )
        stack.extend(org.states[u].parents)
    st_n = cur(n)
    view = {sid: (changes.get(sid) or org.states[sid]) for sid in org.states}
    changes[n] = replace(st_n, children=canonical_children(st_n.children + (s,), view))
    return changes


def _apply_delete(org: Organization, plan: OpPlan) -> dict[str, State | None]:
    changes: dict[str, State | None] = {}

    def cur(sid: str) -> State | None:
        return changes[sid] if sid in changes else org.states.get(sid)

    for x in plan.eliminated:
        st_x = cur(x)
        assert st_x is not None
        kids = list(st_x.children)
        pars = sorted(st_x.parents)
        for p in pars:
            st_p = cur(p)
            if st_p is None:
                continue
            merged = [c for c in st_p.children if c != x]
            merged.extend(c for c in kids if c not in merged)
            changes[p] = replace(st_p, children=tuple(merged))
        for c in kids:
            st_c = cur(c)
            if st_c is None:
                continue
            changes[c] = replace(st_c, parents=(st_c.parents - {x}) | set(pars))
        changes[x] = None

    # defensive: drop interior states left childless by duplicate-edge collapse
    while True:
        view = {sid: st for sid in org.states
                if (st := cur(sid)) is not None}
        dead = sorted(sid for sid, st in view.items()
                      if not st.is_leaf and not st.children and sid != org.root)
        if not dead:
            break
        for x in dead:
            st_x = view[x]
            for p in sorted(st_x.parents):
                st_p = cur(p)
                if st_p is not None:
                    changes[p] = replace(
                        st_p, children=tuple(c for c in st_p.children if c != x))
            changes[x] = None

    # canonical order where child sets changed
    view = {sid: st for sid in org.states if (st := cur(sid)) is not None}
    for sid, st in list(changes.items()):
        if st is None:
            continue
        if set(st.children) != set(org.states[sid].children):
            changes[sid] = replace(st, children=canonical_children(st.children, view))
    return changes


def apply_plan(org: Organization, plan: OpPlan,
               lake: DataLake) -> tuple[Organization, set[str]]:
    """Candidate organization plus the states whose outgoing softmax changed."""
    if plan.kind == "add_parent":
        changes = _apply_add(org, plan, lake)
    elif plan.kind == "delete_parent":
        changes = _apply_delete(org, plan)
    else:
        raise ValueError(f"unknown op kind {plan.kind!r}")
    candidate = org.replace_states(changes)
    changed: set[str] = set()
    for sid, st in changes.items():
        if st is None:
            continue
        old = org.states[sid]
        if set(st.children) != set(old.children) or st.children != old.children:
            changed.add(sid)
        if st.attribute_ids != old.attribute_ids:
            changed.update(p for p in st.parents if candidate.states.get(p) is not None)
    changed = {sid for sid in changed if sid in candidate.states}
    return candidate, changed


def downstream_closure(org: Organization, changed: set[str]) -> set[str]:
    """All states whose reach can differ: strict descendants of changed states."""
    affected: set[str] = set()
    stack: list[str] = []
    for sid in changed:
        stack.extend(org.states[sid].children)
    while stack:
        u = stack.pop()
        if u in affected:
            continue
        affected.add(u)
        stack.extend(org.states[u].children)
    return affected


def op_add_parent(org: Organization, s: str, lake: DataLake,
                  reach: dict[str, float] | None = None) -> Organization | None:
    """Candidate with a new parent for s, or None when inapplicable."""
    if reach is None:
        from .navmodel import reachability_map
        reach = reachability_map(org, lake)
    plan = plan_add_parent(org, s, reach)
    if plan is None:
        return None
    return apply_plan(org, plan, lake)[0]


def op_delete_parent(org: Organization, s: str, lake: DataLake,
                     reach: dict[str, float] | None = None) -> Organization | None:
    """Candidate with s's least reachable parent eliminated, or None."""
    if reach is None:
        from .navmodel import reachability_map
        reach = reachability_map(org, lake)
    plan = plan_delete_parent(org, s, reach)
    if plan is None:
        return None
    return apply_plan(org, plan, lake)[0]


def affected_subgraph(org: Organization, op_kind: str, s: str, lake: DataLake,
                      reach: dict[str, float] | None = None
                      ) -> tuple[set[str], set[str]] | None:
    """States and attributes whose discovery probabilities an op may change.

    Computed on the candidate graph: the downward closure of every state
    whose child set or child topics the operation touches.
    """
    if reach is None:
        from .navmodel import reachability_map
        reach = reachability_map(org, lake)
    plan = (plan_add_parent if op_kind == "add_parent" else plan_delete_parent)(org, s, reach)
    if plan is None:
        return None
    candidate, changed = apply_plan(org, plan, lake)
    affected = downstream_closure(candidate, changed)
    leaf_of = candidate.attr_leaf()
    attrs = {a for a, sid in leaf_of.items() if sid in affected}
    return affected | changed, attrs


# ---------------------------------------------------------------------------
# Incremental evaluation with a per-query reach cache
# ---------------------------------------------------------------------------

@dataclass
class CandidateEval:
    org: Organization
    snap: OrgSnapshot
    reach: np.ndarray
    attr_prob: np.ndarray
    table_prob: np.ndarray
    eff: float
    op: str
    states_revisited: int
    attrs_revisited: int


class IncrementalEvaluator:
    """Owns the current organization plus cached reach/probability arrays.

    Queries are either all attribute topics (exact mode) or representative
    topics; each attribute reads its probability from its query row.
    """

    def __init__(self, org: Organization, lake: DataLake,
                 reps: Representatives | None = None):
        self.lake = lake
        self.attr_ids = list(lake.attr_order)
        self.attr_pos = {a: i for i, a in enumerate(self.attr_ids)}
        if reps is None:
            self.query_ids = list(self.attr_ids)
            self.attr_row = {a: i for i, a in enumerate(self.attr_ids)}
        else:
            self.query_ids = list(reps.rep_ids)
            row_of = {r: i for i, r in enumerate(self.query_ids)}
            self.attr_row = {a: row_of[reps.assignment[a]] for a in self.attr_ids}
        self.xu = query_rows([lake.attributes[q].topic for q in self.query_ids])
        weights = np.zeros(len(self.query_ids), dtype=np.float64)
        for a in self.attr_ids:
            weights[self.attr_row[a]] += 1.0
        self.row_weight = weights / weights.sum()
        self.table_ids = sorted(lake.tables)
        self.table_attr_idx = [
            np.array([self.attr_pos[a] for a in lake.tables[t].attribute_ids],
                     dtype=np.int64)
            for t in self.table_ids
        ]
        self.tables_of_attr: list[list[int]] = [[] for _ in self.attr_ids]
        for ti, idxs in enumerate(self.table_attr_idx):
            for ai in idxs:
                self.tables_of_attr[ai].append(ti)
        self._adopt_full(org)

    def _adopt_full(self, org: Organization) -> None:
        self.org = org
        self.snap = OrgSnapshot(org)
        self.reach = propagate(self.snap, self.xu)
        self.attr_prob = np.array([
            self.reach[self.attr_row[a], self.snap.leaf_col(a)] for a in self.attr_ids
        ])
        self.table_prob = self._table_probs(self.attr_prob)
        self.eff = float(np.mean(self.table_prob))
        self._refresh_reach_map()

    def _table_probs(self, attr_prob: np.ndarray) -> np.ndarray:
        return np.array([
            1.0 - float(np.prod(1.0 - attr_prob[idxs])) for idxs in self.table_attr_idx
        ])

    def _refresh_reach_map(self) -> None:
        means = self.row_weight @ self.reach
        self.reach_map = {sid: float(means[i]) for i, sid in enumerate(self.snap.ids)}

    def propose(self, plan: OpPlan) -> CandidateEval:
        candidate, changed = apply_plan(self.org, plan, self.lake)
        snap_c = OrgSnapshot(candidate)
        carry = np.array([self.snap.index[sid] for sid in snap_c.ids], dtype=np.int64)
        reach_c = self.reach[:, carry]
        affected_ids = downstream_closure(candidate, changed)
        affected_idx = {snap_c.index[sid] for sid in affected_ids}
        recompute_columns(snap_c, self.xu, reach_c, affected_idx)
        leaf_of = candidate.attr_leaf()
        attr_prob = self.attr_prob.copy()
        touched_tables: set[int] = set()
        n_attrs_hit = 0
        for a, sid in leaf_of.items():
            if sid in affected_ids:
                ai = self.attr_pos[a]
                attr_prob[ai] = reach_c[self.attr_row[a], snap_c.index[sid]]
                touched_tables.update(self.tables_of_attr[ai])
                n_attrs_hit += 1
        table_prob = self.table_prob.copy()
        for ti in touched_tables:
            idxs = self.table_attr_idx[ti]
            table_prob[ti] = 1.0 - float(np.prod(1.0 - attr_prob[idxs]))
        return CandidateEval(
            org=candidate, snap=snap_c, reach=reach_c,
            attr_prob=attr_prob, table_prob=table_prob,
            eff=float(np.mean(table_prob)), op=plan.kind,
            states_revisited=len(affected_idx | {snap_c.index[c] for c in changed}),
            attrs_revisited=n_attrs_hit,
        )

    def commit(self, cand: CandidateEval) -> None:
        self.org = cand.org
        self.snap = cand.snap
        self.reach = cand.reach
        self.attr_prob = cand.attr_prob
        self.table_prob = cand.table_prob
        self.eff = cand.eff
        self._refresh_reach_map()


# ---------------------------------------------------------------------------
# The search loop
# ---------------------------------------------------------------------------

def _sweep(org: Organization, reach: dict[str, float],
           remaining: set[str] | None = None) -> deque[str]:
    """States by level (from 1) then reachability (lowest first); leaves skipped.

    With ``remaining`` given, the current downward traversal continues over
    just those states, re-sorted under the mutated organization.
    """
    lv = org.levels()
    order = [sid for sid in org.states
             if sid != org.root and not org.states[sid].is_leaf
             and (remaining is None or sid in remaining)]
    order.sort(key=lambda sid: (lv[sid], reach.get(sid, 0.0), sid))
    return deque(order)


def state_to_modify(org: Organization, lake: DataLake,
                    reach: dict[str, float] | None = None) -> list[str]:
    """One full downward traversal's proposal order (ties broken by id)."""
    if reach is None:
        from .navmodel import reachability_map
        reach = reachability_map(org, lake)
    return list(_sweep(org, reach))


def _best_candidate(ev: IncrementalEvaluator, s: str) -> CandidateEval | None:
    """Evaluate both operators (pruned) and keep the more effective candidate."""
    best: CandidateEval | None = None
    for planner in (plan_delete_parent, plan_add_parent):
        plan = planner(ev.org, s, ev.reach_map)
        if plan is None:
            continue
        cand = ev.propose(plan)
        if best is None or cand.eff > best.eff:
            best = cand
    return best


def choose_apply_op(org: Organization, s: str, lake: DataLake,
                    cfg: SearchConfig) -> Organization:
    """Spec-level convenience: better of the two candidates, org if neither applies."""
    reps = None
    if cfg.use_representatives and cfg.representative_fraction < 1.0:
        reps = select_representatives(lake, cfg.representative_fraction, cfg.rng_seed)
    ev = IncrementalEvaluator(org, lake, reps)
    cand = _best_candidate(ev, s)
    return org if cand is None else cand.org


def organize(lake: DataLake, init: Organization,
             cfg: SearchConfig) -> tuple[Organization, SearchTrace]:
    """Local search from ``init``; returns the best-seen organization.

    Deterministic for fixed (lake, init, cfg): the only randomness is the
    seeded acceptance draw.
    """
    problems = validate(init, lake)
    if problems:
        raise ValueError(f"initial organization invalid: {problems[:3]}")
    reps = None
    if cfg.use_representatives and cfg.representative_fraction < 1.0:
        reps = select_representatives(lake, cfg.representative_fraction, cfg.rng_seed)
    ev = IncrementalEvaluator(init, lake, reps)
    rng = random.Random(cfg.rng_seed)
    trace = SearchTrace()
    best_org, best_eff = init, ev.eff
    if not math.isfinite(cfg.plateau_epsilon):
        trace.terminated = "plateau"
        return best_org, trace
    stale = 0
    it = 0
    sweep = _sweep(init, ev.reach_map)
    sweep_applicable = False
    while it < cfg.max_iterations:
        if stale >= cfg.plateau_window:
            trace.terminated = "plateau"
            break
        if not sweep:
            if not sweep_applicable:
                trace.terminated = "plateau"
                trace.no_applicable_ops = True
                break
            sweep = _sweep(ev.org, ev.reach_map)
            sweep_applicable = False
            continue
        s = sweep.popleft()
        eff_before = ev.eff
        cand = _best_candidate(ev, s)
        it += 1
        if cand is None:
            stale += 1
            trace.records.append(IterationRecord(
                iteration=it, state=s, op=None, eff_before=eff_before,
                eff_candidate=None, accepted=False, best_eff=best_eff,
                states_revisited=0, attrs_revisited=0,
                n_states=len(ev.org.states), n_attrs=len(ev.attr_ids)))
            continue
        sweep_applicable = True
        bugs = validate(cand.org, lake)
        if bugs:
            raise RuntimeError(f"{cand.op} produced an invalid organization: {bugs[:3]}")
        accepted = accept(cand.eff, ev.eff, rng)
        if accepted:
            ev.commit(cand)
            # the downward traversal continues over the unvisited remainder,
            # re-sorted under the mutated organization
            sweep = _sweep(ev.org, ev.reach_map, remaining=set(sweep))
        improved = ev.eff - best_eff > cfg.plateau_epsilon * max(best_eff, 1e-12)
        stale = 0 if improved else stale + 1
        if ev.eff > best_eff:
            best_eff = ev.eff
            best_org = ev.org
        trace.records.append(IterationRecord(
            iteration=it, state=s, op=cand.op, eff_before=eff_before,
            eff_candidate=cand.eff, accepted=accepted, best_eff=best_eff,
            states_revisited=cand.states_revisited,
            attrs_revisited=cand.attrs_revisited,
            n_states=len(ev.org.states), n_attrs=len(ev.attr_ids)))
    else:
        trace.terminated = "max_iterations"
    if not trace.terminated:
        trace.terminated = "max_iterations"
    return best_org, trace


# ---------------------------------------------------------------------------
# Multi-dimensional builds
# ---------------------------------------------------------------------------

def partition_tags(lake: DataLake, k: int, seed: int = 0) -> list[list[str]]:
    """k-medoids (PAM) partition of tags by their topic-vector cosine distance."""
    tags = lake.tags
    if k > len(tags):
        raise ValueError(f"k={k} exceeds tag count {len(tags)}")
    if k == len(tags):
        return [[t] for t in tags]
    vectors = np.vstack([
        combined_topic(sorted(lake.tag_index[t]), lake).mean for t in tags
    ])
    dist = cosine_distance_matrix(vectors)
    medoids, labels = kmedoids(dist, k, seed=seed, method="pam")
    groups = []
    for ci, m in enumerate(medoids):
        members = sorted(tags[i] for i in np.flatnonzero(labels == ci))
        groups.append((tags[m], members))
    groups.sort(key=lambda g: g[0])
    return [members for _, members in groups]


@dataclass
class MultidimBuild:
    organizations: list[Organization]
    tag_groups: list[list[str]]
    sub_lakes: list[DataLake]
    traces: list[SearchTrace]
    reports: list[EvalReport]
    combined: EvalReport


def build_multidim(lake: DataLake, cfg: SearchConfig,
                   theta: float | None = 0.9) -> MultidimBuild:
    """Partition tags, optimize one organization per group (concurrently),
    and combine per-table probabilities across dimensions."""
    groups = (partition_tags(lake, cfg.dimensions, cfg.rng_seed)
              if cfg.dimensions > 1 else [lake.tags])
    subs = [restrict_to_tags(lake, set(g)) for g in groups]

    def build(i: int) -> tuple[Organization, SearchTrace]:
        sub_cfg = replace(cfg, rng_seed=cfg.rng_seed + 7919 * i, dimensions=1)
        return organize(subs[i], initial_org(subs[i], cfg.gamma), sub_cfg)

    if len(groups) == 1:
        results = [build(0)]
    else:
        with ThreadPoolExecutor(max_workers=len(groups)) as pool:
            results = list(pool.map(build, range(len(groups))))
    orgs = [r[0] for r in results]
    traces = [r[1] for r in results]
    reports = [evaluate(orgs[i], subs[i], theta=theta) for i in range(len(groups))]
    return MultidimBuild(
        organizations=orgs, tag_groups=groups, sub_lakes=subs,
        traces=traces, reports=reports,
        combined=combine_reports(reports, lake),
    )
