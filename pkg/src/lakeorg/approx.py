"""Representative-based approximate evaluation and its error bounds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import cosine_distance_matrix, kmedoids
from .embedding import TopicVector, cosine
from .lake import DataLake
from .navmodel import EvalReport, OrgSnapshot, evaluate, propagate, query_rows
from .organization import Organization


@dataclass(frozen=True)
class RepBlock:
    rep_attribute_id: str
    members: tuple[str, ...]


@dataclass
class Representatives:
    """Disjoint attribute blocks, each summarized by its medoid attribute."""

    fraction: float
    blocks: tuple[RepBlock, ...]
    assignment: dict[str, str]  # attribute id -> representative attribute id

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for b in self.blocks:
            if not b.members:
                raise ValueError("empty representative block")
            overlap = seen.intersection(b.members)
            if overlap:
                raise ValueError(f"attribute in two blocks: {sorted(overlap)[:3]}")
            seen.update(b.members)

    @property
    def rep_ids(self) -> list[str]:
        return [b.rep_attribute_id for b in self.blocks]


def select_representatives(lake: DataLake, fraction: float, seed: int = 0) -> Representatives:
    """ceil(fraction * |attributes|) blocks by k-medoids on topic vectors.

    The representative topic vector is the medoid attribute's own topic.
    Uses greedy (PAM BUILD) seeding plus alternating refinement: at
    benchmark scale the PAM swap scan is quadratic per candidate and
    needlessly slow for this use, while farthest-point seeds waste
    representatives on outliers.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    attr_ids = lake.attr_order
    n = len(attr_ids)
    k = math.ceil(fraction * n)
    vectors = np.vstack([lake.attributes[a].topic.mean for a in attr_ids])
    dist = cosine_distance_matrix(vectors)
    medoids, labels = kmedoids(dist, k, seed=seed, method="alternate", init="greedy")
    blocks = []
    assignment: dict[str, str] = {}
    for ci, m in enumerate(medoids):
        member_idx = np.flatnonzero(labels == ci)
        members = tuple(sorted(attr_ids[i] for i in member_idx))
        rep = attr_ids[m]
        blocks.append(RepBlock(rep_attribute_id=rep, members=members))
        for a in members:
            assignment[a] = rep
    blocks.sort(key=lambda b: b.rep_attribute_id)
    return Representatives(fraction=fraction, blocks=tuple(blocks), assignment=assignment)


def approx_attr_probs(org: Organization, lake: DataLake,
                      reps: Representatives) -> dict[str, float]:
    """P(A) approximated by the reach of A's leaf under A's representative topic."""
    in_org = org.attr_leaf()
    snap = OrgSnapshot(org)
    rep_ids = [r for r in reps.rep_ids]
    xu = query_rows([lake.attributes[r].topic for r in rep_ids])
    reach = propagate(snap, xu)
    row_of = {r: i for i, r in enumerate(rep_ids)}
    out: dict[str, float] = {}
    for a in lake.attr_order:
        if a in in_org:
            out[a] = float(reach[row_of[reps.assignment[a]], snap.leaf_col(a)])
    return out


def approx_effectiveness(org: Organization, lake: DataLake, reps: Representatives,
                         theta: float | None = None) -> EvalReport:
    """Report built from representative-approximated discovery probabilities."""
    return evaluate(org, lake, theta=theta, attr_probs=approx_attr_probs(org, lake, reps))


def _bound_factor(gamma_prime: float, kappa: float) -> float:
    return 1.0 - math.exp(-gamma_prime * max(0.0, 1.0 - kappa))


def transition_error_bound(org: Organization, m: str, s_i: str,
                           attr_topic: TopicVector, rep_topic: TopicVector) -> float:
    """Upper bound on the transition-probability error of substituting the
    representative for the attribute: P(s_i|m,A) * (1 - e^(-g'(1-kappa)))."""
    from .navmodel import transition_prob

    p = transition_prob(org, m, s_i, attr_topic)
    gamma_prime = org.gamma / len(org.states[m].children)
    return p * _bound_factor(gamma_prime, cosine(rep_topic, attr_topic))


def path_error_bound(org: Organization, path: list[str],
                     attr_topic: TopicVector, rep_topic: TopicVector) -> float:
    """Bound for a whole discovery sequence; each step uses its own penalty."""
    from .navmodel import transition_prob

    if len(path) < 2 or path[0] != org.root:
        raise ValueError("path must start at the root and take at least one step")
    for a, b in zip(path, path[1:]):
        if b not in org.states[a].children:
            raise ValueError(f"{b} is not a child of {a}")
    kappa = cosine(rep_topic, attr_topic)
    bound = 1.0
    for a, b in zip(path, path[1:]):
        gamma_prime = org.gamma / len(org.states[a].children)
        bound *= transition_prob(org, a, b, attr_topic) * _bound_factor(gamma_prime, kappa)
    return bound


def staleness_bound(org: Organization, m: str, s: str,
                    new_topic: TopicVector, query: TopicVector) -> float:
    """Bound on the transition change when state s's topic drifts to new_topic."""
    from .navmodel import transition_prob

    old = org.states[s].topic
    if old.support <= 0 or new_topic.support <= 0:
        raise ValueError("staleness bound needs covered topic vectors")
    p = transition_prob(org, m, s, query)
    gamma_prime = org.gamma / len(org.states[m].children)
    return p * _bound_factor(gamma_prime, cosine(old, new_topic))


def rebuild_trigger(org: Organization, lake: DataLake,
                    updated: dict[str, TopicVector],
                    threshold: float = 0.05) -> tuple[bool, dict[str, float]]:
    """Whether drifted state topics warrant a rebuild.

    For each updated state, the worst per-parent mean staleness bound over
    all attribute queries is compared against threshold * current mean reach
    of that state.
    """
    from .navmodel import reachability_map

    snap = OrgSnapshot(org)
    xu = query_rows([lake.attributes[a].topic for a in lake.attr_order])
    reach = reachability_map(org, lake)
    worst: dict[str, float] = {}
    for sid, new_topic in sorted(updated.items()):
        s_idx = snap.index[sid]
        old_unit = org.states[sid].topic.unit()
        kappa = float(np.clip(np.dot(old_unit, new_topic.unit()), -1.0, 1.0))
        bounds = []
        for p in snap.parent_idx[s_idx]:
            w = snap.weights(xu, p)[:, snap.child_pos[p][s_idx]]
            gamma_prime = org.gamma / snap.children_idx[p].size
            bounds.append(float(np.mean(w)) * _bound_factor(gamma_prime, kappa))
        worst[sid] = max(bounds) if bounds else 0.0
    trigger = any(
        worst[sid] > threshold * max(reach[sid], 1e-12) for sid in worst
    )
    return trigger, worst


def save_representatives(reps: Representatives, path: str | Path) -> None:
    doc = {
        "fraction": reps.fraction,
        "blocks": [
            {"rep_attribute_id": b.rep_attribute_id, "members": list(b.members)}
            for b in reps.blocks
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_representatives(path: str | Path) -> Representatives:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    blocks = tuple(
        RepBlock(rep_attribute_id=b["rep_attribute_id"], members=tuple(b["members"]))
        for b in doc["blocks"]
    )
    assignment = {a: b.rep_attribute_id for b in blocks for a in b.members}
    return Representatives(fraction=float(doc["fraction"]), blocks=blocks,
                           assignment=assignment)
