"""Navigation DAG: states, structural invariants, builders, labels, files.

States are immutable; mutations (in the optimizer) replace whole State
records, so organizations can share unchanged states structurally.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .clustering import average_linkage_merges
from .embedding import TopicVector
from .lake import DataLake

DEFAULT_GAMMA = 10.0

ROOT, INTERIOR, TAG, LEAF = "root", "interior", "tag", "leaf"


class OrganizationError(ValueError):
    """Structural error in an organization (cycle, dangling id, ...)."""


@dataclass(frozen=True, eq=False)
class State:
    id: str
    kind: str  # root | interior | tag | leaf
    tags: frozenset[str]
    attribute_ids: frozenset[str]
    children: tuple[str, ...]
    parents: frozenset[str]
    topic: TopicVector

    @property
    def is_leaf(self) -> bool:
        return self.kind == LEAF


def combined_topic(attr_ids, lake: DataLake) -> TopicVector:
    """State topic: support-weighted mean of member attributes' topic vectors.

    Tokens duplicated across attributes are counted once per attribute, an
    accepted approximation of the mean over the union of domains.
    """
    acc = None
    total = 0
    for aid in sorted(attr_ids):
        t = lake.attributes[aid].topic
        if acc is None:
            acc = np.zeros_like(t.mean)
        acc += t.mean * t.support
        total += t.support
    if acc is None:
        raise ValueError("state must hold at least one attribute")
    if total:
        acc = acc / total
    return TopicVector(acc, total)


def canonical_children(child_ids, states: dict[str, State]) -> tuple[str, ...]:
    """Deterministic child order: descending attribute count, then id."""
    return tuple(sorted(set(child_ids), key=lambda c: (-len(states[c].attribute_ids), c)))


class Organization:
    """Rooted DAG of states with a transition-penalty hyperparameter gamma."""

    def __init__(self, states: dict[str, State], root: str, gamma: float = DEFAULT_GAMMA):
        if gamma <= 0:
            raise ValueError("gamma must be strictly positive")
        self.states = states
        self.root = root
        self.gamma = float(gamma)
        self._topo: list[str] | None = None
        self._levels: dict[str, int] | None = None
        self._attr_leaf: dict[str, str] | None = None

    def __len__(self) -> int:
        return len(self.states)

    def topo_order(self) -> list[str]:
        """Parents-before-children order; raises OrganizationError on a cycle."""
        if self._topo is None:
            indeg = {sid: len(s.parents) for sid, s in self.states.items()}
            ready = sorted(sid for sid, d in indeg.items() if d == 0)
            order: list[str] = []
            while ready:
                sid = ready.pop(0)
                order.append(sid)
                inserted = []
                for c in self.states[sid].children:
                    indeg[c] -= 1
                    if indeg[c] == 0:
                        inserted.append(c)
                if inserted:
                    ready.extend(inserted)
                    ready.sort()
            if len(order) != len(self.states):
                raise OrganizationError("cycle detected; no topological order")
            self._topo = order
        return self._topo

    def levels(self) -> dict[str, int]:
        """Shortest-path depth from the root (root = 0), by BFS."""
        if self._levels is None:
            depth = {self.root: 0}
            q = deque([self.root])
            while q:
                sid = q.popleft()
                for c in self.states[sid].children:
                    if c not in depth:
                        depth[c] = depth[sid] + 1
                        q.append(c)
            if len(depth) != len(self.states):
                missing = sorted(set(self.states) - set(depth))
                raise OrganizationError(f"states unreachable from root: {missing[:5]}")
            self._levels = depth
        return self._levels

    def attr_leaf(self) -> dict[str, str]:
        """Attribute id -> its leaf state id."""
        if self._attr_leaf is None:
            mapping: dict[str, str] = {}
            for sid, s in self.states.items():
                if s.is_leaf:
                    (aid,) = tuple(s.attribute_ids)
                    mapping[aid] = sid
            self._attr_leaf = mapping
        return self._attr_leaf

    def reachable_from(self, sid: str, include_self: bool = True) -> set[str]:
        seen = {sid}
        q = deque([sid])
        while q:
            u = q.popleft()
            for c in self.states[u].children:
                if c not in seen:
                    seen.add(c)
                    q.append(c)
        if not include_self:
            seen.discard(sid)
        return seen

    def replace_states(self, changes: dict[str, State | None],
                       root: str | None = None) -> "Organization":
        """Copy with states replaced (None deletes); caches reset."""
        states = dict(self.states)
        for sid, st in changes.items():
            if st is None:
                states.pop(sid, None)
            else:
                states[sid] = st
        return Organization(states, root if root is not None else self.root, self.gamma)


def flat_org(lake: DataLake, gamma: float = DEFAULT_GAMMA) -> Organization:
    """Baseline: root -> one state per tag -> one leaf per attribute.

    An attribute with k tags becomes a single leaf with k tag-state parents.
    """
    tags = lake.tags
    if not tags:
        raise ValueError(
            "lake has no tags; run metadata enrichment (lakeorg enrich) to add some"
        )
    states: dict[str, State] = {}
    for aid in lake.attr_order:
        attr = lake.attributes[aid]
        states[f"leaf:{aid}"] = State(
            id=f"leaf:{aid}", kind=LEAF, tags=frozenset(),
            attribute_ids=frozenset([aid]), children=(),
            parents=frozenset(f"tag:{t}" for t in attr.tags),
            topic=attr.topic,
        )
    for tag in tags:
        members = sorted(lake.tag_index[tag])
        states[f"tag:{tag}"] = State(
            id=f"tag:{tag}", kind=TAG, tags=frozenset([tag]),
            attribute_ids=frozenset(members),
            children=(), parents=frozenset(["root"]),
            topic=combined_topic(members, lake),
        )
    for tag in tags:
        sid = f"tag:{tag}"
        kids = canonical_children(
            (f"leaf:{a}" for a in states[sid].attribute_ids), states)
        states[sid] = replace(states[sid], children=kids)
    all_attrs = frozenset(lake.attributes)
    states["root"] = State(
        id="root", kind=ROOT, tags=frozenset(tags), attribute_ids=all_attrs,
        children=canonical_children((f"tag:{t}" for t in tags), states),
        parents=frozenset(), topic=combined_topic(all_attrs, lake),
    )
    return Organization(states, "root", gamma)


def initial_org(lake: DataLake, gamma: float = DEFAULT_GAMMA) -> Organization:
    """Average-linkage binary merge tree over tag states (cosine distance).

    With a single tag this degenerates to the flat organization.
    """
    tags = lake.tags
    if len(tags) < 2:
        return flat_org(lake, gamma)
    base = flat_org(lake, gamma)
    states = dict(base.states)
    vectors = np.vstack([states[f"tag:{t}"].topic.mean for t in tags])
    merges = average_linkage_merges(vectors)
    cluster_sid: dict[int, str] = {i: f"tag:{t}" for i, t in enumerate(tags)}
    n = len(tags)
    for step, (a, b) in enumerate(merges):
        new_id = "root" if step == len(merges) - 1 else f"m{step:03d}"
        ca, cb = cluster_sid[a], cluster_sid[b]
        attrs = states[ca].attribute_ids | states[cb].attribute_ids
        mtags = states[ca].tags | states[cb].tags
        states[new_id] = State(
            id=new_id, kind=ROOT if new_id == "root" else INTERIOR,
            tags=mtags, attribute_ids=attrs,
            children=canonical_children([ca, cb], states),
            parents=frozenset(),
            topic=combined_topic(attrs, lake),
        )
        for c in (ca, cb):
            states[c] = replace(states[c], parents=frozenset([new_id]))
        cluster_sid[n + step] = new_id
    return Organization(states, "root", gamma)


def validate(org: Organization, lake: DataLake | None = None) -> list[str]:
    """Every violated structural invariant, one message each; empty iff valid."""
    problems: list[str] = []
    states = org.states
    if org.root not in states:
        return [f"root {org.root!r} missing from states"]
    for sid, s in states.items():
        if s.id != sid:
            problems.append(f"{sid}: key/id mismatch")
        for c in s.children:
            if c not in states:
                problems.append(f"{sid}: dangling child {c}")
            elif sid not in states[c].parents:
                problems.append(f"{sid}: child {c} does not list it as parent")
        for p in s.parents:
            if p not in states:
                problems.append(f"{sid}: dangling parent {p}")
            elif sid not in states[p].children:
                problems.append(f"{sid}: parent {p} does not list it as child")
    if problems:
        return problems
    roots = sorted(sid for sid, s in states.items() if not s.parents)
    if roots != [org.root]:
        problems.append(f"parentless states {roots} != [{org.root!r}]")
    try:
        org.topo_order()
    except OrganizationError as exc:
        problems.append(str(exc))
        return problems
    reachable = org.reachable_from(org.root)
    orphans = sorted(set(states) - reachable)
    if orphans:
        problems.append(f"unreachable states: {orphans[:5]}")
    seen_attrs: dict[str, str] = {}
    for sid in sorted(states):
        s = states[sid]
        if s.is_leaf:
            if s.children:
                problems.append(f"{sid}: leaf with children")
            if len(s.attribute_ids) != 1:
                problems.append(f"{sid}: leaf must hold exactly one attribute")
            else:
                (aid,) = tuple(s.attribute_ids)
                if aid in seen_attrs:
                    problems.append(f"{sid}: attribute {aid} also at {seen_attrs[aid]}")
                seen_attrs[aid] = sid
            bad = sorted(p for p in s.parents if states[p].kind != TAG)
            if bad:
                problems.append(f"{sid}: leaf has non-tag parents {bad}")
        else:
            if not s.children:
                problems.append(f"{sid}: non-leaf without children")
                continue
            union: set[str] = set()
            for c in s.children:
                union |= states[c].attribute_ids
            if union != set(s.attribute_ids):
                problems.append(f"{sid}: attribute set differs from union of children")
            if s.kind == TAG:
                if len(s.tags) != 1:
                    problems.append(f"{sid}: tag state must hold exactly one tag")
                nonleaf = sorted(c for c in s.children if not states[c].is_leaf)
                if nonleaf:
                    problems.append(f"{sid}: tag state has non-leaf children {nonleaf}")
            else:
                tag_union: set[str] = set()
                for c in s.children:
                    tag_union |= states[c].tags
                if tag_union != set(s.tags):
                    problems.append(f"{sid}: tag set differs from union of children")
    if lake is not None:
        covered = set(seen_attrs)
        missing = sorted(set(lake.attributes) - covered)
        extra = sorted(covered - set(lake.attributes))
        if missing:
            problems.append(f"lake attributes without a leaf: {missing[:5]}")
        if extra:
            problems.append(f"leaves for unknown attributes: {extra[:5]}")
    return problems


def levels(org: Organization) -> dict[str, int]:
    return org.levels()


def labels(org: Organization, lake: DataLake) -> dict[str, str]:
    """Display label per state.

    Leaves show their table name, tag states their tag, the root "root".
    Other states show the two most frequent tags over their attributes,
    skipping a runner-up that would duplicate a single child's label.
    """
    out: dict[str, str] = {}
    label_tags: dict[str, frozenset[str]] = {}
    for sid in reversed(org.topo_order()):
        s = org.states[sid]
        if s.is_leaf:
            (aid,) = tuple(s.attribute_ids)
            out[sid] = lake.tables[lake.attributes[aid].table_id].name
            label_tags[sid] = frozenset()
        elif s.kind == TAG:
            (tag,) = tuple(s.tags)
            out[sid] = tag
            label_tags[sid] = frozenset([tag])
        elif sid == org.root:
            out[sid] = "root"
            label_tags[sid] = frozenset()
        else:
            freq: dict[str, int] = {}
            for aid in s.attribute_ids:
                for tag in lake.attributes[aid].tags:
                    if tag in s.tags:
                        freq[tag] = freq.get(tag, 0) + 1
            ranked = sorted(freq, key=lambda t: (-freq[t], t))
            if not ranked:
                out[sid] = sid
                label_tags[sid] = frozenset()
                continue
            first = ranked[0]
            second = None
            child_sets = [label_tags[c] for c in s.children]
            for cand in ranked[1:]:
                if any(first in cs and cand in cs for cs in child_sets):
                    continue
                second = cand
                break
            if second is None and len(ranked) > 1:
                second = ranked[1]
            if second is None:
                out[sid] = first
                label_tags[sid] = frozenset([first])
            else:
                out[sid] = f"{first}, {second}"
                label_tags[sid] = frozenset([first, second])
    return out


def label(org: Organization, sid: str, lake: DataLake) -> str:
    return labels(org, lake)[sid]


def org_to_dict(org: Organization) -> dict:
    return {
        "gamma": org.gamma,
        "root": org.root,
        "states": [
            {
                "id": s.id,
                "kind": s.kind,
                "tags": sorted(s.tags),
                "attributes": sorted(s.attribute_ids),
                "children": list(canonical_children(s.children, org.states)),
            }
            for s in (org.states[sid] for sid in sorted(org.states))
        ],
    }


def save_org(org: Organization, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(org_to_dict(org), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def org_from_dict(doc: dict, lake: DataLake) -> Organization:
    """Rebuild an organization; parents and topic vectors are re-derived."""
    try:
        gamma = float(doc["gamma"])
        root = doc["root"]
        raw = {s["id"]: s for s in doc["states"]}
    except (KeyError, TypeError) as exc:
        raise OrganizationError(f"malformed organization document: {exc}") from exc
    parents: dict[str, set[str]] = {sid: set() for sid in raw}
    for sid, s in raw.items():
        for c in s["children"]:
            if c not in raw:
                raise OrganizationError(f"{sid}: dangling child id {c}")
            parents[c].add(sid)
    states: dict[str, State] = {}
    for sid, s in raw.items():
        attrs = frozenset(s["attributes"])
        missing = sorted(a for a in attrs if a not in lake.attributes)
        if missing:
            raise OrganizationError(f"{sid}: unknown attributes {missing[:5]}")
        states[sid] = State(
            id=sid, kind=s["kind"], tags=frozenset(s["tags"]),
            attribute_ids=attrs, children=tuple(s["children"]),
            parents=frozenset(parents[sid]),
            topic=combined_topic(attrs, lake),
        )
    if root not in states:
        raise OrganizationError(f"root {root!r} not among states")
    return Organization(states, root, gamma)


def load_org(path: str | Path, lake: DataLake) -> Organization:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise OrganizationError(f"{path}: invalid JSON ({exc})") from exc
    return org_from_dict(doc, lake)
