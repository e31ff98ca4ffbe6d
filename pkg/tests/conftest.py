"""Shared fixtures: hand-built stores, synthetic clustered vocabularies,
mini lakes, and a generator of random valid organizations."""

from __future__ import annotations

import numpy as np
import pytest

from lakeorg.embedding import EmbeddingStore, TopicVector
from lakeorg.lake import Attribute, DataLake, Table
from lakeorg.optimizer import (apply_plan, plan_add_parent, plan_delete_parent)
from lakeorg.organization import Organization, flat_org, initial_org, validate


@pytest.fixture
def tiny_store() -> EmbeddingStore:
    """Hand-picked vectors for exact arithmetic."""
    return EmbeddingStore.from_dict({
        "a": np.array([1.0, 0.0, 0.0]),
        "b": np.array([0.0, 1.0, 0.0]),
        "c": np.array([0.0, 0.0, 1.0]),
        "d": np.array([3.0, 0.0, 4.0]),
    })


def make_cloud_store(n_tags: int, cloud: int, dim: int, seed: int = 0,
                     anchor_cos_cap: float = 0.4,
                     noise: float = 0.15) -> tuple[EmbeddingStore, list[str]]:
    """Vocabulary of well-separated anchor words plus a noise cloud per anchor.

    Anchors are resampled until pairwise |cos| stays below the cap, so a
    separation-greedy tag picker finds exactly one word per cloud.
    """
    rng = np.random.default_rng(seed)
    anchors = np.empty((n_tags, dim))
    count = 0
    while count < n_tags:
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if count and float(np.max(np.abs(anchors[:count] @ v))) >= anchor_cos_cap:
            continue
        anchors[count] = v
        count += 1
    tokens: list[str] = []
    rows = np.empty((n_tags * cloud, dim), dtype=np.float64)
    tw = len(str(n_tags - 1))
    cw = len(str(cloud - 1))
    for t in range(n_tags):
        base = anchors[t]
        for j in range(cloud):
            vec = base if j == 0 else base + noise * rng.standard_normal(dim)
            vec = vec / np.linalg.norm(vec)
            rows[t * cloud + j] = vec
            tokens.append(f"w{t:0{tw}d}x{j:0{cw}d}")
    order = sorted(range(len(tokens)), key=lambda i: tokens[i])
    store = EmbeddingStore([tokens[i] for i in order], rows[order].astype(np.float32))
    anchor_tokens = [f"w{t:0{tw}d}x{'0' * cw}" for t in range(n_tags)]
    return store, anchor_tokens


def vector_attr(aid: str, table_id: str, vec, support: int = 1,
                tags=(), values=None) -> Attribute:
    """Attribute with an explicit topic vector (bypasses tokenization)."""
    mean = np.asarray(vec, dtype=np.float64)
    return Attribute(
        id=aid, table_id=table_id, name=aid,
        values=frozenset(values if values is not None else {aid}),
        topic=TopicVector(mean, support), tags=frozenset(tags),
    )


def lake_from_attrs(attrs: list[Attribute], table_names=None) -> DataLake:
    by_table: dict[str, list[str]] = {}
    for a in attrs:
        by_table.setdefault(a.table_id, []).append(a.id)
    tables = {}
    for tid, aids in by_table.items():
        union = frozenset(t for a in aids for t in
                          next(x for x in attrs if x.id == a).tags)
        name = (table_names or {}).get(tid, f"table {tid}")
        tables[tid] = Table(id=tid, name=name, attribute_ids=tuple(sorted(aids)),
                            tags=union)
    return DataLake(tables, {a.id: a for a in attrs})


@pytest.fixture
def four_tag_lake() -> DataLake:
    """Two well-separated pairs of tags, two attributes per tag."""
    dirs = {
        "t1": [1.0, 0.05, 0.0, 0.0],
        "t2": [0.95, 0.0, 0.05, 0.0],
        "t3": [0.0, 0.0, 1.0, 0.05],
        "t4": [0.0, 0.05, 0.95, 0.0],
    }
    attrs = []
    for i, (tag, vec) in enumerate(sorted(dirs.items())):
        v = np.array(vec) / np.linalg.norm(vec)
        for j in range(2):
            jitter = v.copy()
            jitter[(i + j + 1) % 4] += 0.02 * (j + 1)
            attrs.append(vector_attr(f"{tag}a{j}", f"tbl{i}{j}", jitter,
                                     support=3, tags=[tag]))
    return lake_from_attrs(attrs)


def random_lake(rng: np.random.Generator, n_tags: int, n_attrs: int,
                dim: int = 6, multi_tag_prob: float = 0.25) -> DataLake:
    tags = [f"g{i}" for i in range(n_tags)]
    anchors = rng.standard_normal((n_tags, dim))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
    attrs = []
    for i in range(n_attrs):
        t = int(rng.integers(n_tags))
        chosen = {tags[t]}
        if n_tags > 1 and rng.random() < multi_tag_prob:
            other = int(rng.integers(n_tags))
            chosen.add(tags[other])
        vec = anchors[t] + 0.3 * rng.standard_normal(dim)
        attrs.append(vector_attr(
            f"a{i:03d}", f"tb{i % max(1, n_attrs // 2):03d}", vec,
            support=int(rng.integers(1, 5)), tags=chosen))
    return lake_from_attrs(attrs)


def random_org(rng: np.random.Generator, lake: DataLake, n_ops: int = 6,
               gamma: float = 10.0) -> Organization:
    """Random valid organization: agglomerative init plus random valid ops."""
    org = initial_org(lake, gamma) if len(lake.tags) > 1 else flat_org(lake, gamma)
    for _ in range(n_ops):
        targets = [sid for sid in sorted(org.states)
                   if sid != org.root and not org.states[sid].is_leaf]
        if not targets:
            break
        s = targets[int(rng.integers(len(targets)))]
        fake_reach = {sid: float(rng.random()) for sid in org.states}
        planner = plan_add_parent if rng.random() < 0.6 else plan_delete_parent
        plan = planner(org, s, fake_reach)
        if plan is None:
            continue
        candidate, _ = apply_plan(org, plan, lake)
        if not validate(candidate, lake):
            org = candidate
    assert validate(org, lake) == []
    return org
