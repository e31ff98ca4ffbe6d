"""Data-lake model: tables, attributes, tag associations, ingestion, files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .embedding import EmbeddingStore, TopicVector, topic_vector

log = logging.getLogger("lakeorg.lake")

DEFAULT_TEXT_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class Attribute:
    """A retained textual column: distinct values, topic vector, tags."""

    id: str
    table_id: str
    name: str
    values: frozenset[str]
    topic: TopicVector
    tags: frozenset[str]


@dataclass(frozen=True, eq=False)
class Table:
    id: str
    name: str
    attribute_ids: tuple[str, ...]
    tags: frozenset[str]


class DataLake:
    """Immutable view of tables, attributes, and the tag -> attributes index.

    ``tag_index`` is derived from attribute tags at construction, so the
    data(t) invariant holds by construction.
    """

    def __init__(self, tables: dict[str, Table], attributes: dict[str, Attribute]):
        for attr in attributes.values():
            if attr.table_id not in tables:
                raise ValueError(f"attribute {attr.id} references unknown table {attr.table_id}")
        self.tables = dict(tables)
        self.attributes = dict(attributes)
        index: dict[str, set[str]] = {}
        for aid in sorted(attributes):
            for tag in attributes[aid].tags:
                index.setdefault(tag, set()).add(aid)
        self.tag_index: dict[str, frozenset[str]] = {
            t: frozenset(s) for t, s in index.items()
        }
        self._sim: np.ndarray | None = None
        self._attr_order: list[str] | None = None

    @property
    def tags(self) -> list[str]:
        return sorted(self.tag_index)

    @property
    def attr_order(self) -> list[str]:
        if self._attr_order is None:
            self._attr_order = sorted(self.attributes)
        return self._attr_order

    @property
    def dim(self) -> int:
        aid = self.attr_order[0]
        return int(self.attributes[aid].topic.mean.shape[0])

    def similarity_matrix(self) -> np.ndarray:
        """Symmetric cosine matrix over attribute topic vectors (attr_order)."""
        if self._sim is None:
            units = np.vstack([self.attributes[a].topic.unit() for a in self.attr_order])
            sim = units @ units.T
            np.clip(sim, -1.0, 1.0, out=sim)
            self._sim = sim
        return self._sim

    def with_attributes(self, attributes: dict[str, Attribute],
                        tables: dict[str, Table] | None = None) -> "DataLake":
        return DataLake(tables if tables is not None else self.tables, attributes)


def data_of_tag(lake: DataLake, tag: str) -> frozenset[str]:
    """Attribute ids associated with a tag; unknown tags map to the empty set."""
    return lake.tag_index.get(tag, frozenset())


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _textual(cells: list[str], threshold: float) -> bool:
    """A column is textual when >= threshold of its non-empty cells fail numeric parsing."""
    if not cells:
        return False
    failing = sum(1 for c in cells if not _is_numeric(c))
    return failing / len(cells) >= threshold


def ingest(tables_dir: str | Path, metadata: str | Path, store: EmbeddingStore,
           text_threshold: float = DEFAULT_TEXT_THRESHOLD) -> DataLake:
    """Build a lake from CSV tables and a newline-delimited JSON metadata file.

    Each metadata record is ``{"table_id", "name", "csv_path", "tags"}``.
    Table-level tags are propagated to every retained attribute. Columns
    classified non-textual, attributes with no embedding coverage, and
    tables left without attributes are dropped (with warnings). A missing
    CSV skips its table; an unreadable metadata file is fatal.
    """
    tables_dir = Path(tables_dir)
    metadata = Path(metadata)
    try:
        records = []
        with metadata.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{metadata}:{lineno}: invalid JSON ({exc})") from exc
                records.append(rec)
    except OSError as exc:
        raise ValueError(f"cannot read metadata file {metadata}: {exc}") from exc

    tables: dict[str, Table] = {}
    attributes: dict[str, Attribute] = {}
    for rec in records:
        table_id = str(rec["table_id"])
        if table_id in tables:
            raise ValueError(f"duplicate table id in metadata: {table_id}")
        csv_path = Path(rec["csv_path"])
        if not csv_path.is_absolute():
            csv_path = tables_dir / csv_path
        if not csv_path.exists():
            log.warning("table %s: missing CSV %s, skipped", table_id, csv_path)
            continue
        tags = frozenset(str(t) for t in rec.get("tags", []))
        with csv_path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                log.warning("table %s: empty CSV, skipped", table_id)
                continue
            columns: list[list[str]] = [[] for _ in header]
            for row in reader:
                for i, cell in enumerate(row[: len(header)]):
                    cell = cell.strip()
                    if cell:
                        columns[i].append(cell)
        stem = csv_path.stem
        attr_ids: list[str] = []
        for i, cells in enumerate(columns):
            if not _textual(cells, text_threshold):
                continue
            values = frozenset(cells)
            topic = topic_vector(values, store)
            if topic.support == 0:
                log.warning("table %s: column %r has no embedding coverage, dropped",
                            table_id, header[i])
                continue
            aid = f"{stem}.{i}"
            attributes[aid] = Attribute(
                id=aid, table_id=table_id, name=header[i],
                values=values, topic=topic, tags=tags,
            )
            attr_ids.append(aid)
        if not attr_ids:
            log.warning("table %s: no textual attribute retained, excluded", table_id)
            continue
        tables[table_id] = Table(
            id=table_id, name=str(rec.get("name", table_id)),
            attribute_ids=tuple(attr_ids), tags=tags,
        )
    return DataLake(tables, attributes)


def save_lake(lake: DataLake, path: str | Path) -> None:
    """Serialize a lake to JSON (sorted keys, sorted value lists: byte-stable)."""
    doc = {
        "tables": [
            {
                "id": t.id,
                "name": t.name,
                "attribute_ids": list(t.attribute_ids),
                "tags": sorted(t.tags),
            }
            for t in (lake.tables[tid] for tid in sorted(lake.tables))
        ],
        "attributes": [
            {
                "id": a.id,
                "table_id": a.table_id,
                "name": a.name,
                "values": sorted(a.values),
                "tags": sorted(a.tags),
                "topic": {"mean": [float(x) for x in a.topic.mean],
                          "support": a.topic.support},
            }
            for a in (lake.attributes[aid] for aid in lake.attr_order)
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_lake(path: str | Path) -> DataLake:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    tables = {
        t["id"]: Table(
            id=t["id"], name=t["name"],
            attribute_ids=tuple(t["attribute_ids"]), tags=frozenset(t["tags"]),
        )
        for t in doc["tables"]
    }
    attributes = {}
    for a in doc["attributes"]:
        topic = TopicVector(np.array(a["topic"]["mean"], dtype=np.float64),
                            int(a["topic"]["support"]))
        attributes[a["id"]] = Attribute(
            id=a["id"], table_id=a["table_id"], name=a["name"],
            values=frozenset(a["values"]), topic=topic, tags=frozenset(a["tags"]),
        )
    return DataLake(tables, attributes)


def retag(lake: DataLake, tags_by_attr: dict[str, frozenset[str] | set[str]]) -> DataLake:
    """Lake copy with attribute tags replaced; table tags follow their attributes."""
    attrs = {}
    for aid, attr in lake.attributes.items():
        new = frozenset(tags_by_attr.get(aid, attr.tags))
        attrs[aid] = replace(attr, tags=new)
    tables = {}
    for tid, table in lake.tables.items():
        union: set[str] = set()
        for aid in table.attribute_ids:
            if aid in attrs:
                union |= attrs[aid].tags
        tables[tid] = replace(table, tags=frozenset(union))
    return DataLake(tables, attrs)


def restrict_to_tags(lake: DataLake, tags: set[str] | frozenset[str]) -> DataLake:
    """Sub-lake holding the attributes of the given tags, tags intersected.

    Used to build one dimension of a multi-dimensional organization.
    """
    keep = frozenset(tags)
    attrs = {}
    for aid in lake.attr_order:
        attr = lake.attributes[aid]
        inter = attr.tags & keep
        if inter:
            attrs[aid] = replace(attr, tags=inter)
    tables = {}
    for tid in sorted(lake.tables):
        table = lake.tables[tid]
        kept_ids = tuple(a for a in table.attribute_ids if a in attrs)
        if kept_ids:
            union: set[str] = set()
            for a in kept_ids:
                union |= attrs[a].tags
            tables[tid] = replace(table, attribute_ids=kept_ids, tags=frozenset(union))
    return DataLake(tables, attrs)
