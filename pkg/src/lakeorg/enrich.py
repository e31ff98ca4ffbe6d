"""Per-tag binary classifiers over attribute topic vectors, and tag transfer.

Classifiers are regularized logistic models trained by full-batch gradient
descent; regularization strength and decision threshold are grid-searched
by pooled cross-validated F1.
"""

from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lake import DataLake, retag

log = logging.getLogger("lakeorg.enrich")

REG_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
THRESHOLD_GRID = (0.3, 0.5, 0.7)
GD_ITERATIONS = 300
GD_LEARNING_RATE = 1.0


@dataclass
class TagClassifier:
    tag: str
    weights: np.ndarray
    bias: float
    threshold: float
    n_positive: int
    n_negative: int
    cv_f1: float
    regularization: float

    def scores(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(x @ self.weights + self.bias)

    def predict(self, topic_mean: np.ndarray) -> bool:
        return bool(self.scores(np.asarray(topic_mean)[None, :])[0] >= self.threshold)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _fit_logistic(x: np.ndarray, y: np.ndarray, reg: float) -> tuple[np.ndarray, float]:
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(GD_ITERATIONS):
        p = _sigmoid(x @ w + b)
        err = p - y
        gw = x.T @ err / n + 2.0 * reg * w
        gb = float(err.mean())
        w -= GD_LEARNING_RATE * gw
        b -= GD_LEARNING_RATE * gb
    return w, b


def _f1(pred: np.ndarray, y: np.ndarray) -> float:
    tp = float(np.sum(pred & (y == 1)))
    fp = float(np.sum(pred & (y == 0)))
    fn = float(np.sum(~pred & (y == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _rng_for(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng((seed, zlib.crc32(tag.encode("utf-8"))))


def _stratified_folds(n_pos: int, n_neg: int, folds: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Fold id per row (positives first), each fold holding both classes."""
    folds = max(2, min(folds, n_pos, n_neg))
    out = np.empty(n_pos + n_neg, dtype=np.int64)
    pos = rng.permutation(n_pos)
    neg = rng.permutation(n_neg)
    for i, p in enumerate(pos):
        out[p] = i % folds
    for i, g in enumerate(neg):
        out[n_pos + g] = i % folds
    return out


def train_classifiers(lake: DataLake, min_positives: int = 10, neg_ratio: int = 9,
                      folds: int = 10, seed: int = 0) -> list[TagClassifier]:
    """One classifier per tag with enough deduplicated positive attributes.

    Positives are deduplicated on identical value sets; negatives are drawn
    uniformly without replacement from non-associated attributes at
    ``neg_ratio`` per positive. Deterministic for a fixed seed.
    """
    classifiers: list[TagClassifier] = []
    attr_ids = lake.attr_order
    features = {a: lake.attributes[a].topic.mean for a in attr_ids}
    for tag in lake.tags:
        members = sorted(lake.tag_index[tag])
        seen_domains: set[frozenset[str]] = set()
        positives: list[str] = []
        for a in members:
            dom = lake.attributes[a].values
            if dom in seen_domains:
                continue
            seen_domains.add(dom)
            positives.append(a)
        if len(positives) < min_positives:
            continue
        pool = [a for a in attr_ids if tag not in lake.attributes[a].tags]
        if not pool:
            continue
        rng = _rng_for(seed, tag)
        n_neg = min(len(pool), neg_ratio * len(positives))
        negatives = sorted(
            pool[i] for i in rng.choice(len(pool), size=n_neg, replace=False)
        )
        x = np.vstack([features[a] for a in positives + negatives])
        y = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
        fold_of = _stratified_folds(len(positives), len(negatives), folds, rng)
        best: tuple[float, float, float] | None = None  # (f1, reg, threshold)
        for reg in REG_GRID:
            pooled = np.empty(len(y))
            for f in range(int(fold_of.max()) + 1):
                train = fold_of != f
                w, b = _fit_logistic(x[train], y[train], reg)
                pooled[~train] = _sigmoid(x[~train] @ w + b)
            for thr in THRESHOLD_GRID:
                f1 = _f1(pooled >= thr, y)
                if best is None or f1 > best[0]:
                    best = (f1, reg, thr)
        f1, reg, thr = best
        w, b = _fit_logistic(x, y, reg)
        classifiers.append(TagClassifier(
            tag=tag, weights=w, bias=b, threshold=thr,
            n_positive=len(positives), n_negative=len(negatives),
            cv_f1=f1, regularization=reg,
        ))
    if not classifiers:
        log.warning("no tag reached %d deduplicated positives; nothing trained",
                    min_positives)
    return classifiers


@dataclass
class TransferReport:
    labeled_per_tag: dict[str, int]
    n_attributes_labeled: int

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tag", "n_attributes_labeled"])
            for tag in sorted(self.labeled_per_tag):
                writer.writerow([tag, self.labeled_per_tag[tag]])


def transfer_tags(classifiers: list[TagClassifier],
                  target: DataLake) -> tuple[DataLake, TransferReport]:
    """Label every target attribute with every positively predicting tag."""
    if not classifiers:
        return target, TransferReport({}, 0)
    dim = target.dim
    for clf in classifiers:
        if clf.weights.shape[0] != dim:
            raise ValueError(
                f"classifier {clf.tag!r} expects dim {clf.weights.shape[0]}, lake has {dim}"
            )
    attr_ids = target.attr_order
    x = np.vstack([target.attributes[a].topic.mean for a in attr_ids])
    new_tags: dict[str, set[str]] = {a: set(target.attributes[a].tags) for a in attr_ids}
    per_tag: dict[str, int] = {}
    labeled: set[str] = set()
    for clf in sorted(classifiers, key=lambda c: c.tag):
        hits = clf.scores(x) >= clf.threshold
        count = 0
        for a, hit in zip(attr_ids, hits):
            if hit:
                if clf.tag not in new_tags[a]:
                    new_tags[a].add(clf.tag)
                count += 1
                labeled.add(a)
        if count:
            per_tag[clf.tag] = count
    augmented = retag(target, {a: frozenset(t) for a, t in new_tags.items()})
    return augmented, TransferReport(per_tag, len(labeled))


def save_classifiers(classifiers: list[TagClassifier], path: str | Path) -> None:
    doc = [
        {
            "tag": c.tag,
            "weights": [float(v) for v in c.weights],
            "bias": c.bias,
            "threshold": c.threshold,
            "n_positive": c.n_positive,
            "n_negative": c.n_negative,
            "cv_f1": c.cv_f1,
            "regularization": c.regularization,
        }
        for c in sorted(classifiers, key=lambda c: c.tag)
    ]
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_classifiers(path: str | Path) -> list[TagClassifier]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        TagClassifier(
            tag=c["tag"], weights=np.array(c["weights"], dtype=np.float64),
            bias=float(c["bias"]), threshold=float(c["threshold"]),
            n_positive=int(c["n_positive"]), n_negative=int(c["n_negative"]),
            cv_f1=float(c["cv_f1"]), regularization=float(c["regularization"]),
        )
        for c in doc
    ]
