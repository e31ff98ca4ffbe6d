"""Word-embedding store, tokenization, topic vectors, and similarity search."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingParseError(ValueError):
    """An embedding file line could not be parsed."""


class DimensionMismatchError(EmbeddingParseError):
    """Vectors in an embedding file disagree on dimension."""


class UndefinedSimilarityError(ValueError):
    """Cosine requested against a zero-support topic vector."""


@dataclass(frozen=True, eq=False)
class TopicVector:
    """Arithmetic mean of the embedding vectors behind a set of values.

    ``support`` counts the embedded token occurrences that contributed.
    ``support == 0`` marks an uncovered topic; its mean is the zero vector.
    The mean is deliberately not re-normalized.
    """

    mean: np.ndarray
    support: int

    @property
    def covered(self) -> bool:
        return self.support > 0

    def unit(self) -> np.ndarray:
        """Direction of the mean; zero vector when uncovered."""
        n = float(np.linalg.norm(self.mean))
        if n == 0.0:
            return np.zeros_like(self.mean)
        return self.mean / n


class EmbeddingStore:
    """Immutable token -> unit-vector map with brute-force similarity search.

    Vectors are stored row-wise (float32) and unit-normalized. Safe to share
    across threads; nothing mutates after construction.
    """

    def __init__(self, tokens: list[str], matrix: np.ndarray, skipped: int = 0):
        if matrix.ndim != 2 or len(tokens) != matrix.shape[0]:
            raise ValueError("token list and matrix rows must align")
        self.tokens = list(tokens)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.skipped = skipped

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def count(self) -> int:
        return int(self.matrix.shape[0])

    def __len__(self) -> int:
        return self.count

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.index[token]]

    def get(self, token: str) -> np.ndarray | None:
        i = self.index.get(token)
        return None if i is None else self.matrix[i]

    @classmethod
    def from_dict(cls, vectors: dict[str, np.ndarray], skipped: int = 0) -> "EmbeddingStore":
        """Build a store from raw (not necessarily normalized) vectors."""
        tokens = sorted(vectors)
        if not tokens:
            raise ValueError("empty vocabulary")
        mat = np.array([vectors[t] for t in tokens], dtype=np.float64)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("zero-norm vector in input")
        return cls(tokens, (mat / norms).astype(np.float32), skipped=skipped)


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Load a whitespace-separated embedding file.

    Format: optional ``count dim`` header line, then one ``token c1 ... cd``
    record per line (UTF-8). Vectors are normalized to unit length on load;
    zero-norm vectors are skipped and counted in ``store.skipped``.

    Raises :class:`EmbeddingParseError` (with line number) on malformed
    lines and :class:`DimensionMismatchError` on inconsistent dimensions.
    """
    path = Path(path)
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: dict[str, int] = {}
    dim: int | None = None
    skipped = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue  # header line
                except ValueError:
                    pass
            if len(parts) < 2:
                raise EmbeddingParseError(f"{path}:{lineno}: expected token and components")
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingParseError(f"{path}:{lineno}: bad component ({exc})") from exc
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: dimension {vec.shape[0]} != {dim}"
                )
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                skipped += 1
                continue
            unit = (vec / norm).astype(np.float32)
            if token in seen:
                rows[seen[token]] = unit  # last occurrence wins
            else:
                seen[token] = len(tokens)
                tokens.append(token)
                rows.append(unit)
    if not tokens:
        raise EmbeddingParseError(f"{path}: no usable vectors")
    return EmbeddingStore(tokens, np.vstack(rows), skipped=skipped)


def tokenize(value: str) -> list[str]:
    """Lowercased maximal runs of ASCII alphanumerics, in order of appearance."""
    return _TOKEN_RE.findall(value.lower())


def topic_vector(values, store: EmbeddingStore) -> TopicVector:
    """Mean embedding over all tokens of all distinct values found in the store.

    Values are deduplicated; token occurrences are not. Iteration over the
    value set is sorted so float accumulation is reproducible across runs.
    """
    acc = np.zeros(store.dim, dtype=np.float64)
    n = 0
    for value in sorted(set(values)):
        for tok in tokenize(value):
            row = store.get(tok)
            if row is not None:
                acc += row
                n += 1
    if n:
        acc /= n
    return TopicVector(acc, n)


def cosine(u: TopicVector, v: TopicVector) -> float:
    """Cosine of two topic-vector means, clamped to [-1, 1]."""
    if u.support <= 0 or v.support <= 0:
        raise UndefinedSimilarityError("cosine undefined for zero-support topic vectors")
    nu = float(np.linalg.norm(u.mean))
    nv = float(np.linalg.norm(v.mean))
    if nu == 0.0 or nv == 0.0:
        raise UndefinedSimilarityError("cosine undefined for zero-norm topic vectors")
    return float(np.clip(float(np.dot(u.mean, v.mean)) / (nu * nv), -1.0, 1.0))


def top_k_tokens(store: EmbeddingStore, query: np.ndarray, k: int) -> list[str]:
    """k store tokens with highest cosine to ``query``, ties broken by token.

    Exact also under cosine ties: the candidate window is widened whenever a
    tie straddles the partition cut.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    n = store.count
    if k > n:
        raise ValueError(f"k={k} exceeds vocabulary size {n}")
    q = np.asarray(query, dtype=np.float64)
    qn = float(np.linalg.norm(q))
    if qn > 0.0:
        q = q / qn
    sims = store.matrix.astype(np.float64) @ q if n <= 4096 else store.matrix @ q.astype(np.float32)
    if n <= 4096 or k + 64 >= n:
        order = sorted(range(n), key=lambda i: (-float(sims[i]), store.tokens[i]))
        return [store.tokens[i] for i in order[:k]]
    m = k + 64
    while True:
        part = np.argpartition(-sims, m - 1)[:m]
        cut = np.min(sims[part])
        rest_mask = np.ones(n, dtype=bool)
        rest_mask[part] = False
        if m >= n or not np.any(sims[rest_mask] >= cut):
            break
        m = min(n, m * 2)
    order = sorted(part.tolist(), key=lambda i: (-float(sims[i]), store.tokens[i]))
    return [store.tokens[i] for i in order[:k]]


def knn(store: EmbeddingStore, query: np.ndarray, k: int) -> list[str]:
    """Brute-force k-nearest tokens by cosine, descending; ties lexicographic."""
    return top_k_tokens(store, query, k)
