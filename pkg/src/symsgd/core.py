"""Sparse/dense vector primitives shared by the learners, combiners and drivers.

Models are plain float64 numpy arrays; examples hold a canonical sparse
feature vector (strictly increasing indices, no stored zeros) plus a label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

DenseVector = np.ndarray


class DimensionMismatch(ValueError):
    """A sparse vector refers to a coordinate outside the dense model."""


class InvalidLabel(ValueError):
    """A label is outside the convention required by the learner."""


class SparseVector:
    """Sparse feature vector in canonical form.

    Canonical means: 1-D int64 ``indices`` strictly increasing and
    non-negative, 1-D float64 ``values`` of the same length with no stored
    zeros.  Instances are treated as immutable.
    """

    __slots__ = ("indices", "values")

    def __init__(self, indices, values, *, copy: bool = True) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if copy:
            indices = indices.copy()
            values = values.copy()
        if indices.ndim != 1 or values.ndim != 1:
            raise ValueError("indices and values must be 1-D")
        if indices.shape[0] != values.shape[0]:
            raise ValueError(
                f"indices and values disagree in length: {indices.shape[0]} vs {values.shape[0]}"
            )
        if indices.size:
            if indices[0] < 0:
                raise ValueError("feature indices must be non-negative")
            if np.any(np.diff(indices) <= 0):
                raise ValueError("feature indices must be strictly increasing")
            if np.any(values == 0.0):
                raise ValueError("canonical sparse vectors store no explicit zeros")
        self.indices = indices
        self.values = values

    @classmethod
    def empty(cls) -> "SparseVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), copy=False)

    @classmethod
    def from_dict(cls, entries: dict[int, float]) -> "SparseVector":
        """Build from an index->value mapping, dropping zeros and sorting."""
        items = sorted((i, v) for i, v in entries.items() if v != 0.0)
        idx = np.fromiter((i for i, _ in items), dtype=np.int64, count=len(items))
        val = np.fromiter((v for _, v in items), dtype=np.float64, count=len(items))
        return cls(idx, val, copy=False)

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def max_index(self) -> int:
        """Largest index present, or -1 for the empty vector."""
        return int(self.indices[-1]) if self.indices.size else -1

    def to_dense(self, num_features: int) -> DenseVector:
        if self.max_index() >= num_features:
            raise DimensionMismatch(
                f"index {self.max_index()} does not fit in {num_features} features"
            )
        out = np.zeros(num_features)
        out[self.indices] = self.values
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        pairs = ", ".join(f"{i}:{v:g}" for i, v in zip(self.indices, self.values))
        return f"SparseVector({{{pairs}}})"


@dataclass
class Example:
    """One training example: sparse features and a float label."""

    features: SparseVector
    label: float


@dataclass
class Dataset:
    """An ordered list of examples over a fixed feature space."""

    examples: list[Example]
    num_features: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.num_features < 0:
            raise ValueError("num_features must be non-negative")
        worst = max((e.features.max_index() for e in self.examples), default=-1)
        if worst >= self.num_features:
            raise DimensionMismatch(
                f"example feature index {worst} does not fit in {self.num_features} features"
            )

    @property
    def num_examples(self) -> int:
        return len(self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    def labels(self) -> np.ndarray:
        if "labels" not in self._cache:
            self._cache["labels"] = np.array([e.label for e in self.examples])
        return self._cache["labels"]

    def feature_arrays(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-example (indices, values) views for hot loops, built once."""
        if "arrays" not in self._cache:
            idxs = [e.features.indices for e in self.examples]
            vals = [e.features.values for e in self.examples]
            self._cache["arrays"] = (idxs, vals)
        return self._cache["arrays"]

    def to_csr(self) -> sp.csr_matrix:
        """CSR view of the features, cached; used for vectorized scoring."""
        if "csr" not in self._cache:
            indptr = np.zeros(len(self.examples) + 1, dtype=np.int64)
            for i, e in enumerate(self.examples):
                indptr[i + 1] = indptr[i] + e.features.nnz
            indices = np.concatenate(
                [e.features.indices for e in self.examples] or [np.empty(0, dtype=np.int64)]
            )
            data = np.concatenate(
                [e.features.values for e in self.examples] or [np.empty(0)]
            )
            self._cache["csr"] = sp.csr_matrix(
                (data, indices, indptr), shape=(len(self.examples), self.num_features)
            )
        return self._cache["csr"]


def dot(x: SparseVector, w: DenseVector) -> float:
    """Inner product of a sparse vector with a dense model."""
    if x.max_index() >= w.shape[0]:
        raise DimensionMismatch(
            f"sparse index {x.max_index()} out of range for model of length {w.shape[0]}"
        )
    if not x.indices.size:
        return 0.0
    return float(x.values @ w[x.indices])


def saxpy(w: DenseVector, c: float, x: SparseVector) -> DenseVector:
    """Return w + c * x as a fresh dense vector; w is not mutated."""
    if x.max_index() >= w.shape[0]:
        raise DimensionMismatch(
            f"sparse index {x.max_index()} out of range for model of length {w.shape[0]}"
        )
    out = w.copy()
    if x.indices.size:
        out[x.indices] += c * x.values
    return out
