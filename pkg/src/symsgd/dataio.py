"""LibSVM-format parsing/serialization, synthetic data, and dataset stats.

The on-disk format is the usual ``<label> <index>:<value> ...`` with 1-based
feature indices; ``#`` starts a comment.  Files ending in ``.gz`` are
transparently gunzipped.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .core import Dataset, Example, SparseVector


class ParseError(ValueError):
    """Malformed LibSVM input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def parse_libsvm(lines: Iterable[str] | IO[str], num_features: int | None = None) -> Dataset:
    """Parse LibSVM-formatted text into a Dataset.

    Feature indices are 1-based in the file and converted to 0-based.
    Out-of-order entries are sorted into canonical form; a duplicated index
    on one line is an error.  When ``num_features`` is omitted the feature
    space is sized by the largest index seen.
    """
    examples = []
    max_index = -1
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(lineno, f"label {tokens[0]!r} is not a number") from None
        entries = {}
        for tok in tokens[1:]:
            idx_str, sep, val_str = tok.partition(":")
            if not sep:
                raise ParseError(lineno, f"feature {tok!r} is missing ':'")
            try:
                idx = int(idx_str)
            except ValueError:
                raise ParseError(lineno, f"feature index {idx_str!r} is not an integer") from None
            try:
                val = float(val_str)
            except ValueError:
                raise ParseError(lineno, f"feature value {val_str!r} is not a number") from None
            if idx < 1:
                raise ParseError(lineno, f"feature index {idx} must be >= 1 (indices are 1-based)")
            if idx - 1 in entries:
                raise ParseError(lineno, f"duplicate feature index {idx}")
            entries[idx - 1] = val
        features = SparseVector.from_dict(entries)
        max_index = max(max_index, features.max_index())
        examples.append(Example(features, label))
    f = max_index + 1 if num_features is None else num_features
    return Dataset(examples, num_features=f)


def dump_libsvm(dataset: Dataset, stream: IO[str]) -> None:
    """Serialize a Dataset in LibSVM format (1-based indices)."""
    for e in dataset.examples:
        label = e.label
        head = str(int(label)) if float(label).is_integer() else repr(label)
        parts = [head]
        for i, v in zip(e.features.indices, e.features.values):
            parts.append(f"{i + 1}:{float(v)!r}")
        stream.write(" ".join(parts) + "\n")


def load_libsvm(path: str, num_features: int | None = None) -> Dataset:
    """Load a LibSVM file; ``.gz`` suffix gunzips transparently."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        return parse_libsvm(fh, num_features=num_features)


def save_libsvm(dataset: Dataset, path: str) -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt") as fh:
        dump_libsvm(dataset, fh)


def generate_synthetic(
    num_features: int,
    num_examples: int,
    density: float,
    noise_sd: float,
    seed: int,
    task: str = "regression",
) -> tuple[Dataset, np.ndarray]:
    """Sparse synthetic data from a hidden linear model.

    Features: each coordinate is present independently with probability
    ``density`` and carries a standard-normal value.  Labels: with margin
    z = x . w* and noise e ~ N(0, noise_sd), regression emits z + e and
    classification emits 1[z + e > 0] in {0, 1}.  Returns (dataset, w*).
    """
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(num_features)
    examples = []
    for _ in range(num_examples):
        mask = rng.random(num_features) < density
        idx = np.nonzero(mask)[0].astype(np.int64)
        val = rng.standard_normal(idx.size)
        z = float(val @ w_star[idx]) if idx.size else 0.0
        noisy = z + (rng.normal(0.0, noise_sd) if noise_sd > 0 else 0.0)
        if task == "classification":
            y = 1.0 if noisy > 0 else 0.0
        else:
            y = noisy
        examples.append(Example(SparseVector(idx, val, copy=False), y))
    return Dataset(examples, num_features=num_features), w_star


@dataclass(frozen=True)
class DatasetStats:
    num_features: int
    num_examples: int
    avg_nnz: float
    avg_nfnz_ratio: float | None


def dataset_stats(dataset: Dataset, frequent: np.ndarray | None = None) -> DatasetStats:
    """Shape statistics; the frequent-to-nonzero ratio needs a frequent set.

    The ratio averages, over examples with at least one nonzero, the share
    of that example's nonzeros that are frequent features.
    """
    n = dataset.num_examples
    nnzs = np.array([e.features.nnz for e in dataset.examples])
    avg_nnz = float(nnzs.mean()) if n else 0.0
    ratio = None
    if frequent is not None:
        is_freq = np.zeros(dataset.num_features, dtype=bool)
        freq_idx = np.asarray(list(frequent), dtype=np.int64)
        if freq_idx.size:
            is_freq[freq_idx] = True
        ratios = [
            is_freq[e.features.indices].mean()
            for e in dataset.examples
            if e.features.nnz > 0
        ]
        ratio = float(np.mean(ratios)) if ratios else 0.0
    return DatasetStats(dataset.num_features, n, avg_nnz, ratio)


def max_abs_scale(dataset: Dataset) -> Dataset:
    """Rescale each feature by 1 / max |value| over the dataset (optional)."""
    scale = np.zeros(dataset.num_features)
    for e in dataset.examples:
        if e.features.nnz:
            np.maximum.at(scale, e.features.indices, np.abs(e.features.values))
    inv = np.where(scale > 0, 1.0 / np.where(scale > 0, scale, 1.0), 1.0)
    examples = [
        Example(
            SparseVector(e.features.indices, e.features.values * inv[e.features.indices]),
            e.label,
        )
        for e in dataset.examples
    ]
    return Dataset(examples, dataset.num_features)


def unit_normalize(dataset: Dataset) -> Dataset:
    """Scale every example to unit L2 norm (empty examples pass through)."""
    examples = []
    for e in dataset.examples:
        v = e.features.values
        norm = math.sqrt(float(v @ v)) if v.size else 0.0
        if norm > 0:
            examples.append(Example(SparseVector(e.features.indices, v / norm), e.label))
        else:
            examples.append(e)
    return Dataset(examples, dataset.num_features)
