"""Per-example SGD updates for the linear learner family, plus the matching
first-order combiner actions.

Each learner contributes two things: the in-place model update for one
example, and a compact description (a ``CombinerAction``) of the Jacobian of
that update with respect to the model it started from.  Actions are what the
combiners absorb; they are always evaluated at the pre-step model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DenseVector, DimensionMismatch, Example, InvalidLabel, SparseVector

LEARNERS = ("ols", "logistic", "perceptron", "svm", "lasso")

#: label convention per learner: "real", "zero-one" ({0,1}) or "pm-one" ({-1,+1})
LABEL_CONVENTIONS = {
    "ols": "real",
    "logistic": "zero-one",
    "perceptron": "pm-one",
    "svm": "pm-one",
    "lasso": "real",
}


@dataclass(frozen=True)
class Hyperparams:
    """Constant learning rate and (where used) regularization strength."""

    alpha: float
    lam: float = 0.0


@dataclass(frozen=True)
class Identity:
    """Update does not depend on the starting model (e.g. perceptron)."""


@dataclass(frozen=True)
class RankOne:
    """Action v -> v - scale * x * (x . v)."""

    scale: float
    x: SparseVector


@dataclass(frozen=True)
class UniformScale:
    """Action v -> scale * v (SVM shrinkage)."""

    scale: float


@dataclass(frozen=True)
class LassoRow:
    """Per-coordinate masked rank-one rows over supp(x); identity elsewhere.

    ``mask`` and ``signs`` align with ``x.indices``: mask marks coordinates
    that survived the clip toward zero (derived from the post-update model),
    signs carry s(i) = sign of the pre-step weight (+1 at zero).
    """

    mask: np.ndarray
    signs: np.ndarray
    x: SparseVector
    alpha: float


CombinerAction = Identity | RankOne | UniformScale | LassoRow

_IDENTITY = Identity()


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _check_kind(kind: str) -> None:
    if kind not in LEARNERS:
        raise ValueError(f"unknown learner {kind!r}; expected one of {LEARNERS}")


def check_label(kind: str, y: float) -> None:
    """Raise InvalidLabel if y is outside the learner's label convention."""
    convention = LABEL_CONVENTIONS[kind]
    if convention == "zero-one" and y not in (0.0, 1.0):
        raise InvalidLabel(f"{kind} expects labels in {{0,1}}, got {y!r}")
    if convention == "pm-one" and y not in (-1.0, 1.0):
        raise InvalidLabel(f"{kind} expects labels in {{-1,+1}}, got {y!r}")
    if not math.isfinite(y):
        raise InvalidLabel(f"label must be finite, got {y!r}")


def check_labels(kind: str, labels: np.ndarray) -> None:
    """Vectorized label validation for a whole dataset."""
    _check_kind(kind)
    if not np.all(np.isfinite(labels)):
        raise InvalidLabel("labels must be finite")
    convention = LABEL_CONVENTIONS[kind]
    if convention == "zero-one" and not np.all((labels == 0.0) | (labels == 1.0)):
        raise InvalidLabel(f"{kind} expects labels in {{0,1}}")
    if convention == "pm-one" and not np.all((labels == -1.0) | (labels == 1.0)):
        raise InvalidLabel(f"{kind} expects labels in {{-1,+1}}")


def step_and_action(
    kind: str,
    w: DenseVector,
    idx: np.ndarray,
    val: np.ndarray,
    y: float,
    alpha: float,
    lam: float,
) -> CombinerAction:
    """Apply one SGD step to w in place and return the combiner action.

    This is the single stepping routine shared by the public API and the
    training drivers, so the two can never drift apart.  The action is
    evaluated at the model as it was on entry (pre-step).
    """
    if kind == "ols":
        z = float(val @ w[idx]) if idx.size else 0.0
        if idx.size:
            w[idx] -= (alpha * (z - y)) * val
        return RankOne(alpha, SparseVector(idx, val, copy=False))
    if kind == "logistic":
        z = float(val @ w[idx]) if idx.size else 0.0
        p = _sigmoid(z)
        if idx.size:
            w[idx] -= (alpha * (p - y)) * val
        return RankOne(alpha * p * (1.0 - p), SparseVector(idx, val, copy=False))
    if kind == "perceptron":
        z = float(val @ w[idx]) if idx.size else 0.0
        if y * z <= 0.0 and idx.size:
            w[idx] += (alpha * y) * val
        return _IDENTITY
    if kind == "svm":
        z = float(val @ w[idx]) if idx.size else 0.0
        w *= 1.0 - alpha * lam
        if z > 1.0 and idx.size:
            w[idx] += (alpha * y) * val
        return UniformScale(1.0 - alpha * lam)
    if kind == "lasso":
        if not idx.size:
            return LassoRow(
                np.empty(0, dtype=bool),
                np.empty(0),
                SparseVector(idx, val, copy=False),
                alpha,
            )
        z = float(val @ w[idx])
        wi = w[idx]
        s = np.where(wi >= 0.0, 1.0, -1.0)
        u = wi - alpha * (lam + s * (y - z)) * val
        su = s * u
        mask = su > 0.0
        w[idx] = np.where(mask, u, 0.0)
        return LassoRow(mask, s, SparseVector(idx, val, copy=False), alpha)
    _check_kind(kind)
    raise AssertionError("unreachable")


def sgd_step(kind: str, w: DenseVector, example: Example, hp: Hyperparams) -> DenseVector:
    """One SGD step on a copy of w; the input model is not mutated."""
    _check_kind(kind)
    check_label(kind, example.label)
    x = example.features
    if x.max_index() >= w.shape[0]:
        raise DimensionMismatch(
            f"example index {x.max_index()} out of range for model of length {w.shape[0]}"
        )
    out = w.astype(np.float64, copy=True)
    step_and_action(kind, out, x.indices, x.values, example.label, hp.alpha, hp.lam)
    return out


def combiner_action(
    kind: str, w_pre: DenseVector, example: Example, hp: Hyperparams
) -> CombinerAction:
    """Combiner action for one step taken from w_pre (w_pre is not mutated)."""
    _check_kind(kind)
    check_label(kind, example.label)
    x = example.features
    if x.max_index() >= w_pre.shape[0]:
        raise DimensionMismatch(
            f"example index {x.max_index()} out of range for model of length {w_pre.shape[0]}"
        )
    scratch = w_pre.astype(np.float64, copy=True)
    return step_and_action(kind, scratch, x.indices, x.values, example.label, hp.alpha, hp.lam)


def apply_action(action: CombinerAction, v: DenseVector) -> DenseVector:
    """Apply the action's matrix to a dense vector, returning a new vector."""
    if isinstance(action, Identity):
        return v.copy()
    if isinstance(action, UniformScale):
        return action.scale * v
    if isinstance(action, RankOne):
        x = action.x
        if x.max_index() >= v.shape[0]:
            raise DimensionMismatch("action support exceeds vector length")
        out = v.copy()
        if x.indices.size:
            t = float(x.values @ v[x.indices])
            out[x.indices] -= (action.scale * t) * x.values
        return out
    if isinstance(action, LassoRow):
        x = action.x
        if x.max_index() >= v.shape[0]:
            raise DimensionMismatch("action support exceeds vector length")
        out = v.copy()
        if x.indices.size:
            t = float(x.values @ v[x.indices])
            rows = v[x.indices] - (action.alpha * t) * (action.signs * x.values)
            out[x.indices] = np.where(action.mask, rows, 0.0)
        return out
    raise TypeError(f"unknown combiner action {type(action).__name__}")
