"""Evaluation: Mann-Whitney AUC and per-learner training losses."""

from __future__ import annotations

import numpy as np

from .core import Dataset
from .learners import Hyperparams, check_labels


class UndefinedMetric(ValueError):
    """The requested metric is undefined on this input (e.g. one-class AUC)."""


def auc(scores, labels) -> float:
    """Area under the ROC curve, ties counted one half.

    Positives are labels > 0, which covers both the {0,1} and {-1,+1}
    conventions.  Computed by rank accumulation in O(m log m); equal scores
    share their average rank, which is exactly the half-credit tie rule of
    the Mann-Whitney statistic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and aligned")
    if scores.size == 0:
        raise UndefinedMetric("AUC of an empty sample is undefined")
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both a positive and a negative example")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    # average 1-based rank of each tie group
    avg_rank = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def loss(kind: str, dataset: Dataset, w: np.ndarray, hp: Hyperparams) -> float:
    """Mean per-example training cost for the learner.

    Squared error / 2 for ols, log-loss for logistic, hinge for the margin
    learners, and squared error / 2 plus the L1 penalty for lasso.
    """
    if dataset.num_examples == 0:
        raise ValueError("loss of an empty dataset is undefined")
    y = dataset.labels()
    check_labels(kind, y)
    z = dataset.to_csr() @ w
    if kind == "ols":
        return float(np.mean((z - y) ** 2) / 2.0)
    if kind == "lasso":
        return float(np.mean((z - y) ** 2) / 2.0 + hp.lam * np.abs(w).sum())
    if kind == "logistic":
        t = np.where(y > 0, z, -z)
        return float(np.mean(np.logaddexp(0.0, -t)))
    if kind in ("perceptron", "svm"):
        return float(np.mean(np.maximum(0.0, 1.0 - y * z)))
    raise ValueError(f"unknown learner {kind!r}")
