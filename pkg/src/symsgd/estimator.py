"""Scikit-learn style wrappers around the training drivers.

These adapt the row-matrix world (dense arrays or CSR matrices, arbitrary
binary label values) to the toolkit's sparse example streams, so the
trainers compose with pipelines, grid search and the usual validation
helpers.  All training knobs mirror the CLI flags of the same names.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Dataset, Example, SparseVector
from .learners import LABEL_CONVENTIONS, Hyperparams
from .parallel import ParallelConfig, train


def _rows_to_dataset(x, y) -> Dataset:
    """Turn a validated (X, y) pair into a sparse example stream."""
    n, f = x.shape
    examples = []
    if sp.issparse(x):
        x = x.tocsr()
        x.sum_duplicates()
        x.eliminate_zeros()
        x.sort_indices()
        for i in range(n):
            lo, hi = x.indptr[i], x.indptr[i + 1]
            vec = SparseVector(
                x.indices[lo:hi].astype(np.int64), x.data[lo:hi].astype(np.float64)
            )
            examples.append(Example(vec, float(y[i])))
    else:
        for i in range(n):
            row = x[i]
            idx = np.nonzero(row)[0]
            vec = SparseVector(idx.astype(np.int64), row[idx].astype(np.float64))
            examples.append(Example(vec, float(y[i])))
    return Dataset(examples, f)


class _SymSGDBase(BaseEstimator):
    def __init__(
        self,
        learner,
        algo="mr-symsgd",
        alpha=0.01,
        lam=0.0,
        threads=1,
        block_size=256,
        proj_dim=15,
        passes=1,
        seed=0,
        freq_threshold=0.10,
        freq_sample=1000,
        exact_combiner=False,
    ):
        self.learner = learner
        self.algo = algo
        self.alpha = alpha
        self.lam = lam
        self.threads = threads
        self.block_size = block_size
        self.proj_dim = proj_dim
        self.passes = passes
        self.seed = seed
        self.freq_threshold = freq_threshold
        self.freq_sample = freq_sample
        self.exact_combiner = exact_combiner

    def _config(self) -> ParallelConfig:
        return ParallelConfig(
            threads=self.threads,
            block_size=self.block_size,
            k=self.proj_dim,
            passes=self.passes,
            seed=self.seed,
            freq_threshold=self.freq_threshold,
            freq_sample=self.freq_sample,
            exact_combiner=self.exact_combiner,
        )

    def _fit_dataset(self, dataset: Dataset) -> None:
        hp = Hyperparams(self.alpha, lam=self.lam)
        report = train(self.algo, self.learner, dataset, hp, self._config())
        self.coef_ = report.final_model
        self.train_report_ = report

    def decision_function(self, X):
        """Raw scores X @ coef_ for the fitted model."""
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fit with {self.n_features_in_}"
            )
        return np.asarray(X @ self.coef_).ravel()


class SymSGDClassifier(ClassifierMixin, _SymSGDBase):
    """Binary linear classifier trained by parallel SGD.

    Parameters mirror the training drivers: ``learner`` is one of
    ``logistic``, ``perceptron`` or ``svm``; ``algo`` selects the driver
    (``seq``, ``mr-symsgd``, ``hogwild``, ``async-symsgd``); ``proj_dim``
    is the sketch size used to keep combiners compact.  Any pair of label
    values is accepted and mapped to the learner's internal convention,
    with ``classes_[1]`` treated as the positive class.
    """

    def __init__(
        self,
        learner="logistic",
        algo="mr-symsgd",
        alpha=0.01,
        lam=0.0,
        threads=1,
        block_size=256,
        proj_dim=15,
        passes=1,
        seed=0,
        freq_threshold=0.10,
        freq_sample=1000,
        exact_combiner=False,
    ):
        super().__init__(
            learner=learner,
            algo=algo,
            alpha=alpha,
            lam=lam,
            threads=threads,
            block_size=block_size,
            proj_dim=proj_dim,
            passes=passes,
            seed=seed,
            freq_threshold=freq_threshold,
            freq_sample=freq_sample,
            exact_combiner=exact_combiner,
        )

    def fit(self, X, y):
        if self.learner not in ("logistic", "perceptron", "svm"):
            raise ValueError(f"unsupported classifier learner {self.learner!r}")
        X, y = check_X_y(X, y, accept_sparse="csr")
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(
                f"expected exactly 2 classes, got {self.classes_.shape[0]}"
            )
        positive = y == self.classes_[1]
        if LABEL_CONVENTIONS[self.learner] == "zero-one":
            mapped = positive.astype(np.float64)
        else:
            mapped = np.where(positive, 1.0, -1.0)
        self.n_features_in_ = X.shape[1]
        self._fit_dataset(_rows_to_dataset(X, mapped))
        return self

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]

    def predict_proba(self, X):
        """Class probabilities; only the logistic learner is calibrated."""
        if self.learner != "logistic":
            raise AttributeError(
                f"predict_proba requires learner='logistic', not {self.learner!r}"
            )
        scores = self.decision_function(X)
        p = 1.0 / (1.0 + np.exp(-np.clip(scores, -500, 500)))
        return np.column_stack([1.0 - p, p])


class SymSGDRegressor(RegressorMixin, _SymSGDBase):
    """Linear regressor trained by parallel SGD.

    ``learner`` is ``ols`` for plain least squares or ``lasso`` for the
    L1-regularized variant (strength ``lam``); remaining parameters match
    :class:`SymSGDClassifier`.
    """

    def __init__(
        self,
        learner="ols",
        algo="mr-symsgd",
        alpha=0.01,
        lam=0.0,
        threads=1,
        block_size=256,
        proj_dim=15,
        passes=1,
        seed=0,
        freq_threshold=0.10,
        freq_sample=1000,
        exact_combiner=False,
    ):
        super().__init__(
            learner=learner,
            algo=algo,
            alpha=alpha,
            lam=lam,
            threads=threads,
            block_size=block_size,
            proj_dim=proj_dim,
            passes=passes,
            seed=seed,
            freq_threshold=freq_threshold,
            freq_sample=freq_sample,
            exact_combiner=exact_combiner,
        )

    def fit(self, X, y):
        if self.learner not in ("ols", "lasso"):
            raise ValueError(f"unsupported regressor learner {self.learner!r}")
        X, y = check_X_y(X, y, accept_sparse="csr", y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self._fit_dataset(_rows_to_dataset(X, y.astype(np.float64)))
        return self

    def predict(self, X):
        return self.decision_function(X)
