"""Model combiners: the machinery that makes independently-trained SGD blocks
composable.

A block of SGD steps started from model w_g defines (to first order) a linear
map M on perturbations of the starting model.  Maintaining M densely is
O(f^2), so the projected combiner tracks U = (M - I) A for a random f x k
projection A with E[A A^T] = I, growing rows lazily as features are observed.
Combining a neighbour's drift dw then costs O(observed * k):

    combine(local, w_prev, w_g) = local + dw + U (A^T dw),   dw = w_prev - w_g

``ExactCombiner`` maintains the full matrix for small f and serves as the
reference the projected path is tested against.
"""

from __future__ import annotations

import numpy as np

from .core import DenseVector
from .learners import CombinerAction, Identity, LassoRow, RankOne, UniformScale

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class OracleScaleError(ValueError):
    """The explicit-matrix path was asked for a feature space it cannot hold."""


def mix64(z: int) -> int:
    """SplitMix64 finalizer on python ints (wrapping at 64 bits)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed derived from an ordered tuple of integers."""
    h = 0x8F1BBCDC55AA55AA
    for p in parts:
        h = mix64(h ^ (int(p) & _MASK64))
    return h


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Projection:
    """Deterministic random projection, materialized row by row.

    Row j depends only on (seed, j): querying the same feature twice, in any
    order, yields the identical row.  Modes:

    - "sparse": entries in {+sqrt(3/k), -sqrt(3/k), 0} with probabilities
      {1/6, 1/6, 2/3}; zero mean, variance 1/k per entry, so E[A A^T] = I.
    - "gaussian": N(0, 1/k) entries (analysis cross-checks).
    - "identity": k = f and row j = e_j; the debug mode under which the
      projected combiner reproduces the explicit-matrix path exactly.
    """

    def __init__(self, k: int, seed: int = 0, mode: str = "sparse") -> None:
        if k <= 0:
            raise ValueError("projection dimension k must be positive")
        if mode not in ("sparse", "gaussian", "identity"):
            raise ValueError(f"unknown projection mode {mode!r}")
        self.k = int(k)
        self.seed = int(seed)
        self.mode = mode
        self._seed_mixed = np.uint64(mix64(self.seed & _MASK64))

    @classmethod
    def identity(cls, f: int) -> "Projection":
        return cls(f, seed=0, mode="identity")

    def rows(self, features: np.ndarray) -> np.ndarray:
        """Materialize rows for the given feature indices, shape (m, k)."""
        features = np.asarray(features, dtype=np.int64)
        if self.mode == "identity":
            out = np.zeros((features.size, self.k))
            out[np.arange(features.size), features] = 1.0
            return out
        if self.mode == "gaussian":
            scale = 1.0 / np.sqrt(self.k)
            out = np.empty((features.size, self.k))
            for i, j in enumerate(features):
                out[i] = np.random.default_rng([self.seed, int(j)]).standard_normal(self.k)
            return out * scale
        with np.errstate(over="ignore"):
            base = _mix64_array(
                features.astype(np.uint64) * np.uint64(_GOLDEN) ^ self._seed_mixed
            )
            cols = (np.arange(1, self.k + 1, dtype=np.uint64)) * np.uint64(_MIX2)
            h = _mix64_array(base[:, None] + cols[None, :])
        u = (h >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        c = np.sqrt(3.0 / self.k)
        return np.where(u < 1.0 / 6.0, c, np.where(u < 1.0 / 3.0, -c, 0.0))

    def row(self, feature: int) -> np.ndarray:
        return self.rows(np.array([feature], dtype=np.int64))[0]


class ProjectedCombiner:
    """Maintains U = (M - I) A for a block of absorbed actions.

    Rows exist only for features observed so far; every coordinate outside
    that set behaves as an exact zero row of M - I (the combined model simply
    passes the neighbour drift through on those coordinates).  In identity
    mode all f rows are pre-materialized so that shrinkage actions match the
    explicit-matrix oracle operation for operation.
    """

    def __init__(self, projection: Projection, num_features: int) -> None:
        self.projection = projection
        self.num_features = int(num_features)
        self.k = projection.k
        if projection.mode == "identity" and projection.k != num_features:
            raise ValueError("identity projection requires k == num_features")
        self.examples_absorbed = 0
        self._map = np.full(num_features, -1, dtype=np.int64)
        if projection.mode == "identity":
            self._obs = np.arange(num_features, dtype=np.int64)
            self._map = np.arange(num_features, dtype=np.int64)
            self._num_obs = num_features
            self._U = np.zeros((num_features, self.k))
            self._A = np.eye(num_features)
        else:
            cap = 64
            self._obs = np.empty(cap, dtype=np.int64)
            self._num_obs = 0
            self._U = np.zeros((cap, self.k))
            self._A = np.empty((cap, self.k))

    @property
    def observed_features(self) -> np.ndarray:
        return self._obs[: self._num_obs].copy()

    def _rows_for(self, features: np.ndarray) -> np.ndarray:
        """Compact row ids for the features, materializing new ones."""
        r = self._map[features]
        fresh = features[r < 0]
        if fresh.size:
            start = self._num_obs
            end = start + fresh.size
            cap = self._U.shape[0]
            if end > cap:
                while cap < end:
                    cap *= 2
                self._U = np.vstack([self._U, np.zeros((cap - self._U.shape[0], self.k))])
                self._A = np.vstack([self._A, np.empty((cap - self._A.shape[0], self.k))])
                self._obs = np.concatenate(
                    [self._obs, np.empty(cap - self._obs.shape[0], dtype=np.int64)]
                )
            self._obs[start:end] = fresh
            self._map[fresh] = np.arange(start, end, dtype=np.int64)
            self._A[start:end] = self.projection.rows(fresh)
            self._num_obs = end
            r = self._map[features]
        return r

    def absorb(self, action: CombinerAction) -> None:
        """Fold one step's action into U:  U <- M_z U + (M_z - I) A."""
        if isinstance(action, Identity):
            pass
        elif isinstance(action, RankOne):
            x = action.x
            if x.indices.size:
                r = self._rows_for(x.indices)
                t = x.values @ self._U[r] + x.values @ self._A[r]
                self._U[r] -= np.outer(action.scale * x.values, t)
        elif isinstance(action, UniformScale):
            m = self._num_obs
            if m:
                self._U[:m] *= action.scale
                self._U[:m] += (action.scale - 1.0) * self._A[:m]
        elif isinstance(action, LassoRow):
            x = action.x
            if x.indices.size:
                r = self._rows_for(x.indices)
                v = self._U[r] + self._A[r]
                t = x.values @ v
                rows = v - np.outer(action.alpha * (action.signs * x.values), t)
                self._U[r] = np.where(action.mask[:, None], rows, 0.0) - self._A[r]
        else:
            raise TypeError(f"unknown combiner action {type(action).__name__}")
        self.examples_absorbed += 1

    def combine(self, local: DenseVector, w_prev: DenseVector, w_g: DenseVector) -> DenseVector:
        """Combined model: local + dw + U (A^T dw) with dw = w_prev - w_g."""
        delta = w_prev - w_g
        out = local + delta
        m = self._num_obs
        supp = np.nonzero(delta)[0]
        if supp.size and m:
            r = self._map[supp]
            known = r >= 0
            a_rows = np.empty((supp.size, self.k))
            a_rows[known] = self._A[r[known]]
            if np.any(~known):
                a_rows[~known] = self.projection.rows(supp[~known])
            p = delta[supp] @ a_rows
            out[self._obs[:m]] += self._U[:m] @ p
        return out


class ExactCombiner:
    """Explicit-matrix reference combiner for small feature spaces.

    Internally stores N = M - I so that the update arithmetic mirrors the
    projected path exactly (identity-mode equivalence is exact, not merely
    close); the represented matrix M is exposed via :attr:`m`.
    """

    MAX_FEATURES = 256

    def __init__(self, num_features: int) -> None:
        if num_features > self.MAX_FEATURES:
            raise OracleScaleError(
                f"explicit combiner supports at most {self.MAX_FEATURES} features, "
                f"got {num_features}"
            )
        self.num_features = int(num_features)
        self.examples_absorbed = 0
        self._n = np.zeros((num_features, num_features))

    @property
    def m(self) -> np.ndarray:
        """The combiner matrix M (fresh copy)."""
        return np.eye(self.num_features) + self._n

    def absorb(self, action: CombinerAction) -> None:
        """Fold one step's action:  M <- M_z M, maintained on N = M - I."""
        if isinstance(action, Identity):
            pass
        elif isinstance(action, RankOne):
            x = action.x
            if x.indices.size:
                idx = x.indices
                eye_rows = np.zeros((idx.size, self.num_features))
                eye_rows[np.arange(idx.size), idx] = 1.0
                t = x.values @ self._n[idx] + x.values @ eye_rows
                self._n[idx] -= np.outer(action.scale * x.values, t)
        elif isinstance(action, UniformScale):
            self._n *= action.scale
            self._n += (action.scale - 1.0) * np.eye(self.num_features)
        elif isinstance(action, LassoRow):
            x = action.x
            if x.indices.size:
                idx = x.indices
                eye_rows = np.zeros((idx.size, self.num_features))
                eye_rows[np.arange(idx.size), idx] = 1.0
                v = self._n[idx] + eye_rows
                t = x.values @ v
                rows = v - np.outer(action.alpha * (action.signs * x.values), t)
                self._n[idx] = np.where(action.mask[:, None], rows, 0.0) - eye_rows
        else:
            raise TypeError(f"unknown combiner action {type(action).__name__}")
        self.examples_absorbed += 1

    def combine(self, local: DenseVector, w_prev: DenseVector, w_g: DenseVector) -> DenseVector:
        """Combined model: local + dw + (M - I) dw, exact."""
        delta = w_prev - w_g
        out = local + delta
        out += self._n @ delta
        return out


def combiner_absorb(c, action: CombinerAction) -> None:
    """Absorb an action into a projected or exact combiner."""
    c.absorb(action)


def combine(local: DenseVector, c, w_prev: DenseVector, w_g: DenseVector) -> DenseVector:
    """Apply a combiner to a neighbour's model drift."""
    return c.combine(local, w_prev, w_g)


def exact_absorb(c: ExactCombiner, action: CombinerAction) -> None:
    c.absorb(action)


def exact_combine(
    c: ExactCombiner, local: DenseVector, w_prev: DenseVector, w_g: DenseVector
) -> DenseVector:
    return c.combine(local, w_prev, w_g)
