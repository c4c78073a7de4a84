"""Numerical verification of the combiner machinery at small scale.

Everything here runs against the explicit dense combiner (no projection),
or against Monte-Carlo sampling of the projection, so the projected fast
path in :mod:`symsgd.combiner` has an independent reference to answer to:
spectra of combiner matrices, unbiasedness of the random projection, the
variance introduced by projecting a model delta, and the two residual
terms (projection residual and second-order Taylor remainder) that
separate a combined model from the sequential one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combiner import ExactCombiner, OracleScaleError, Projection, derive_seed
from .core import Dataset, DenseVector
from .learners import Hyperparams, check_labels, step_and_action

#: feature-count cap for the dense Monte-Carlo routines
MAX_MC_FEATURES = 128


@dataclass(frozen=True)
class SpectrumReport:
    """Singular values of a combiner M and of N = M - I, descending."""

    singular_values: np.ndarray
    singular_values_n: np.ndarray
    n_examples: int
    alpha: float


@dataclass(frozen=True)
class VarianceReport:
    """Monte-Carlo trace of Cov[M A At dw] with its analytic bracket."""

    mc_trace: float
    lower_bound: float
    upper_bound: float
    k: int
    trials: int


@dataclass(frozen=True)
class TaylorErrorReport:
    """Residual statistics for first-order combination.

    ``sr_norm_at`` maps a delta scale s to the norm of the second-order
    remainder measured with delta = s * dw; ``fr_mean_norm`` and
    ``fr_second_moment`` summarize the projection residual across seeds.
    """

    fr_mean_norm: float
    fr_second_moment: float
    sr_norm_at: dict[float, float]


def _run_sequential(dataset: Dataset, kind: str, hp: Hyperparams, w0: DenseVector) -> np.ndarray:
    """One in-order SGD pass over the dataset, returning the final model."""
    w = np.array(w0, dtype=np.float64, copy=True)
    for ex in dataset.examples:
        step_and_action(kind, w, ex.features.indices, ex.features.values, ex.label, hp.alpha, hp.lam)
    return w


def dense_combiner(
    dataset: Dataset, kind: str, hp: Hyperparams, w0: DenseVector
) -> np.ndarray:
    """Explicit f x f combiner of one SGD pass over the dataset from w0.

    Runs the same stepping routine the trainers use, folding every step's
    action into a dense matrix.  Multiplying the result by a model delta
    gives the first-order change of the pass's outcome under a shifted
    start.  Quadratic memory, so capped at small feature counts.
    """
    f = dataset.num_features
    comb = ExactCombiner(f)
    w = np.array(w0, dtype=np.float64, copy=True)
    if w.shape != (f,):
        raise ValueError(f"w0 must have shape ({f},), got {w.shape}")
    for ex in dataset.examples:
        act = step_and_action(
            kind, w, ex.features.indices, ex.features.values, ex.label, hp.alpha, hp.lam
        )
        comb.absorb(act)
    return comb.m


def _jacobi_eigenvalues(g: np.ndarray, max_sweeps: int = 40) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm hits the rounding floor
    (a few ulps of the matrix norm) or stops shrinking, which resolves
    eigenvalues near zero far below the 1e-8 accuracy the spectra need.
    """
    a = np.array(g, dtype=np.float64)
    f = a.shape[0]
    if f <= 1:
        return a.reshape(-1).copy()
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return np.zeros(f)
    floor = 4.0 * np.finfo(np.float64).eps * fro
    prev_off = np.inf
    for _ in range(max_sweeps):
        off = float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))
        if off <= floor or off >= 0.99 * prev_off:
            break
        prev_off = off
        for p in range(f - 1):
            for q in range(p + 1, f):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    return np.diag(a).copy()


def singular_spectrum(
    m: np.ndarray, *, n_examples: int = 0, alpha: float = 0.0
) -> SpectrumReport:
    """Singular values of a combiner and of its identity-off part.

    Both spectra come from Jacobi eigenvalues of the Gram matrix (M^T M
    resp. N^T N with N = M - I), so the routine is independent of any
    library SVD.  Tiny negative eigenvalues from rounding clamp to zero.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > ExactCombiner.MAX_FEATURES:
        raise OracleScaleError(
            f"spectrum supports at most {ExactCombiner.MAX_FEATURES} features, got {m.shape[0]}"
        )

    def _sigmas(mat: np.ndarray) -> np.ndarray:
        lam = _jacobi_eigenvalues(mat.T @ mat)
        return np.sqrt(np.maximum(lam, 0.0))[np.argsort(-np.maximum(lam, 0.0))]

    n = m - np.eye(m.shape[0])
    return SpectrumReport(
        singular_values=_sigmas(m),
        singular_values_n=_sigmas(n),
        n_examples=n_examples,
        alpha=alpha,
    )


def projection_unbiasedness(
    f: int, k: int, trials: int, seed: int = 0, mode: str = "sparse"
) -> float:
    """Largest entry of |mean over trials of A A^T - I| for f x k draws.

    Each trial draws a fresh projection seed, so this measures exactly the
    matrices the combiners use.  The mean converges to the identity; the
    return value is the worst entry-wise deviation at the given trial count.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    if f < 1 or k < 1:
        raise ValueError("f and k must be positive")
    feats = np.arange(f, dtype=np.int64)
    chunk = max(1, min(trials, 2_000_000 // (f * k)))
    acc = np.zeros((f, f))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        rows = np.empty((b, f, k))
        for t in range(b):
            rows[t] = Projection(k, derive_seed(seed, done + t), mode).rows(feats)
        acc += np.einsum("tik,tjk->ij", rows, rows)
        done += b
    acc /= trials
    return float(np.max(np.abs(acc - np.eye(f))))


def covariance_trace_mc(
    m: np.ndarray, delta_w: DenseVector, k: int, trials: int, seed: int = 0
) -> VarianceReport:
    """Monte-Carlo trace of the covariance of the projected correction.

    Samples v = M A A^T dw across projection seeds and reports the trace
    of its empirical covariance next to the analytic bracket
    [|dw|^2/k * sum sigma_i^2,  same + |dw|^2/k * sigma_max^2]
    computed from the singular spectrum of M.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    f = m.shape[0]
    if f > MAX_MC_FEATURES:
        raise OracleScaleError(f"trace estimate supports at most {MAX_MC_FEATURES} features")
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    dw = np.asarray(delta_w, dtype=np.float64)
    if dw.shape != (f,):
        raise ValueError(f"delta_w must have shape ({f},), got {dw.shape}")

    sigmas = singular_spectrum(m).singular_values
    dw2 = float(dw @ dw)
    lower = dw2 * float(np.sum(sigmas**2)) / k
    upper = lower + dw2 * float(sigmas[0] ** 2) / k if sigmas.size else lower

    feats = np.arange(f, dtype=np.int64)
    mean_v = np.zeros(f)
    mean_sq = 0.0
    for t in range(trials):
        a = Projection(k, derive_seed(seed, t)).rows(feats)
        v = m @ (a @ (a.T @ dw))
        mean_v += v
        mean_sq += float(v @ v)
    mean_v /= trials
    mean_sq /= trials
    trace = mean_sq - float(mean_v @ mean_v)
    return VarianceReport(
        mc_trace=trace, lower_bound=lower, upper_bound=upper, k=k, trials=trials
    )


def taylor_error(
    dataset: Dataset,
    kind: str,
    hp: Hyperparams,
    w: DenseVector,
    delta_w: DenseVector,
    k: int = 8,
    trials: int = 1000,
    seed: int = 0,
    scales: tuple[float, ...] = (1.0, 0.5),
) -> TaylorErrorReport:
    """Measure the two residuals of first-order model combination.

    The second-order remainder at scale s is
    ``|S(w) - S(w - s dw) - M(w - s dw) (s dw)|`` with S the sequential
    pass and M its explicit combiner: zero for learners whose update is
    affine in the model, O(|s dw|^2) otherwise.  The projection residual
    is ``(I - M) (I - A A^T) dw`` sampled across projection seeds; its
    mean vanishes by unbiasedness and the report carries the empirical
    mean norm and second moment.
    """
    f = dataset.num_features
    if f > MAX_MC_FEATURES:
        raise OracleScaleError(f"residual measurement supports at most {MAX_MC_FEATURES} features")
    check_labels(kind, dataset.labels())
    w = np.asarray(w, dtype=np.float64)
    dw = np.asarray(delta_w, dtype=np.float64)
    if w.shape != (f,) or dw.shape != (f,):
        raise ValueError(f"w and delta_w must have shape ({f},)")

    s_at_w = _run_sequential(dataset, kind, hp, w)
    sr: dict[float, float] = {}
    for scale in scales:
        shifted = w - scale * dw
        m_shift = dense_combiner(dataset, kind, hp, shifted)
        s_shift = _run_sequential(dataset, kind, hp, shifted)
        sr[scale] = float(np.linalg.norm(s_at_w - s_shift - m_shift @ (scale * dw)))

    i_minus_m = np.eye(f) - dense_combiner(dataset, kind, hp, w - dw)
    feats = np.arange(f, dtype=np.int64)
    mean_fr = np.zeros(f)
    second = 0.0
    for t in range(trials):
        a = Projection(k, derive_seed(seed, t)).rows(feats)
        resid = dw - a @ (a.T @ dw)
        fr = i_minus_m @ resid
        mean_fr += fr
        second += float(fr @ fr)
    mean_fr /= trials
    second /= trials
    return TaylorErrorReport(
        fr_mean_norm=float(np.linalg.norm(mean_fr)),
        fr_second_moment=second,
        sr_norm_at=sr,
    )


def spectra_protocol(
    kind: str = "logistic",
    alpha: float = 0.01,
    num_features: int = 64,
    block_sizes: tuple[int, ...] = (64, 128, 256, 512),
    density: float = 0.1,
    noise_sd: float = 0.3,
    seed: int = 0,
) -> list[SpectrumReport]:
    """Combiner spectra over growing prefixes of one example stream.

    Generates unit-normalized synthetic data sized to the largest block,
    then reports the spectrum of the combiner of each prefix, from a zero
    start.  Longer blocks absorb more curvature, so the identity-off part
    grows while the combiner itself stays close to the identity.
    """
    from .dataio import generate_synthetic, unit_normalize
    from .learners import LABEL_CONVENTIONS

    task = "regression" if LABEL_CONVENTIONS[kind] == "real" else "classification"
    data, _ = generate_synthetic(
        num_features, max(block_sizes), density, noise_sd, seed=seed, task=task
    )
    data = unit_normalize(data)
    if LABEL_CONVENTIONS[kind] == "pm-one":
        from .core import Example

        data = Dataset(
            [Example(e.features, 1.0 if e.label > 0 else -1.0) for e in data.examples],
            num_features,
        )
    hp = Hyperparams(alpha)
    w0 = np.zeros(num_features)
    reports = []
    for n in sorted(block_sizes):
        prefix = Dataset(data.examples[:n], num_features)
        m = dense_combiner(prefix, kind, hp, w0)
        rep = singular_spectrum(m, n_examples=n, alpha=alpha)
        reports.append(rep)
    return reports
