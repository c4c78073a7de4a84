"""Training drivers: sequential, map-reduce with sound combiners, fully racy,
and the frequent/infrequent hybrid.

All drivers share one pass schedule: a seeded shuffle of the example order
per pass, identical across algorithms, so cross-algorithm comparisons see the
same data stream.  Models start at zero.  The map-reduce driver is
deterministic for a fixed (seed, threads); the racy drivers are deterministic
only at one worker.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .combiner import ProjectedCombiner, Projection, derive_seed
from .core import Dataset, DenseVector
from .learners import (
    Hyperparams,
    Identity,
    LassoRow,
    RankOne,
    SparseVector,
    UniformScale,
    _sigmoid,
    check_labels,
    step_and_action,
)

CLASSIFICATION_LEARNERS = ("logistic", "perceptron", "svm")

_SHUFFLE_TAG = 0x5487FF1E
_FREQ_TAG = 0xF4E2


@dataclass
class ParallelConfig:
    """Knobs shared by every driver; defaults follow the toolkit conventions."""

    threads: int = 1
    block_size: int = 256
    k: int = 15
    passes: int = 1
    seed: int = 0
    freq_sample: int = 1000
    freq_threshold: float = 0.10
    exact_combiner: bool = False  # debug: identity projection (k = f)
    reuse_projection: bool = False  # one A for every block (sound for ols, const alpha)

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.k < 1:
            raise ValueError("projection dimension k must be >= 1")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass
class TrainReport:
    final_model: DenseVector
    wall_time_per_pass: list[float]
    loss_per_pass: list[float]
    auc_per_pass: list[float | None]
    examples_processed: int
    algo: str = ""
    config: ParallelConfig | None = field(default=None, repr=False)


def pass_permutation(num_examples: int, seed: int, pass_index: int) -> np.ndarray:
    """The seeded per-pass shuffle every algorithm shares."""
    rng = np.random.default_rng([_SHUFFLE_TAG, seed, pass_index])
    return rng.permutation(num_examples)


def detect_frequent_features(d: Dataset, cfg: ParallelConfig) -> np.ndarray:
    """Features present in at least freq_threshold of a seeded sample.

    Samples min(freq_sample, n) examples without replacement and counts
    presence (a nonzero entry) per feature.  Returns sorted feature ids.
    """
    n = d.num_examples
    if n == 0:
        raise ValueError("cannot detect frequent features of an empty dataset")
    size = min(cfg.freq_sample, n)
    rng = np.random.default_rng([_FREQ_TAG, cfg.seed])
    chosen = rng.choice(n, size=size, replace=False)
    counts = np.zeros(d.num_features, dtype=np.int64)
    idxs, _ = d.feature_arrays()
    for i in chosen:
        counts[idxs[i]] += 1
    return np.nonzero(counts >= cfg.freq_threshold * size)[0]


def _check_train_inputs(kind: str, d: Dataset, cfg: ParallelConfig) -> None:
    if d.num_examples == 0:
        raise ValueError("cannot train on an empty dataset")
    check_labels(kind, d.labels())
    if cfg.exact_combiner and cfg.threads > 1 and d.num_features > 4096:
        raise ValueError("exact_combiner debug mode is meant for small feature spaces")


def _evaluate(kind, d, w, hp):
    lo = metrics.loss(kind, d, w, hp)
    au = None
    if kind in CLASSIFICATION_LEARNERS:
        au = metrics.auc(d.to_csr() @ w, d.labels())
    return lo, au


def _superstep_blocks(perm: np.ndarray, pos: int, workers: int, block: int):
    """Carve the next super-step out of the pass permutation.

    Full blocks go to workers in order; a final fragment shorter than a
    block is appended to the last active worker so every example is used.
    """
    remaining = perm.shape[0] - pos
    take = min(remaining, workers * block)
    q, r = divmod(take, block)
    if q == 0:
        return [perm[pos : pos + take]], pos + take
    blocks = [perm[pos + i * block : pos + (i + 1) * block] for i in range(q)]
    if r:
        blocks[-1] = perm[pos + (q - 1) * block : pos + take]
    return blocks, pos + take


def _make_projection(cfg: ParallelConfig, num_features: int, proj_seed: int) -> Projection:
    if cfg.exact_combiner:
        return Projection.identity(num_features)
    return Projection(cfg.k, seed=proj_seed)


def train_sequential(kind, d: Dataset, hp: Hyperparams, cfg: ParallelConfig) -> TrainReport:
    """Plain single-stream SGD; the reference every other driver is held to."""
    _check_train_inputs(kind, d, cfg)
    idxs, vals = d.feature_arrays()
    ys = d.labels()
    w = np.zeros(d.num_features)
    times, losses, aucs = [], [], []
    processed = 0
    for p in range(cfg.passes):
        perm = pass_permutation(d.num_examples, cfg.seed, p)
        t0 = time.perf_counter()
        for t in perm:
            step_and_action(kind, w, idxs[t], vals[t], ys[t], hp.alpha, hp.lam)
        times.append(time.perf_counter() - t0)
        processed += perm.shape[0]
        lo, au = _evaluate(kind, d, w, hp)
        losses.append(lo)
        aucs.append(au)
    return TrainReport(w, times, losses, aucs, processed, algo="seq", config=cfg)


def train_mr_symsgd(kind, d: Dataset, hp: Hyperparams, cfg: ParallelConfig) -> TrainReport:
    """Fork-join SGD: workers run disjoint blocks from the shared model, then
    a sound combiner fold makes the result order-deterministic.

    Worker i's model is combined as w_i = combine(local_i, c_i, w_{i-1}, w_g)
    with w_0 = w_g; the first worker needs no combiner (its drift is zero).
    At one worker the driver degenerates to exactly the sequential stream.
    """
    _check_train_inputs(kind, d, cfg)
    idxs, vals = d.feature_arrays()
    ys = d.labels()
    f = d.num_features
    P = cfg.threads
    w_g = np.zeros(f)
    times, losses, aucs = [], [], []
    processed = 0

    def run_block(block, proj_seed, build_combiner):
        w = w_g.copy()
        c = None
        if build_combiner:
            c = ProjectedCombiner(_make_projection(cfg, f, proj_seed), f)
            for t in block:
                a = step_and_action(kind, w, idxs[t], vals[t], ys[t], hp.alpha, hp.lam)
                c.absorb(a)
        else:
            for t in block:
                step_and_action(kind, w, idxs[t], vals[t], ys[t], hp.alpha, hp.lam)
        return w, c

    pool = ThreadPoolExecutor(max_workers=P) if P > 1 else None
    try:
        for p in range(cfg.passes):
            perm = pass_permutation(d.num_examples, cfg.seed, p)
            pos = 0
            superstep = 0
            t0 = time.perf_counter()
            while pos < perm.shape[0]:
                blocks, pos = _superstep_blocks(perm, pos, P, cfg.block_size)
                seeds = [
                    derive_seed(cfg.seed)
                    if cfg.reuse_projection
                    else derive_seed(cfg.seed, p, superstep, i)
                    for i in range(len(blocks))
                ]
                if pool is None or len(blocks) == 1:
                    results = [
                        run_block(b, s, i > 0) for i, (b, s) in enumerate(zip(blocks, seeds))
                    ]
                else:
                    futures = [
                        pool.submit(run_block, b, s, i > 0)
                        for i, (b, s) in enumerate(zip(blocks, seeds))
                    ]
                    results = [fu.result() for fu in futures]
                w_prev = results[0][0]
                for local, c in results[1:]:
                    w_prev = c.combine(local, w_prev, w_g)
                w_g = w_prev
                processed += sum(b.shape[0] for b in blocks)
                superstep += 1
            times.append(time.perf_counter() - t0)
            lo, au = _evaluate(kind, d, w_g, hp)
            losses.append(lo)
            aucs.append(au)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainReport(w_g, times, losses, aucs, processed, algo="mr-symsgd", config=cfg)


def train_hogwild(kind, d: Dataset, hp: Hyperparams, cfg: ParallelConfig) -> TrainReport:
    """Lock-free SGD: workers stream disjoint contiguous shards of the pass
    permutation and write straight into one shared model.

    Per-coordinate stores are indivisible (no torn doubles) but read-update-
    write interleavings can lose updates; that is the accepted contract.
    Snapshots for metrics happen only at pass boundaries with all workers
    joined.
    """
    _check_train_inputs(kind, d, cfg)
    idxs, vals = d.feature_arrays()
    ys = d.labels()
    P = cfg.threads
    w = np.zeros(d.num_features)
    times, losses, aucs = [], [], []
    processed = 0

    def run_shard(shard):
        for t in shard:
            step_and_action(kind, w, idxs[t], vals[t], ys[t], hp.alpha, hp.lam)

    for p in range(cfg.passes):
        perm = pass_permutation(d.num_examples, cfg.seed, p)
        shards = np.array_split(perm, P)
        t0 = time.perf_counter()
        if P == 1:
            run_shard(perm)
        else:
            with ThreadPoolExecutor(max_workers=P) as pool:
                list(pool.map(run_shard, shards))
        times.append(time.perf_counter() - t0)
        processed += perm.shape[0]
        lo, au = _evaluate(kind, d, w, hp)
        losses.append(lo)
        aucs.append(au)
    return TrainReport(w, times, losses, aucs, processed, algo="hogwild", config=cfg)


def train_async_symsgd(kind, d: Dataset, hp: Hyperparams, cfg: ParallelConfig) -> TrainReport:
    """Hybrid driver: frequent coordinates go through combiners at block
    boundaries exactly as in the map-reduce driver; infrequent coordinates
    are written racily to the shared model as each example is processed.

    With every feature frequent this coincides with train_mr_symsgd (same
    seeds); with none it degenerates to train_hogwild's update pattern.
    """
    _check_train_inputs(kind, d, cfg)
    idxs, vals = d.feature_arrays()
    ys = d.labels()
    f = d.num_features
    P = cfg.threads
    frequent = detect_frequent_features(d, cfg)
    n_freq = frequent.shape[0]
    comp_of = np.full(f, -1, dtype=np.int64)
    comp_of[frequent] = np.arange(n_freq)
    all_frequent = n_freq == f

    # split each example once into (frequent-compact, infrequent-original)
    fidx, fval, iidx, ival = [], [], [], []
    for t in range(d.num_examples):
        c = comp_of[idxs[t]]
        freq_mask = c >= 0
        fidx.append(c[freq_mask])
        fval.append(vals[t][freq_mask])
        iidx.append(idxs[t][~freq_mask])
        ival.append(vals[t][~freq_mask])

    wq = np.zeros(n_freq)  # frequent part, authoritative between super-steps
    ws = np.zeros(f)  # shared model: infrequent coordinates live here
    times, losses, aucs = [], [], []
    processed = 0

    def hybrid_step(wf, t):
        nonlocal ws  # svm's `ws *= scale` would otherwise shadow it
        fi, fv = fidx[t], fval[t]
        ii, iv = iidx[t], ival[t]
        y = ys[t]
        z = (float(fv @ wf[fi]) if fi.size else 0.0) + (
            float(iv @ ws[ii]) if ii.size else 0.0
        )
        alpha, lam = hp.alpha, hp.lam
        if kind == "ols" or kind == "logistic":
            if kind == "ols":
                g = alpha * (z - y)
                act = RankOne(alpha, SparseVector(fi, fv, copy=False))
            else:
                p = _sigmoid(z)
                g = alpha * (p - y)
                act = RankOne(alpha * p * (1.0 - p), SparseVector(fi, fv, copy=False))
            if fi.size:
                wf[fi] -= g * fv
            if ii.size:
                ws[ii] -= g * iv
            return act
        if kind == "perceptron":
            if y * z <= 0.0:
                if fi.size:
                    wf[fi] += (alpha * y) * fv
                if ii.size:
                    ws[ii] += (alpha * y) * iv
            return Identity()
        if kind == "svm":
            scale = 1.0 - alpha * lam
            wf *= scale
            if not all_frequent:
                ws *= scale
            if z > 1.0:
                if fi.size:
                    wf[fi] += (alpha * y) * fv
                if ii.size:
                    ws[ii] += (alpha * y) * iv
            return UniformScale(scale)
        if kind == "lasso":
            act_mask = np.empty(0, dtype=bool)
            act_signs = np.empty(0)
            if fi.size:
                wi = wf[fi]
                s = np.where(wi >= 0.0, 1.0, -1.0)
                u = wi - alpha * (lam + s * (y - z)) * fv
                act_mask = (s * u) > 0.0
                act_signs = s
                wf[fi] = np.where(act_mask, u, 0.0)
            if ii.size:
                wi = ws[ii]
                s = np.where(wi >= 0.0, 1.0, -1.0)
                u = wi - alpha * (lam + s * (y - z)) * iv
                ws[ii] = np.where((s * u) > 0.0, u, 0.0)
            return LassoRow(act_mask, act_signs, SparseVector(fi, fv, copy=False), alpha)
        raise ValueError(f"unknown learner {kind!r}")

    def run_block(block, proj_seed, build_combiner):
        wf = wq.copy()
        c = None
        if build_combiner and n_freq:
            c = ProjectedCombiner(_make_projection(cfg, n_freq, proj_seed), n_freq)
            for t in block:
                c.absorb(hybrid_step(wf, t))
        else:
            for t in block:
                hybrid_step(wf, t)
        return wf, c

    pool = ThreadPoolExecutor(max_workers=P) if P > 1 else None
    try:
        for p in range(cfg.passes):
            perm = pass_permutation(d.num_examples, cfg.seed, p)
            pos = 0
            superstep = 0
            t0 = time.perf_counter()
            while pos < perm.shape[0]:
                blocks, pos = _superstep_blocks(perm, pos, P, cfg.block_size)
                seeds = [
                    derive_seed(cfg.seed)
                    if cfg.reuse_projection
                    else derive_seed(cfg.seed, p, superstep, i)
                    for i in range(len(blocks))
                ]
                if pool is None or len(blocks) == 1:
                    results = [
                        run_block(b, s, i > 0) for i, (b, s) in enumerate(zip(blocks, seeds))
                    ]
                else:
                    futures = [
                        pool.submit(run_block, b, s, i > 0)
                        for i, (b, s) in enumerate(zip(blocks, seeds))
                    ]
                    results = [fu.result() for fu in futures]
                wf_prev = results[0][0]
                for local, c in results[1:]:
                    if c is None:
                        wf_prev = local
                    else:
                        wf_prev = c.combine(local, wf_prev, wq)
                wq = wf_prev
                processed += sum(b.shape[0] for b in blocks)
                superstep += 1
            times.append(time.perf_counter() - t0)
            w_full = ws.copy()
            if n_freq:
                w_full[frequent] = wq
            lo, au = _evaluate(kind, d, w_full, hp)
            losses.append(lo)
            aucs.append(au)
    finally:
        if pool is not None:
            pool.shutdown()
    w_full = ws.copy()
    if n_freq:
        w_full[frequent] = wq
    return TrainReport(w_full, times, losses, aucs, processed, algo="async-symsgd", config=cfg)


ALGORITHMS = {
    "seq": train_sequential,
    "mr-symsgd": train_mr_symsgd,
    "hogwild": train_hogwild,
    "async-symsgd": train_async_symsgd,
}


def train(algo: str, kind: str, d: Dataset, hp: Hyperparams, cfg: ParallelConfig) -> TrainReport:
    """Dispatch to a driver by algorithm name."""
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {sorted(ALGORITHMS)}")
    return ALGORITHMS[algo](kind, d, hp, cfg)
