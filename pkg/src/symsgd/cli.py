"""Command-line front end: training, benchmarking, sweeps and analysis.

Reports are line-delimited JSON records written to ``--out`` (stdout when
omitted); human-readable summaries go to stderr so the record stream stays
machine-parseable.  Every flag can be defaulted through an environment
variable named ``SYMSGD_<FLAG>`` (dashes become underscores, upper-case),
with explicit flags taking precedence.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys

import numpy as np

from . import analysis, dataio
from .core import Dataset, Example, InvalidLabel
from .learners import LEARNERS, Hyperparams
from .metrics import UndefinedMetric, auc, loss
from .parallel import (
    ALGORITHMS,
    ParallelConfig,
    TrainReport,
    detect_frequent_features,
    train,
)

ENV_PREFIX = "SYMSGD_"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _env(flag: str, cast, fallback):
    """Default for a flag, overridable via SYMSGD_<FLAG> in the environment."""
    raw = os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper())
    if raw is None:
        return fallback
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=_env("data", str, None), help="training set (LibSVM text, .gz ok)")
    p.add_argument("--test-data", default=_env("test-data", str, None), help="held-out set for the summary")
    p.add_argument("--num-features", type=int, default=_env("num-features", int, None),
                   help="override the feature count (aligns train/test dimensionality)")
    p.add_argument("--label-convention", choices=("keep", "zero-one", "pm-one"),
                   default=_env("label-convention", str, "keep"),
                   help="convert {0,1} <-> {-1,+1} labels; default keeps them untouched")
    p.add_argument("--scale-max-abs", action="store_true",
                   default=_env("scale-max-abs", bool, False),
                   help="scale each feature by its max absolute value")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default=_env("algo", str, "seq"))
    p.add_argument("--learner", choices=LEARNERS, default=_env("learner", str, "logistic"))
    p.add_argument("--alpha", type=float, default=_env("alpha", float, 0.01))
    p.add_argument("--lambda", dest="lam", type=float, default=_env("lambda", float, 0.0))
    p.add_argument("--threads", type=int, default=_env("threads", int, 1))
    p.add_argument("--block-size", type=int, default=_env("block-size", int, 256))
    p.add_argument("--proj-dim", type=int, default=_env("proj-dim", int, 15))
    p.add_argument("--passes", type=int, default=_env("passes", int, 1))
    p.add_argument("--seed", type=int, default=_env("seed", int, 0))
    p.add_argument("--freq-threshold", type=float, default=_env("freq-threshold", float, 0.10))
    p.add_argument("--freq-sample", type=int, default=_env("freq-sample", int, 1000))
    p.add_argument("--exact-combiner", action="store_true",
                   default=_env("exact-combiner", bool, False),
                   help="debug: keep combiners exactly (identity projection)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symsgd",
        description="Parallel SGD for linear learners with sound model combiners.",
        epilog=f"Flag defaults honor {ENV_PREFIX}<FLAG> environment variables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and report per-pass records")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default=_env("out", str, None), help="record file (default stdout)")

    p = sub.add_parser("bench", help="time algorithms on one dataset, same shuffles")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--repeat", type=int, default=_env("repeat", int, 5),
                   help="timing repetitions per algorithm")
    p.add_argument("--out", default=_env("out", str, None))

    p = sub.add_parser("sweep", help="grid over alpha / block_size / k, report selection")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--grid", action="append", default=None, metavar="AXIS=V1,V2,...",
                   help="axis values, e.g. --grid alpha=0.001,0.01 --grid k=7,15")
    p.add_argument("--out", default=_env("out", str, None))

    p = sub.add_parser("analyze", help="combiner spectra, projection statistics, residuals")
    p.add_argument("--learner", choices=LEARNERS, default=_env("learner", str, "logistic"))
    p.add_argument("--alpha", type=float, default=_env("alpha", float, 0.01))
    p.add_argument("--num-features", type=int, default=_env("num-features", int, 64))
    p.add_argument("--proj-dim", type=int, default=_env("proj-dim", int, 8))
    p.add_argument("--trials", type=int, default=_env("trials", int, 10_000))
    p.add_argument("--seed", type=int, default=_env("seed", int, 0))
    p.add_argument("--out", default=_env("out", str, None))

    p = sub.add_parser("stats", help="dataset shape, sparsity and frequent-feature ratio")
    _add_data_flags(p)
    p.add_argument("--freq-threshold", type=float, default=_env("freq-threshold", float, 0.10))
    p.add_argument("--freq-sample", type=int, default=_env("freq-sample", int, 1000))
    p.add_argument("--seed", type=int, default=_env("seed", int, 0))
    p.add_argument("--out", default=_env("out", str, None))

    p = sub.add_parser("gen", help="write a synthetic LibSVM dataset")
    p.add_argument("--num-features", type=int, required=True)
    p.add_argument("--num-examples", type=int, required=True)
    p.add_argument("--density", type=float, default=_env("density", float, 0.1))
    p.add_argument("--noise-sd", type=float, default=_env("noise-sd", float, 0.1))
    p.add_argument("--task", choices=("regression", "classification"),
                   default=_env("task", str, "regression"))
    p.add_argument("--seed", type=int, default=_env("seed", int, 0))
    p.add_argument("--out", default=_env("out", str, None), help="output path (default stdout)")

    return parser


def _checksum(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w, dtype=np.float64).tobytes()).hexdigest()


def _convert_labels(dataset: Dataset, convention: str) -> Dataset:
    if convention == "keep":
        return dataset
    table = {"zero-one": {-1.0: 0.0, 1.0: 1.0, 0.0: 0.0},
             "pm-one": {0.0: -1.0, 1.0: 1.0, -1.0: -1.0}}[convention]
    examples = []
    for e in dataset.examples:
        if e.label not in table:
            raise InvalidLabel(
                f"cannot convert label {e.label!r} to the {convention} convention"
            )
        examples.append(Example(e.features, table[e.label]))
    return Dataset(examples, dataset.num_features)


def _load(args, path: str) -> Dataset:
    d = dataio.load_libsvm(path, num_features=args.num_features)
    d = _convert_labels(d, args.label_convention)
    if args.scale_max_abs:
        d = dataio.max_abs_scale(d)
    return d


def _require_data(parser_name: str, args) -> Dataset:
    if not args.data:
        raise _Usage(f"{parser_name} requires --data")
    return _load(args, args.data)


class _Usage(Exception):
    """Invalid flag combination detected after parsing."""


def _config(args) -> ParallelConfig:
    return ParallelConfig(
        threads=args.threads,
        block_size=args.block_size,
        k=args.proj_dim,
        passes=args.passes,
        seed=args.seed,
        freq_sample=args.freq_sample,
        freq_threshold=args.freq_threshold,
        exact_combiner=args.exact_combiner,
    )


def _emit(records, out_path) -> None:
    lines = "".join(json.dumps(r) + "\n" for r in records)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)


def _say(*lines: str) -> None:
    for line in lines:
        print(line, file=sys.stderr)


def _pass_records(report: TrainReport, learner: str, alpha: float,
                  seconds=None) -> list[dict]:
    """One record per pass; the checksum rides on the final pass only."""
    cfg = report.config
    checksum = _checksum(report.final_model)
    n = len(report.wall_time_per_pass)
    rows = []
    for i in range(n):
        rows.append({
            "algo": report.algo,
            "learner": learner,
            "threads": cfg.threads,
            "block_size": cfg.block_size,
            "k": cfg.k,
            "alpha": alpha,
            "pass": i + 1,
            "seconds": seconds[i] if seconds is not None else report.wall_time_per_pass[i],
            "loss": report.loss_per_pass[i],
            "auc": report.auc_per_pass[i],
            "model_checksum": checksum if i == n - 1 else None,
            "seeds": {"seed": cfg.seed},
        })
    return rows


def _held_out_summary(args, w: np.ndarray, hp: Hyperparams) -> list[str]:
    if not args.test_data:
        return []
    test = _load(args, args.test_data)
    lines = [f"test loss {loss(args.learner, test, w, hp):.6f}"]
    try:
        lines.append(f"test auc {auc(test.to_csr() @ w, test.labels()):.6f}")
    except UndefinedMetric:
        pass
    return lines


def cmd_train(args) -> int:
    d = _require_data("train", args)
    hp = Hyperparams(args.alpha, lam=args.lam)
    report = train(args.algo, args.learner, d, hp, _config(args))
    _emit(_pass_records(report, args.learner, args.alpha), args.out)
    total = sum(report.wall_time_per_pass)
    summary = [
        f"{args.algo}/{args.learner}: {report.examples_processed} examples "
        f"in {total:.3f}s over {len(report.wall_time_per_pass)} pass(es)",
        f"final loss {report.loss_per_pass[-1]:.6f}"
        + (f", auc {report.auc_per_pass[-1]:.6f}" if report.auc_per_pass[-1] is not None else ""),
        f"model sha256 {_checksum(report.final_model)}",
    ]
    summary += _held_out_summary(args, report.final_model, hp)
    _say(*summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    d = _require_data("bench", args)
    if args.repeat < 1:
        raise _Usage("--repeat must be >= 1")
    hp = Hyperparams(args.alpha, lam=args.lam)
    cfg = _config(args)
    algos = ["seq"] + ([] if args.algo == "seq" else [args.algo])
    records, totals, summary = [], {}, []
    for algo in algos:
        per_pass = np.zeros(cfg.passes)
        report = None
        for _ in range(args.repeat):
            report = train(algo, args.learner, d, hp, cfg)
            per_pass += np.asarray(report.wall_time_per_pass)
        per_pass /= args.repeat
        totals[algo] = float(per_pass.sum())
        records += _pass_records(report, args.learner, args.alpha, seconds=list(per_pass))
        line = f"{algo}: {totals[algo]:.3f}s mean of {args.repeat} run(s)"
        if algo != "seq":
            line += f", speedup vs seq {totals['seq'] / totals[algo]:.2f}x"
        summary.append(line)
    _emit(records, args.out)
    _say(*summary)
    return EXIT_OK


_SWEEP_AXES = {"alpha": float, "block_size": int, "k": int}


def _parse_grid(specs) -> dict[str, list]:
    axes = {}
    for entry in specs or []:
        name, _, values = entry.partition("=")
        name = name.replace("-", "_")
        if name not in _SWEEP_AXES or not values:
            raise _Usage(
                f"bad --grid {entry!r}; expected axis in {sorted(_SWEEP_AXES)} with values"
            )
        try:
            axes[name] = [_SWEEP_AXES[name](v) for v in values.split(",")]
        except ValueError as exc:
            raise _Usage(f"bad --grid value in {entry!r}: {exc}") from exc
    return axes


def cmd_sweep(args) -> int:
    d = _require_data("sweep", args)
    axes = _parse_grid(args.grid)
    grid = {
        "alpha": axes.get("alpha", [args.alpha]),
        "block_size": axes.get("block_size", [args.block_size]),
        "k": axes.get("k", [args.proj_dim]),
    }
    hp_of = lambda a: Hyperparams(a, lam=args.lam)  # noqa: E731
    seq_auc: dict[float, float] = {}
    rows = []
    for alpha, block, k in itertools.product(*grid.values()):
        if alpha not in seq_auc:
            ref = train("seq", args.learner, d, hp_of(alpha), _config(args))
            seq_auc[alpha] = ref.auc_per_pass[-1]
        cfg = ParallelConfig(
            threads=args.threads, block_size=block, k=k, passes=args.passes,
            seed=args.seed, freq_sample=args.freq_sample,
            freq_threshold=args.freq_threshold, exact_combiner=args.exact_combiner,
        )
        report = train(args.algo, args.learner, d, hp_of(alpha), cfg)
        rows.append(_pass_records(report, args.learner, alpha)[-1])

    key_auc = lambda r: r["auc"] if r["auc"] is not None else -r["loss"]  # noqa: E731
    best = max(rows, key=key_auc)
    kept = [
        r for r in rows
        if r["alpha"] == best["alpha"]
        and r["auc"] is not None
        and seq_auc[r["alpha"]] is not None
        and abs(r["auc"] - seq_auc[r["alpha"]]) < 5e-5
    ]
    selected = min(kept, key=lambda r: r["seconds"]) if kept else best
    _emit(rows + [selected], args.out)
    _say(
        f"swept {len(rows)} configuration(s); last record repeats the selection",
        "selected: alpha={alpha} block_size={block_size} k={k} "
        "(auc={auc}, {seconds:.3f}s)".format(**selected),
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.trials < 1000:
        raise _Usage("--trials must be >= 1000")
    records, summary = [], []

    reports = analysis.spectra_protocol(
        kind=args.learner, alpha=args.alpha, num_features=args.num_features, seed=args.seed
    )
    for rep in reports:
        records.append({
            "report": "spectrum",
            "n_examples": rep.n_examples,
            "alpha": rep.alpha,
            "sigma_max": float(rep.singular_values[0]),
            "sigma_min": float(rep.singular_values[-1]),
            "mean_sigma_n": float(rep.singular_values_n.mean()),
            "singular_values": [float(s) for s in rep.singular_values],
            "singular_values_n": [float(s) for s in rep.singular_values_n],
        })
    summary.append(
        "spectra: sigma(M) in [{:.4f}, {:.6f}] at {} examples; mean sigma(N) {:.5f} -> {:.5f}".format(
            float(reports[0].singular_values[-1]), float(reports[0].singular_values[0]),
            reports[0].n_examples,
            float(reports[0].singular_values_n.mean()),
            float(reports[-1].singular_values_n.mean()),
        )
    )

    dev = analysis.projection_unbiasedness(
        args.num_features, args.proj_dim, args.trials, seed=args.seed
    )
    records.append({
        "report": "unbiasedness", "f": args.num_features, "k": args.proj_dim,
        "trials": args.trials, "seed": args.seed, "max_deviation": dev,
    })
    summary.append(f"projection unbiasedness: max |mean(AA^T) - I| = {dev:.5f} at {args.trials} trials")

    f_tr = min(args.num_features, 50)
    dw = np.zeros(f_tr)
    dw[:] = 1.0 / np.sqrt(f_tr)
    var = analysis.covariance_trace_mc(
        np.eye(f_tr), dw, k=args.proj_dim, trials=args.trials, seed=args.seed
    )
    records.append({
        "report": "trace", "f": f_tr, "k": var.k, "trials": var.trials,
        "mc_trace": var.mc_trace, "lower_bound": var.lower_bound,
        "upper_bound": var.upper_bound,
    })
    summary.append(
        f"covariance trace (identity map): {var.mc_trace:.4f} "
        f"in [{var.lower_bound:.4f}, {var.upper_bound:.4f}]"
    )

    clf, _ = dataio.generate_synthetic(24, 64, 0.2, 0.3, seed=args.seed, task="classification")
    rng = np.random.default_rng(args.seed)
    w = rng.standard_normal(24) * 0.2
    delta = rng.standard_normal(24)
    delta *= 0.2 / np.linalg.norm(delta)
    tay = analysis.taylor_error(
        clf, "logistic", Hyperparams(0.1), w, delta,
        k=args.proj_dim, trials=args.trials, seed=args.seed,
    )
    records.append({
        "report": "taylor", "learner": "logistic", "trials": args.trials,
        "fr_mean_norm": tay.fr_mean_norm, "fr_second_moment": tay.fr_second_moment,
        "sr_norm_at": {str(k): v for k, v in tay.sr_norm_at.items()},
    })
    ratio = tay.sr_norm_at[1.0] / tay.sr_norm_at[0.5]
    summary.append(
        f"taylor residuals: SR scaling ratio {ratio:.2f} (quadratic = 4), "
        f"FR mean norm {tay.fr_mean_norm:.2e}"
    )

    _emit(records, args.out)
    _say(*summary)
    return EXIT_OK


def cmd_stats(args) -> int:
    d = _require_data("stats", args)
    cfg = ParallelConfig(
        freq_sample=args.freq_sample, freq_threshold=args.freq_threshold, seed=args.seed
    )
    frequent = detect_frequent_features(d, cfg)
    st = dataio.dataset_stats(d, frequent=frequent)
    _emit([{
        "report": "stats",
        "num_features": st.num_features,
        "num_examples": st.num_examples,
        "avg_nnz": st.avg_nnz,
        "avg_nfnz_ratio": st.avg_nfnz_ratio,
        "frequent_features": int(frequent.size),
    }], args.out)
    _say(
        f"{st.num_examples} examples, {st.num_features} features, "
        f"avg nnz {st.avg_nnz:.2f}, frequent-nnz ratio {st.avg_nfnz_ratio:.3f} "
        f"({frequent.size} frequent features)"
    )
    return EXIT_OK


def cmd_gen(args) -> int:
    d, _ = dataio.generate_synthetic(
        args.num_features, args.num_examples, args.density, args.noise_sd,
        seed=args.seed, task=args.task,
    )
    if args.out:
        dataio.save_libsvm(d, args.out)
    else:
        dataio.dump_libsvm(d, sys.stdout)
    _say(f"wrote {args.num_examples} {args.task} examples over {args.num_features} features")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "stats": cmd_stats,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataio.ParseError, InvalidLabel, UndefinedMetric, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary maps everything
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
