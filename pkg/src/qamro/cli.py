"""Command-line harness: train, eval, ablate, sweep-beta, grad-check, gen-synth.

Every command is deterministic given its flags. CSV outputs have a fixed
column order; the effective configuration is written next to them as
``config.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DatasetError, SynthSpec, generate_synthetic, load_dataset, save_dataset,
                   split_dataset, to_arrays)
from .gradcheck import LOSS_NAMES, check_gradients
from .losses import LossConfig
from .metrics import METRIC_NAMES, UndefinedCorrelationError, system_level_report
from .regressor import (TrainConfig, forward, init_regressor, load_checkpoint, save_checkpoint,
                        train)

logger = logging.getLogger("qamro")

VARIANTS = ("qamro", "no_weighting", "fixed_margin", "regression_only")
ABLATION_COLUMNS = ("variant", "seed", "dimension", "metric", "value", "n_systems")
SWEEP_COLUMNS = ("beta", "seed", "dimension", "metric", "value", "n_systems")
TRAIN_LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "head", "huber", "ranking")


def variant_overrides(variant: str) -> dict:
    """LossConfig overrides for one row of the ablation grid."""
    if variant == "qamro":
        return {}
    if variant == "no_weighting":
        return {"beta": 1.0}
    if variant == "fixed_margin":
        return {"beta": 1.0, "ranking": "mr"}
    if variant == "regression_only":
        return {"lambda_rank": 0.0}
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------- arguments

def _add_loss_flags(p):
    g = p.add_argument_group("loss")
    g.add_argument("--alpha", type=float, default=0.2)
    g.add_argument("--beta", type=float, default=7.0)
    g.add_argument("--fixed-margin", type=float, default=0.5)
    g.add_argument("--huber-delta", type=float, default=1.0)
    g.add_argument("--lambda-rank", type=float, default=1.0)
    g.add_argument("--ranking", choices=("qamro", "mr"), default="qamro")
    g.add_argument("--scale-min", type=float, default=1.0)
    g.add_argument("--scale-max", type=float, default=5.0)


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--batch-size", type=int, default=256)
    g.add_argument("--lr", type=float, default=0.0005)
    g.add_argument("--momentum", type=float, default=0.0)
    g.add_argument("--patience", type=int, default=20)
    g.add_argument("--max-epochs", type=int, default=2000)
    g.add_argument("--hidden-dims", type=int, nargs=2, default=[128, 64])
    g.add_argument("--val-fraction", type=float, default=0.1)
    g.add_argument("--by-system-split", action="store_true")


def _add_data_flags(p):
    p.add_argument("--data", help="JSONL dataset; a default synthetic dataset is generated per seed if omitted")


def _add_synth_flags(p):
    d = SynthSpec()
    g = p.add_argument_group("synthetic data")
    g.add_argument("--n-systems", type=int, default=d.n_systems)
    g.add_argument("--clips-per-system", type=int, default=d.clips_per_system)
    g.add_argument("--feature-dim", type=int, default=d.feature_dim)
    g.add_argument("--dimensions", nargs="+", default=d.dimension_names)
    g.add_argument("--spread", type=float, default=d.system_quality_spread)
    g.add_argument("--clip-noise-sd", type=float, default=d.clip_noise_sd)
    g.add_argument("--signal-to-noise", type=float, default=d.signal_to_noise)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qamro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=False):
        p.add_argument("--config", help="JSON file of flag defaults (flag names with underscores)")
        p.add_argument("--out", required=True, help="output directory (file for gen-synth)")
        if seeds:
            p.add_argument("--seeds", type=int, nargs="+", default=[0])
            p.add_argument("--jobs", type=int, default=1, help="parallel worker threads")
        else:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model and report system-level validation metrics")
    common(p)
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_train_flags(p)
    _add_synth_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset at system level")
    common(p)
    p.add_argument("--checkpoint", required=True)
    _add_data_flags(p)
    _add_synth_flags(p)
    p.add_argument("--scale-min", type=float, default=1.0)
    p.add_argument("--scale-max", type=float, default=5.0)

    p = sub.add_parser("ablate", help="run the four ablation variants per seed")
    common(p, seeds=True)
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_train_flags(p)
    _add_synth_flags(p)
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))

    p = sub.add_parser("sweep-beta", help="train across preference factors")
    common(p, seeds=True)
    _add_data_flags(p)
    _add_loss_flags(p)
    _add_train_flags(p)
    _add_synth_flags(p)
    p.add_argument("--betas", type=float, nargs="+", default=[1.0, 3.0, 5.0, 7.0, 9.0])

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference loss gradients")
    p.add_argument("--config")
    p.add_argument("--out", help="optional CSV report path")
    p.add_argument("--loss", choices=(*LOSS_NAMES, "all"), default="all")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)

    p = sub.add_parser("gen-synth", help="write a synthetic JSONL dataset")
    common(p)
    _add_synth_flags(p)
    p.add_argument("--scale-min", type=float, default=1.0)
    p.add_argument("--scale-max", type=float, default=5.0)
    return parser


def parse_args(argv=None):
    """Parse with precedence defaults < --config file < command-line flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            overrides = json.load(f)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(overrides) - known
        if unknown:
            parser.error(f"unknown keys in {args.config}: {sorted(unknown)}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- helpers

def loss_config_from(args, **overrides) -> LossConfig:
    kw = dict(alpha=args.alpha, beta=args.beta, fixed_margin=args.fixed_margin,
              huber_delta=args.huber_delta, lambda_rank=args.lambda_rank,
              scale_min=args.scale_min, scale_max=args.scale_max, ranking=args.ranking)
    kw.update(overrides)
    return LossConfig(**kw)


def train_config_from(args, loss: LossConfig, seed: int) -> TrainConfig:
    return TrainConfig(batch_size=args.batch_size, learning_rate=args.lr,
                       patience=args.patience, max_epochs=args.max_epochs, loss=loss,
                       seed=seed, momentum=args.momentum)


def synth_spec_from(args, seed: int) -> SynthSpec:
    return SynthSpec(n_systems=args.n_systems, clips_per_system=args.clips_per_system,
                     feature_dim=args.feature_dim, dimension_names=list(args.dimensions),
                     system_quality_spread=args.spread, clip_noise_sd=args.clip_noise_sd,
                     signal_to_noise=args.signal_to_noise, seed=seed,
                     scale_min=args.scale_min, scale_max=args.scale_max)


def dataset_for(args, seed: int):
    if args.data:
        return load_dataset(args.data, args.scale_min, args.scale_max)
    return generate_synthetic(synth_spec_from(args, seed))


def evaluate(model, samples, scale_min, scale_max):
    """System-level report with predictions clamped to the rating scale."""
    X, Y, dims, systems = to_arrays(samples)
    missing = set(dims) - set(model.head_names)
    if missing:
        raise ValueError(f"dataset dimensions {sorted(missing)} have no model head")
    preds = forward(model, X)
    y_true = {d: Y[:, k] for k, d in enumerate(dims)}
    y_pred = {d: np.clip(preds[d], scale_min, scale_max) for d in dims}
    return system_level_report(systems, y_true, y_pred)


def run_experiment(args, seed: int, loss: LossConfig, samples=None):
    """Split, train and evaluate one configuration; returns (report, log, model)."""
    samples = samples if samples is not None else dataset_for(args, seed)
    tr, va = split_dataset(samples, args.val_fraction, seed, args.by_system_split)
    Xt, Yt, dims, _ = to_arrays(tr)
    Xv, Yv, _, _ = to_arrays(va)
    midpoint = 0.5 * (args.scale_min + args.scale_max)
    reg = init_regressor(Xt.shape[1], dims, tuple(args.hidden_dims), seed, output_bias=midpoint)
    model, log = train(reg, (Xt, Yt), (Xv, Yv), train_config_from(args, loss, seed))
    return evaluate(model, va, args.scale_min, args.scale_max), log, model


def _effective_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


def _map_jobs(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _medians(rows, key_cols: int):
    """Median of the value column grouped by the first ``key_cols`` non-seed columns."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = (row[0], *row[2:2 + key_cols])
        groups.setdefault(key, []).append(float(row[4]))
    return [(*k, _fmt(statistics.median(v)), len(v)) for k, v in groups.items()]


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    out = Path(args.out)
    report, log, model = run_experiment(args, args.seed, loss_config_from(args))
    save_checkpoint(model, out / "model.json")
    (out / "metrics.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    rows = []
    for r in log.epochs:
        for h in model.head_names:
            rows.append([r.epoch, _fmt(r.train_loss), _fmt(r.val_loss), h,
                         _fmt(r.train_huber[h]), _fmt(r.train_ranking[h])])
    _write_csv(out / "train_log.csv", TRAIN_LOG_COLUMNS, rows)
    cfg = _effective_config(args)
    cfg["best_epoch"], cfg["stopped_epoch"] = log.best_epoch, log.stopped_epoch
    _write_json(out / "config.json", cfg)
    for dim in sorted(report.per_dimension):
        m = report.per_dimension[dim]
        print(f"{dim}: " + " ".join(f"{k}={m[k]:.4f}" for k in METRIC_NAMES))
    print(f"best epoch {log.best_epoch}, stopped at {log.stopped_epoch}; wrote {out}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = dataset_for(args, args.seed)
    report = evaluate(model, samples, args.scale_min, args.scale_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    _write_json(out / "config.json", _effective_config(args))
    for dim in sorted(report.per_dimension):
        m = report.per_dimension[dim]
        print(f"{dim}: " + " ".join(f"{k}={m[k]:.4f}" for k in METRIC_NAMES))
    return 0


def cmd_ablate(args) -> int:
    base = loss_config_from(args)
    tasks = [(v, s) for s in args.seeds for v in args.variants]

    def run(task):
        variant, seed = task
        loss = LossConfig(**{**base.to_dict(), **variant_overrides(variant)})
        report, log, _ = run_experiment(args, seed, loss)
        logger.info("%s seed %d: stopped at epoch %d", variant, seed, log.stopped_epoch)
        return variant, seed, report

    results = _map_jobs(run, tasks, args.jobs)
    order = {v: k for k, v in enumerate(VARIANTS)}
    results.sort(key=lambda r: (order[r[0]], r[1]))
    rows = [[v, s, dim, name, _fmt(val), n]
            for v, s, rep in results for dim, name, val, n in rep.rows()]
    out = Path(args.out)
    _write_csv(out / "ablation.csv", ABLATION_COLUMNS, rows)
    summary = _medians(rows, 2)
    _write_csv(out / "ablation_summary.csv", ("variant", "dimension", "metric", "median", "n_seeds"), summary)
    _write_json(out / "config.json", _effective_config(args))
    for v, dim, name, med, _ in summary:
        if name == "srcc":
            print(f"{v:16s} {dim:8s} median srcc {float(med):.4f}")
    return 0


def cmd_sweep_beta(args) -> int:
    bad = [b for b in args.betas if not b >= 1]
    if bad:
        raise ValueError(f"beta values must be >= 1, got {bad}")
    base = loss_config_from(args)
    tasks = [(b, s) for s in args.seeds for b in args.betas]

    def run(task):
        beta, seed = task
        loss = LossConfig(**{**base.to_dict(), "beta": beta})
        report, _, _ = run_experiment(args, seed, loss)
        return beta, seed, report

    results = _map_jobs(run, tasks, args.jobs)
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [[_fmt(b), s, dim, name, _fmt(val), n]
            for b, s, rep in results for dim, name, val, n in rep.rows()]
    out = Path(args.out)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    summary = _medians(rows, 2)
    _write_csv(out / "sweep_summary.csv", ("beta", "dimension", "metric", "median", "n_seeds"), summary)
    _write_json(out / "config.json", _effective_config(args))
    for b, dim, name, med, _ in summary:
        if name == "srcc":
            print(f"beta={float(b):<5g} {dim:8s} median srcc {float(med):.4f}")
    return 0


def cmd_grad_check(args) -> int:
    names = LOSS_NAMES if args.loss == "all" else (args.loss,)
    if args.trials == 0:
        logger.warning("grad-check with 0 trials checks nothing")
    failed = False
    rows = []
    for name in names:
        rep = check_gradients(name, args.trials, args.seed, args.step, args.tolerance)
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {name}: {args.trials} trials, max relative error {rep.max_rel_error:.3e} "
              f"(tolerance {args.tolerance:g})")
        for err, t in rep.failures[:5]:
            print(f"  failing config: rel_err={err:.3e} y_true={t.y_true.tolist()} "
                  f"y_pred={t.y_pred.tolist()} {asdict(t.config)}")
        rows.append([name, args.trials, _fmt(rep.max_rel_error), _fmt(args.tolerance), status])
        failed |= not rep.passed
    if args.out:
        _write_csv(Path(args.out), ("loss", "trials", "max_rel_error", "tolerance", "status"), rows)
    return 1 if failed else 0


def cmd_gen_synth(args) -> int:
    samples = generate_synthetic(synth_spec_from(args, args.seed))
    save_dataset(samples, args.out)
    scores = np.array([[s.scores[d] for d in sorted(s.scores)] for s in samples])
    n_sys = len({s.system_id for s in samples})
    print(f"wrote {len(samples)} clips from {n_sys} systems to {args.out}; "
          f"score range [{scores.min():.3f}, {scores.max():.3f}]")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-beta": cmd_sweep_beta,
    "grad-check": cmd_grad_check,
    "gen-synth": cmd_gen_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("QAMRO_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DatasetError, UndefinedCorrelationError, ValueError, OSError, FloatingPointError) as e:
        print(f"qamro {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
