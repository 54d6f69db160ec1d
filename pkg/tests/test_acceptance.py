"""Exit criteria for the package, one test per criterion.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per
criterion in the terminal summary. Criteria 5 and 6 train 180 small models
and take a few minutes.
"""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from qamro.cli import VARIANTS, main, parse_args, run_experiment, variant_overrides
from qamro.gradcheck import LOSS_NAMES, check_gradients
from qamro.losses import LossConfig, combined_loss, huber_loss, margin_ranking_loss, qamro_loss
from qamro.metrics import ktau, srcc
from qamro.pairing import build_pair_set

DESK_CONFIG = str(Path(__file__).resolve().parents[1] / "configs" / "desk_scale.json")
SEEDS = list(range(20))
BETAS = [1.0, 3.0, 5.0, 7.0, 9.0]


# ---------------------------------------------------------------- oracles

def average_ranks(x):
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    return cov / math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))


def brute_tau_b(a, b):
    n = len(a)
    conc = disc = ta = tb = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = int(a[i] > a[j]) - int(a[i] < a[j])
            db = int(b[i] > b[j]) - int(b[i] < b[j])
            ta += da == 0
            tb += db == 0
            conc += da * db > 0
            disc += da * db < 0
    n0 = n * (n - 1) // 2
    return (conc - disc) / math.sqrt((n0 - ta) * (n0 - tb))


def tied_vectors(rng, n):
    while True:
        k = int(rng.integers(2, max(3, n)))
        a = rng.integers(0, k, n).astype(float) + rng.choice([0.0, 0.5])
        b = rng.integers(0, k, n).astype(float)
        if len(set(a.tolist())) > 1 and len(set(b.tolist())) > 1:
            return a, b


# ---------------------------------------------------------------- 1

def test_c1_gradient_correctness(record):
    start = time.perf_counter()
    reports = [check_gradients(name, trials=1000, seed=0, step=1e-5, tolerance=1e-5) for name in LOSS_NAMES]
    elapsed = time.perf_counter() - start
    worst = max(r.max_rel_error for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 10.0
    record("C1 gradient correctness", ok,
           f"4x1000 trials, max rel err {worst:.2e} < 1e-5, {elapsed:.1f}s < 10s")
    assert ok


# ---------------------------------------------------------------- 2

def test_c2_loss_identities(record):
    rng = np.random.default_rng(20)
    worst_a = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 16))
        lo, gap = float(rng.uniform(1, 3)), float(rng.uniform(0.1, 2))
        # two score levels: every pair in the set has the same gap
        y = np.where(rng.permutation(n) % 2 == 0, lo, lo + gap)
        p = rng.uniform(0, 6, n)
        alpha = float(rng.uniform(0, 0.5))
        a = qamro_loss(y, p, config=LossConfig(alpha=alpha, beta=1.0)).value
        b = margin_ranking_loss(y, p, m=alpha * gap).value
        worst_a = max(worst_a, abs(a - b))
    ok_a = worst_a <= 1e-12

    ok_b = True
    for _ in range(100):
        n = int(rng.integers(1, 16))
        y = np.round(rng.uniform(1, 5, n), 1)
        p = rng.uniform(0, 6, n)
        cfg = LossConfig(lambda_rank=0.0, huber_delta=float(rng.uniform(0.1, 2)))
        c, h = combined_loss(y, p, config=cfg), huber_loss(y, p, cfg.huber_delta)
        ok_b &= c.value == h.value and np.array_equal(c.grad, h.grad)

    ok_c = True
    for _ in range(200):
        n = int(rng.integers(2, 12))
        y = np.round(rng.uniform(1, 5, n), 2)
        alpha = float(rng.uniform(0.05, 0.5))
        cfg = LossConfig(alpha=alpha, beta=float(rng.uniform(1, 10)))
        if len(build_pair_set(y)) == 0:
            continue
        # predictions y * c order every pair with slack c * |dy|: zero iff c >= alpha
        above = qamro_loss(y, y * alpha * (1 + 1e-6), config=cfg).value
        below = qamro_loss(y, y * alpha * (1 - 1e-6), config=cfg).value
        ok_c &= above == 0.0 and below > 0.0
        p = rng.uniform(0, 6, n)
        pairs = build_pair_set(y)
        satisfied = np.all(pairs.signs * (p[pairs.i] - p[pairs.j]) >= alpha * pairs.gaps)
        ok_c &= (qamro_loss(y, p, pairs, cfg).value == 0.0) == bool(satisfied)

    ok = ok_a and ok_b and ok_c
    record("C2 loss identities", ok,
           f"(a) max |qamro-mr| {worst_a:.1e} <= 1e-12: {ok_a}; (b) lambda=0 == huber: {ok_b}; "
           f"(c) zero iff slack >= alpha|dy|: {ok_c}")
    assert ok


# ---------------------------------------------------------------- 3

def test_c3_metric_oracles(record):
    rng = np.random.default_rng(30)
    worst_s = worst_k = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 31))
        a, b = tied_vectors(rng, n)
        worst_s = max(worst_s, abs(srcc(a, b) - pearson(average_ranks(a.tolist()), average_ranks(b.tolist()))))
        worst_k = max(worst_k, abs(ktau(a, b) - brute_tau_b(a.tolist(), b.tolist())))
    hand = srcc([1, 2, 3, 4], [1, 2, 2, 3])
    ok = worst_s <= 1e-12 and worst_k <= 1e-12 and round(hand, 4) == 0.9487
    record("C3 metric oracles", ok,
           f"srcc err {worst_s:.1e}, ktau err {worst_k:.1e} (<= 1e-12); srcc hand value {hand:.4f}")
    assert ok


# ---------------------------------------------------------------- 4

def test_c4_monotone_invariance(record):
    rng = np.random.default_rng(40)
    transforms = [np.exp, lambda x: x ** 3 + x, lambda x: np.arctan(x / 10), lambda x: 2 * x - 7,
                  lambda x: np.log1p(x - x.min())]
    worst = 0.0
    for t in range(200):
        n = int(rng.integers(3, 25))
        a, b = tied_vectors(rng, n)
        if rng.random() < 0.5:
            b = rng.normal(size=n)
        g = transforms[t % len(transforms)]
        for f in (srcc, ktau):
            base = f(a, b)
            worst = max(worst, abs(f(g(a), b) - base), abs(f(a, g(b)) - base))
    ok = worst <= 1e-12
    record("C4 monotone invariance", ok, f"200 trials, max change {worst:.1e} <= 1e-12")
    assert ok


# ---------------------------------------------------------------- 5 and 6

def _desk_args(command="ablate"):
    return parse_args([command, "--out", "unused", "--config", DESK_CONFIG])


@pytest.fixture(scope="module")
def ablation_grid():
    args = _desk_args()
    base = LossConfig(alpha=args.alpha, beta=args.beta, fixed_margin=args.fixed_margin,
                      huber_delta=args.huber_delta, lambda_rank=args.lambda_rank)
    srccs, times = {}, []
    start = time.perf_counter()
    for seed in SEEDS:
        for v in VARIANTS:
            t0 = time.perf_counter()
            report, _, _ = run_experiment(args, seed, LossConfig(**{**base.to_dict(), **variant_overrides(v)}))
            times.append(time.perf_counter() - t0)
            srccs[v, seed] = {d: m["srcc"] for d, m in report.per_dimension.items()}
    return srccs, times, time.perf_counter() - start


@pytest.fixture(scope="module")
def beta_sweep():
    args = _desk_args("sweep-beta")
    srccs = {}
    for seed in SEEDS:
        for beta in BETAS:
            report, _, _ = run_experiment(args, seed, LossConfig(beta=beta))
            srccs[beta, seed] = {d: m["srcc"] for d, m in report.per_dimension.items()}
    return srccs


def _median(srccs, key, dim):
    return statistics.median(srccs[key, s][dim] for s in SEEDS)


def test_c5_ablation_direction(record, ablation_grid):
    srccs, times, total = ablation_grid
    med = {v: _median(srccs, v, "MI") for v in VARIANTS}
    order = med["qamro"] >= med["no_weighting"] >= med["fixed_margin"]
    ok = order and max(times) <= 30.0 and total <= 45 * 60
    record("C5 ablation direction", ok,
           "median MI srcc qamro {qamro:.4f} >= no_weighting {no_weighting:.4f} >= fixed_margin "
           "{fixed_margin:.4f} (regression_only {regression_only:.4f}); ".format(**med)
           + f"slowest run {max(times):.1f}s, grid {total:.0f}s")
    assert ok


def test_c6_beta_sweep_direction(record, beta_sweep):
    dims = sorted(next(iter(beta_sweep.values())))
    parts, ok = [], True
    for dim in dims:
        base = _median(beta_sweep, 1.0, dim)
        meds = {b: _median(beta_sweep, b, dim) for b in BETAS[1:]}
        ok &= all(m >= base for m in meds.values())
        parts.append(f"{dim}: beta=1 {base:.4f}, " + ", ".join(f"{b:g}:{m:.4f}" for b, m in meds.items()))
    record("C6 beta sweep direction", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_determinism(record, tmp_path):
    fast = ["--config", DESK_CONFIG, "--max-epochs", "5", "--n-systems", "4", "--clips-per-system", "10"]
    runs = {
        "gen-synth": (["gen-synth", "--seed", "3"], ["data.jsonl"]),
        "train": (["train", "--seed", "7", *fast], ["metrics.csv", "model.json", "train_log.csv"]),
        "ablate": (["ablate", "--seeds", "0", "1", *fast], ["ablation.csv", "ablation_summary.csv"]),
        "sweep-beta": (["sweep-beta", "--betas", "1", "7", *fast], ["sweep.csv", "sweep_summary.csv"]),
        "grad-check": (["grad-check", "--trials", "50"], ["grad.csv"]),
    }
    same = {}
    for name, (argv, files) in runs.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / rep / name
            target = out / files[0] if name in ("gen-synth", "grad-check") else out
            assert main([*argv, "--out", str(target)]) == 0
            outs.append(out)
        same[name] = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    ckpt = tmp_path / "a" / "train" / "model.json"
    data = tmp_path / "a" / "gen-synth" / "data.jsonl"
    for rep in ("a", "b"):
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--out", str(tmp_path / rep / "eval")]) == 0
    same["eval"] = (tmp_path / "a" / "eval" / "metrics.csv").read_bytes() == (tmp_path / "b" / "eval" / "metrics.csv").read_bytes()
    ok = all(same.values())
    record("C7 determinism", ok, ", ".join(f"{k}={'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok


# ---------------------------------------------------------------- 8

def test_c8_regression_sanity(record):
    args = parse_args(["train", "--out", "unused", "--config", DESK_CONFIG, "--lambda-rank", "0",
                       "--max-epochs", "200", "--clip-noise-sd", "0", "--signal-to-noise", "1"])
    from qamro.data import generate_synthetic, split_dataset, to_arrays
    from qamro.cli import synth_spec_from
    from qamro.regressor import forward
    samples = generate_synthetic(synth_spec_from(args, 0))
    _, log, model = run_experiment(args, 0, LossConfig(lambda_rank=0.0), samples)
    _, va = split_dataset(samples, args.val_fraction, 0)
    Xv, Yv, dims, _ = to_arrays(va)
    preds = forward(model, Xv)
    val_mse = float(np.mean([np.mean((preds[d] - Yv[:, k]) ** 2) for k, d in enumerate(dims)]))
    ok = val_mse < 0.01 and log.stopped_epoch <= 200
    record("C8 regression sanity", ok, f"val mse {val_mse:.2e} < 0.01 after {log.stopped_epoch} epochs")
    assert ok
