"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``) or directly as ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from modeguide.data import make_overlap_model, make_planted_model
from modeguide.distill import baseline_distill, distill
from modeguide.metrics import downstream_accuracy, mode_coverage
from modeguide.modes import GaussianMixtureModes, KMeansModes
from modeguide.sampler import (GuidanceConfig, ddim_step, ddpm_step, mode_guidance_apply,
                               predict_x0, reverse_process, sample_guided)
from modeguide.schedule import build_linear_schedule
from modeguide.sweeps import sweep_lambda, sweep_tstop

from oracles import diffused, fd_gradient, mixture_logpdf, relative_error

ROOT = Path(__file__).resolve().parents[1]
SCHED = build_linear_schedule()
JOBS = min(4, os.cpu_count() or 1)

# coverage benchmark: 2 classes x 8 modes, 30 apart, lightest/heaviest weight 0.3
COVERAGE_MODEL = make_planted_model(2, 8, 30.0, "imbalanced", 0.3, 1.0, 2)
COVERAGE_SEEDS = range(100)
# accuracy benchmark: 5 classes whose light modes sit inside the next class's sector
ACCURACY_SEEDS = range(20)
ACCURACY_IPC = 4
# conditional sampling (w = 1) keeps the analytic sampler on the data manifold
BENCH_CFG = GuidanceConfig(cfg_scale=1.0)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, seconds, limit):
        within = seconds < limit
        verdict = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n{verdict} criterion {number}: {detail} "
                  f"[{seconds:.2f} s, limit {limit:g} s]", flush=True)
        return ok and within
    return emit


def _coverage(cfg, seeds=COVERAGE_SEEDS, guided=True):
    model = COVERAGE_MODEL
    vals = []
    for s in seeds:
        ds = (distill(model, "kmeans", cfg, ipc=8, rng=s) if guided
              else baseline_distill(model, cfg, ipc=8, rng=s))
        vals.extend(mode_coverage(ds.for_class(c), model.modes(c), 4.0) for c in model.classes)
    return float(np.mean(vals))


@functools.lru_cache(maxsize=None)
def _ddpm_guided_coverage():
    return _coverage(BENCH_CFG)


# ----------------------------------------------------------------------------------------

def test_criterion_1_score_exactness(report):
    start = time.perf_counter()
    model = make_planted_model(3, 4, 6.0, "imbalanced", 0.4, 1.0, 2)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        c = int(rng.integers(3))
        t = int(rng.integers(0, SCHED.total_steps))
        mix = model.mixture(c)
        w, mu, var = diffused(mix.weights, mix.means, mix.variances, SCHED.alpha_bar(t))
        # probe near the diffused data so the density is not underflowing
        x = np.asarray(mu[rng.integers(len(mu))]) + rng.normal(size=2)
        fd = fd_gradient(lambda z: mixture_logpdf(w, mu, var, z), x)
        worst = max(worst, relative_error(model.score(c, x, t, SCHED), fd))
    ok = worst <= 1e-5
    assert report(1, ok, f"max relative error {worst:.2e} over 1000 probes (tol 1e-5)",
                  time.perf_counter() - start, 5)


def _descent_failures(sampler, rng):
    model = make_planted_model(2, 8, 10.0, "imbalanced", 0.3, 1.0, 2)
    oracle = model.as_oracle(SCHED)
    cfg = GuidanceConfig(lambda_=0.1, t_stop=0, cfg_scale=1.0)
    fails, worst = 0, np.inf
    for _ in range(1000):
        c = int(rng.integers(2))
        t = int(SCHED.sampler_steps[rng.integers(SCHED.num_sampler_steps)])
        tp = SCHED.previous(t)
        ab = SCHED.alpha_bar(t)
        x = np.sqrt(ab) * model.sample_data(c, 1, rng)[0] + np.sqrt(1 - ab) * rng.normal(size=2)
        mode = model.modes(c)[rng.integers(8)]
        eps = oracle(x[None], t, c)[0]
        eps_g, _ = mode_guidance_apply(eps, x, t, mode, cfg, SCHED)
        z = rng.normal(size=2)
        if sampler == "ddpm":
            xg = ddpm_step(x, eps_g, t, SCHED, t_prev=tp, noise=z)
            xu = ddpm_step(x, eps, t, SCHED, t_prev=tp, noise=z)
        else:
            xg, xu = ddim_step(x, eps_g, t, tp, SCHED), ddim_step(x, eps, t, tp, SCHED)
        if tp == -1:
            pg, pu = xg, xu
        else:
            pg = predict_x0(xg, oracle(xg[None], tp, c)[0], tp, SCHED)
            pu = predict_x0(xu, oracle(xu[None], tp, c)[0], tp, SCHED)
        margin = np.linalg.norm(pu - mode) - np.linalg.norm(pg - mode)
        worst = min(worst, margin)
        fails += not margin > 0
    return fails, worst


def test_criterion_2_guidance_mechanics(report):
    start = time.perf_counter()
    fails, worst = _descent_failures("ddpm", np.random.default_rng(0))
    ddim_fails, _ = _descent_failures("ddim", np.random.default_rng(0))
    descent = fails == 0

    # stop-guidance coincidence: rerun the unguided tail from the state where guidance stops
    model = COVERAGE_MODEL
    oracle = model.as_oracle(SCHED)
    coincide = True
    for sampler in ("ddpm", "ddim"):
        cfg = BENCH_CFG.replace(sampler=sampler, ddim_eta=0.5)
        mode = model.modes(0)[3]
        full, traj = sample_guided(oracle, 0, mode, cfg, SCHED, 11)
        k = SCHED.num_sampler_steps - cfg.t_stop
        rng = np.random.default_rng(11)
        for _ in range(k + 1):  # x_T plus one noise draw per completed step
            rng.standard_normal(2)
        tail, _ = reverse_process(oracle, 0, mode[None], cfg.replace(lambda_=0.0), SCHED, [rng],
                                  x_start=traj.states[k][None], t_start=int(traj.steps[k]))
        coincide &= bool(np.array_equal(tail[0], full))

    # mode fixed point
    rng = np.random.default_rng(2)
    fixed = True
    for _ in range(100):
        t = int(SCHED.sampler_steps[rng.integers(50)])
        x, eps = rng.normal(size=2) * 5, rng.normal(size=2)
        m = predict_x0(x, eps, t, SCHED)
        out, g = mode_guidance_apply(eps, x, t, m, GuidanceConfig(t_stop=0), SCHED)
        fixed &= bool(np.array_equal(g, np.zeros(2)) and np.array_equal(out, eps))

    ok = descent and coincide and fixed
    detail = (f"(a) descent failures {fails}/1000 with DDPM, worst margin {worst:.3g} "
              f"[DDIM: {ddim_fails}/1000]; (b) bitwise coincidence {coincide}; "
              f"(c) fixed point {fixed}")
    assert report(2, ok, detail, time.perf_counter() - start, 5)


def test_criterion_3_coverage_gain(report):
    start = time.perf_counter()
    guided = _ddpm_guided_coverage()
    base = _coverage(BENCH_CFG, guided=False)
    ok = guided - base >= 0.25 and guided >= 0.95
    assert report(3, ok, f"guided {guided:.3f}, baseline {base:.3f}, gain {guided - base:.3f} "
                  "(need gain >= 0.25, guided >= 0.95)", time.perf_counter() - start, 120)


def test_criterion_4_accuracy_direction(report):
    start = time.perf_counter()
    model = make_overlap_model()
    acc = {}
    for lam in (0.0, 0.1):
        vals = []
        for s in ACCURACY_SEEDS:
            ds = distill(model, "kmeans", BENCH_CFG.replace(lambda_=lam), ipc=ACCURACY_IPC, rng=s)
            vals.append(downstream_accuracy(ds.X, ds.y, model, 500, 20, rng=s)[0])
        acc[lam] = np.array(vals)
    gain = 100 * (acc[0.1].mean() - acc[0.0].mean())
    ok = gain >= 3.0
    detail = (f"guided {acc[0.1].mean():.4f} +- {acc[0.1].std():.4f}, baseline "
              f"{acc[0.0].mean():.4f} +- {acc[0.0].std():.4f}, gain {gain:.2f} points (need >= 3)")
    assert report(4, ok, detail, time.perf_counter() - start, 120)


def test_criterion_5_tstop_sweep(report):
    start = time.perf_counter()
    S = SCHED.num_sampler_steps
    res = sweep_tstop(make_overlap_model(), None, BENCH_CFG, ipc=ACCURACY_IPC,
                      seeds=ACCURACY_SEEDS, n_jobs=JOBS)
    best = res.best("accuracy")
    div = dict(zip(res.values, res.column("diversity")))
    interior = 0 < best < S
    div_ok = all(div[v] >= div[S] for v in res.values if v < S)
    acc = " ".join(f"{v}:{a:.3f}" for v, a in zip(res.values, res.column("accuracy")))
    detail = (f"best t_stop {best} (need strictly inside (0, {S})); diversity at active "
              f"t_stop >= {div[S]:.3f} at t_stop={S}: {div_ok}; accuracy {acc}")
    assert report(5, interior and div_ok, detail, time.perf_counter() - start, 300)


def test_criterion_6_lambda_sweep(report):
    start = time.perf_counter()
    res = sweep_lambda(make_overlap_model(), (0.0, 0.1, 10.0), BENCH_CFG, ipc=ACCURACY_IPC,
                       seeds=ACCURACY_SEEDS, n_jobs=JOBS)
    a0, a1, a10 = res.column("accuracy")
    ok = a1 > a0 and a1 > a10
    assert report(6, ok, f"accuracy at lambda 0 / 0.1 / 10: {a0:.4f} / {a1:.4f} / {a10:.4f}",
                  time.perf_counter() - start, 300)


def test_criterion_7_ddpm_ddim_parity(report):
    ddpm = _ddpm_guided_coverage()
    start = time.perf_counter()
    ddim = _coverage(BENCH_CFG.replace(sampler="ddim"))
    ok = abs(ddim - ddpm) <= 0.05
    assert report(7, ok, f"DDIM guided {ddim:.3f} vs DDPM guided {ddpm:.3f}, "
                  f"difference {abs(ddim - ddpm):.3f} (tol 0.05)", time.perf_counter() - start, 120)


def test_criterion_8_clustering(report):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    # planted recovery on two unit-variance components 10 apart
    truth = make_planted_model(1, 2, 10.0).modes(0)
    X = np.concatenate([m + rng.standard_normal((300, 2)) for m in truth])
    # monotonicity on a harder, overlapping 8-mode fit
    Y = np.concatenate([m + 2.0 * rng.standard_normal((100, 2))
                        for m in make_planted_model(1, 8, 4.0).modes(0)])

    km_mono, em_mono, recovery = True, True, {}
    for seed in range(5):
        h = np.array(KMeansModes(8, random_state=seed).fit(Y).inertia_history_)
        km_mono &= bool(np.all(np.diff(h) <= 1e-9 * h[:-1]))
        h = np.array(GaussianMixtureModes(8, random_state=seed).fit(Y).log_likelihood_history_)
        em_mono &= bool(np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1])))
        km = KMeansModes(2, random_state=seed).fit(X)
        h = np.array(km.inertia_history_)
        km_mono &= bool(np.all(np.diff(h) <= 1e-9 * h[:-1]))
        em = GaussianMixtureModes(2, random_state=seed).fit(X)
        h = np.array(em.log_likelihood_history_)
        em_mono &= bool(np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1])))
        for name, found in (("kmeans", km.modes_), ("gmm", em.modes_)):
            d = np.linalg.norm(truth[:, None] - found[None], axis=-1)
            r, c = linear_sum_assignment(d)
            recovery[name] = max(recovery.get(name, 0.0), float(d[r, c].max()))
    closest = KMeansModes(8, variant="closest", random_state=0).fit(X)
    members = bool(all((X == m).all(axis=1).any() for m in closest.modes_))
    ok = km_mono and em_mono and max(recovery.values()) <= 0.5 and members
    detail = (f"k-means monotone {km_mono}; EM monotone {em_mono}; worst recovery error "
              f"k-means {recovery['kmeans']:.3f}, EM {recovery['gmm']:.3f} (tol 0.5); "
              f"kmeans-closest members {members}")
    assert report(8, ok, detail, time.perf_counter() - start, 10)


def _run_suite(*args):
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *args], cwd=ROOT, capture_output=True, text=True)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    return proc.returncode == 0, summary


def test_criterion_9_metrics_suite(report):
    start = time.perf_counter()
    ok, summary = _run_suite("tests/test_metrics.py")
    assert report(9, ok, f"metrics unit suite: {summary}", time.perf_counter() - start, 5)


def test_criterion_10_determinism_round_trip(report):
    start = time.perf_counter()
    ok, summary = _run_suite("tests/test_cli.py", "tests/test_data.py",
                             "tests/test_properties.py", "-k",
                             "cli or round_trip or byte or seventeen")
    assert report(10, ok, f"byte-identical subcommands and round-trips: {summary}",
                  time.perf_counter() - start, 30)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
