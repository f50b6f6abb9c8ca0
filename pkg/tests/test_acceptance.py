"""Acceptance criteria 1-12, one test each.

Every test records a single ``criterion k: PASS|FAIL ...`` line (printed and
repeated in the terminal summary) before asserting, so a failing criterion
still reports the measured numbers.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from spimfg.cli import initial_policy
from spimfg.coupling import monotonicity_probe
from spimfg.grid import GridSpec, Policy, divergence, inner, mass, two_sided_gradient
from spimfg.scenarios import load_scenario
from spimfg.spi import SolverConfig, smoothing_update_policy, solve
from spimfg.steppers import fpk_forward_sweep, hjb_backward_sweep

from conftest import ACCEPTANCE_LINES
from test_steppers import fpk_oracle, hjb_oracle

REDUCED = dict(I=100, dt=0.01)
EPS = 1e-4


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)


def sublinear(res: np.ndarray) -> bool:
    running_min = np.minimum.accumulate(res)
    n = np.arange(1, len(res) + 1)
    return bool(np.all(res[n >= 20] <= 2 * running_min[n >= 20]))


# Every converged run below is collected here for the certification check.
CONVERGED: list[tuple[str, float, object]] = []


def run(name, scenario, config, q0=None):
    result = solve(scenario, config, q0)
    if result.report.converged:
        CONVERGED.append((name, config.tol, result.report.certification))
    return result


@pytest.fixture(scope="module")
def reduced_runs():
    runs = {}
    for test in ("test1", "test2"):
        sc = load_scenario(test, REDUCED)
        for alg in ("spi1", "spi2"):
            runs[test, alg] = run(f"{test}/{alg}", sc, SolverConfig(algorithm=alg, tol=EPS, max_iterations=500))
    return runs


@pytest.fixture(scope="module")
def init_runs():
    # Criterion 5 fixes no tolerance; 1e-5 is used (see README).
    tol = 1e-5
    sc = load_scenario("test1", REDUCED)
    q10 = initial_policy("linear:10", sc)
    out = {}
    for alg in ("spi1", "spi2"):
        cfg = SolverConfig(algorithm=alg, tol=tol, max_iterations=5000)
        out[alg] = (run(f"test1/{alg}/q0=0", sc, cfg), run(f"test1/{alg}/q0=10x", sc, cfg, q10))
    return out


@pytest.fixture(scope="module")
def test3_run():
    sc = load_scenario("test3")
    return run("test3/spi1", sc, SolverConfig(tol=1e-5, max_iterations=500))


@pytest.fixture(scope="module")
def run2d():
    sc = load_scenario("test2d", {"h": 0.02, "dt": 0.02})
    start = time.perf_counter()
    result = run("test2d/spi1", sc, SolverConfig(tol=1e-3, max_iterations=800))
    return sc, result, time.perf_counter() - start


def test_c01_operator_duality():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(5, 17))
        g = GridSpec.uniform(-1, 1, n, 1.0, 1, "periodic")
        u, m = rng.normal(size=n), rng.random(n)
        ql, qr = rng.normal(scale=5, size=(2, 1, n))
        dl, dr = two_sided_gradient(u, g)
        adv = inner(m, (np.maximum(ql, 0) * dl + np.minimum(qr, 0) * dr).sum(axis=0))
        dual = inner(u, divergence(m, ql, qr, g))
        worst = max(worst, abs(adv + dual) / (1 + abs(adv)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    report(1, ok, f"max scaled duality defect {worst:.2e} (<= 1e-12), {elapsed:.2f}s (< 1s)")
    assert ok


def test_c02_dense_oracle_equivalence():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for k in range(50):
        bc = "periodic" if k % 2 else "neumann"
        g = GridSpec.uniform(-1, 1, int(rng.integers(3, 8)), 0.1, 1, bc)
        shape = (1, 1, *g.shape)
        q = Policy(rng.uniform(-10, 10, shape), rng.uniform(-10, 10, shape))
        sigma = rng.uniform(0.01, 1)
        m0 = rng.random(g.shape)
        m1 = fpk_forward_sweep(q, sigma, g, m0)[1]
        want = np.linalg.solve(fpk_oracle(g, q.left[0], q.right[0], sigma), m0 / g.dt)
        worst = max(worst, np.abs(m1 - want).max())
        ut, f, v = rng.normal(size=(3, *g.shape))
        u0 = hjb_backward_sweep(q, sigma, g, ut, f[None], v)[0]
        rhs = ut / g.dt + 0.5 * q.squared_speed()[0] + v + f
        want = np.linalg.solve(hjb_oracle(g, q.left[0], q.right[0], sigma), rhs)
        worst = max(worst, np.abs(u0 - want).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    report(2, ok, f"max entrywise deviation {worst:.2e} (<= 1e-12), {elapsed:.2f}s (< 1s)")
    assert ok


def test_c03_conservation_and_positivity():
    rng = np.random.default_rng(3)
    drift, low = 0.0, np.inf
    for name in ("test1", "test2", "test3"):
        sc = load_scenario(name)
        g = sc.grid
        m0 = np.maximum(sc.m0, 1e-6)
        m0 /= mass(m0, g)
        shape = (g.time_steps, 1, *g.shape)
        policies = [Policy.zeros(g), initial_policy("linear:10", sc),
                    Policy(rng.uniform(-50, 50, shape), rng.uniform(-50, 50, shape))]
        for q in policies:
            m = fpk_forward_sweep(q, sc.sigma, g, m0)
            masses = mass(m, g)
            drift = max(drift, float(np.abs(masses - masses[0]).max() / masses[0]))
            low = min(low, float(m.min()))
    ok = drift <= 1e-10 and low > 0
    report(3, ok, f"max relative mass drift {drift:.2e} (<= 1e-10), min density {low:.2e} (> 0)")
    assert ok


def test_c04_monotone_convergence(reduced_runs):
    parts, ok = [], True
    for (test, alg), r in reduced_runs.items():
        res = r.report.residuals
        good = r.report.converged and res[-1] <= EPS and sublinear(res)
        ok &= good
        parts.append(f"{test}/{alg} n={r.report.iterations} last={res[-1]:.1e}")
    report(4, ok, "; ".join(parts))
    assert ok


def test_c05_initialisation_independence(init_runs):
    parts, ok = [], True
    for alg, (zero, lin) in init_runs.items():
        gap = np.abs(zero.m - lin.m).max()
        good = zero.report.converged and lin.report.converged and gap <= 1e-3
        ok &= good
        # Sublinearity of the long 10x trace is reported, not gated.
        parts.append(f"{alg}: |M(q0=0) - M(q0=10x)| = {gap:.2e} "
                     f"(n={zero.report.iterations}/{lin.report.iterations}, "
                     f"10x trace sublinear={sublinear(lin.report.residuals)})")
    report(5, ok, "; ".join(parts) + " (<= 1e-3, tol 1e-5)")
    assert ok


def test_c06_cross_algorithm_agreement(reduced_runs):
    a, b = reduced_runs["test1", "spi1"], reduced_runs["test1", "spi2"]
    du, dm = np.abs(a.u - b.u).max(), np.abs(a.m - b.m).max()
    ok = max(du, dm) <= 1e-3
    report(6, ok, f"SPI1 vs SPI2 on test1: |dU| = {du:.2e}, |dM| = {dm:.2e} (<= 1e-3)")
    assert ok


def test_c08_potential_descent(test3_run):
    rep = test3_run.report
    j = rep.column("energy")
    # j[n - 1] is J0 at iteration n, so the step n -> n+1 is j[n] - j[n - 1].
    slack = [j[n] - j[n - 1] - 10 / n**2 * (1 + abs(j[0])) for n in range(5, len(j))]
    last_step = abs(j[-1] - j[-2])
    ok = rep.converged and max(slack, default=-1.0) <= 0 and last_step <= 1e-6
    report(8, ok, f"test3: n={rep.iterations}, J0 {j[0]:.6f} -> {j[-1]:.6f}, "
                  f"max descent slack {max(slack, default=float('nan')):.2e} (<= 0), "
                  f"last |dJ0| = {last_step:.2e} (<= 1e-6)")
    assert ok


def test_c09_residual_energy(reduced_runs):
    bound = 100 * EPS**2 * 1.0
    values = {alg: reduced_runs["test1", alg].report.records[-1].a_n for alg in ("spi1", "spi2")}
    ok = all(v <= bound for v in values.values())
    report(9, ok, ", ".join(f"{alg} final a_n = {v:.2e}" for alg, v in values.items())
           + f" (<= {bound:.0e})")
    assert ok


def test_c10_anti_monotone_2d_turnpike(run2d):
    sc, r, elapsed = run2d
    m = r.m
    g = sc.grid
    t = g.times[:-1]
    variation = np.abs(np.diff(m, axis=0)).reshape(g.time_steps, -1).max(axis=1)
    horizon = sc.horizon
    tiny = 1e-9
    mid = variation[(t >= horizon / 3 - tiny) & (t <= 2 * horizon / 3 + tiny)].max()
    ends = variation[(t <= horizon / 6 + tiny) | (t >= 5 * horizon / 6 - tiny)].max()
    ok = r.report.converged and r.report.iterations <= 800 and mid <= ends
    report(10, ok, f"test2d h=dt=0.02: converged={r.report.converged} n={r.report.iterations}, "
                   f"mid variation {mid:.3f} <= ends {ends:.3f}, {elapsed:.0f}s")
    assert ok


def test_c11_monotonicity_probe():
    rng = np.random.default_rng(11)
    sinpi = monotonicity_probe(load_scenario("test1").coupling, 1000, rng)
    gauss = monotonicity_probe(load_scenario("test3").coupling, 1000, rng)
    local = monotonicity_probe(load_scenario("test2d", {"h": 0.02, "dt": 0.02}).coupling, 1000, rng)
    ok = sinpi >= -1e-12 and gauss >= -1e-12 and local < 0
    report(11, ok, f"probe minima: sinpi {sinpi:.2e}, gaussian {gauss:.2e} (>= -1e-12); "
                   f"local {local:.2e} (< 0)")
    assert ok


def test_c12_schedule_identity():
    rng = np.random.default_rng(12)
    worst, checks = 0.0, 0
    for length in range(1, 101):
        # 100 independent sequences per length, carried along the batch axis.
        seq = rng.normal(size=(length + 1, 100, 1, 4))
        bar = Policy(seq[0], seq[0])
        for n in range(length):
            bar = smoothing_update_policy(bar, Policy(seq[n + 1], seq[n + 1]), n)
        k = np.arange(1, length + 1)
        closed = np.tensordot(k, seq[1:], axes=1) / k.sum()
        worst = max(worst, np.abs(bar.left - closed).max())
        checks += 100
    ok = checks == 10_000 and worst <= 1e-13
    report(12, ok, f"{checks} recursion vs closed-form checks, max deviation {worst:.2e} (<= 1e-13)")
    assert ok


def test_c07_fixed_point_certification(reduced_runs, init_runs, test3_run, run2d):
    # Runs last so every converged run of this module has been collected.
    worst_ratio, parts = 0.0, []
    for name, tol, cert in CONVERGED:
        ratio = cert.worst() / tol
        worst_ratio = max(worst_ratio, ratio)
        if ratio > 10:
            parts.append(f"{name} policy {cert.policy_consistency:.1e} vs 10*tol {10 * tol:.0e}")
    ok = worst_ratio <= 10
    fpk = max(c.fpk_residual for _, _, c in CONVERGED)
    hjb = max(c.hjb_residual for _, _, c in CONVERGED)
    report(7, ok, f"{len(CONVERGED)} converged runs, worst residual/tol = {worst_ratio:.1f} (<= 10); "
                  f"fpk <= {fpk:.1e}, hjb <= {hjb:.1e}"
                  + (f"; failing: {', '.join(parts)}" if parts else ""))
    assert ok
