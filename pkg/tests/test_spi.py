from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spimfg.grid import Policy, sup_norm_policy_diff
from spimfg.hamiltonian import extract_policy
from spimfg.scenarios import load_scenario
from spimfg.spi import (
    Algorithm,
    InvariantViolation,
    Schedule,
    SolverConfig,
    certify_fixed_point,
    flux_policy,
    fluxes,
    learning_rate,
    residual_energy,
    run_policy_iteration,
    run_spi1,
    run_spi2,
    smoothing_update_flux,
    smoothing_update_policy,
    solve,
)

from conftest import periodic_grid, random_policy

SMALL = dict(I=40, dt=0.05)


@pytest.fixture(scope="module")
def small():
    return load_scenario("test1", SMALL)


@pytest.fixture(scope="module")
def zero_data():
    return load_scenario("test1", dict(SMALL, theta=0, eta=0))


def as_policy(a):
    return Policy(a, -a)


def test_learning_rates():
    assert learning_rate(0) == 1.0
    assert learning_rate(2) == 0.5
    assert learning_rate(0, Schedule.ONE_OVER_N_PLUS_2) == 0.5


def test_first_update_overwrites(rng):
    g = periodic_grid(5)
    a, b = random_policy(g, rng), random_policy(g, rng)
    out = smoothing_update_policy(a, b, 0)
    assert np.array_equal(out.left, b.left) and np.array_equal(out.right, b.right)


def test_constant_sequence_is_fixed(rng):
    g = periodic_grid(5)
    q = random_policy(g, rng)
    bar = q
    for n in range(6):
        bar = smoothing_update_policy(bar, q, n)
    assert np.allclose(bar.left, q.left, rtol=0, atol=1e-15)


def test_triangular_weights_at_n3(rng):
    g = periodic_grid(5)
    qs = [random_policy(g, rng) for _ in range(4)]
    bar = qs[0]
    for n in range(3):
        bar = smoothing_update_policy(bar, qs[n + 1], n)
    closed = sum(k * qs[k].left for k in range(1, 4)) / 6
    assert np.allclose(bar.left, closed, rtol=0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), count=st.integers(1, 30))
def test_one_over_n_plus_2_is_the_running_mean(seed, count):
    r = np.random.default_rng(seed)
    qs = r.normal(size=(count + 1, 1, 1, 4))
    bar = as_policy(qs[0])
    for n in range(count):
        bar = smoothing_update_policy(bar, as_policy(qs[n + 1]), n, Schedule.ONE_OVER_N_PLUS_2)
    assert np.allclose(bar.left, qs.mean(axis=0), rtol=0, atol=1e-13)


def test_policy_update_shape_mismatch(rng):
    with pytest.raises(ValueError):
        smoothing_update_policy(random_policy(periodic_grid(5), rng), random_policy(periodic_grid(6), rng), 1)


def test_flux_update_examples(rng):
    g = periodic_grid(5)
    m1 = rng.random((4, 5)) + 0.1
    q = random_policy(g, rng)
    w1 = fluxes(m1, q)
    m_bar, w_bar = smoothing_update_flux(rng.random((4, 5)), fluxes(m1, q), m1, w1, 1)
    assert np.array_equal(m_bar, m1) and np.array_equal(w_bar.left, w1.left)
    # With a constant policy the averaged flux returns that policy.
    m2 = rng.random((4, 5)) + 0.1
    m_bar, w_bar = smoothing_update_flux(m1, w1, m2, fluxes(m2, q), 2)
    q_hat = flux_policy(m_bar, w_bar)
    assert sup_norm_policy_diff(q_hat, q) < 1e-13


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_flux_average_respects_cap(seed):
    r = np.random.default_rng(seed)
    g = periodic_grid(6)
    cap = 2.0
    m_bar = r.random((4, 6)) + 1e-3
    q = Policy(np.clip(r.normal(size=(3, 1, 6)) * 3, -cap, cap), np.clip(r.normal(size=(3, 1, 6)) * 3, -cap, cap))
    w_bar = fluxes(m_bar, q)
    for n in range(1, 8):
        m = r.random((4, 6)) + 1e-3
        q = Policy(np.clip(r.normal(size=(3, 1, 6)) * 3, -cap, cap), np.clip(r.normal(size=(3, 1, 6)) * 3, -cap, cap))
        m_bar, w_bar = smoothing_update_flux(m_bar, w_bar, m, fluxes(m, q), n)
        assert np.all(np.abs(w_bar.left) <= cap * m_bar[1:, None] * (1 + 1e-14))
        assert flux_policy(m_bar, w_bar).sup_norm() <= cap * (1 + 1e-14)
    assert g.shape == (6,)


def test_flux_policy_needs_positive_density():
    m = np.ones((3, 4))
    m[2, 1] = 0.0
    w = Policy(np.zeros((2, 1, 4)), np.zeros((2, 1, 4)))
    with pytest.raises(InvariantViolation):
        flux_policy(m, w)


@pytest.mark.parametrize("runner", [run_spi1, run_spi2, run_policy_iteration])
def test_zero_data_converges_immediately(runner, zero_data):
    result = runner(zero_data, SolverConfig())
    assert result.report.converged and result.report.iterations == 1
    assert sup_norm_policy_diff(result.greedy, Policy.zeros(zero_data.grid)) == 0
    assert result.report.records[0].energy == 0.0
    assert result.report.certification.worst() < 1e-10


def test_residual_energy_examples(small):
    g = small.grid
    m = np.broadcast_to(small.m0, (g.time_steps + 1, *g.shape))
    u = np.random.default_rng(0).normal(size=(g.time_steps + 1, *g.shape))
    greedy = extract_policy(u, g)
    assert residual_energy(m, greedy, greedy, g) == 0.0
    base = np.ones((g.time_steps, 1, *g.shape))
    delta = 0.3
    a = residual_energy(m, Policy(base, -base), Policy(base + delta, -base), g)
    assert a == pytest.approx(small.horizon * delta**2, rel=1e-12)


def test_run_report_contract(small):
    result = run_spi1(small, SolverConfig(tol=1e-3))
    rep = result.report
    assert rep.converged and rep.termination == "converged"
    assert [r.n for r in rep.records] == list(range(1, rep.iterations + 1))
    assert rep.residuals[-1] <= 1e-3 < rep.residuals[:-1].min()
    assert all(math.isnan(e) for e in rep.column("energy"))  # odd kernel: no potential
    assert rep.column("mass_drift").max() < 1e-12
    assert rep.certification.fpk_residual < 1e-10 and rep.certification.hjb_residual < 1e-10


def test_max_iterations_is_reported_not_raised(small):
    result = run_policy_iteration(small, SolverConfig(tol=1e-12, max_iterations=3))
    assert not result.report.converged
    assert result.report.termination == "max_iterations" and result.report.iterations == 3
    # Returned fields still belong to the policy that produced them.
    assert result.report.certification.fpk_residual < 1e-10


def test_runs_are_bit_identical(small):
    a = solve(small, SolverConfig(algorithm="spi2", tol=1e-3))
    b = solve(small, SolverConfig(algorithm="spi2", tol=1e-3))
    assert np.array_equal(a.u, b.u) and np.array_equal(a.m, b.m)
    assert np.array_equal(a.report.residuals, b.report.residuals)


def test_schedule_and_compat_step_variants(small):
    base = run_spi1(small, SolverConfig(tol=1e-3))
    mean = run_spi1(small, SolverConfig(tol=1e-3, schedule="1n", max_iterations=2000))
    compat = run_spi1(small, SolverConfig(tol=1e-3, compat_step4=True))
    assert mean.report.converged and compat.report.converged
    assert np.abs(mean.m - base.m).max() < 1e-2
    assert not np.array_equal(compat.report.residuals, base.report.residuals)


def test_policy_iteration_matches_spi_on_decoupled_problem():
    sc = load_scenario("test3", dict(I=40, dt=0.05, theta=0, eta=0))
    pi = run_policy_iteration(sc, SolverConfig(tol=1e-12, max_iterations=50))
    spi = run_spi1(sc, SolverConfig(tol=1e-6, max_iterations=2000))
    assert pi.report.converged
    assert np.abs(pi.u - spi.u).max() < 1e-3
    # Policy iteration stops on a repeat up to rounding, so the closure is tight.
    assert pi.report.residuals[-1] < 1e-12
    assert pi.report.certification.worst() < 1e-10


def test_certification_of_unrelated_fields(small, rng):
    g = small.grid
    u = rng.normal(scale=5, size=(g.time_steps + 1, *g.shape))
    m = rng.random((g.time_steps + 1, *g.shape))
    c = certify_fixed_point(u, m, random_policy(g, rng), small)
    assert min(c.policy_consistency, c.fpk_residual, c.hjb_residual) > 1


def test_initial_policy_is_validated(small):
    g = small.grid
    big = np.full((g.time_steps, 1, *g.shape), 2 * small.cap)
    with pytest.raises(ValueError):
        run_spi1(small, SolverConfig(), Policy(big, -big))
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(algorithm="newton")
    assert SolverConfig(algorithm="pi").algorithm is Algorithm.POLICY_ITERATION
