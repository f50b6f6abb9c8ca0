"""Smoothed policy iteration (SPI1, SPI2) and plain policy iteration.

Every outer iteration generates a density from a policy, evaluates that
policy through the linear HJB equation and takes the greedy policy of the
resulting value. The variants differ only in what gets averaged:

* SPI1 averages policies, ``Qbar <- (1 - b) Qbar + b Q_new`` with
  ``b = 2/(n+2)`` (or ``1/(n+2)``);
* SPI2 averages densities and fluxes ``(M, W = M Q)`` with ``b = 2/(n+1)``
  and evaluates the policy ``W/M`` that would have generated the averaged
  density;
* policy iteration averages nothing.

The iteration stops when two consecutive greedy policies are within ``tol``
in the l-infinity norm of their effective parts.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .coupling import UnsupportedPotential, discrete_energy
from .grid import (
    GridSpec,
    Policy,
    divergence,
    laplacian,
    mass,
    negative_part,
    positive_part,
    sup_norm_policy_diff,
    two_sided_gradient,
)
from .hamiltonian import cap_hits, extract_policy
from .steppers import fpk_forward_sweep, hjb_backward_sweep

logger = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """A structural property the scheme guarantees was found broken."""


class Algorithm(str, enum.Enum):
    SPI1 = "spi1"
    SPI2 = "spi2"
    POLICY_ITERATION = "pi"


class Schedule(str, enum.Enum):
    TWO_OVER_N_PLUS_2 = "2n"
    ONE_OVER_N_PLUS_2 = "1n"


@dataclass(frozen=True)
class SolverConfig:
    algorithm: Algorithm = Algorithm.SPI1
    schedule: Schedule = Schedule.TWO_OVER_N_PLUS_2
    tol: float = 1e-4
    max_iterations: int = 500
    # Compatibility mode: average in the previous greedy policy, not the new one.
    compat_step4: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IterationRecord:
    n: int
    policy_change: float
    a_n: float
    energy: float
    mass_drift: float
    min_density: float
    cap_hits: int


@dataclass
class Certification:
    policy_consistency: float
    fpk_residual: float
    hjb_residual: float

    def worst(self) -> float:
        return max(self.policy_consistency, self.fpk_residual, self.hjb_residual)


@dataclass
class IterationReport:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    certification: Certification | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def termination(self) -> str:
        return "converged" if self.converged else "max_iterations"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return self.column("policy_change")

    def to_dict(self) -> dict:
        out = {"termination": self.termination, "iterations": self.iterations}
        if self.certification is not None:
            out["certification"] = asdict(self.certification)
        return out


@dataclass
class SolveResult:
    """Terminal iterate.

    ``u`` and ``m`` solve the linear HJB/FPK schemes for ``policy`` (the
    smoothed policy for SPI1, ``W/M`` for SPI2 with ``m`` the averaged
    density); ``greedy`` is the greedy policy of ``u``.
    """

    u: np.ndarray
    m: np.ndarray
    policy: Policy
    greedy: Policy
    report: IterationReport


def learning_rate(n: int, schedule: Schedule = Schedule.TWO_OVER_N_PLUS_2) -> float:
    if Schedule(schedule) is Schedule.TWO_OVER_N_PLUS_2:
        return 2.0 / (n + 2)
    return 1.0 / (n + 2)


def _blend(old: np.ndarray, new: np.ndarray, beta: float) -> np.ndarray:
    if beta == 1.0:
        return new.copy()
    return (1.0 - beta) * old + beta * new


def smoothing_update_policy(q_bar: Policy, q_new: Policy, n: int,
                            schedule: Schedule = Schedule.TWO_OVER_N_PLUS_2) -> Policy:
    """Convex combination of raw components with weight ``learning_rate(n)`` on ``q_new``."""
    if q_bar.shape != q_new.shape:
        raise ValueError(f"policy shapes differ: {q_bar.shape} vs {q_new.shape}")
    beta = learning_rate(n, schedule)
    return Policy(_blend(q_bar.left, q_new.left, beta), _blend(q_bar.right, q_new.right, beta))


def fluxes(m: np.ndarray, policy: Policy) -> Policy:
    """``W_{tau+1} = M_{tau+1} Q_tau`` on effective parts."""
    weight = m[1:, None]
    return Policy(weight * policy.effective_left, weight * policy.effective_right)


def smoothing_update_flux(m_bar: np.ndarray, w_bar: Policy, m_new: np.ndarray, w_new: Policy,
                          n: int) -> tuple[np.ndarray, Policy]:
    """Average densities and fluxes with weight ``2/(n+1)`` on iterate ``n``."""
    if m_bar.shape != m_new.shape or w_bar.shape != w_new.shape:
        raise ValueError("density/flux shapes differ")
    beta = 2.0 / (n + 1)
    return (_blend(m_bar, m_new, beta),
            Policy(_blend(w_bar.left, w_new.left, beta), _blend(w_bar.right, w_new.right, beta)))


def flux_policy(m_bar: np.ndarray, w_bar: Policy) -> Policy:
    """The policy ``(W_L^+ / M, W_R^- / M)`` that generates an averaged density."""
    dens = m_bar[1:, None]
    if np.any(dens <= 0):
        raise InvariantViolation(f"averaged density not positive (min {dens.min():.3e})")
    return Policy(positive_part(w_bar.left) / dens, negative_part(w_bar.right) / dens)


def residual_energy(m: np.ndarray, greedy: Policy, played: Policy, grid: GridSpec) -> float:
    """``dt * h^d * sum M_{tau+1} |greedy - played|^2`` over effective parts.

    Discrete counterpart of the integrated squared distance between the best
    response and the policy that was played.
    """
    diff = ((greedy.effective_left - played.effective_left) ** 2
            + (greedy.effective_right - played.effective_right) ** 2).sum(axis=1)
    return float(grid.dt * mass(m[1:] * diff, grid).sum())


def compute_residual_diagnostics(n: int, change: float, m: np.ndarray, u: np.ndarray,
                                 greedy: Policy, played: Policy, energy_density: np.ndarray,
                                 scenario) -> IterationRecord:
    grid = scenario.grid
    try:
        energy = discrete_energy(energy_density, played, scenario.coupling,
                                 scenario.hamiltonian.potential)
    except UnsupportedPotential:
        energy = math.nan
    masses = mass(m, grid)
    return IterationRecord(
        n=n,
        policy_change=change,
        a_n=residual_energy(m, greedy, played, grid),
        energy=energy,
        mass_drift=float(np.abs(masses - masses[0]).max() / masses[0]),
        min_density=float(m[1:].min()),
        cap_hits=cap_hits(u, grid, scenario.cap),
    )


def _evaluate(scenario, policy: Policy, m: np.ndarray) -> np.ndarray:
    coupling = scenario.coupling
    return hjb_backward_sweep(policy, scenario.sigma, scenario.grid,
                              coupling.terminal(m[-1]), coupling.running(m[1:]),
                              scenario.hamiltonian.potential)


def _initial_policy(scenario, q0: Policy | None) -> Policy:
    if q0 is None:
        return Policy.zeros(scenario.grid)
    q0.check(scenario.grid)
    if q0.sup_norm() > scenario.cap * (1 + 1e-12):
        raise ValueError(f"initial policy exceeds the cap R={scenario.cap}")
    return q0


def _finish(scenario, u, m, played, greedy, report) -> SolveResult:
    report.certification = certify_fixed_point(u, m, played, scenario)
    return SolveResult(u, m, played, greedy, report)


Callback = Callable[[IterationRecord], None]


def _log(record: IterationRecord, callback: Callback | None):
    logger.debug("n=%d change=%.3e a_n=%.3e J0=%.6g", record.n, record.policy_change,
                 record.a_n, record.energy)
    if callback is not None:
        callback(record)


def run_spi1(scenario, config: SolverConfig, q0: Policy | None = None,
             callback: Callback | None = None, smoothing: bool = True) -> SolveResult:
    grid = scenario.grid
    q_prev = _initial_policy(scenario, q0)
    q_bar = q_prev
    report = IterationReport()
    for n in range(config.max_iterations):
        played = q_bar
        m = fpk_forward_sweep(played, scenario.sigma, grid, scenario.m0)
        u = _evaluate(scenario, played, m)
        q_next = extract_policy(u, grid, scenario.cap)
        change = sup_norm_policy_diff(q_next, q_prev)
        record = compute_residual_diagnostics(n + 1, change, m, u, q_next, played, m, scenario)
        report.records.append(record)
        _log(record, callback)
        if change <= config.tol:
            report.converged = True
            break
        if not smoothing:
            q_bar = q_next
        else:
            incoming = q_prev if config.compat_step4 else q_next
            q_bar = smoothing_update_policy(q_bar, incoming, n, config.schedule)
        q_prev = q_next
    return _finish(scenario, u, m, played, q_next, report)


def run_policy_iteration(scenario, config: SolverConfig, q0: Policy | None = None,
                         callback: Callback | None = None) -> SolveResult:
    return run_spi1(scenario, config, q0, callback, smoothing=False)


def run_spi2(scenario, config: SolverConfig, q0: Policy | None = None,
             callback: Callback | None = None) -> SolveResult:
    grid = scenario.grid
    q = _initial_policy(scenario, q0)
    report = IterationReport()
    m_bar = w_bar = None
    for n in range(config.max_iterations):
        m = fpk_forward_sweep(q, scenario.sigma, grid, scenario.m0)
        w = fluxes(m, q)
        if n == 0:
            m_bar, w_bar, q_hat = m, w, q
        else:
            m_bar, w_bar = smoothing_update_flux(m_bar, w_bar, m, w, n)
            q_hat = flux_policy(m_bar, w_bar)
        u = _evaluate(scenario, q_hat, m_bar)
        q_next = extract_policy(u, grid, scenario.cap)
        change = sup_norm_policy_diff(q_next, q)
        record = compute_residual_diagnostics(n + 1, change, m_bar, u, q_next, q_hat, m_bar,
                                              scenario)
        # Mass and positivity are properties of the raw sweep.
        masses = mass(m, grid)
        record.mass_drift = float(np.abs(masses - masses[0]).max() / masses[0])
        record.min_density = float(m[1:].min())
        report.records.append(record)
        _log(record, callback)
        if change <= config.tol:
            report.converged = True
            break
        q = q_next
    return _finish(scenario, u, m_bar, q_hat, q_next, report)


def solve(scenario, config: SolverConfig, q0: Policy | None = None,
          callback: Callback | None = None) -> SolveResult:
    runner = {
        Algorithm.SPI1: run_spi1,
        Algorithm.SPI2: run_spi2,
        Algorithm.POLICY_ITERATION: run_policy_iteration,
    }[config.algorithm]
    return runner(scenario, config, q0, callback)


def fpk_scheme_residual(m: np.ndarray, policy: Policy, sigma: float, grid: GridSpec) -> float:
    """Sup of the implicit FPK scheme evaluated at ``(m, policy)``."""
    worst = 0.0
    for tau in range(grid.time_steps):
        ql, qr = policy.level(tau)
        res = ((m[tau + 1] - m[tau]) / grid.dt - sigma * laplacian(m[tau + 1], grid)
               - divergence(m[tau + 1], ql, qr, grid))
        worst = max(worst, float(np.abs(res).max()))
    return worst


def hjb_scheme_residual(u: np.ndarray, m: np.ndarray, policy: Policy, scenario) -> float:
    """Sup of the linear HJB scheme (and its terminal condition) at ``(u, m, policy)``."""
    grid = scenario.grid
    coupling = scenario.coupling
    potential = scenario.hamiltonian.potential
    f = coupling.running(m[1:])
    speed = policy.squared_speed()
    worst = float(np.abs(u[-1] - coupling.terminal(m[-1])).max())
    for tau in range(grid.time_steps):
        dl, dr = two_sided_gradient(u[tau], grid)
        transport = (policy.effective_left[tau] * dl + policy.effective_right[tau] * dr).sum(axis=0)
        res = ((u[tau] - u[tau + 1]) / grid.dt - scenario.sigma * laplacian(u[tau], grid)
               + transport - 0.5 * speed[tau] - potential - f[tau])
        worst = max(worst, float(np.abs(res).max()))
    return worst


def certify_fixed_point(u: np.ndarray, m: np.ndarray, policy: Policy, scenario) -> Certification:
    """Substitute a terminal iterate back into the full discrete MFG system."""
    grid = scenario.grid
    greedy = extract_policy(u, grid, scenario.cap)
    return Certification(
        policy_consistency=sup_norm_policy_diff(policy, greedy),
        fpk_residual=fpk_scheme_residual(m, policy, scenario.sigma, grid),
        hjb_residual=hjb_scheme_residual(u, m, policy, scenario),
    )
