"""Mean field couplings, their potentials and the discrete energy.

Two families are supported:

* nonlocal convolutions ``f_h[M]_i = theta * sum_j h l((i-j)h) M_j`` with a
  ``sin(pi x)`` or Gaussian kernel, terminal cost of the same form with
  weight ``eta``;
* local power couplings ``c * m**kappa`` with a fixed terminal cost ``g_T``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, Policy, mass


class UnsupportedPotential(ValueError):
    """The coupling does not derive from a quadratic-form potential."""


class Kernel(str, enum.Enum):
    SIN_PI = "sinpi"
    GAUSSIAN = "gaussian"


def kernel_values(kind: Kernel, offsets: np.ndarray, zeta: float = 0.0) -> np.ndarray:
    kind = Kernel(kind)
    if kind is Kernel.SIN_PI:
        return np.sin(np.pi * offsets)
    if not zeta > 0:
        raise ValueError(f"Gaussian kernel needs zeta > 0, got {zeta}")
    return np.exp(-zeta * offsets**2)


def kernel_matrix(kind: Kernel, grid: GridSpec, zeta: float = 0.0) -> np.ndarray:
    """Table ``h * l((i - j) h)``; 1D only."""
    if grid.dim != 1:
        raise ValueError("nonlocal couplings are implemented on 1D grids only")
    idx = np.arange(grid.shape[0])
    offsets = (idx[:, None] - idx[None, :]) * grid.dx
    return grid.dx * kernel_values(kind, offsets, zeta)


@dataclass(frozen=True)
class NonlocalCoupling:
    kernel: Kernel
    theta: float
    eta: float
    zeta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if self.kernel is Kernel.GAUSSIAN and not self.zeta > 0:
            raise ValueError("Gaussian kernel needs zeta > 0")

    @property
    def even(self) -> bool:
        return self.kernel is Kernel.GAUSSIAN

    def bind(self, grid: GridSpec) -> BoundCoupling:
        return BoundCoupling(self, grid, kernel_matrix(self.kernel, grid, self.zeta))


@dataclass(frozen=True)
class LocalCoupling:
    coefficient: float
    exponent: float
    terminal: np.ndarray

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError(f"local coupling exponent must be positive, got {self.exponent}")
        object.__setattr__(self, "terminal", np.asarray(self.terminal, dtype=float))

    def bind(self, grid: GridSpec) -> BoundCoupling:
        grid.check_level(self.terminal, "terminal cost")
        return BoundCoupling(self, grid, None)


CouplingSpec = NonlocalCoupling | LocalCoupling


def nonlocal_coupling(m: np.ndarray, table: np.ndarray, weight: float) -> np.ndarray:
    """``weight * sum_j table[i, j] m_j``; ``m`` may carry leading level axes."""
    return weight * np.asarray(m, dtype=float) @ table.T


def local_coupling(m: np.ndarray, coefficient: float, exponent: float) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError(f"negative density {m.min():.3e} in local coupling")
    return coefficient * m**exponent


@dataclass(frozen=True)
class BoundCoupling:
    """A coupling description with its grid-dependent tables precomputed."""

    spec: CouplingSpec
    grid: GridSpec
    table: np.ndarray | None = field(repr=False)

    @property
    def is_local(self) -> bool:
        return isinstance(self.spec, LocalCoupling)

    def running(self, m: np.ndarray) -> np.ndarray:
        if self.is_local:
            return local_coupling(m, self.spec.coefficient, self.spec.exponent)
        return nonlocal_coupling(m, self.table, self.spec.theta)

    def terminal(self, m_final: np.ndarray) -> np.ndarray:
        if self.is_local:
            return self.spec.terminal.copy()
        return nonlocal_coupling(m_final, self.table, self.spec.eta)

    def _quadratic(self, m: np.ndarray, weight: float) -> float:
        if weight == 0.0:
            return 0.0
        if not self.spec.even:
            raise UnsupportedPotential(f"{self.spec.kernel.value} kernel is odd; no potential")
        m = np.asarray(m, dtype=float)
        return 0.5 * weight * self.grid.dx * float(m @ self.table @ m)

    def potential(self, m: np.ndarray) -> float:
        """Running potential ``F_h`` of one density level."""
        if self.is_local:
            k = self.spec.exponent
            m = np.asarray(m, dtype=float)
            if np.any(m < 0):
                raise ValueError("negative density in local potential")
            return float(mass(self.spec.coefficient * m ** (k + 1) / (k + 1), self.grid))
        return self._quadratic(m, self.spec.theta)

    def terminal_potential(self, m_final: np.ndarray) -> float:
        """Terminal potential ``G_h``; linear in ``m`` for a fixed terminal cost."""
        if self.is_local:
            return float(mass(self.spec.terminal * m_final, self.grid))
        return self._quadratic(m_final, self.spec.eta)

    def pairing(self, m: np.ndarray, m_other: np.ndarray) -> float:
        """``h^d sum (f[m] - f[m']) (m - m')``, nonnegative under crowd aversion."""
        return float(mass((self.running(m) - self.running(m_other)) * (m - m_other), self.grid))


def potential_F(m: np.ndarray, spec: CouplingSpec, grid: GridSpec) -> float:
    return spec.bind(grid).potential(m)


def discrete_energy(m: np.ndarray, policy: Policy, coupling: BoundCoupling,
                    potential: np.ndarray, start: int = 0) -> float:
    """Discrete potential-game energy ``J_start`` of a density/policy pair.

    Level ``tau`` of the density is paired with step ``tau`` of the policy;
    the final level reuses the last policy step.
    """
    grid = coupling.grid
    T = grid.time_steps
    m = grid.check_field(m, T + 1, "m")
    policy.check(grid)
    if not 0 <= start <= T:
        raise IndexError(f"start level {start} outside 0..{T}")
    speed = policy.squared_speed()
    total = 0.0
    for tau in range(start, T + 1):
        s = speed[min(tau, T - 1)]
        total += grid.dt * (float(mass(m[tau] * (0.5 * s + potential), grid))
                            + coupling.potential(m[tau]))
    return total + coupling.terminal_potential(m[T])


def monotonicity_probe(coupling: BoundCoupling, trials: int, rng: np.random.Generator) -> float:
    """Smallest sampled pairing over random pairs of unit-mass densities."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = coupling.grid
    worst = np.inf
    for _ in range(trials):
        pair = []
        for _ in range(2):
            # Mix in spiky draws so anti-monotone local couplings are exposed.
            d = rng.random(grid.shape) ** rng.uniform(1.0, 8.0)
            pair.append(d / mass(d, grid))
        worst = min(worst, coupling.pairing(*pair))
    return float(worst)
