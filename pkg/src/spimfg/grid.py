"""Uniform space-time grids and the two-sided finite-difference operators.

Fields are plain numpy arrays. A single time level has shape ``grid.shape``
(one entry per node). A full field has a leading time axis, ``(T + 1, *shape)``
for values/densities and ``(T, *shape)`` for anything living on time steps.

Boundary handling goes through precomputed neighbour index maps: periodic
grids wrap around, Neumann grids mirror (the ghost of node 0 is node 0 and the
ghost of the last node is the last node).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class BC(str, enum.Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"


class GridError(ValueError):
    """Raised for inconsistent grid parameters or mismatched field shapes."""


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid on a box in 1 or 2 dimensions.

    ``intervals`` is the number of cells ``I`` per axis, so ``h = L / I``.
    A periodic axis has ``I`` distinct nodes ``x_min + i*h`` (node ``I`` is
    identified with node 0); a Neumann axis has ``I + 1`` nodes including both
    end points.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    intervals: tuple[int, ...]
    dt: float
    time_steps: int
    bc: BC = BC.PERIODIC
    _maps: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "intervals", tuple(int(v) for v in self.intervals))
        object.__setattr__(self, "bc", BC(self.bc))
        if self.dim not in (1, 2):
            raise GridError(f"only 1D and 2D grids are supported, got dim={self.dim}")
        if not (len(self.upper) == len(self.intervals) == self.dim):
            raise GridError("lower, upper and intervals must have the same length")
        for lo, hi, n in zip(self.lower, self.upper, self.intervals):
            if not hi > lo:
                raise GridError(f"empty axis [{lo}, {hi}]")
            if n < 2:
                raise GridError(f"need at least 2 intervals per axis, got {n}")
        if min(self.shape) < 3:
            raise GridError("need at least 3 nodes per axis")
        steps = self.h
        if self.dim == 2 and not np.isclose(steps[0], steps[1], rtol=1e-12):
            raise GridError(f"space step must be the same on both axes, got {steps}")
        if not self.dt > 0:
            raise GridError("dt must be positive")
        if self.time_steps < 1:
            raise GridError("time_steps must be >= 1")

    @classmethod
    def uniform(cls, lower, upper, intervals, horizon: float, time_steps: int, bc="periodic"):
        """Build a grid whose time step is exactly ``horizon / time_steps``."""
        lower = np.atleast_1d(lower).tolist()
        upper = np.atleast_1d(upper).tolist()
        intervals = np.atleast_1d(intervals).tolist()
        if len(intervals) == 1 and len(lower) > 1:
            intervals = intervals * len(lower)
        if int(time_steps) < 1:
            raise GridError("time_steps must be >= 1")
        return cls(tuple(lower), tuple(upper), tuple(intervals), horizon / time_steps,
                   int(time_steps), BC(bc))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def periodic(self) -> bool:
        return self.bc is BC.PERIODIC

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.intervals))

    @property
    def dx(self) -> float:
        """The common space step."""
        return self.h[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def horizon(self) -> float:
        return self.dt * self.time_steps

    @property
    def shape(self) -> tuple[int, ...]:
        extra = 0 if self.periodic else 1
        return tuple(n + extra for n in self.intervals)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.time_steps + 1)

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.lower[axis] + self.h[axis] * np.arange(self.shape[axis])

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates as broadcast arrays of shape ``grid.shape``."""
        return tuple(np.meshgrid(*(self.axis_nodes(a) for a in range(self.dim)), indexing="ij"))

    def neighbours(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Index maps ``(prev, next)`` along one axis, BC applied."""
        key = ("nb", axis)
        if key not in self._maps:
            n = self.shape[axis]
            idx = np.arange(n)
            if self.periodic:
                prev, nxt = np.roll(idx, 1), np.roll(idx, -1)
            else:
                prev = np.concatenate(([0], idx[:-1]))
                nxt = np.concatenate((idx[1:], [n - 1]))
            self._maps[key] = (prev, nxt)
        return self._maps[key]

    @cached_property
    def _edge_mask(self) -> tuple[np.ndarray, ...]:
        # True where the edge (i, i+1) lies inside the domain.
        masks = []
        for a, n in enumerate(self.shape):
            m = np.ones(n, dtype=bool)
            if not self.periodic:
                m[-1] = False
            masks.append(m)
        return tuple(masks)

    def check_level(self, values: np.ndarray, name: str = "field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise GridError(f"{name} has shape {values.shape}, grid expects {self.shape}")
        return values

    def check_field(self, values: np.ndarray, levels: int, name: str = "field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (levels, *self.shape):
            raise GridError(f"{name} has shape {values.shape}, expected {(levels, *self.shape)}")
        return values

    def with_changes(self, **changes) -> GridSpec:
        params = dict(lower=self.lower, upper=self.upper, intervals=self.intervals,
                      dt=self.dt, time_steps=self.time_steps, bc=self.bc)
        params.update(changes)
        return GridSpec(**params)


def _shift(values: np.ndarray, index: np.ndarray, axis: int) -> np.ndarray:
    return np.take(values, index, axis=axis)


def laplacian(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Five-point (three-point in 1D) Laplacian of one time level."""
    u = grid.check_level(u, "u")
    out = np.zeros_like(u)
    for a, h in enumerate(grid.h):
        prev, nxt = grid.neighbours(a)
        out += (_shift(u, prev, a) - 2.0 * u + _shift(u, nxt, a)) / h**2
    return out


def two_sided_gradient(u: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences ``(D_L u, D_R u)``.

    Both arrays have shape ``(dim, *grid.shape)``. On Neumann grids the
    mirrored ghosts make ``D_L`` vanish on the first node and ``D_R`` on the
    last node of each axis.
    """
    u = grid.check_level(u, "u")
    left = np.empty((grid.dim, *grid.shape))
    right = np.empty_like(left)
    for a, h in enumerate(grid.h):
        prev, nxt = grid.neighbours(a)
        left[a] = (u - _shift(u, prev, a)) / h
        right[a] = (_shift(u, nxt, a) - u) / h
    return left, right


def positive_part(x):
    return np.maximum(x, 0.0)


def negative_part(x):
    return np.minimum(x, 0.0)


def divergence(m: np.ndarray, q_left: np.ndarray, q_right: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Engquist-Osher discrete divergence ``div(m q)`` of one time level.

    Written in flux form: the flux through the edge between nodes ``i`` and
    ``i+1`` is ``m[i+1] * q_left[i+1]^+ + m[i] * q_right[i]^-`` and the
    divergence is the difference of the two edge fluxes around a node over
    ``h``. Edges that cross a Neumann boundary carry no flux, so the sum over
    nodes vanishes for both boundary conditions.
    """
    m = grid.check_level(m, "m")
    qL = np.asarray(q_left, dtype=float)
    qR = np.asarray(q_right, dtype=float)
    if qL.shape != (grid.dim, *grid.shape) or qR.shape != qL.shape:
        raise GridError(f"policy level must have shape {(grid.dim, *grid.shape)}")
    out = np.zeros_like(m)
    for a, h in enumerate(grid.h):
        prev, nxt = grid.neighbours(a)
        wl = m * positive_part(qL[a])
        wr = m * negative_part(qR[a])
        flux = _shift(wl, nxt, a) + wr
        inside = grid._edge_mask[a].reshape((-1,) + (1,) * (grid.dim - 1 - a))
        flux = np.where(inside, flux, 0.0)
        incoming = _shift(flux, prev, a)
        if not grid.periodic:
            first = [slice(None)] * grid.dim
            first[a] = 0
            incoming[tuple(first)] = 0.0
        out += (flux - incoming) / h
    return out


def mass(m: np.ndarray, grid: GridSpec) -> float | np.ndarray:
    """Discrete mass ``h^d * sum(m)``; works on a level or a stack of levels."""
    m = np.asarray(m, dtype=float)
    axes = tuple(range(m.ndim - grid.dim, m.ndim))
    return grid.cell_volume * m.sum(axis=axes)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b))


@dataclass(frozen=True)
class Policy:
    """Two-sided policy ``(Q_L, Q_R)`` on every time step, node and axis.

    ``left`` and ``right`` have shape ``(T, dim, *grid.shape)``. Raw
    components are stored; only the effective parts ``Q_L^+`` and ``Q_R^-``
    enter the schemes.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float)
        right = np.asarray(self.right, dtype=float)
        if left.shape != right.shape:
            raise GridError(f"left/right shapes differ: {left.shape} vs {right.shape}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def zeros(cls, grid: GridSpec) -> Policy:
        shape = (grid.time_steps, grid.dim, *grid.shape)
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.left.shape

    def check(self, grid: GridSpec) -> Policy:
        expected = (grid.time_steps, grid.dim, *grid.shape)
        if self.shape != expected:
            raise GridError(f"policy has shape {self.shape}, grid expects {expected}")
        return self

    @property
    def effective_left(self) -> np.ndarray:
        return positive_part(self.left)

    @property
    def effective_right(self) -> np.ndarray:
        return negative_part(self.right)

    def effective(self) -> Policy:
        return Policy(self.effective_left, self.effective_right)

    def sup_norm(self) -> float:
        """``max{Q_L^+, -Q_R^-}`` over the whole field."""
        return float(max(self.effective_left.max(initial=0.0), -self.effective_right.min(initial=0.0)))

    def squared_speed(self) -> np.ndarray:
        """``|Q_±|^2`` summed over axes, shape ``(T, *grid.shape)``."""
        return (self.effective_left**2 + self.effective_right**2).sum(axis=1)

    def level(self, tau: int) -> tuple[np.ndarray, np.ndarray]:
        return self.left[tau], self.right[tau]


def sup_norm_policy_diff(a: Policy, b: Policy) -> float:
    """l-infinity distance between the effective parts of two policies."""
    if a.shape != b.shape:
        raise GridError(f"policies live on different grids: {a.shape} vs {b.shape}")
    dl = np.abs(a.effective_left - b.effective_left)
    dr = np.abs(a.effective_right - b.effective_right)
    return float(max(dl.max(initial=0.0), dr.max(initial=0.0)))
