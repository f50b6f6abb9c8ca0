"""Implicit forward FPK and backward linearized HJB sweeps for a frozen policy.

Per time step both sweeps solve a linear system with the stencil operators
``I/dt - sigma*Lap + A`` (HJB) and its transpose (FPK), where ``A`` is the
upwind advection ``Q_L^+ D_L + Q_R^- D_R``. The transpose of ``A`` is minus
the Engquist-Osher divergence, so the two sweeps are discrete adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import GridSpec, Policy, negative_part, positive_part
from .linsolve import (
    SingularSystemError,
    SolverFailure,
    solve_cyclic_tridiagonal,
    solve_sparse_5point,
    solve_tridiagonal,
)


class SweepError(RuntimeError):
    def __init__(self, level: int, cause: Exception):
        super().__init__(f"linear solve failed at time level {level}: {cause}")
        self.level = level


def _spatial_axis(grid: GridSpec, axis: int) -> int:
    return axis - grid.dim


def _boundary(grid: GridSpec, axis: int, first: bool):
    idx = [slice(None)] * grid.dim
    idx[axis] = 0 if first else -1
    return (Ellipsis, *idx)


@dataclass
class StencilOperator:
    """Nearest-neighbour operator, possibly batched over leading (time) axes.

    ``diag`` has shape ``(..., *grid.shape)``; ``lower[..., a, :]`` is the
    coefficient of the ``prev`` neighbour along axis ``a`` and ``upper`` the
    coefficient of the ``next`` one. On Neumann grids the entries pointing to
    ghost nodes are folded into the diagonal and stored as zero.
    """

    grid: GridSpec
    diag: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __getitem__(self, tau) -> StencilOperator:
        return StencilOperator(self.grid, self.diag[tau], self.lower[tau], self.upper[tau])

    def _fold(self) -> StencilOperator:
        if not self.grid.periodic:
            for a in range(self.grid.dim):
                first = _boundary(self.grid, a, True)
                last = _boundary(self.grid, a, False)
                self.diag[first] += self._off(self.lower, a)[first]
                self.diag[last] += self._off(self.upper, a)[last]
                self._off(self.lower, a)[first] = 0.0
                self._off(self.upper, a)[last] = 0.0
        return self

    def _off(self, arr: np.ndarray, a: int) -> np.ndarray:
        return arr[(Ellipsis, a) + (slice(None),) * self.grid.dim]

    def __add__(self, other: StencilOperator) -> StencilOperator:
        return StencilOperator(self.grid, self.diag + other.diag,
                               self.lower + other.lower, self.upper + other.upper)

    def scaled(self, factor: float) -> StencilOperator:
        return StencilOperator(self.grid, factor * self.diag, factor * self.lower,
                               factor * self.upper)

    def shifted(self, value: float) -> StencilOperator:
        return StencilOperator(self.grid, self.diag + value, self.lower.copy(), self.upper.copy())

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        for a in range(self.grid.dim):
            prev, nxt = self.grid.neighbours(a)
            ax = _spatial_axis(self.grid, a)
            out = out + self._off(self.lower, a) * np.take(u, prev, axis=ax)
            out = out + self._off(self.upper, a) * np.take(u, nxt, axis=ax)
        return out

    def transpose(self) -> StencilOperator:
        lower = np.empty_like(self.lower)
        upper = np.empty_like(self.upper)
        for a in range(self.grid.dim):
            prev, nxt = self.grid.neighbours(a)
            ax = _spatial_axis(self.grid, a)
            lo = np.take(self._off(self.upper, a), prev, axis=ax)
            up = np.take(self._off(self.lower, a), nxt, axis=ax)
            if not self.grid.periodic:
                lo[_boundary(self.grid, a, True)] = 0.0
                up[_boundary(self.grid, a, False)] = 0.0
            self._off(lower, a)[...] = lo
            self._off(upper, a)[...] = up
        return StencilOperator(self.grid, self.diag.copy(), lower, upper)

    def to_sparse(self) -> sp.csr_matrix:
        """Sparse matrix of an unbatched operator, nodes in C order."""
        g = self.grid
        if self.diag.shape != g.shape:
            raise ValueError("to_sparse needs a single time level")
        n = g.size
        index = np.arange(n).reshape(g.shape)
        rows = [index.ravel()]
        cols = [index.ravel()]
        vals = [self.diag.ravel()]
        for a in range(g.dim):
            prev, nxt = g.neighbours(a)
            for coef, nb in ((self._off(self.lower, a), prev), (self._off(self.upper, a), nxt)):
                rows.append(index.ravel())
                cols.append(np.take(index, nb, axis=a).ravel())
                vals.append(coef.ravel())
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        keep = vals != 0.0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        g = self.grid
        if g.dim == 1:
            solver = solve_cyclic_tridiagonal if g.periodic else solve_tridiagonal
            return solver(self.lower[0], self.diag, self.upper[0], rhs)
        x = solve_sparse_5point(self.to_sparse(), np.asarray(rhs).ravel())
        return x.reshape(g.shape)


def laplacian_operator(grid: GridSpec, batch: tuple[int, ...] = ()) -> StencilOperator:
    diag = np.zeros((*batch, *grid.shape))
    off = np.empty((*batch, grid.dim, *grid.shape))
    for a, h in enumerate(grid.h):
        diag -= 2.0 / h**2
        off[(Ellipsis, a) + (slice(None),) * grid.dim] = 1.0 / h**2
    return StencilOperator(grid, diag, off, off.copy())._fold()


def advection_operator(q_left: np.ndarray, q_right: np.ndarray, grid: GridSpec) -> StencilOperator:
    """``Q_L^+ D_L u + Q_R^- D_R u`` for policy levels of shape ``(..., dim, *shape)``."""
    ql = positive_part(np.asarray(q_left, dtype=float))
    qr = negative_part(np.asarray(q_right, dtype=float))
    h = np.asarray(grid.h).reshape((grid.dim,) + (1,) * grid.dim)
    lower = -ql / h
    upper = qr / h
    diag = ((ql - qr) / h).sum(axis=-grid.dim - 1)
    return StencilOperator(grid, diag, lower, upper)._fold()


def assemble_transport_matrices(q_left, q_right, sigma: float, grid: GridSpec):
    """Return ``(hjb_operator, fpk_operator)`` for one or several policy levels."""
    adv = advection_operator(q_left, q_right, grid)
    lap = laplacian_operator(grid, adv.diag.shape[: adv.diag.ndim - grid.dim])
    hjb = (lap.scaled(-sigma) + adv).shifted(1.0 / grid.dt)
    return hjb, hjb.transpose()


def fpk_forward_sweep(policy: Policy, sigma: float, grid: GridSpec, m0: np.ndarray) -> np.ndarray:
    """Density levels ``0..T`` driven by ``policy``; step ``tau`` maps level tau to tau+1."""
    policy.check(grid)
    m0 = grid.check_level(m0, "m0")
    _, fpk = assemble_transport_matrices(policy.left, policy.right, sigma, grid)
    m = np.empty((grid.time_steps + 1, *grid.shape))
    m[0] = m0
    for tau in range(grid.time_steps):
        try:
            m[tau + 1] = fpk[tau].solve(m[tau] / grid.dt)
        except (SingularSystemError, SolverFailure) as exc:
            raise SweepError(tau + 1, exc) from exc
    return m


def hjb_backward_sweep(policy: Policy, sigma: float, grid: GridSpec, u_final: np.ndarray,
                       coupling: np.ndarray, potential: np.ndarray) -> np.ndarray:
    """Value levels ``0..T`` of the linear HJB equation under ``policy``.

    ``coupling[tau]`` is the running coupling used on step ``tau``, i.e. the
    coupling evaluated at density level ``tau + 1``.
    """
    policy.check(grid)
    u_final = grid.check_level(u_final, "u_final")
    coupling = grid.check_field(coupling, grid.time_steps, "coupling")
    hjb, _ = assemble_transport_matrices(policy.left, policy.right, sigma, grid)
    source = 0.5 * policy.squared_speed() + potential + coupling
    u = np.empty((grid.time_steps + 1, *grid.shape))
    u[-1] = u_final
    for tau in range(grid.time_steps - 1, -1, -1):
        try:
            u[tau] = hjb[tau].solve(u[tau + 1] / grid.dt + source[tau])
        except (SingularSystemError, SolverFailure) as exc:
            raise SweepError(tau, exc) from exc
    return u
