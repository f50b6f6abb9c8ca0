"""Quadratic Hamiltonian ``H(x, p) = |p|^2 / 2 - V(x)`` and its Lagrangian.

The conjugate is ``L(x, q) = |q|^2 / 2 + V(x)``; the greedy policy is the
gradient itself, clipped to the admissible ball of radius ``R`` one side at
a time on the two-sided grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, Policy, negative_part, positive_part, two_sided_gradient

DEFAULT_CAP = 10000.0


@dataclass(frozen=True)
class HamiltonianSpec:
    potential: np.ndarray
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        v = np.asarray(self.potential, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("state potential must be finite on every node")
        if not self.cap > 0:
            raise ValueError(f"policy cap R must be positive, got {self.cap}")
        object.__setattr__(self, "potential", v)

    def hamiltonian(self, p: np.ndarray) -> np.ndarray:
        """``H`` at the nodes for momenta ``p`` of shape ``(dim, *grid.shape)``."""
        return 0.5 * np.sum(np.asarray(p) ** 2, axis=0) - self.potential

    def lagrangian(self, q: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum(np.asarray(q) ** 2, axis=0) + self.potential


def extract_policy(u: np.ndarray, grid: GridSpec, cap: float = DEFAULT_CAP) -> Policy:
    """Greedy policy from a value field with levels ``0..T``.

    Level ``tau`` of the policy is built from level ``tau`` of ``u``:
    ``Q_L = min(R, (D_L u)^+)`` and ``Q_R = max(-R, (D_R u)^-)``.
    """
    u = grid.check_field(u, grid.time_steps + 1, "u")
    left = np.empty((grid.time_steps, grid.dim, *grid.shape))
    right = np.empty_like(left)
    for tau in range(grid.time_steps):
        dl, dr = two_sided_gradient(u[tau], grid)
        left[tau] = np.minimum(cap, positive_part(dl))
        right[tau] = np.maximum(-cap, negative_part(dr))
    return Policy(left, right)


def cap_hits(u: np.ndarray, grid: GridSpec, cap: float) -> int:
    """How many one-sided gradients on levels ``0..T-1`` exceed the cap."""
    hits = 0
    for tau in range(grid.time_steps):
        dl, dr = two_sided_gradient(u[tau], grid)
        hits += int(np.count_nonzero(dl > cap) + np.count_nonzero(dr < -cap))
    return hits


def running_cost(q_left, q_right, potential) -> np.ndarray:
    """``|Q_±|^2 / 2 + V`` with effective parts formed here; sums over the axis dimension 0."""
    ql = positive_part(np.asarray(q_left, dtype=float))
    qr = negative_part(np.asarray(q_right, dtype=float))
    kinetic = 0.5 * (ql**2 + qr**2)
    if kinetic.ndim > np.ndim(potential):
        kinetic = kinetic.sum(axis=0)
    return kinetic + potential


def legendre_gap(p, q, potential: float = 0.0) -> float:
    """``H(p) + L(q) - p.q``, which equals ``|p - q|^2 / 2`` for this Hamiltonian."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    h = 0.5 * p @ p - potential
    lag = 0.5 * q @ q + potential
    return float(h + lag - p @ q)
