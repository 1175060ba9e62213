"""Mapped radial grid and sine-basis kinetic energy operator.

The grid is uniform in an auxiliary coordinate ``x`` and mapped onto the
physical coordinate ``R`` so that the local point density follows the
semiclassical momentum of an envelope potential. Nodes lie strictly inside
``(r_min, r_max)``; the sine basis vanishes at the two walls ``r_min`` and
``r_max``.

Wavefunctions are stored as plain values ``psi(R_k)``. The symmetric
representation used for matrices multiplies them by ``sqrt(weights)``, where
``weights = jacobian * dx`` are the quadrature weights of the mapped grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline

from .errors import InvalidInputError
from .potentials import PotentialCurve

__all__ = ["SpatialGrid", "KineticOperator", "build_mapped_grid", "uniform_grid", "kinetic_matrix"]

P_FLOOR = 1e-8  # hartree


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Nodes ``r`` and mapping jacobian ``dR/dx`` of a mapped sine grid.

    ``wall_jacobian`` holds ``dR/dx`` at ``r_min`` and ``r_max``, which the
    kinetic operator needs. ``n_required`` is the point count that the local
    sampling criterion ``dR <= pi / (beta p(R))`` calls for.
    """

    r: np.ndarray
    jacobian: np.ndarray
    r_min: float
    r_max: float
    beta: float = 1.0
    e_max: float = np.inf
    wall_jacobian: tuple = (1.0, 1.0)
    n_required: float = 0.0
    _spline: object = field(default=None, repr=False)

    @property
    def n_points(self) -> int:
        return self.r.size

    @property
    def dx(self) -> float:
        return (self.r_max - self.r_min) / (self.n_points + 1)

    @property
    def weights(self) -> np.ndarray:
        return self.jacobian * self.dx

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @property
    def length(self) -> float:
        return self.r_max - self.r_min

    def x_nodes(self, walls=False) -> np.ndarray:
        m = np.arange(self.n_points + 2) if walls else np.arange(1, self.n_points + 1)
        return self.r_min + m * self.dx

    def mapping(self) -> CubicHermiteSpline:
        """C1 map ``x -> R`` through walls and nodes, with derivative ``jacobian``."""
        if self._spline is not None:
            return self._spline
        x = self.x_nodes(walls=True)
        rr = np.concatenate([[self.r_min], self.r, [self.r_max]])
        jj = np.concatenate([[self.wall_jacobian[0]], self.jacobian, [self.wall_jacobian[1]]])
        spl = CubicHermiteSpline(x, rr, jj)
        object.__setattr__(self, "_spline", spl)
        return spl

    def inner(self, a, b) -> complex:
        """Quadrature inner product ``<a|b>`` of two grid functions."""
        return np.sum(np.conj(a) * b * self.weights)

    def norm(self, a) -> float:
        return float(np.sqrt(np.sum(np.abs(a) ** 2 * self.weights)))

    def same_as(self, other: "SpatialGrid") -> bool:
        return self is other or (
            self.n_points == other.n_points
            and np.array_equal(self.r, other.r)
            and np.array_equal(self.jacobian, other.jacobian)
        )


def uniform_grid(r_min, r_max, n_points) -> SpatialGrid:
    """Unmapped sine grid with ``n_points`` interior nodes."""
    if not r_max > r_min:
        raise InvalidInputError("r_max must exceed r_min")
    if n_points < 1:
        raise InvalidInputError("n_points must be positive")
    h = (r_max - r_min) / (n_points + 1)
    r = r_min + h * np.arange(1, n_points + 1)
    return SpatialGrid(r, np.ones(n_points), float(r_min), float(r_max))


def build_mapped_grid(
    envelope: PotentialCurve,
    e_max: float,
    n_points: int,
    beta: float = 1.3,
    r_min: float = None,
    r_max: float = None,
    mass: float = 1.0,
    n_fine: int = None,
) -> SpatialGrid:
    """Map ``n_points`` nodes onto ``[r_min, r_max]`` with density ~ local momentum.

    The local momentum is ``sqrt(2 m max(e_max - V_env(R), P_FLOOR))``. With a
    fixed point count only the shape of the density matters; ``beta`` and
    ``mass`` enter through ``n_required``.
    """
    if n_points < 16:
        raise InvalidInputError(f"n_points must be >= 16, got {n_points}")
    if beta < 1:
        raise InvalidInputError(f"beta must be >= 1, got {beta}")
    if mass <= 0:
        raise InvalidInputError("mass must be positive")
    r_min = envelope.r_min if r_min is None else float(r_min)
    r_max = (envelope.r[-1] if not np.isfinite(envelope.r_max) else envelope.r_max) if r_max is None else float(r_max)
    if not r_max > r_min:
        raise InvalidInputError(f"empty grid domain [{r_min}, {r_max}]")

    n_fine = n_fine or max(64 * n_points, 20001)
    rf = np.linspace(r_min, r_max, n_fine)
    vf = envelope(rf)
    if not np.all(np.isfinite(vf)):
        raise InvalidInputError("envelope potential is not finite on the grid domain")
    if e_max <= vf.min():
        raise InvalidInputError(
            f"e_max={e_max:.6g} is not above the envelope minimum {vf.min():.6g}"
        )

    def density(r, v):
        return beta * np.sqrt(2.0 * mass * np.maximum(e_max - v, P_FLOOR))

    rho_f = density(rf, vf)
    cum = cumulative_trapezoid(rho_f, rf, initial=0.0)
    total = cum[-1]
    s = cum * ((n_points + 1) / total)
    m = np.arange(n_points + 2, dtype=float)
    rr = np.interp(m, s, rf)
    rr[0], rr[-1] = r_min, r_max
    if np.any(np.diff(rr) <= 0):
        raise InvalidInputError("grid mapping is not monotonic; increase n_fine or reduce the domain")

    mean_rho = total / (r_max - r_min)
    jj = mean_rho / density(rr, envelope(rr))
    return SpatialGrid(
        r=rr[1:-1],
        jacobian=jj[1:-1],
        r_min=r_min,
        r_max=r_max,
        beta=float(beta),
        e_max=float(e_max),
        wall_jacobian=(float(jj[0]), float(jj[-1])),
        n_required=float(total / np.pi),
    )


@dataclass(frozen=True, eq=False)
class KineticOperator:
    """Dense symmetric matrix of ``-1/(2m) d^2/dR^2`` in the weighted representation."""

    matrix: np.ndarray
    mass: float
    _eigvals: object = field(default=None, repr=False)

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eigvals is None:
            object.__setattr__(self, "_eigvals", np.linalg.eigvalsh(self.matrix))
        return self._eigvals


def _sine_transform(n):
    k = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(k, k) / (n + 1))


def kinetic_matrix(grid: SpatialGrid, mass: float) -> KineticOperator:
    """Kinetic energy in the sine basis, pulled back through the grid mapping.

    With ``phi = J^{-1/2} psi~`` the quadratic form
    ``(1/2m) int |d phi/dx|^2 / J dx`` is evaluated exactly on the cosine
    nodes (walls included, trapezoid weights), which makes the matrix
    ``A^T A`` and hence symmetric positive semidefinite by construction.
    """
    if mass <= 0:
        raise InvalidInputError("mass must be positive")
    n = grid.n_points
    h = grid.dx
    length = (n + 1) * h
    j = np.arange(1, n + 1)
    m = np.arange(n + 2)
    w = np.ones(n + 2)
    w[0] = w[-1] = 0.5
    b = (np.sqrt(w * h)[:, None] * np.sqrt(2.0 / length)
         * (j * np.pi / length)[None, :] * np.cos(np.pi * np.outer(m, j) / (n + 1)))
    c = b @ _sine_transform(n)
    j_all = np.concatenate([[grid.wall_jacobian[0]], grid.jacobian, [grid.wall_jacobian[1]]])
    k = c.T @ (c / j_all[:, None])
    s = 1.0 / np.sqrt(grid.jacobian)
    t = (0.5 / mass) * (s[:, None] * k * s[None, :])
    t = 0.5 * (t + t.T)
    return KineticOperator(t, float(mass))
