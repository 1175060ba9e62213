"""Chebychev propagation of two-channel wavepackets on a staggered time grid.

States live on ``state_times = 0, dt, ..., T``; the field lives on the
midpoints ``field_times``. Each step applies ``exp(-i H(eps_mid) dt)``
through a Chebychev expansion, which is exact to ``tol`` for the piecewise
constant field and second order in ``dt`` for a smooth one.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import jv

from .errors import InvalidInputError, IOFailure, NumericalFailure
from .grid import SpatialGrid
from .hamiltonian import ChannelSystem, spectral_bounds

__all__ = [
    "StateVector",
    "TimeGrid",
    "ChebychevPropagator",
    "chebychev_step",
    "propagate",
    "propagate_adjoint",
    "MemorySink",
    "DiskSink",
    "make_sink",
    "read_trajectory",
    "DEFAULT_TOL",
    "SPILL_DIR_ENV",
]

DEFAULT_TOL = 1e-12
NORM_DRIFT_LIMIT = 1e-6
SPILL_DIR_ENV = "VIBCONTROL_SPILL_DIR"


class StateVector:
    """Ground and excited components ``phi[0]``, ``phi[1]`` of a wavefunction on a grid."""

    __slots__ = ("phi", "grid")

    def __init__(self, phi, grid: SpatialGrid):
        phi = np.array(phi, dtype=complex)
        if phi.shape != (2, grid.n_points):
            raise InvalidInputError(f"state must have shape (2, {grid.n_points}), got {phi.shape}")
        self.phi = phi
        self.grid = grid

    @classmethod
    def on_channel(cls, values, grid, channel=0):
        phi = np.zeros((2, grid.n_points), dtype=complex)
        phi[channel] = values
        return cls(phi, grid)

    @classmethod
    def from_weighted(cls, c, grid):
        """Build from the symmetric representation ``c`` of shape ``(n, 2)``."""
        return cls((c / grid.sqrt_weights[:, None]).T, grid)

    def weighted(self) -> np.ndarray:
        """C-contiguous ``(n, 2)`` array ``sqrt(w) * phi``."""
        return np.ascontiguousarray((self.phi * self.grid.sqrt_weights).T)

    @property
    def phi_g(self):
        return self.phi[0]

    @property
    def phi_e(self):
        return self.phi[1]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.phi) ** 2 * self.grid.weights)))

    def channel_norms(self):
        return np.sum(np.abs(self.phi) ** 2 * self.grid.weights, axis=1)

    def inner(self, other: "StateVector") -> complex:
        """``<self|other>`` summed over both channels."""
        return complex(np.sum(np.conj(self.phi) * other.phi * self.grid.weights))

    def normalized(self) -> "StateVector":
        return StateVector(self.phi / self.norm(), self.grid)

    def copy(self) -> "StateVector":
        return StateVector(self.phi.copy(), self.grid)

    def __mul__(self, z):
        return StateVector(self.phi * z, self.grid)

    __rmul__ = __mul__

    def __repr__(self):
        return f"StateVector(n_points={self.grid.n_points}, norm={self.norm():.12f})"


@dataclass(frozen=True)
class TimeGrid:
    """``n_steps`` intervals of length ``dt``; fields live on interval midpoints."""

    n_steps: int
    dt: float

    def __post_init__(self):
        if self.n_steps < 1 or not self.dt > 0:
            raise InvalidInputError("TimeGrid needs n_steps >= 1 and dt > 0")

    @classmethod
    def from_duration(cls, t_final, n_steps):
        return cls(int(n_steps), float(t_final) / int(n_steps))

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def state_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def field_times(self) -> np.ndarray:
        st = self.state_times
        return (st[:-1] + st[1:]) / 2


@lru_cache(maxsize=64)
def _cheb_coefficients(alpha: float, tol: float, max_order: int) -> np.ndarray:
    """Coefficients of ``exp(-i alpha x)`` on ``[-1, 1]`` truncated at ``tol``."""
    k = np.arange(max_order + 2)
    bessel = jv(k, alpha)
    a = 2.0 * (-1j) ** k * bessel
    a[0] /= 2.0
    mag = np.abs(a)
    tail = np.cumsum(mag[::-1])[::-1]
    ok = np.nonzero((tail < tol) & (k > abs(alpha)))[0]
    if ok.size == 0:
        raise NumericalFailure(
            f"Chebychev series for spectral radius alpha={alpha:.6g} not converged to "
            f"{tol:g} within {max_order} terms"
        )
    return a[: max(ok[0], 2)].copy()


class ChebychevPropagator:
    """Short-time propagator ``exp(-i H(eps) dt)`` for one system and step.

    The spectral window is sized for ``|eps| <= eps_max`` and grows
    automatically when a larger field value shows up.
    """

    def __init__(self, system: ChannelSystem, dt: float, eps_max: float = 0.0,
                 tol: float = DEFAULT_TOL, max_order: int = None):
        if not 0 < tol <= 1e-6:
            raise InvalidInputError(f"tol must lie in (0, 1e-6], got {tol}")
        self.system = system
        self.dt = float(dt)
        self.tol = float(tol)
        self._max_order = max_order
        self._configure(eps_max)
        n = system.n_points
        self._work = [np.empty((n, 2), complex) for _ in range(4)]

    def _configure(self, eps_max):
        self.eps_max = float(eps_max)
        e_min, e_max = spectral_bounds(self.system, self.eps_max)
        self.e_mid = 0.5 * (e_max + e_min)
        self.half_width = max(0.5 * (e_max - e_min), 1e-300)
        self.bounds = (e_min, e_max)
        alpha = self.dt * self.half_width
        max_order = self._max_order or int(10 * abs(alpha) + 40)
        self.coefficients = _cheb_coefficients(alpha, self.tol, max_order)
        self.phase = np.exp(-1j * self.e_mid * self.dt)

    def set_bounds(self, e_min, e_max):
        """Override the spectral window (must enclose the spectrum of H)."""
        self.e_mid = 0.5 * (e_max + e_min)
        self.half_width = 0.5 * (e_max - e_min)
        self.bounds = (e_min, e_max)
        alpha = self.dt * self.half_width
        self.coefficients = _cheb_coefficients(alpha, self.tol, self._max_order or int(10 * abs(alpha) + 40))
        self.phase = np.exp(-1j * self.e_mid * self.dt)

    def step(self, c: np.ndarray, eps: float) -> np.ndarray:
        """Advance the weighted state ``c`` (shape ``(n, 2)``) by one step."""
        if abs(eps) > self.eps_max:
            self._configure(2.0 * abs(eps))
        sys_ = self.system
        a = self.coefficients
        inv = 1.0 / self.half_width
        shift = self.e_mid
        prev, cur, nxt, hc = self._work
        prev[...] = c
        result = a[0] * c
        sys_.apply(c, eps, out=hc)
        np.subtract(hc, shift * c, out=cur)
        cur *= inv
        result += a[1] * cur
        for ak in a[2:]:
            sys_.apply(cur, eps, out=hc)
            # nxt = 2 (H - shift)/w cur - prev
            np.subtract(hc, shift * cur, out=nxt)
            nxt *= 2.0 * inv
            nxt -= prev
            result += ak * nxt
            prev, cur, nxt = cur, nxt, prev
        self._work[:3] = [prev, cur, nxt]
        result *= self.phase
        return result


def chebychev_step(psi: StateVector, system: ChannelSystem, eps_mid: float, dt: float,
                   bounds=None, tol: float = DEFAULT_TOL, max_order: int = None) -> StateVector:
    """One step ``exp(-i H(eps_mid) dt) psi``; ``dt < 0`` steps backward."""
    prop = ChebychevPropagator(system, dt, abs(eps_mid), tol, max_order)
    if bounds is not None:
        prop.set_bounds(*bounds)
    return StateVector.from_weighted(prop.step(psi.weighted(), eps_mid), psi.grid)


def _field_values(field, tgrid: TimeGrid) -> np.ndarray:
    values = np.asarray(getattr(field, "values", field), dtype=float)
    if values.shape != (tgrid.n_steps,):
        raise InvalidInputError(f"field has {values.shape} samples; time grid needs ({tgrid.n_steps},)")
    if not np.all(np.isfinite(values)):
        raise NumericalFailure("field contains non-finite values")
    return values


def _check_norm(n0, c, where):
    n1 = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    if abs(n1 - n0) > NORM_DRIFT_LIMIT * max(n0, 1e-300):
        raise NumericalFailure(f"norm drifted from {n0:.12g} to {n1:.12g} {where}")


def propagate(psi0: StateVector, field, system: ChannelSystem, tgrid: TimeGrid,
              store=None, tol: float = DEFAULT_TOL) -> StateVector:
    """Forward propagation ``0 -> T``; optionally stores every state in ``store``."""
    values = _field_values(field, tgrid)
    prop = ChebychevPropagator(system, tgrid.dt, float(np.abs(values).max(initial=0.0)), tol)
    c = psi0.weighted()
    n0 = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    sw = psi0.grid.sqrt_weights
    if store is not None:
        store[0] = c.T / sw
    for k, eps in enumerate(values):
        c = prop.step(c, eps)
        if store is not None:
            store[k + 1] = c.T / sw
    _check_norm(n0, c, "during forward propagation")
    return StateVector.from_weighted(c, psi0.grid)


def propagate_adjoint(chi_T: StateVector, field, system: ChannelSystem, tgrid: TimeGrid,
                      store=None, tol: float = DEFAULT_TOL):
    """Backward propagation ``T -> 0`` of the co-state under ``H^+ = H``.

    Every intermediate state is written to ``store`` (a fresh in-memory sink
    when omitted), which is returned.
    """
    values = _field_values(field, tgrid)
    if store is None:
        store = MemorySink(chi_T.grid.n_points, tgrid.n_steps, tgrid.dt)
    prop = ChebychevPropagator(system, -tgrid.dt, float(np.abs(values).max(initial=0.0)), tol)
    c = chi_T.weighted()
    n0 = float(np.sqrt(np.sum(np.abs(c) ** 2)))
    sw = chi_T.grid.sqrt_weights
    store[tgrid.n_steps] = c.T / sw
    for k in range(tgrid.n_steps - 1, -1, -1):
        c = prop.step(c, values[k])
        store[k] = c.T / sw
    _check_norm(n0, c, "during backward propagation")
    return store


class MemorySink:
    """In-memory trajectory: one ``(2, n)`` complex record per state time."""

    def __init__(self, n_points, n_steps, dt=0.0):
        self.n_points, self.n_steps, self.dt = int(n_points), int(n_steps), float(dt)
        self.data = np.zeros((self.n_steps + 1, 2, self.n_points), dtype=complex)

    def __setitem__(self, k, phi):
        self.data[k] = phi

    def __getitem__(self, k):
        return self.data[k]

    def __len__(self):
        return self.n_steps + 1

    def __iter__(self):
        return iter(self.data)

    def close(self):
        pass


_MAGIC = b"VIBTRJ01"
_HEADER = struct.Struct("<8sqqd")  # 32 bytes


class DiskSink:
    """Trajectory spilled to a binary file of fixed-size little-endian records.

    Layout: a 32-byte header (magic, n_points, n_steps, dt) followed by
    ``n_steps + 1`` records of ``2 * n_points`` complex values, each stored
    as two float64 numbers.
    """

    def __init__(self, path, n_points, n_steps, dt, mode="w+"):
        self.path = Path(path)
        self.n_points, self.n_steps, self.dt = int(n_points), int(n_steps), float(dt)
        try:
            shape = (self.n_steps + 1, 2, self.n_points)
            if mode == "w+":
                with self.path.open("wb") as fh:
                    fh.write(_HEADER.pack(_MAGIC, self.n_points, self.n_steps, self.dt))
                    fh.truncate(_HEADER.size + 16 * int(np.prod(shape)))
                mode = "r+"
            self.data = np.memmap(self.path, dtype="<c16", mode=mode, offset=_HEADER.size, shape=shape)
        except OSError as exc:
            raise IOFailure(f"cannot open trajectory file {self.path}: {exc}") from exc

    @classmethod
    def open(cls, path, mode="r"):
        path = Path(path)
        try:
            with path.open("rb") as fh:
                magic, n, nt, dt = _HEADER.unpack(fh.read(_HEADER.size))
        except (OSError, struct.error) as exc:
            raise IOFailure(f"cannot read trajectory header of {path}: {exc}") from exc
        if magic != _MAGIC:
            raise IOFailure(f"{path} is not a trajectory file")
        return cls(path, n, nt, dt, mode=mode)

    def __setitem__(self, k, phi):
        try:
            self.data[k] = phi
        except OSError as exc:
            raise IOFailure(f"writing record {k} to {self.path} failed: {exc}") from exc

    def __getitem__(self, k):
        return np.asarray(self.data[k])

    def __len__(self):
        return self.n_steps + 1

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def flush(self):
        self.data.flush()

    def close(self, remove=False):
        if self.data is not None:
            self.data.flush()
            self.data._mmap.close()
            self.data = None
        if remove:
            self.path.unlink(missing_ok=True)


def read_trajectory(path) -> DiskSink:
    return DiskSink.open(path)


def make_sink(n_points, n_steps, dt, memory_budget=None, spill_dir=None):
    """In-memory sink unless the trajectory exceeds ``memory_budget`` bytes."""
    nbytes = (n_steps + 1) * 2 * n_points * 16
    if memory_budget is None or nbytes <= memory_budget:
        return MemorySink(n_points, n_steps, dt)
    spill_dir = spill_dir or os.environ.get(SPILL_DIR_ENV) or tempfile.gettempdir()
    Path(spill_dir).mkdir(parents=True, exist_ok=True)
    fd, name = tempfile.mkstemp(prefix="trajectory-", suffix=".bin", dir=spill_dir)
    os.close(fd)
    return DiskSink(name, n_points, n_steps, dt)
