"""Guess fields and the two restart strategies.

* intensity reduction: scale a converged field down and optimize again;
* time compression: keep every k-th Fourier sample of a converged field,
  which yields a field on ``T/k`` with the same spectral support, then
  optimize again with a ``sin(pi t / T~)`` update shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .hamiltonian import EigenBasis
from .krotov import ControlField
from .propagator import TimeGrid
from .shapes import gaussian, gaussian_train, sin2, sin_shape
from .units import CM1_TO_HARTREE

__all__ = [
    "GuessSpec",
    "make_guess",
    "reduce_intensity_restart",
    "compress_time",
    "minimal_time_hint",
]


@dataclass
class GuessSpec:
    """``eps(t) = amplitude * env(t) * sum_j cos(omega_j t)``.

    ``centers`` are carrier frequencies in hartree; ``envelope`` is one of
    ``"gaussian"``, ``"train"`` (Gaussians at ``offsets``), ``"sin2"`` or
    ``"flat"``. ``fwhm`` is the intensity FWHM of each Gaussian sub-pulse.
    """

    amplitude: float
    centers: Sequence[float]
    envelope: str = "gaussian"
    fwhm: Optional[float] = None
    offsets: Sequence[float] = field(default_factory=tuple)
    t_center: Optional[float] = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidInputError("guess amplitude must be non-negative")
        if len(self.centers) == 0 or any(w <= 0 for w in self.centers):
            raise InvalidInputError("guess needs at least one positive carrier frequency")

    @classmethod
    def from_cm1(cls, amplitude, centers_cm1, **kw):
        return cls(amplitude, [w * CM1_TO_HARTREE for w in centers_cm1], **kw)


def _envelope(spec: GuessSpec, tgrid: TimeGrid):
    t = tgrid.field_times
    T = tgrid.t_final
    kind = spec.envelope
    if kind in ("gaussian", "train"):
        if spec.fwhm is None or not 0 < spec.fwhm < T:
            raise InvalidInputError(f"Gaussian FWHM must lie in (0, T={T:g}), got {spec.fwhm}")
        if kind == "gaussian":
            return gaussian(t, T / 2 if spec.t_center is None else spec.t_center, spec.fwhm)
        if not spec.offsets:
            raise InvalidInputError("a pulse train needs sub-pulse offsets")
        return gaussian_train(t, spec.offsets, spec.fwhm)
    if kind == "sin2":
        return sin2(t, T)
    if kind == "flat":
        return np.ones_like(t)
    raise InvalidInputError(f"unknown envelope {kind!r}")


def make_guess(spec: GuessSpec, tgrid: TimeGrid, shape=None, alpha=1.0) -> ControlField:
    """Sample the guess on the field grid; the update shape defaults to ``sin^2(pi t/T)``."""
    for w in spec.centers:
        if w * tgrid.dt >= np.pi:
            raise InvalidInputError(
                f"carrier {w:.6g} hartree is not resolved by dt={tgrid.dt:g} (omega*dt >= pi)"
            )
    t = tgrid.field_times
    env = _envelope(spec, tgrid)
    carrier = np.sum([np.cos(w * t) for w in spec.centers], axis=0)
    if shape is None:
        shape = sin2(t, tgrid.t_final)
    return ControlField(tgrid, spec.amplitude * env * carrier, shape, alpha)


def reduce_intensity_restart(optimal: ControlField, factor: float) -> ControlField:
    """Divide the field by ``factor``; the pulse energy drops by ``factor**2``."""
    if factor < 1:
        raise InvalidInputError(f"reduction factor must be >= 1, got {factor}")
    return optimal.with_values(optimal.values / factor)


def compress_time(fld: ControlField, keep_every: int, symmetric=False, fluence=None,
                  alpha=None) -> ControlField:
    """Shorten the optimization window by spectral decimation.

    The field is Fourier transformed, every ``keep_every``-th sample is kept
    and the result is transformed back onto ``n_steps / k`` points with the
    same ``dt``, so surviving bins keep their frequencies.

    ``symmetric=False`` keeps bins ``0, k, 2k, ...``; ``symmetric=True``
    keeps the mirrored set ``+-(k/2 + j k)`` around zero frequency (``k``
    even). The result is rescaled to ``fluence`` (``int eps^2 dt``), by
    default the input fluence divided by ``k``.
    """
    k = int(keep_every)
    n = fld.tgrid.n_steps
    if k < 1:
        raise InvalidInputError("keep_every must be >= 1")
    if k > n / 4:
        raise InvalidInputError(f"keep_every={k} leaves fewer than 4 samples of {n}")
    if symmetric and k % 2:
        raise InvalidInputError("symmetric decimation needs an even keep_every")
    values = fld.values
    pad = (-n) % k
    if pad:
        values = np.concatenate([values, np.zeros(pad)])
    n_pad = values.size
    m = n_pad // k
    spec = np.fft.fft(values)
    if symmetric:
        # bins k*(j + 1/2): the inverse over half-integer bins carries a phase ramp
        kept = spec[np.arange(m) * k + k // 2]
        new = (np.fft.ifft(kept) * np.exp(1j * np.pi * np.arange(m) / m)).real
    else:
        new = np.fft.ifft(spec[::k]).real
    tg = TimeGrid(m, fld.tgrid.dt)
    target = fld.fluence() / k if fluence is None else float(fluence)
    current = float(np.sum(new**2) * tg.dt)
    if current > 0:
        new = new * np.sqrt(target / current)
    shape = sin_shape(tg.field_times, tg.t_final)
    return ControlField(tg, new, shape, fld.alpha if alpha is None else alpha)


def minimal_time_hint(basis: EigenBasis, v: int):
    """``(T*, 2 T*)`` with ``T* = 2 pi / |E_v - E_{v-1}|`` (atomic time units)."""
    if v < 1:
        raise InvalidInputError("level v=0 has no lower neighbour")
    if v >= len(basis) or (basis.asymptote is not None and v >= basis.n_bound):
        raise InvalidInputError(f"level v={v} is not a computed bound level")
    t_star = 2.0 * np.pi / abs(basis.energies[v] - basis.energies[v - 1])
    return t_star, 2.0 * t_star
