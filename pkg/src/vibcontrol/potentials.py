"""Potential energy curves: tabulated, analytic, and file-based."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "PotentialCurve",
    "morse_curve",
    "harmonic_curve",
    "flat_curve",
    "load_potential",
    "envelope_curve",
]


@dataclass(frozen=True)
class PotentialCurve:
    """A potential energy curve V(R) in hartree on R in bohr.

    Evaluation uses ``func`` when given (analytic curves), otherwise linear
    interpolation of the table. Beyond the last sample an optional
    ``-C/R**tail_power`` tail, matched in value at the last sample, decays to
    ``asymptote``. Any other out-of-table evaluation raises.
    """

    r: np.ndarray
    v: np.ndarray
    asymptote: Optional[float] = None
    label: str = ""
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    tail_power: Optional[int] = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise InvalidInputError(f"potential {self.label!r}: R and V must be 1-d of equal length")
        if r.size < 8:
            raise InvalidInputError(f"potential {self.label!r}: need at least 8 samples, got {r.size}")
        if np.any(np.diff(r) <= 0):
            raise InvalidInputError(f"potential {self.label!r}: R values must be strictly increasing")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise InvalidInputError(f"potential {self.label!r}: non-finite samples")
        if self.tail_power is not None:
            if self.asymptote is None:
                raise InvalidInputError("an asymptotic tail needs an asymptote value")
            depth = abs(self.asymptote - v.min())
            if abs(v[-1] - self.asymptote) > 0.1 * depth:
                raise InvalidInputError(
                    f"potential {self.label!r}: last sample {v[-1]:.6g} is not within 10% "
                    f"of the well depth from the asymptote {self.asymptote:.6g}"
                )
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)

    @property
    def r_min(self) -> float:
        return float(self.r[0])

    @property
    def r_max(self) -> float:
        return np.inf if (self.func is not None or self.tail_power is not None) else float(self.r[-1])

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(r), dtype=float)
        if np.any(r < self.r[0] - 1e-12):
            raise InvalidInputError(
                f"potential {self.label!r}: R={r.min():.6g} below table start {self.r[0]:.6g}"
            )
        beyond = r > self.r[-1] + 1e-12
        if np.any(beyond) and self.tail_power is None:
            raise InvalidInputError(
                f"potential {self.label!r}: R={r.max():.6g} beyond table end {self.r[-1]:.6g} "
                "and no extrapolation tail configured"
            )
        out = np.interp(r, self.r, self.v)
        if np.any(beyond):
            n = self.tail_power
            c_n = (self.asymptote - self.v[-1]) * self.r[-1] ** n
            out = np.where(beyond, self.asymptote - c_n / np.maximum(r, self.r[-1]) ** n, out)
        return out

    def shifted(self, offset: float, label: Optional[str] = None) -> "PotentialCurve":
        """Return the curve moved up by ``offset`` hartree."""
        func = None if self.func is None else (lambda r, f=self.func: f(r) + offset)
        asym = None if self.asymptote is None else self.asymptote + offset
        return PotentialCurve(self.r, self.v + offset, asym, label or self.label, func, self.tail_power)


def _sample_range(r_lo, r_hi, n=256):
    return np.linspace(r_lo, r_hi, n)


def morse_curve(depth, a, r_e, offset=0.0, label="morse", r_range=(0.5, 50.0)):
    """Morse curve ``offset + depth*(1 - exp(-a(R - r_e)))**2``.

    The well bottom sits at ``offset`` and the dissociation limit at
    ``offset + depth``.
    """
    if depth <= 0 or a <= 0:
        raise InvalidInputError("Morse depth and range parameter must be positive")

    def f(r):
        return offset + depth * (1.0 - np.exp(-a * (r - r_e))) ** 2

    r = _sample_range(*r_range)
    return PotentialCurve(r, f(r), offset + depth, label, f)


def harmonic_curve(mass, omega, r_e, offset=0.0, label="harmonic", r_range=(0.5, 50.0)):
    """Harmonic well ``offset + m omega^2 (R - r_e)^2 / 2``; no asymptote."""

    def f(r):
        return offset + 0.5 * mass * omega**2 * (r - r_e) ** 2

    r = _sample_range(*r_range)
    return PotentialCurve(r, f(r), None, label, f)


def flat_curve(value=0.0, label="flat", r_range=(0.0, 100.0)):
    def f(r):
        return np.full_like(np.asarray(r, dtype=float), value)

    r = _sample_range(*r_range, n=8)
    return PotentialCurve(r, f(r), value, label, f)


def load_potential(path, asymptote=None, tail_power=None, label=None) -> PotentialCurve:
    """Read a two-column ``R V`` table (bohr, hartree); ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"potential file not found: {path}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 2:
                raise InvalidInputError(f"{path}:{lineno}: expected 'R V', got {line.strip()!r}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: non-numeric entry {line.strip()!r}") from None
    if not rows:
        raise InvalidInputError(f"{path}: empty potential table")
    table = np.array(rows)
    if np.any(np.diff(table[:, 0]) <= 0):
        raise InvalidInputError(f"{path}: R column is not strictly increasing")
    return PotentialCurve(table[:, 0], table[:, 1], asymptote, label or path.stem, None, tail_power)


def envelope_curve(*curves: PotentialCurve) -> PotentialCurve:
    """Pointwise minimum of several curves, used to build a shared grid."""
    if not curves:
        raise InvalidInputError("envelope of zero curves")

    def f(r):
        return np.min([c(r) for c in curves], axis=0)

    r_lo = max(c.r_min for c in curves)
    r_hi = min(c.r_max if np.isfinite(c.r_max) else c.r[-1] for c in curves)
    r = np.linspace(r_lo, r_hi, 64)
    asym = [c.asymptote for c in curves if c.asymptote is not None]
    return PotentialCurve(r, f(r), min(asym) if asym else None, "envelope", f)
