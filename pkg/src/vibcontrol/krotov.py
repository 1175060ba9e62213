"""Krotov optimal control for state-to-state transfer.

One iteration propagates the target backward under the old field, then sweeps
forward, updating the field at each midpoint from the forward state at the
start of the interval before stepping with the new value::

    eps_new(t) = eps_old(t) + S(t)/alpha * Im[ c* <chi(t)| mu |psi(t)> ]

where ``c = <phi_f|psi_old(T)>`` and ``chi(t) = U(t, T; eps_old) phi_f``.
The functional ``J = -F + int g dt`` never increases; ``delta1`` and
``delta2`` certify it per iteration.
"""
from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AlgorithmFault, InvalidInputError, IOFailure, NumericalFailure
from .hamiltonian import ChannelSystem
from .propagator import (
    DEFAULT_TOL,
    ChebychevPropagator,
    StateVector,
    TimeGrid,
    make_sink,
    propagate,
    propagate_adjoint,
)

__all__ = [
    "ControlField",
    "ControlProblem",
    "QuadraticPenalty",
    "RestrictedPenalty",
    "AlphaSchedule",
    "StopCriteria",
    "IterationRecord",
    "KrotovRun",
    "objective",
    "krotov_coefficient",
    "krotov_iterate",
    "optimize",
    "penalty_quadratic",
    "penalty_restricted",
    "monotonicity_diagnostics",
    "write_field",
    "read_field",
    "read_log",
]

log = logging.getLogger(__name__)

SHAPE_FLOOR = 1e-8
MONOTONICITY_TOL = 1e-9
DIAGNOSTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ControlField:
    """Real field samples on ``tgrid.field_times`` with update shape and weight."""

    tgrid: TimeGrid
    values: np.ndarray
    shape: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        shape = np.asarray(self.shape, dtype=float)
        n = self.tgrid.n_steps
        if values.shape != (n,) or shape.shape != (n,):
            raise InvalidInputError(f"field values and shape need {n} samples")
        if not np.all(np.isfinite(values)):
            raise NumericalFailure("field contains non-finite values")
        if np.any(shape < 0) or np.any(shape > 1 + 1e-12):
            raise InvalidInputError("update shape must lie in [0, 1]")
        if not self.alpha > 0:
            raise InvalidInputError("alpha must be positive")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", shape)

    @property
    def times(self) -> np.ndarray:
        return self.tgrid.field_times

    def with_values(self, values) -> "ControlField":
        return replace(self, values=np.array(values, dtype=float))

    def fluence(self) -> float:
        """``int eps^2 dt`` (atomic units)."""
        return float(np.sum(self.values**2) * self.tgrid.dt)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    system: ChannelSystem
    initial: StateVector
    target: StateVector
    tgrid: TimeGrid

    def __post_init__(self):
        for name, st in (("initial", self.initial), ("target", self.target)):
            if abs(st.norm() - 1.0) > 1e-9:
                raise InvalidInputError(f"{name} state is not normalized (norm={st.norm():.12g})")
            if not st.grid.same_as(self.system.grid):
                raise InvalidInputError(f"{name} state lives on a different grid")


class QuadraticPenalty:
    """``g = alpha/S (eps - eps_old)^2``: restricts the change per iteration."""

    name = "quadratic"

    def __init__(self, alpha):
        if not alpha > 0:
            raise InvalidInputError("alpha must be positive")
        self.alpha = float(alpha)

    def scaled(self, factor):
        return QuadraticPenalty(self.alpha * factor)

    def g(self, eps, eps_old, shape):
        return self.alpha / np.maximum(shape, SHAPE_FLOOR) * (eps - eps_old) ** 2

    def dg(self, eps, eps_old, shape):
        return 2.0 * self.alpha / np.maximum(shape, SHAPE_FLOOR) * (eps - eps_old)

    def update(self, eps_old, im_term, shape):
        return eps_old + shape / self.alpha * im_term

    def __repr__(self):
        return f"QuadraticPenalty(alpha={self.alpha:g})"


class RestrictedPenalty:
    """``g = [alpha1 (eps - eps_old)^2 - alpha2 (eps - eps_ref)^2] / S``.

    Monotonic convergence requires ``alpha1 > alpha2 >= 0``.
    """

    name = "restricted"

    def __init__(self, alpha1, alpha2, reference):
        if alpha2 < 0 or not alpha1 > alpha2:
            raise InvalidInputError(
                f"restricted penalty needs alpha1 > alpha2 >= 0, got alpha1={alpha1}, alpha2={alpha2}"
            )
        self.alpha1, self.alpha2 = float(alpha1), float(alpha2)
        self.reference = np.asarray(reference, dtype=float)

    def scaled(self, factor):
        return RestrictedPenalty(self.alpha1 * factor, self.alpha2 * factor, self.reference)

    def g(self, eps, eps_old, shape):
        s = np.maximum(shape, SHAPE_FLOOR)
        return (self.alpha1 * (eps - eps_old) ** 2 - self.alpha2 * (eps - self.reference) ** 2) / s

    def dg(self, eps, eps_old, shape):
        s = np.maximum(shape, SHAPE_FLOOR)
        return 2.0 * (self.alpha1 * (eps - eps_old) - self.alpha2 * (eps - self.reference)) / s

    def update(self, eps_old, im_term, shape):
        a1, a2 = self.alpha1, self.alpha2
        new = (a1 * eps_old - a2 * self.reference + shape * im_term) / (a1 - a2)
        return np.where(shape > 0, new, eps_old)

    def __repr__(self):
        return f"RestrictedPenalty(alpha1={self.alpha1:g}, alpha2={self.alpha2:g})"


def _integral(penalty, eps, eps_old, shape, dt):
    eps, eps_old, shape = map(np.asarray, (eps, eps_old, shape))
    gated = shape <= 0
    if np.any(gated & (eps != eps_old)):
        raise InvalidInputError("field changed where the update shape vanishes")
    g = np.where(gated, 0.0, penalty.g(eps, eps_old, shape))
    return float(np.sum(g) * dt)


def penalty_quadratic(eps_new, eps_old, shape, alpha, dt) -> float:
    """``int alpha/S (eps_new - eps_old)^2 dt`` by the midpoint rectangle rule."""
    return _integral(QuadraticPenalty(alpha), eps_new, eps_old, shape, dt)


def penalty_restricted(eps_new, eps_old, eps_ref, alpha1, alpha2, shape, dt) -> float:
    """Time integral of the reference-restricted penalty."""
    return _integral(RestrictedPenalty(alpha1, alpha2, eps_ref), eps_new, eps_old, shape, dt)


def _delta2(penalty, eps_new, eps_old, shape):
    d2 = (-penalty.g(eps_new, eps_old, shape) + penalty.g(eps_old, eps_old, shape)
          + (eps_new - eps_old) * penalty.dg(eps_new, eps_old, shape))
    return np.where(shape > 0, d2, 0.0)


def _overlap_target(problem, psi_T: StateVector) -> complex:
    return problem.target.inner(psi_T)


def objective(problem: ControlProblem, field, tol=DEFAULT_TOL) -> float:
    """``F = |<phi_f| U(T,0; eps) |phi_i>|^2``."""
    return abs(krotov_coefficient(problem, field, tol)) ** 2


def krotov_coefficient(problem: ControlProblem, field, tol=DEFAULT_TOL) -> complex:
    """``c = <phi_f| U(T,0; eps) |phi_i>``."""
    psi_T = propagate(problem.initial, field, problem.system, problem.tgrid, tol=tol)
    return _overlap_target(problem, psi_T)


def monotonicity_diagnostics(field_new, field_old, problem: ControlProblem, penalty=None,
                             tol=DEFAULT_TOL):
    """``(delta1, min_t delta2)`` for a pair of successive fields."""
    penalty = penalty or QuadraticPenalty(field_old.alpha)
    c_old = krotov_coefficient(problem, field_old, tol)
    c_new = krotov_coefficient(problem, field_new, tol)
    d2 = _delta2(penalty, field_new.values, field_old.values, field_old.shape)
    return abs(c_old - c_new) ** 2, float(d2.min())


@dataclass
class IterationRecord:
    iteration: int
    F: float
    J: float
    penalty: float
    delta1: float
    min_delta2: float
    alpha: float

    def row(self) -> str:
        vals = (self.F, self.J, self.penalty, self.delta1, self.min_delta2)
        return f"{self.iteration:d} " + " ".join(_num(v) for v in vals)


@dataclass
class KrotovRun:
    """Iteration history of one optimization."""

    records: list = dc_field(default_factory=list)
    stop_reason: str = ""
    field: Optional[ControlField] = None
    best_field: Optional[ControlField] = None
    fields: list = dc_field(default_factory=list)

    @property
    def F(self) -> np.ndarray:
        return np.array([r.F for r in self.records])

    @property
    def J(self) -> np.ndarray:
        return np.array([r.J for r in self.records])

    @property
    def final_F(self) -> float:
        return self.records[-1].F

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def write_log(self, path):
        _atomic_write(path, "# n F J penalty delta1 min_delta2\n"
                      + "".join(r.row() + "\n" for r in self.records))


def read_log(path):
    """Records from a convergence log written by :meth:`KrotovRun.write_log`."""
    try:
        rows = np.loadtxt(path, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read convergence log {path}: {exc}") from exc
    return [IterationRecord(int(r[0]), *map(float, r[1:6]), float("nan")) for r in rows]


def _sweep(problem, field_old: ControlField, penalty, c_old, sink, tol):
    """Backward-propagate the target, then update and propagate forward."""
    sysm, tg = problem.system, problem.tgrid
    chi = propagate_adjoint(problem.target, field_old, sysm, tg, store=sink, tol=tol)
    sw = problem.initial.grid.sqrt_weights
    mu = sysm.dipole
    eps_old = field_old.values
    shape = field_old.shape
    eps_new = np.empty_like(eps_old)
    prop = ChebychevPropagator(sysm, tg.dt, float(np.abs(eps_old).max(initial=0.0)), tol)
    c = problem.initial.weighted()
    cc = np.conj(c_old)
    scalar_update = isinstance(penalty, QuadraticPenalty)
    for k in range(tg.n_steps):
        chi_k = np.conj(chi[k]) * sw
        z = mu * (np.dot(chi_k[0], c[:, 1]) + np.dot(chi_k[1], c[:, 0]))
        im_term = (cc * z).imag
        if scalar_update:
            e = eps_old[k] + shape[k] / penalty.alpha * im_term
        else:
            e = _restricted_point(penalty, k, eps_old[k], im_term, shape[k])
        if not np.isfinite(e):
            raise NumericalFailure(f"non-finite field value at step {k}")
        eps_new[k] = e
        c = prop.step(c, e)
    psi_T = StateVector.from_weighted(c, problem.initial.grid)
    return eps_new, _overlap_target(problem, psi_T)


def _restricted_point(penalty, k, eps_old, im_term, s):
    if s <= 0:
        return eps_old
    a1, a2 = penalty.alpha1, penalty.alpha2
    return (a1 * eps_old - a2 * penalty.reference[k] + s * im_term) / (a1 - a2)


def _step_record(iteration, penalty, field_old, eps_new, c_old, c_new, dt):
    shape = field_old.shape
    eps_old = field_old.values
    pen = _integral(penalty, eps_new, eps_old, shape, dt)
    pen_old = _integral(penalty, eps_old, eps_old, shape, dt)
    F_new = abs(c_new) ** 2
    d2 = _delta2(penalty, eps_new, eps_old, shape)
    rec = IterationRecord(
        iteration=iteration, F=F_new, J=-F_new + pen, penalty=pen,
        delta1=abs(c_old - c_new) ** 2, min_delta2=float(d2.min()),
        alpha=getattr(penalty, "alpha", getattr(penalty, "alpha1", np.nan)),
    )
    j_old = -abs(c_old) ** 2 + pen_old
    return rec, j_old


def krotov_iterate(problem: ControlProblem, field_old: ControlField, trajectory_sink=None,
                   penalty=None, c_old=None, iteration=1, tol=DEFAULT_TOL):
    """One Krotov iteration; returns ``(field_new, record)``.

    ``c_old`` may be passed to skip the forward propagation under the old
    field. The record's ``J`` is measured against ``field_old``.
    """
    penalty = penalty or QuadraticPenalty(field_old.alpha)
    if c_old is None:
        c_old = krotov_coefficient(problem, field_old, tol)
    eps_new, c_new = _sweep(problem, field_old, penalty, c_old, trajectory_sink, tol)
    rec, _ = _step_record(iteration, penalty, field_old, eps_new, c_old, c_new, problem.tgrid.dt)
    rec.c = c_new
    return field_old.with_values(eps_new), rec


@dataclass
class AlphaSchedule:
    """Penalty weight per iteration: ``small`` up to ``switch``, then ``large``."""

    small: float
    large: Optional[float] = None
    switch: int = 30

    def __call__(self, iteration: int) -> float:
        if self.large is None or iteration <= self.switch:
            return self.small
        return self.large


@dataclass
class StopCriteria:
    target_F: float = 0.99
    max_iterations: int = 2000
    stagnation: float = 1e-10
    stagnation_window: int = 50


def _num(x) -> str:
    # shortest round-trip text, also for numpy scalars
    return repr(float(x))


def _atomic_write(path, text):
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(f"writing {path} failed: {exc}") from exc


def write_field(path, fld: ControlField, iteration=0, F=np.nan, J=np.nan, extra=None):
    """Field file: ``#`` header (iteration, F, J, alpha, dt), then ``t eps`` rows."""
    lines = [
        f"# iteration {iteration:d}",
        f"# F {_num(F)}",
        f"# J {_num(J)}",
        f"# alpha {_num(fld.alpha)}",
        f"# dt {_num(fld.tgrid.dt)}",
        f"# n_steps {fld.tgrid.n_steps:d}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"# {key} {val}")
    lines.append("# t_au eps_au shape")
    body = "".join(f"{_num(t)} {_num(e)} {_num(s)}\n" for t, e, s in zip(fld.times, fld.values, fld.shape))
    _atomic_write(path, "\n".join(lines) + "\n" + body)


def read_field(path):
    """Inverse of :func:`write_field`; returns ``(ControlField, header dict)``."""
    path = Path(path)
    header = {}
    rows = []
    try:
        with path.open() as fh:
            for line in fh:
                if line.startswith("#"):
                    parts = line[1:].split(None, 1)
                    if len(parts) == 2:
                        header[parts[0]] = parts[1].strip()
                elif line.strip():
                    rows.append([float(x) for x in line.split()])
    except OSError as exc:
        raise IOFailure(f"cannot read field file {path}: {exc}") from exc
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] < 2:
        raise InvalidInputError(f"{path}: malformed field file")
    n = data.shape[0]
    dt = float(header["dt"]) if "dt" in header else float(data[1, 0] - data[0, 0])
    tg = TimeGrid(n, dt)
    shape = data[:, 2] if data.shape[1] > 2 else np.ones(n)
    alpha = float(header.get("alpha", 1.0))
    return ControlField(tg, data[:, 1], shape, alpha), header


def optimize(problem: ControlProblem, guess: ControlField, stop: StopCriteria = None,
             penalty=None, schedule: AlphaSchedule = None, checkpoint=None,
             checkpoint_every=10, log_path=None, memory_budget=None, spill_dir=None,
             start_iteration=0, keep_fields=False, strict=True, tol=DEFAULT_TOL,
             callback=None, history=None) -> KrotovRun:
    """Iterate Krotov updates until a stop criterion holds.

    ``penalty`` defaults to a quadratic penalty with ``guess.alpha``; a
    ``schedule`` rescales it per iteration. With ``strict`` a monotonicity
    violation raises :class:`AlgorithmFault`. ``history`` holds the records
    of an interrupted run up to ``start_iteration`` (used by resume).
    """
    stop = stop or StopCriteria()
    base = penalty or QuadraticPenalty(guess.alpha)
    base_alpha = getattr(base, "alpha", getattr(base, "alpha1", 1.0))
    tg = problem.tgrid
    run = KrotovRun()
    fld = guess
    c = krotov_coefficient(problem, fld, tol)
    F0 = abs(c) ** 2
    pen0 = _integral(base, fld.values, fld.values, fld.shape, tg.dt)
    J0 = -F0 + pen0
    if history:
        if history[-1].iteration != start_iteration:
            raise InvalidInputError("history does not end at start_iteration")
        run.records.extend(history)
        J0 = history[0].J
    else:
        run.records.append(IterationRecord(start_iteration, F0, J0, pen0, 0.0, 0.0, base_alpha))
    run.best_field = fld
    if keep_fields:
        run.fields.append(fld)
    best_F = F0
    sink = make_sink(problem.system.n_points, tg.n_steps, tg.dt, memory_budget, spill_dir)
    j_scale = max(1.0, abs(J0))
    reason = ""
    n = start_iteration
    try:
        while True:
            if run.records[-1].F >= stop.target_F:
                reason = "target"
                break
            if n - start_iteration >= stop.max_iterations:
                reason = "max_iterations"
                break
            w = stop.stagnation_window
            if len(run.records) > w and run.records[-1].F - run.records[-1 - w].F < stop.stagnation:
                reason = "stagnation"
                break
            n += 1
            alpha_n = schedule(n) if schedule else base_alpha
            pen = base.scaled(alpha_n / base_alpha) if alpha_n != base_alpha else base
            fld_in = replace(fld, alpha=alpha_n) if hasattr(pen, "alpha") else fld
            eps_new, c_new = _sweep(problem, fld_in, pen, c, sink, tol)
            rec, j_old = _step_record(n, pen, fld_in, eps_new, c, c_new, tg.dt)
            bad = (rec.J > j_old + MONOTONICITY_TOL * j_scale
                   or rec.delta1 < -DIAGNOSTIC_TOL or rec.min_delta2 < -DIAGNOSTIC_TOL)
            if bad:
                diag = dict(iteration=n, J_new=rec.J, J_old=j_old, delta1=rec.delta1,
                            min_delta2=rec.min_delta2)
                if strict:
                    raise AlgorithmFault(f"monotonic convergence violated at iteration {n}: {diag}", diag)
                log.warning("monotonic convergence violated: %s", diag)
            fld = fld_in.with_values(eps_new)
            c = c_new
            run.records.append(rec)
            if keep_fields:
                run.fields.append(fld)
            if rec.F > best_F:
                best_F, run.best_field = rec.F, fld
            log.info("iter %d F=%.8f J=%.8f penalty=%.3e", n, rec.F, rec.J, rec.penalty)
            if callback is not None:
                callback(n, fld, rec)
            if checkpoint is not None and (n % checkpoint_every == 0):
                write_field(checkpoint, fld, n, rec.F, rec.J)
            if log_path is not None:
                run.write_log(log_path)
    finally:
        sink.close()
        if hasattr(sink, "path"):
            Path(sink.path).unlink(missing_ok=True)
    run.stop_reason = reason
    run.field = fld
    if checkpoint is not None:
        write_field(checkpoint, fld, n, run.records[-1].F, run.records[-1].J)
    if log_path is not None:
        run.write_log(log_path)
    return run
