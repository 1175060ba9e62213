"""Command-line driver: ``vibcontrol run|validate|resume``.

A run writes a self-contained directory::

    config.toml                 copy of the input configuration
    eigenvalues_g.dat / _e.dat  level energies (hartree, cm^-1)
    fc_table.dat (+ _v*.dat)    Franck-Condon factors between bound levels
    guess_field.dat             initial field
    stage<i>_field.dat          optimal field of stage i (0 = initial optimization)
    stage<i>_convergence.log    n F J penalty delta1 min_delta2
    stage<i>_checkpoint.dat     latest field, for ``resume``
    spectrum.dat, populations_{g,e}.dat, census.dat, summary.txt

Exit codes: 0 success, 2 invalid input, 3 numerical or algorithm failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import logging
import re
import shutil
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import ConfigError, RunConfig, load_config
from .errors import AlgorithmFault, InvalidInputError, IOFailure, NumericalFailure, VibControlError
from .grid import build_mapped_grid
from .hamiltonian import (
    EigenBasis,
    build_system,
    eigenstates,
    envelope_curve,
    franck_condon_map,
    load_potential,
    morse_curve,
    two_level_system,
)
from .krotov import (
    AlphaSchedule,
    ControlField,
    ControlProblem,
    QuadraticPenalty,
    RestrictedPenalty,
    StopCriteria,
    optimize,
    read_field,
    read_log,
    write_field,
)
from .propagator import MemorySink, StateVector, TimeGrid, propagate
from .strategies import GuessSpec, compress_time, make_guess, minimal_time_hint, reduce_intensity_restart
from .units import AU_TIME_S, BOHR_M, CM1_TO_HARTREE, HARTREE_TO_CM1

log = logging.getLogger("vibcontrol")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
_CHECKPOINT = re.compile(r"stage(\d+)_checkpoint\.dat$")


@dataclass
class Setup:
    """Everything derived from a configuration before optimization starts."""

    cfg: RunConfig
    system: object
    ground: EigenBasis
    excited: EigenBasis
    fc: object
    tgrid: TimeGrid
    t_star: float
    initial: StateVector
    target: StateVector
    guess: ControlField


def _bound(basis: EigenBasis) -> EigenBasis:
    n = basis.n_bound
    return replace(basis, energies=basis.energies[:n], states=basis.states[:n])


def _curve(cc, label):
    if cc.kind == "morse":
        return morse_curve(cc.depth, cc.a, cc.r_e, offset=cc.offset, label=label)
    return load_potential(cc.file, asymptote=cc.asymptote, tail_power=cc.tail_power, label=label)


def _state(basis: EigenBasis, v, channel, what):
    if v >= basis.n_bound:
        raise InvalidInputError(f"{what} level v={v} is not bound in channel {channel!r} "
                                f"({basis.n_bound} bound levels)")
    return StateVector.on_channel(basis.states[v], basis.grid, 0 if channel == "g" else 1)


def build_setup(cfg: RunConfig) -> Setup:
    """Build system, eigenbases, time grid and guess field from a configuration."""
    if cfg.model == "two_level":
        system = two_level_system(cfg.e_g, cfg.e_e, cfg.dipole)
        one = np.ones((1, 1))
        ground = EigenBasis("g", np.array([cfg.e_g]), one, 1, system.grid)
        excited = EigenBasis("e", np.array([cfg.e_e]), one, 1, system.grid)
    else:
        gc, ec = _curve(cfg.ground, "ground"), _curve(cfg.excited, "excited")
        grid = build_mapped_grid(envelope_curve(gc, ec), cfg.e_max, cfg.n_points, beta=cfg.beta,
                                 r_min=cfg.r_min, r_max=cfg.r_max, mass=cfg.mass)
        system = build_system(gc, ec, grid, cfg.mass, cfg.dipole)
        ground, excited = eigenstates(system, "g"), eigenstates(system, "e")
        if ground.n_bound == 0 or excited.n_bound == 0:
            raise InvalidInputError("a channel has no bound levels on this grid; check e_max and bounds")
    fc = franck_condon_map(_bound(ground), _bound(excited))
    bases = {"g": ground, "e": excited}
    initial = _state(bases[cfg.initial_channel], cfg.initial_v, cfg.initial_channel, "initial")
    target = _state(bases[cfg.target_channel], cfg.target_v, cfg.target_channel, "target")

    t_star = float("nan")
    if cfg.model == "morse":
        v, ch = (cfg.initial_v, cfg.initial_channel) if cfg.initial_v > 0 else (cfg.target_v, cfg.target_channel)
        if v > 0:
            t_star = minimal_time_hint(bases[ch], v)[0]
    if cfg.T_auto:
        if not np.isfinite(t_star):
            raise InvalidInputError("T_auto needs an initial or target level with v >= 1")
        T = 2.0 * t_star
    else:
        T = cfg.T
    tgrid = TimeGrid.from_duration(T, cfg.n_steps) if cfg.n_steps else TimeGrid(max(10, int(round(T / cfg.dt))), cfg.dt)

    centers = cfg.centers
    if cfg.centers_from_fc:
        # one carrier per FC window: the pump (initial level) and dump (target level) bands
        centers = [float(np.mean(fc.windows(v))) * CM1_TO_HARTREE
                   for v in dict.fromkeys((cfg.initial_v, cfg.target_v))]
    spec = GuessSpec(cfg.amplitude, centers, cfg.envelope, cfg.fwhm, tuple(cfg.offsets))
    alpha = cfg.alpha1 if cfg.penalty == "restricted" else cfg.alpha
    guess = make_guess(spec, tgrid, alpha=alpha)
    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        guess = guess.with_values(guess.values + cfg.noise * guess.shape * rng.standard_normal(tgrid.n_steps))
    return Setup(cfg, system, ground, excited, fc, tgrid, t_star, initial, target, guess)


def _penalty(cfg: RunConfig, start: ControlField, alpha=None):
    if cfg.penalty == "restricted":
        return RestrictedPenalty(cfg.alpha1, cfg.alpha2, start.values.copy()), None
    if alpha is not None:
        return QuadraticPenalty(alpha), None
    return QuadraticPenalty(cfg.alpha), AlphaSchedule(cfg.alpha, cfg.alpha_large, cfg.alpha_switch)


def _stage_start(setup: Setup, index: int, previous: ControlField) -> ControlField:
    if index == 0:
        return setup.guess
    st = setup.cfg.pipeline[index - 1]
    if st.kind == "reduce_intensity":
        fld = reduce_intensity_restart(previous, st.factor)
    else:
        fluence = None if st.fluence_fraction is None else st.fluence_fraction * previous.fluence()
        fld = compress_time(previous, st.keep_every, st.symmetric, fluence)
    return fld if st.alpha is None else replace(fld, alpha=st.alpha)


def _warn_short_time(setup: Setup, out):
    if np.isfinite(setup.t_star) and setup.tgrid.t_final < setup.t_star:
        msg = (f"warning: T = {setup.tgrid.t_final:.6g} au is below T* = {setup.t_star:.6g} au; "
               "the run proceeds (time compression works in this regime)")
        print(msg, file=out)
        log.warning(msg)


def _fc_advice(setup: Setup):
    cfg = setup.cfg
    if cfg.initial_channel != "g" or cfg.target_channel != "g" or setup.fc.factors.size <= 1:
        return []
    lines = []
    for v in dict.fromkeys((cfg.initial_v, cfg.target_v)):
        lo, hi = setup.fc.windows(v)
        lines.append(f"FC window from v={v}: {lo:.1f} - {hi:.1f} cm^-1")
    return lines


def _write_levels(path, basis: EigenBasis):
    n = basis.n_bound
    analysis.write_table(path, [np.arange(n), basis.energies[:n], basis.energies[:n] * HARTREE_TO_CM1],
                         f"bound levels of channel {basis.channel}\nv E_hartree E_cm1")


def _diagnostics(setup: Setup, fld: ControlField, problem: ControlProblem, out: Path, tol):
    cfg = setup.cfg
    spec = analysis.pulse_spectrum(fld, window=cfg.window)
    analysis.write_table(out / "spectrum.dat", [spec.frequency_cm1, spec.magnitude],
                         "pulse spectrum\nfrequency_cm1 magnitude_au")
    store = MemorySink(setup.system.n_points, fld.tgrid.n_steps, fld.tgrid.dt)
    propagate(problem.initial, fld, setup.system, fld.tgrid, store=store, tol=tol)
    stride = cfg.population_stride
    traj = store.data[::stride]
    times = fld.tgrid.state_times[::stride]
    trace = analysis.population_trace(traj, _bound(setup.ground), _bound(setup.excited), times)
    trace.write(out / "populations_g.dat", "g")
    trace.write(out / "populations_e.dat", "e")
    census = analysis.threshold_census(trace, cfg.thresholds)
    (out / "census.dat").write_text(census.table())
    return spec, census


def execute(setup: Setup, out: Path, max_iterations=None, resume_from=None, stream=sys.stdout):
    """Run the optimize/strategy pipeline; returns the list of per-stage runs."""
    cfg = setup.cfg
    out.mkdir(parents=True, exist_ok=True)
    stages = 1 + len(cfg.pipeline)
    resume_stage, resume_field, resume_iter = -1, None, 0
    if resume_from is not None:
        resume_stage, resume_field, resume_iter = resume_from
    if resume_stage < 0:
        _write_levels(out / "eigenvalues_g.dat", setup.ground)
        _write_levels(out / "eigenvalues_e.dat", setup.excited)
        setup.fc.write(out / "fc_table.dat", columns_for=sorted({cfg.initial_v, cfg.target_v}))
        write_field(out / "guess_field.dat", setup.guess)

    runs, previous = [], None
    for i in range(stages):
        field_path = out / f"stage{i}_field.dat"
        if i < resume_stage:
            previous, _ = read_field(field_path)
            continue
        start = _stage_start(setup, i, previous)
        problem = ControlProblem(setup.system, setup.initial, setup.target, start.tgrid)
        stage_cfg = cfg.pipeline[i - 1] if i else None
        target_F = stage_cfg.target_F if stage_cfg and stage_cfg.target_F is not None else cfg.target_F
        cap = stage_cfg.max_iterations if stage_cfg and stage_cfg.max_iterations is not None else cfg.max_iterations
        if max_iterations is not None:
            cap = max_iterations
        penalty, schedule = _penalty(cfg, start, None if i == 0 else start.alpha)
        log_path = out / f"stage{i}_convergence.log"
        history, guess, first = None, start, 0
        if i == resume_stage:
            history = [r for r in read_log(log_path) if r.iteration <= resume_iter]
            guess, first = resume_field, resume_iter
        stop = StopCriteria(target_F, max(cap - first, 0), cfg.stagnation, cfg.stagnation_window)
        print(f"stage {i}: T = {start.tgrid.t_final:.6g} au, {start.tgrid.n_steps} steps"
              + (f", resuming at iteration {first}" if history else ""), file=stream)
        run = optimize(problem, guess, stop, penalty=penalty, schedule=schedule,
                       checkpoint=out / f"stage{i}_checkpoint.dat",
                       checkpoint_every=cfg.checkpoint_every, log_path=log_path,
                       memory_budget=cfg.memory_budget, start_iteration=first,
                       tol=cfg.tolerance, history=history)
        write_field(field_path, run.field, run.records[-1].iteration, run.final_F, run.J[-1])
        print(f"stage {i}: F = {run.final_F:.10f} after {run.records[-1].iteration} iterations "
              f"({run.stop_reason})", file=stream)
        runs.append((i, run, problem))
        previous = run.field

    final = previous
    problem = ControlProblem(setup.system, setup.initial, setup.target, final.tgrid)
    spec, census = _diagnostics(setup, final, problem, out, cfg.tolerance)
    energy = analysis.pulse_energy(final, cfg.beam_radius * BOHR_M)
    _write_summary(out / "summary.txt", setup, runs, final, energy, census)
    return runs


def _write_summary(path, setup, runs, final, energy, census):
    cfg = setup.cfg
    lines = ["# vibcontrol run summary (atomic units unless stated)"]
    lines.append(f"model {cfg.model}")
    lines.append(f"initial {cfg.initial_channel} v={cfg.initial_v}")
    lines.append(f"target {cfg.target_channel} v={cfg.target_v}")
    lines.append(f"bound_levels_g {setup.ground.n_bound}")
    lines.append(f"bound_levels_e {setup.excited.n_bound}")
    lines.append(f"T_star_au {float(setup.t_star)!r}")
    for i, run, _ in runs:
        lines.append(f"stage{i}_F {float(run.final_F)!r}")
        lines.append(f"stage{i}_iterations {run.records[-1].iteration}")
        lines.append(f"stage{i}_stop {run.stop_reason}")
    lines.append(f"final_T_au {float(final.tgrid.t_final)!r}")
    lines.append(f"final_T_ps {float(final.tgrid.t_final * AU_TIME_S * 1e12)!r}")
    lines.append(f"fluence_au {float(final.fluence())!r}")
    lines.append(f"beam_radius_um {float(cfg.beam_radius * BOHR_M * 1e6)!r}")
    lines.append(f"pulse_energy_J {float(energy)!r}")
    lines.append(f"pulse_energy_mJ {float(energy * 1e3)!r}")
    lines.append("# levels above threshold (ground, excited)")
    for th in census.thresholds:
        c = census.counts[th]
        lines.append(f"census_{th:g} {c['ground']} {c['excited']}")
    path.write_text("\n".join(lines) + "\n")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "output_dir", None):
        cfg.output_dir = Path(args.output_dir).resolve()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_validate(args, stream=sys.stdout) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    setup = build_setup(cfg)
    print(f"configuration {args.config} is valid", file=stream)
    for name, value in cfg.resolved_items():
        print(f"  {name} = {value!r}", file=stream)
    print(f"  bound levels: ground {setup.ground.n_bound}, excited {setup.excited.n_bound}", file=stream)
    print(f"  T = {float(setup.tgrid.t_final)!r} au ({setup.tgrid.n_steps} steps, dt = {float(setup.tgrid.dt)!r} au)",
          file=stream)
    if np.isfinite(setup.t_star):
        print(f"  T* = {float(setup.t_star)!r} au, recommended T = 2 T* = {float(2 * setup.t_star)!r} au", file=stream)
    for line in _fc_advice(setup):
        print(f"  advice: {line}", file=stream)
    _warn_short_time(setup, stream)
    return EXIT_OK


def cmd_run(args, stream=sys.stdout) -> int:
    path = Path(args.config)
    cfg = _apply_overrides(load_config(path), args)
    setup = build_setup(cfg)
    _warn_short_time(setup, stream)
    for line in _fc_advice(setup):
        print(line, file=stream)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if path.resolve() != (out / "config.toml").resolve():
        shutil.copyfile(path, out / "config.toml")
    (out / "seed.txt").write_text(f"{cfg.seed}\n")
    execute(setup, out, args.max_iterations, stream=stream)
    print(f"artifacts written to {out}", file=stream)
    return EXIT_OK


def cmd_resume(args, stream=sys.stdout) -> int:
    ckpt = Path(args.checkpoint).resolve()
    m = _CHECKPOINT.search(ckpt.name)
    if m is None:
        raise InvalidInputError(f"{ckpt}: not a stage checkpoint (expected stage<i>_checkpoint.dat)")
    out = ckpt.parent
    cfg_path = out / "config.toml"
    if not cfg_path.is_file():
        raise IOFailure(f"{cfg_path} is missing; resume needs the run directory intact")
    cfg = load_config(cfg_path)
    cfg.output_dir = out
    seed_file = out / "seed.txt"
    if seed_file.is_file():
        cfg.seed = int(seed_file.read_text())
    setup = build_setup(cfg)
    fld, header = read_field(ckpt)
    iteration = int(header.get("iteration", 0))
    execute(setup, out, args.max_iterations, resume_from=(int(m.group(1)), fld, iteration), stream=stream)
    print(f"artifacts written to {out}", file=stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vibcontrol", description="Krotov control of vibrational transfer")
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configuration")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--max-iterations", type=int)
    r.add_argument("--seed", type=int)
    v = sub.add_parser("validate", help="parse and report a configuration without running")
    v.add_argument("config")
    v.add_argument("--output-dir")
    v.add_argument("--seed", type=int)
    s = sub.add_parser("resume", help="continue from stage<i>_checkpoint.dat")
    s.add_argument("checkpoint")
    s.add_argument("--max-iterations", type=int)
    return p


def main(argv=None, stream=sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "resume": cmd_resume}[args.command]
    try:
        return handler(args, stream)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, AlgorithmFault) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IOFailure, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except VibControlError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
