import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vibcontrol import (
    AlgorithmFault,
    AlphaSchedule,
    ControlField,
    ControlProblem,
    InvalidInputError,
    QuadraticPenalty,
    RestrictedPenalty,
    StateVector,
    StopCriteria,
    TimeGrid,
    krotov_coefficient,
    krotov_iterate,
    monotonicity_diagnostics,
    objective,
    optimize,
    read_field,
    write_field,
)
from vibcontrol.krotov import penalty_quadratic, penalty_restricted, read_log
from vibcontrol.shapes import sin2


def _tls_problem(tls, n=200, T=300.0):
    tg = TimeGrid.from_duration(T, n)
    g = StateVector.on_channel(np.ones(1), tls.grid, 0)
    e = StateVector.on_channel(np.ones(1), tls.grid, 1)
    return ControlProblem(tls, g, e, tg)


def _morse_problem(morse_small, vi=1, vf=0, n=120, dt=10.0):
    system, g, _ = morse_small
    tg = TimeGrid(n, dt)
    pi = StateVector.on_channel(g.states[vi], system.grid)
    pf = StateVector.on_channel(g.states[vf], system.grid)
    return ControlProblem(system, pi, pf, tg)


def _guess(tg, amp, omegas, alpha=1.0):
    t = tg.field_times
    vals = amp * sin2(t, tg.t_final) * sum(np.cos(w * t) for w in omegas)
    return ControlField(tg, vals, sin2(t, tg.t_final), alpha)


def test_penalty_closed_forms():
    tg = TimeGrid(50, 0.5)
    old = np.zeros(50)
    new = np.full(50, 0.3)
    assert penalty_quadratic(new, old, np.ones(50), 2.0, tg.dt) == pytest.approx(2.0 * 0.09 * 25.0, rel=1e-14)
    # alpha2 = 0 reduces the restricted penalty to the quadratic one
    ref = np.linspace(-1, 1, 50)
    assert penalty_restricted(new, old, ref, 2.0, 0.0, np.ones(50), 0.5) == pytest.approx(
        penalty_quadratic(new, old, np.ones(50), 2.0, 0.5), rel=1e-14)
    # eps_new = eps_old: only the reference term survives
    val = penalty_restricted(old, old, ref, 3.0, 1.0, np.full(50, 0.5), 0.5)
    assert val == pytest.approx(-1.0 * np.sum(ref**2) / 0.5 * 0.5, rel=1e-13)


def test_penalty_rejects_change_under_zero_shape():
    shape = np.ones(10)
    shape[0] = 0.0
    with pytest.raises(InvalidInputError, match="shape vanishes"):
        penalty_quadratic(np.ones(10), np.zeros(10), shape, 1.0, 1.0)


def test_restricted_penalty_arguments():
    with pytest.raises(InvalidInputError, match="alpha1 > alpha2"):
        RestrictedPenalty(1.0, 1.0, np.zeros(3))
    with pytest.raises(InvalidInputError):
        RestrictedPenalty(1.0, -0.5, np.zeros(3))
    with pytest.raises(InvalidInputError):
        QuadraticPenalty(0.0)


def test_update_rules():
    old = np.array([0.1, -0.2, 0.3])
    im = np.array([1.0, 2.0, -1.0])
    shape = np.array([0.0, 0.5, 1.0])
    q = QuadraticPenalty(4.0).update(old, im, shape)
    assert np.allclose(q, old + shape * im / 4.0, rtol=0, atol=1e-15)
    ref = np.array([1.0, 1.0, 1.0])
    r = RestrictedPenalty(4.0, 1.0, ref).update(old, im, shape)
    assert r[0] == old[0]  # held where S = 0
    assert np.allclose(r[1:], (4.0 * old[1:] - ref[1:] + shape[1:] * im[1:]) / 3.0)
    assert np.allclose(RestrictedPenalty(4.0, 0.0, ref).update(old, im, shape), q)


def test_coefficient_zero_field(tls):
    prob = _tls_problem(tls)
    zero = ControlField(prob.tgrid, np.zeros(prob.tgrid.n_steps), np.ones(prob.tgrid.n_steps))
    assert abs(krotov_coefficient(prob, zero)) < 1e-14
    same = ControlProblem(tls, prob.initial, prob.initial, prob.tgrid)
    assert krotov_coefficient(same, zero) == pytest.approx(1.0, abs=1e-10)


def test_optimum_is_fixed_point(tls):
    # target = initial under zero field: F = 1 and <chi|mu|psi> = 0 everywhere
    prob = _tls_problem(tls)
    prob = ControlProblem(tls, prob.initial, prob.initial, prob.tgrid)
    n = prob.tgrid.n_steps
    zero = ControlField(prob.tgrid, np.zeros(n), np.ones(n))
    new, rec = krotov_iterate(prob, zero)
    assert np.max(np.abs(new.values)) < 1e-14
    assert rec.F == pytest.approx(1.0, abs=1e-10)


def test_zero_coefficient_gives_no_update(tls):
    prob = _tls_problem(tls)
    n = prob.tgrid.n_steps
    zero = ControlField(prob.tgrid, np.zeros(n), np.ones(n))
    new, rec = krotov_iterate(prob, zero)
    assert np.max(np.abs(new.values)) < 1e-14 and rec.F < 1e-28


def test_update_invariant_under_target_phase(morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    a, _ = krotov_iterate(prob, guess)
    rotated = ControlProblem(prob.system, prob.initial, prob.target * np.exp(0.7j), prob.tgrid)
    b, _ = krotov_iterate(rotated, guess)
    assert np.max(np.abs(a.values - b.values)) < 1e-14


def test_update_zero_where_shape_vanishes(morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    shape = guess.shape.copy()
    shape[:30] = 0.0
    new, _ = krotov_iterate(prob, ControlField(prob.tgrid, guess.values, shape, 5.0))
    assert np.array_equal(new.values[:30], guess.values[:30])
    assert np.any(new.values[30:] != guess.values[30:])


def test_record_consistency(morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    new, rec = krotov_iterate(prob, guess)
    assert rec.F == pytest.approx(objective(prob, new), abs=1e-12)
    assert rec.J == pytest.approx(-rec.F + rec.penalty, abs=1e-15)
    assert rec.penalty == pytest.approx(penalty_quadratic(new.values, guess.values, guess.shape, 5.0, 10.0))
    d1, d2 = monotonicity_diagnostics(new, guess, prob)
    assert d1 == pytest.approx(rec.delta1, abs=1e-12) and d2 == pytest.approx(rec.min_delta2, abs=1e-15)
    assert d1 >= 0 and d2 >= -1e-12


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(2.0, 50.0), amp=st.floats(0.0, 0.02))
def test_monotone_from_random_guesses(morse_small, seed, alpha, amp):
    prob = _morse_problem(morse_small, n=60)
    rng = np.random.default_rng(seed)
    t = prob.tgrid.field_times
    vals = amp * sin2(t, prob.tgrid.t_final) * np.cos(0.06 * t + rng.uniform(0, 2 * np.pi))
    vals = vals + 1e-3 * rng.standard_normal(t.size) * sin2(t, prob.tgrid.t_final)
    guess = ControlField(prob.tgrid, vals, sin2(t, prob.tgrid.t_final), alpha)
    run = optimize(prob, guess, StopCriteria(1.0, 3))
    J = run.J
    assert np.all(np.diff(J) <= 1e-9 * max(1.0, abs(J[0])))
    assert all(r.delta1 >= -1e-12 and r.min_delta2 >= -1e-12 for r in run.records)


def test_restricted_penalty_monotone_and_pulls_toward_reference(morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    ref = np.zeros(prob.tgrid.n_steps)
    run = optimize(prob, guess, StopCriteria(1.0, 4), penalty=RestrictedPenalty(5.0, 1.0, ref))
    assert np.all(np.diff(run.J) <= 1e-9 * max(1.0, abs(run.J[0])))
    assert run.F[-1] > run.F[0]


def test_two_level_flip_converges(tls):
    prob = _tls_problem(tls)
    guess = _guess(prob.tgrid, 0.002, [0.1], alpha=5.0)
    run = optimize(prob, guess, StopCriteria(0.999, 50))
    assert run.stop_reason == "target" and run.final_F >= 0.999


def test_small_alpha_fault_is_reported(tls):
    prob = _tls_problem(tls)
    guess = _guess(prob.tgrid, 0.002, [0.1], alpha=0.01)
    with pytest.raises(AlgorithmFault) as info:
        optimize(prob, guess, StopCriteria(1.0, 5))
    assert {"J_new", "J_old", "delta1", "min_delta2"} <= set(info.value.diagnostics)


def test_lenient_mode_keeps_going(tls, caplog):
    prob = _tls_problem(tls)
    guess = _guess(prob.tgrid, 0.002, [0.1], alpha=0.01)
    run = optimize(prob, guess, StopCriteria(1.0, 2), strict=False)
    assert run.iterations == 2
    assert "monotonic convergence violated" in caplog.text


def test_stop_reasons(tls, morse_small):
    prob = _tls_problem(tls)
    n = prob.tgrid.n_steps
    zero = ControlField(prob.tgrid, np.zeros(n), np.ones(n))
    run = optimize(prob, zero, StopCriteria(0.5, 100, stagnation_window=3))
    assert run.stop_reason == "stagnation" and run.iterations == 3
    mprob = _morse_problem(morse_small)
    run = optimize(mprob, _guess(mprob.tgrid, 0.01, [0.06], 5.0), StopCriteria(1.0, 2))
    assert run.stop_reason == "max_iterations" and run.iterations == 2


def test_alpha_schedule():
    s = AlphaSchedule(1.0, 10.0, switch=30)
    assert s(1) == 1.0 and s(30) == 1.0 and s(31) == 10.0
    assert AlphaSchedule(2.0)(1000) == 2.0


def test_schedule_scales_penalty(morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    run = optimize(prob, guess, StopCriteria(1.0, 3), schedule=AlphaSchedule(5.0, 50.0, switch=1))
    assert [r.alpha for r in run.records] == [5.0, 5.0, 50.0, 50.0]


def test_field_file_roundtrip(tmp_path, rng):
    tg = TimeGrid(40, 0.25)
    fld = ControlField(tg, rng.standard_normal(40), rng.uniform(0, 1, 40), 3.5)
    write_field(tmp_path / "f.dat", fld, 7, 0.5, -0.25, extra={"note": "x"})
    back, header = read_field(tmp_path / "f.dat")
    assert np.array_equal(back.values, fld.values) and np.array_equal(back.shape, fld.shape)
    assert back.alpha == 3.5 and back.tgrid.dt == 0.25
    assert header["iteration"] == "7" and header["note"] == "x"


def test_log_roundtrip_and_resume(tmp_path, morse_small):
    prob = _morse_problem(morse_small)
    guess = _guess(prob.tgrid, 0.01, [0.06], alpha=5.0)
    full = optimize(prob, guess, StopCriteria(1.0, 6))
    part = optimize(prob, guess, StopCriteria(1.0, 3), log_path=tmp_path / "log", checkpoint=tmp_path / "ck")
    fld, header = read_field(tmp_path / "ck")
    hist = read_log(tmp_path / "log")
    assert int(header["iteration"]) == 3 and len(hist) == 4
    rest = optimize(prob, fld, StopCriteria(1.0, 3), start_iteration=3, history=hist)
    assert rest.iterations == 6
    assert np.max(np.abs(rest.field.values - full.field.values)) < 1e-12
    assert np.allclose(rest.F, full.F, rtol=0, atol=1e-12)
    with pytest.raises(InvalidInputError, match="start_iteration"):
        optimize(prob, fld, StopCriteria(1.0, 1), start_iteration=5, history=hist)


def test_problem_validation(morse_small, tls):
    system, g, _ = morse_small
    tg = TimeGrid(10, 1.0)
    good = StateVector.on_channel(g.states[0], system.grid)
    with pytest.raises(InvalidInputError, match="not normalized"):
        ControlProblem(system, good * 2.0, good, tg)
    other = StateVector.on_channel(np.ones(1), tls.grid)
    with pytest.raises(InvalidInputError, match="different grid"):
        ControlProblem(system, good, other, tg)
    with pytest.raises(InvalidInputError):
        ControlField(tg, np.zeros(9), np.ones(9))
    with pytest.raises(InvalidInputError, match="shape"):
        ControlField(tg, np.zeros(10), np.full(10, 2.0))
