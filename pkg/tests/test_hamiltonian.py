import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vibcontrol import (
    InvalidInputError,
    build_system,
    eigenstates,
    franck_condon_map,
    morse_level_count,
    spectral_bounds,
    two_level_system,
    uniform_grid,
)
from vibcontrol.hamiltonian import harmonic_curve, morse_curve


def test_eigenstates_orthonormal(morse_small):
    system, g, e = morse_small
    w = system.grid.weights
    for basis in (g, e):
        s = basis.states[:12]
        overlap = (s * w) @ s.T
        assert np.allclose(overlap, np.eye(len(s)), atol=1e-10)
        assert np.all(np.diff(basis.energies) > 0)


def test_sign_convention_first_lobe_positive(morse_small):
    _, g, _ = morse_small
    for s in g.states[:10]:
        big = np.abs(s) > 1e-3 * np.abs(s).max()
        assert s[np.argmax(big)] > 0


def test_bound_count_matches_morse_formula():
    from vibcontrol import build_mapped_grid, envelope_curve
    g = morse_curve(0.02, 1.0, 3.0)
    e = morse_curve(0.015, 0.8, 3.4, offset=0.06)
    grid = build_mapped_grid(envelope_curve(g, e), 0.3, 160, r_min=1.8, r_max=40.0, mass=2000.0)
    system = build_system(g, e, grid, 2000.0)
    assert eigenstates(system, "g").n_bound == morse_level_count(0.02, 1.0, 2000.0) == 9
    assert eigenstates(system, "e").n_bound == morse_level_count(0.015, 0.8, 2000.0) == 10


def test_small_box_lifts_top_level(morse_small):
    # the wall at 9 bohr squeezes the last Morse level above dissociation
    _, g, _ = morse_small
    assert g.n_bound == morse_level_count(0.02, 1.0, 2000.0) - 1


def test_identical_potentials_give_identity_fc(morse_small):
    system, g, _ = morse_small
    fc = franck_condon_map(g, g)
    assert np.allclose(fc.factors, np.eye(len(g)), atol=1e-9)
    assert np.allclose(np.diag(fc.transition_energies), 0.0)


def test_displaced_harmonic_poisson():
    m, w, d = 1500.0, 0.01, 0.15
    grid = uniform_grid(1.0, 5.0, 200)
    sysm = build_system(harmonic_curve(m, w, 3.0), harmonic_curve(m, w, 3.0 + d, offset=0.05), grid, m)
    fc = franck_condon_map(eigenstates(sysm, "g", 10), eigenstates(sysm, "e", 10))
    huang_rhys = m * w * d**2 / 2
    poisson = [math.exp(-huang_rhys) * huang_rhys**v / math.factorial(v) for v in range(10)]
    assert np.allclose(fc.factors[0], poisson, atol=1e-9)
    assert np.allclose(fc.transition_energies[0, :3], 0.05 + w * np.arange(3), rtol=1e-8)


def test_fc_row_sums_bounded(morse_small):
    _, g, e = morse_small
    full = franck_condon_map(g, e).factors
    partial = franck_condon_map(g, eigenstates(morse_small[0], "e", 10)).factors
    assert np.all(partial.sum(axis=1) <= 1 + 1e-12)
    assert np.allclose(full.sum(axis=1), 1.0, atol=1e-9)


def test_fc_windows_and_table(tmp_path, morse_small):
    _, g, e = morse_small
    fc = franck_condon_map(g, e)
    lo, hi = fc.windows(3)
    freq, f = fc.column_for(3)
    assert lo <= freq[np.argmax(f)] <= hi
    paths = fc.write(tmp_path / "fc.dat", columns_for=[3])
    back = np.loadtxt(paths[0])
    assert np.allclose(back[:, 1:], fc.factors, rtol=1e-14)
    col = np.loadtxt(paths[1])
    assert np.allclose(col[:, 1], f)


def test_fc_grid_mismatch(morse_small):
    _, g, _ = morse_small
    other = build_system(morse_curve(0.02, 1.0, 3.0), morse_curve(0.02, 1.0, 3.0), uniform_grid(1.5, 9.0, 64), 2000.0)
    with pytest.raises(InvalidInputError):
        franck_condon_map(g, eigenstates(other, "g", 5))


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(-0.05, 0.05))
def test_spectral_bounds_enclose_spectrum(morse_small, eps):
    system = morse_small[0]
    lo, hi = spectral_bounds(system, abs(eps))
    ev = np.linalg.eigvalsh(system.coupled_matrix(eps))
    assert lo <= ev.min() + 1e-12 and ev.max() <= hi + 1e-12


def test_apply_matches_dense(morse_small, rng):
    system = morse_small[0]
    n = system.n_points
    c = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    dense = system.coupled_matrix(0.013) @ np.concatenate([c[:, 0], c[:, 1]])
    out = system.apply(np.ascontiguousarray(c), 0.013)
    assert np.allclose(np.concatenate([out[:, 0], out[:, 1]]), dense, atol=1e-14)


def test_two_level_system():
    s = two_level_system(0.0, 0.1, 2.0)
    assert np.allclose(s.coupled_matrix(0.5), [[0.0, 1.0], [1.0, 0.1]])


def test_bad_channel_and_request(morse_small):
    with pytest.raises(InvalidInputError):
        eigenstates(morse_small[0], "x")
    with pytest.raises(InvalidInputError):
        eigenstates(morse_small[0], "g", 0)
    with pytest.raises(InvalidInputError):
        spectral_bounds(morse_small[0], -1.0)
