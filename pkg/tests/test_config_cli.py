import io
from pathlib import Path

import numpy as np
import pytest

from vibcontrol.cli import EXIT_INPUT, EXIT_IO, EXIT_OK, main
from vibcontrol.config import ConfigError, load_config, parse_config
from vibcontrol.krotov import read_field, read_log
from vibcontrol.units import AMU, BOHR_M, CM1_TO_HARTREE, FS

SMALL = """\
[system]
model = "morse"
mass_au = 2000.0
dipole_au = 1.0

[system.ground]
depth_hartree = 0.02
a_per_bohr = 1.0
r_e_bohr = 3.0

[system.excited]
depth_hartree = 0.015
a_per_bohr = 0.8
r_e_bohr = 3.4
offset_hartree = 0.06

[grid]
n_points = 64
r_min_bohr = 1.8
r_max_bohr = 9.0
e_max_hartree = 0.3

[states]
initial_v = 1
target_v = 0

[time]
T_au = 1200.0
n_steps = 120

[guess]
amplitude_au = 0.01
centers_hartree = [0.06]
envelope = "gaussian"
fwhm_au = 400.0

[optimizer]
alpha = 5.0
target_F = 0.999
max_iterations = {max_it}
checkpoint_every = 2

[analysis]
population_stride = 10

[output]
directory = "out"
seed = 7
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(argv):
    buf = io.StringIO()
    code = main(argv, stream=buf)
    return code, buf.getvalue()


def test_units_are_converted(tmp_path):
    text = SMALL.format(max_it=4).replace("mass_au = 2000.0", "mass_amu = 11.5").replace(
        "T_au = 1200.0", "T_fs = 30.0").replace("centers_hartree = [0.06]", "centers_cm1 = [13000.0]")
    cfg = parse_config(text, tmp_path / "c.toml")
    assert cfg.mass == pytest.approx(11.5 * AMU)
    assert cfg.T == pytest.approx(30.0 * FS)
    assert cfg.centers == [pytest.approx(13000.0 * CM1_TO_HARTREE)]
    assert cfg.beam_radius == pytest.approx(300e-6 / BOHR_M)
    assert cfg.alpha_large == 50.0 and cfg.alpha_switch == 30
    assert cfg.output_dir == (tmp_path / "out").resolve()


@pytest.mark.parametrize("old, new, culprit, msg", [
    ("a_per_bohr = 1.0", "a_per_bohr = -1.0", "a_per_bohr = -1.0", "must be positive"),
    ("n_points = 64", "n_points = 64\nbogus = 1", "bogus = 1", "unknown key 'bogus'"),
    ("T_au = 1200.0", "T_au = 1200.0\nT_fs = 5.0", "T_fs = 5.0", "one unit only"),
    ("alpha = 5.0", "alpha = 5.0\nalpha1 = 2.0", "alpha1 = 2.0", "restricted"),
    ("envelope = \"gaussian\"", "envelope = \"boxcar\"", "envelope = \"boxcar\"", "unknown envelope"),
    ("initial_v = 1", "initial_v = -1", "initial_v = -1", ">= 0"),
])
def test_semantic_errors_carry_line_numbers(tmp_path, old, new, culprit, msg):
    text = SMALL.format(max_it=4).replace(old, new)
    line = text.splitlines().index(culprit) + 1
    with pytest.raises(ConfigError, match=msg) as info:
        parse_config(text, tmp_path / "c.toml")
    assert info.value.line == line
    assert f"c.toml:{line}:" in str(info.value)


def test_syntax_error_line(tmp_path):
    with pytest.raises(ConfigError, match="TOML syntax") as info:
        parse_config("[system]\nmodel = \n", tmp_path / "c.toml")
    assert info.value.line == 2


def test_missing_potential_file_is_named(tmp_path):
    text = SMALL.format(max_it=4).replace(
        "[system.excited]\ndepth_hartree = 0.015\na_per_bohr = 0.8\nr_e_bohr = 3.4\noffset_hartree = 0.06",
        "[system.excited]\nkind = \"file\"\npath = \"curves/excited.dat\"")
    with pytest.raises(ConfigError, match="curves/excited.dat") as info:
        parse_config(text, tmp_path / "c.toml")
    assert info.value.line == text.splitlines().index('path = "curves/excited.dat"') + 1


def test_pipeline_parsing(tmp_path):
    text = SMALL.format(max_it=4) + """
[[pipeline]]
stage = "reduce_intensity"
factor = 2.0

[[pipeline]]
stage = "compress_time"
keep_every = 3
symmetric = true
"""
    with pytest.raises(ConfigError, match="even keep_every") as info:
        parse_config(text, tmp_path / "c.toml")
    assert info.value.line == text.splitlines().index("keep_every = 3") + 1
    cfg = parse_config(text.replace("keep_every = 3", "keep_every = 4"), tmp_path / "c.toml")
    assert [s.kind for s in cfg.pipeline] == ["reduce_intensity", "compress_time"]
    assert cfg.pipeline[1].symmetric and cfg.pipeline[1].keep_every == 4


def test_unreadable_config():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.toml")


def test_validate_echoes_and_warns(tmp_path):
    p = _write(tmp_path, SMALL.format(max_it=4).replace("T_au = 1200.0", "T_au = 500.0"))
    code, out = _run(["validate", str(p)])
    assert code == EXIT_OK
    assert "is valid" in out and "mass = 2000.0" in out and "alpha_large = 50.0" in out
    assert "bound levels: ground" in out and "T* =" in out
    assert "warning: T = 500 au is below T*" in out
    assert "advice: FC window from v=1" in out
    assert not (tmp_path / "out").exists()


def test_cli_input_errors(tmp_path, capsys):
    p = _write(tmp_path, SMALL.format(max_it=4).replace("initial_v = 1", "initial_v = 40"))
    assert _run(["validate", str(p)])[0] == EXIT_INPUT
    assert "not bound" in capsys.readouterr().err
    assert _run(["run", str(tmp_path / "missing.toml")])[0] == EXIT_INPUT
    assert _run(["resume", str(tmp_path / "nothing.dat")])[0] == EXIT_INPUT
    ck = tmp_path / "stage0_checkpoint.dat"
    ck.write_text("")
    assert _run(["resume", str(ck)])[0] == EXIT_IO


def test_trivial_run_converges_at_iteration_zero(tmp_path):
    text = """
[system]
model = "two_level"
e_e_hartree = 0.1
[states]
target_channel = "g"
[time]
T_au = 100.0
n_steps = 50
[guess]
amplitude_au = 0.0
centers_hartree = [0.1]
envelope = "flat"
[output]
directory = "trivial"
"""
    p = _write(tmp_path, text)
    code, out = _run(["run", str(p)])
    assert code == EXIT_OK
    log = read_log(tmp_path / "trivial" / "stage0_convergence.log")
    assert len(log) == 1 and log[0].iteration == 0 and log[0].F == pytest.approx(1.0, abs=1e-10)
    assert "after 0 iterations (target)" in out


def test_run_artifacts_reproducible_and_resume(tmp_path):
    p = _write(tmp_path, SMALL.format(max_it=6))
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(["run", str(p), "--output-dir", str(a)])[0] == EXIT_OK
    assert _run(["run", str(p), "--output-dir", str(b), "--seed", "7"])[0] == EXIT_OK
    for name in ("config.toml", "seed.txt", "eigenvalues_g.dat", "eigenvalues_e.dat", "fc_table.dat",
                 "guess_field.dat", "stage0_field.dat", "stage0_convergence.log", "stage0_checkpoint.dat",
                 "spectrum.dat", "populations_g.dat", "populations_e.dat", "census.dat", "summary.txt"):
        assert (a / name).is_file(), name
    for name in ("stage0_convergence.log", "stage0_field.dat", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    summary = (a / "summary.txt").read_text()
    assert "stage0_iterations 6" in summary and "pulse_energy_mJ" in summary

    # interrupt after 4 iterations, then resume to 6
    c = tmp_path / "c"
    assert _run(["run", str(p), "--output-dir", str(c), "--max-iterations", "4"])[0] == EXIT_OK
    code, out = _run(["resume", str(c / "stage0_checkpoint.dat"), "--max-iterations", "6"])
    assert code == EXIT_OK and "resuming at iteration 4" in out
    full = read_log(a / "stage0_convergence.log")
    resumed = read_log(c / "stage0_convergence.log")
    assert [r.iteration for r in resumed] == list(range(7))
    assert np.allclose([r.F for r in resumed], [r.F for r in full], rtol=0, atol=1e-12)
    fa, _ = read_field(a / "stage0_field.dat")
    fc, _ = read_field(c / "stage0_field.dat")
    assert np.max(np.abs(fa.values - fc.values)) < 1e-12


def test_pipeline_run(tmp_path):
    text = SMALL.format(max_it=3) + """
[[pipeline]]
stage = "reduce_intensity"
factor = 2.0
max_iterations = 2

[[pipeline]]
stage = "compress_time"
keep_every = 2
symmetric = true
max_iterations = 2
"""
    p = _write(tmp_path, text)
    code, out = _run(["run", str(p)])
    assert code == EXIT_OK, out
    d = tmp_path / "out"
    f1, _ = read_field(d / "stage1_field.dat")
    f2, _ = read_field(d / "stage2_field.dat")
    assert f1.tgrid.n_steps == 120 and f2.tgrid.n_steps == 60
    assert f2.shape[30] == pytest.approx(np.sin(np.pi * 30.5 / 60))
    assert "stage2_F" in (d / "summary.txt").read_text()


def test_bundled_configs_validate():
    root = Path(__file__).resolve().parents[1] / "configs"
    for cfg in sorted(root.glob("*.toml")):
        code, _ = _run(["validate", str(cfg)])
        assert code == EXIT_OK, cfg
