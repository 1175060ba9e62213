"""TOML run configuration.

Every physical key carries its unit as a suffix (``mass_amu``, ``T_fs``,
``centers_cm1``, ...); values are converted to atomic units here and nowhere
else. Where a quantity accepts several units exactly one suffix may appear.
Semantic errors quote the line of the offending key.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import InvalidInputError
from .units import AMU, BOHR_M, CM1_TO_HARTREE, FS, PS

__all__ = ["ConfigError", "CurveConfig", "StageConfig", "RunConfig", "load_config", "parse_config"]


class ConfigError(InvalidInputError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = str(path) if path else "<config>"
        if line:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


_UNITS = {
    "time": {"au": 1.0, "fs": FS, "ps": PS},
    "energy": {"hartree": 1.0, "cm1": CM1_TO_HARTREE},
    "length": {"bohr": 1.0, "um": 1e-6 / BOHR_M},
    "inv_length": {"per_bohr": 1.0},
    "mass": {"amu": AMU, "au": 1.0},
    "field": {"au": 1.0},
}


@dataclass
class CurveConfig:
    """A Morse parameter set or a tabulated file (bohr, hartree)."""

    kind: str = "morse"
    depth: float = 0.0
    a: float = 0.0
    r_e: float = 0.0
    offset: float = 0.0
    file: Optional[Path] = None
    asymptote: Optional[float] = None
    tail_power: Optional[int] = None


@dataclass
class StageConfig:
    """One strategy stage followed by a re-optimization."""

    kind: str
    factor: float = 2.0
    keep_every: int = 4
    symmetric: bool = False
    fluence_fraction: Optional[float] = None
    alpha: Optional[float] = None
    target_F: Optional[float] = None
    max_iterations: Optional[int] = None


@dataclass
class RunConfig:
    """Fully resolved run parameters in atomic units."""

    source: Optional[Path] = None
    model: str = "morse"
    mass: float = 20000.0
    dipole: float = 1.0
    ground: CurveConfig = field(default_factory=CurveConfig)
    excited: CurveConfig = field(default_factory=CurveConfig)
    e_g: float = 0.0
    e_e: float = 0.1
    n_points: int = 256
    r_min: Optional[float] = None
    r_max: Optional[float] = None
    beta: float = 1.3
    e_max: Optional[float] = None
    initial_channel: str = "g"
    initial_v: int = 0
    target_channel: str = "g"
    target_v: int = 0
    T: Optional[float] = None
    T_auto: bool = False
    n_steps: Optional[int] = None
    dt: Optional[float] = None
    amplitude: float = 0.0
    centers: list = field(default_factory=list)
    centers_from_fc: bool = False
    envelope: str = "gaussian"
    fwhm: Optional[float] = None
    offsets: list = field(default_factory=list)
    noise: float = 0.0
    penalty: str = "quadratic"
    alpha: float = 1.0
    alpha_large: Optional[float] = None
    alpha_switch: int = 30
    alpha1: Optional[float] = None
    alpha2: float = 0.0
    target_F: float = 0.99
    max_iterations: int = 2000
    stagnation: float = 1e-10
    stagnation_window: int = 50
    checkpoint_every: int = 10
    tolerance: float = 1e-12
    pipeline: list = field(default_factory=list)
    beam_radius: float = 300e-6 / BOHR_M
    thresholds: list = field(default_factory=lambda: [0.05, 0.10])
    window: Optional[str] = None
    population_stride: int = 1
    output_dir: Path = Path("vibcontrol-out")
    memory_budget_mb: float = 512.0
    seed: int = 0

    @property
    def memory_budget(self) -> int:
        return int(self.memory_budget_mb * 2**20)

    def resolved_items(self):
        """``(name, value)`` pairs of every resolved setting, for ``validate``."""
        for f in fields(self):
            yield f.name, getattr(self, f.name)


class _Section:
    """Dict wrapper that tracks consumed keys and knows key line numbers."""

    def __init__(self, data, name, locator):
        self.data, self.name, self.loc = dict(data), name, locator
        self.used = set()

    def error(self, key, message):
        raise ConfigError(message, self.loc.path, self.loc.line_of(self.name, key))

    def get(self, key, default=None, kind=None):
        if key not in self.data:
            return default
        self.used.add(key)
        val = self.data[key]
        if kind is not None:
            ok = isinstance(val, kind) and not (kind in (int, float, (int, float)) and isinstance(val, bool))
            if not ok:
                self.error(key, f"[{self.name}] {key} has the wrong type ({type(val).__name__})")
        return val

    def number(self, key, default=None, positive=False, integer=False):
        val = self.get(key, default, int if integer else (int, float))
        if val is None:
            return None
        if positive and not val > 0:
            self.error(key, f"[{self.name}] {key} must be positive, got {val}")
        return int(val) if integer else float(val)

    def quantity(self, stem, dimension, default=None, positive=False, required=False, many=False):
        """Read ``stem_<unit>`` and convert to atomic units."""
        hits = [(u, f) for u, f in _UNITS[dimension].items() if f"{stem}_{u}" in self.data]
        if len(hits) > 1:
            self.error(f"{stem}_{hits[1][0]}", f"[{self.name}] give {stem} in one unit only")
        if not hits:
            if required:
                units = ", ".join(f"{stem}_{u}" for u in _UNITS[dimension])
                raise ConfigError(f"[{self.name}] missing one of: {units}", self.loc.path,
                                  self.loc.line_of(self.name, None))
            return default
        unit, factor = hits[0]
        key = f"{stem}_{unit}"
        raw = self.get(key)
        vals = raw if many else [raw]
        if many and not isinstance(raw, list):
            self.error(key, f"[{self.name}] {key} must be a list")
        out = []
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.error(key, f"[{self.name}] {key} must be numeric")
            if positive and not v > 0:
                self.error(key, f"[{self.name}] {key} must be positive, got {v}")
            out.append(float(v) * factor)
        return out if many else out[0]

    def finish(self):
        for key in sorted(set(self.data) - self.used):
            self.error(key, f"[{self.name}] unknown key {key!r}")


class _Locator:
    """Maps ``(table, key)`` to a source line by scanning the raw TOML text."""

    _header = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text, path):
        self.path = path
        self.index = {}
        table, count = "", {}
        for n, line in enumerate(text.splitlines(), 1):
            m = self._header.match(line)
            if m:
                base = m.group(1)
                count[base] = count.get(base, -1) + 1
                table = f"{base}#{count[base]}" if line.lstrip().startswith("[[") else base
                self.index.setdefault((table, None), n)
                continue
            m = self._key.match(line)
            if m:
                self.index.setdefault((table, m.group(1)), n)

    def line_of(self, table, key):
        return self.index.get((table, key)) or self.index.get((table, None))


def _curve(sec: _Section, base: Path) -> CurveConfig:
    kind = sec.get("kind", "morse", str)
    if kind == "morse":
        c = CurveConfig(
            "morse",
            depth=sec.quantity("depth", "energy", required=True, positive=True),
            a=sec.quantity("a", "inv_length", required=True, positive=True),
            r_e=sec.quantity("r_e", "length", required=True, positive=True),
            offset=sec.quantity("offset", "energy", 0.0),
        )
    elif kind == "file":
        path = sec.get("path", None, str)
        if path is None:
            sec.error(None, f"[{sec.name}] kind = 'file' needs a path")
        p = (base / path).resolve()
        if not p.is_file():
            sec.error("path", f"[{sec.name}] potential file not found: {p}")
        c = CurveConfig("file", file=p, asymptote=sec.quantity("asymptote", "energy"),
                        tail_power=sec.number("tail_power", integer=True))
    else:
        sec.error("kind", f"[{sec.name}] kind must be 'morse' or 'file', got {kind!r}")
    sec.finish()
    return c


def parse_config(text: str, path=None) -> RunConfig:
    """Parse TOML text into a :class:`RunConfig`."""
    path = Path(path) if path else None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path, int(m.group(1)) if m else None) from None
    loc = _Locator(text, path)
    base = path.parent if path else Path.cwd()
    cfg = RunConfig(source=path)

    known = {"system", "grid", "states", "time", "guess", "optimizer", "pipeline", "analysis", "output"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown table [{key}]", path, loc.line_of(key, None) or loc.line_of("", key))

    def section(name):
        val = raw.get(name, {})
        if not isinstance(val, dict):
            raise ConfigError(f"[{name}] must be a table", path, loc.line_of("", name))
        return _Section(val, name, loc)

    s = section("system")
    cfg.model = s.get("model", "morse", str)
    if cfg.model not in ("morse", "two_level"):
        s.error("model", f"[system] model must be 'morse' or 'two_level', got {cfg.model!r}")
    cfg.dipole = s.number("dipole_au", 1.0, positive=True)
    if cfg.model == "two_level":
        cfg.e_g = s.quantity("e_g", "energy", 0.0)
        cfg.e_e = s.quantity("e_e", "energy", required=True)
        if cfg.e_e == cfg.e_g:
            s.error("e_e_hartree", "[system] two-level energies must differ")
    else:
        cfg.mass = s.quantity("mass", "mass", required=True, positive=True)
        for name in ("ground", "excited"):
            sub = s.data.get(name)
            if not isinstance(sub, dict):
                raise ConfigError(f"[system.{name}] table is missing", path, loc.line_of("system", None))
            s.used.add(name)
            setattr(cfg, name, _curve(_Section(sub, f"system.{name}", loc), base))
    s.finish()

    g = section("grid")
    if cfg.model == "morse":
        cfg.n_points = g.number("n_points", 256, positive=True, integer=True)
        if cfg.n_points < 16:
            g.error("n_points", "[grid] n_points must be at least 16")
        cfg.r_min = g.quantity("r_min", "length", positive=True)
        cfg.r_max = g.quantity("r_max", "length", positive=True)
        if cfg.r_min is not None and cfg.r_max is not None and cfg.r_max <= cfg.r_min:
            g.error("r_max_bohr", "[grid] r_max must exceed r_min")
        cfg.beta = g.number("beta", 1.3)
        if cfg.beta < 1:
            g.error("beta", "[grid] beta must be >= 1")
        cfg.e_max = g.quantity("e_max", "energy", required=True)
    g.finish()

    st = section("states")
    for role in ("initial", "target"):
        ch = st.get(f"{role}_channel", "g", str)
        if ch not in ("g", "e"):
            st.error(f"{role}_channel", f"[states] {role}_channel must be 'g' or 'e'")
        v = st.number(f"{role}_v", 0, integer=True)
        if v < 0:
            st.error(f"{role}_v", f"[states] {role}_v must be >= 0")
        setattr(cfg, f"{role}_channel", ch)
        setattr(cfg, f"{role}_v", v)
    if cfg.model == "two_level" and (cfg.initial_v or cfg.target_v):
        st.error("initial_v", "[states] the two-level model has only v = 0 per channel")
    st.finish()

    t = section("time")
    auto = t.get("T_auto", False, bool)
    cfg.T = t.quantity("T", "time", positive=True)
    if auto and cfg.T is not None:
        t.error("T_auto", "[time] give either T_auto or an explicit T")
    if not auto and cfg.T is None:
        raise ConfigError("[time] needs T_<unit> or T_auto = true", path, loc.line_of("time", None))
    if auto and cfg.model == "two_level":
        t.error("T_auto", "[time] T_auto needs a vibrational ladder")
    cfg.T_auto = auto
    cfg.n_steps = t.number("n_steps", None, positive=True, integer=True)
    cfg.dt = t.quantity("dt", "time", positive=True)
    if (cfg.n_steps is None) == (cfg.dt is None):
        raise ConfigError("[time] give exactly one of n_steps or dt_<unit>", path, loc.line_of("time", None))
    if cfg.n_steps is not None and cfg.n_steps < 10:
        t.error("n_steps", "[time] n_steps must be at least 10")
    t.finish()

    gs = section("guess")
    cfg.amplitude = gs.quantity("amplitude", "field", 0.0)
    if cfg.amplitude < 0:
        gs.error("amplitude_au", "[guess] amplitude must be non-negative")
    cfg.centers = gs.quantity("centers", "energy", [], positive=True, many=True)
    cfg.centers_from_fc = gs.get("centers_from_fc", False, bool)
    if cfg.centers_from_fc:
        if cfg.centers:
            gs.error("centers_from_fc", "[guess] give either centers_from_fc or explicit centers")
        if cfg.model != "morse" or cfg.initial_channel != "g" or cfg.target_channel != "g":
            gs.error("centers_from_fc", "[guess] centers_from_fc needs ground-channel initial and target levels")
    elif not cfg.centers:
        raise ConfigError("[guess] needs centers_cm1, centers_hartree or centers_from_fc",
                          path, loc.line_of("guess", None))
    cfg.envelope = gs.get("envelope", "gaussian", str)
    if cfg.envelope not in ("gaussian", "train", "sin2", "flat"):
        gs.error("envelope", f"[guess] unknown envelope {cfg.envelope!r}")
    cfg.fwhm = gs.quantity("fwhm", "time", positive=True)
    cfg.offsets = gs.quantity("offsets", "time", [], many=True)
    cfg.noise = gs.quantity("noise", "field", 0.0)
    if cfg.noise < 0:
        gs.error("noise_au", "[guess] noise must be non-negative")
    gs.finish()

    o = section("optimizer")
    cfg.penalty = o.get("penalty", "quadratic", str)
    if cfg.penalty not in ("quadratic", "restricted"):
        o.error("penalty", f"[optimizer] penalty must be 'quadratic' or 'restricted', got {cfg.penalty!r}")
    cfg.alpha = o.number("alpha", 1.0, positive=True)
    cfg.alpha_large = o.number("alpha_large", 10.0 * cfg.alpha, positive=True)
    cfg.alpha_switch = o.number("alpha_switch", 30, integer=True)
    if cfg.penalty == "restricted":
        cfg.alpha1 = o.number("alpha1", None, positive=True)
        cfg.alpha2 = o.number("alpha2", 0.0)
        if cfg.alpha1 is None:
            o.error(None, "[optimizer] the restricted penalty needs alpha1")
        if not cfg.alpha1 > cfg.alpha2 >= 0:
            o.error("alpha2", "[optimizer] need alpha1 > alpha2 >= 0")
    elif "alpha1" in o.data or "alpha2" in o.data:
        o.error("alpha1" if "alpha1" in o.data else "alpha2",
                "[optimizer] alpha1/alpha2 belong to penalty = 'restricted'")
    cfg.target_F = o.number("target_F", 0.99)
    if not 0 < cfg.target_F <= 1:
        o.error("target_F", "[optimizer] target_F must lie in (0, 1]")
    cfg.max_iterations = o.number("max_iterations", 2000, integer=True)
    if cfg.max_iterations < 0:
        o.error("max_iterations", "[optimizer] max_iterations must be >= 0")
    cfg.stagnation = o.number("stagnation", 1e-10)
    cfg.stagnation_window = o.number("stagnation_window", 50, positive=True, integer=True)
    cfg.checkpoint_every = o.number("checkpoint_every", 10, positive=True, integer=True)
    cfg.tolerance = o.number("tolerance", 1e-12, positive=True)
    cfg.memory_budget_mb = o.number("memory_budget_mb", 512.0, positive=True)
    o.finish()

    stages = raw.get("pipeline", [])
    if not isinstance(stages, list):
        raise ConfigError("pipeline must be an array of tables ([[pipeline]])", path, loc.line_of("", "pipeline"))
    for i, item in enumerate(stages):
        p = _Section(item, f"pipeline#{i}", loc)
        kind = p.get("stage", None, str)
        if kind == "reduce_intensity":
            sc = StageConfig(kind, factor=p.number("factor", 2.0))
            if sc.factor < 1:
                p.error("factor", "[[pipeline]] factor must be >= 1")
        elif kind == "compress_time":
            sc = StageConfig(kind, keep_every=p.number("keep_every", 4, positive=True, integer=True),
                             symmetric=p.get("symmetric", False, bool),
                             fluence_fraction=p.number("fluence_fraction", None, positive=True))
            if sc.symmetric and sc.keep_every % 2:
                p.error("keep_every", "[[pipeline]] symmetric deletion needs an even keep_every")
        else:
            p.error("stage", f"[[pipeline]] stage must be 'reduce_intensity' or 'compress_time', got {kind!r}")
        sc.alpha = p.number("alpha", None, positive=True)
        sc.target_F = p.number("target_F", None)
        sc.max_iterations = p.number("max_iterations", None, integer=True)
        p.finish()
        cfg.pipeline.append(sc)

    a = section("analysis")
    cfg.beam_radius = a.quantity("beam_radius", "length", 300e-6 / BOHR_M, positive=True)
    cfg.thresholds = [float(x) for x in a.get("thresholds", [0.05, 0.10], list)]
    if any(not 0 < x < 1 for x in cfg.thresholds):
        a.error("thresholds", "[analysis] thresholds must lie in (0, 1)")
    cfg.window = a.get("window", None, str)
    if cfg.window not in (None, "cosine"):
        a.error("window", "[analysis] window must be 'cosine' when given")
    cfg.population_stride = a.number("population_stride", 1, positive=True, integer=True)
    a.finish()

    out = section("output")
    cfg.output_dir = (base / out.get("directory", "vibcontrol-out", str)).resolve()
    cfg.seed = out.number("seed", 0, integer=True)
    out.finish()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path) from None
    return parse_config(text, path)
