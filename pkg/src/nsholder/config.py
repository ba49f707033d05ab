"""Sectioned key-value experiment configuration.

Sections and keys (all optional except ``[solver] n``; defaults in brackets)::

    [experiment]   name [experiment], seed [0]
    [solver]       n, length [2 pi], dt [1e-3], t_end [1], viscosity [1],
                   output_every [10], nonlinearity [on], projection [true],
                   dense_from [none], dense_every [1], max_halvings [8], scheme [etdrk2]
    [initial]      kind [Zero], seed, spectrum_slope [3], amplitude [1], kmax [4], k [1, 0]
    [forcing]      kind [Zero], gamma [0], amplitude [1], seed, time_dependence [static],
                   frequency [0], center, radius, cutoff, q, delta
    [diagnostics]  margin [0.5], gamma [0.5], tau [none], c [none], ladder [6],
                   ladder_ratio [0.5], r_max [1], center_stride [0.25],
                   max_time_levels [32], tops [last snapshot]
    [suites]       run [all]
    [output]       directory [.]

``[experiment] seed`` is the default seed of the initial condition and the
forcing when their sections do not set one.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .forcing import ForcingSpec
from .solver import InitialCondition, SolverConfig
from .spectral import Grid

SCHEMA = {
    "experiment": {"name", "seed"},
    "solver": {"n", "length", "dt", "t_end", "viscosity", "output_every", "nonlinearity", "projection",
               "dense_from", "dense_every", "max_halvings", "scheme"},
    "initial": {"kind", "seed", "spectrum_slope", "amplitude", "kmax", "k"},
    "forcing": {"kind", "gamma", "amplitude", "seed", "time_dependence", "frequency", "center", "radius",
                "cutoff", "q", "delta"},
    "diagnostics": {"margin", "gamma", "tau", "c", "ladder", "ladder_ratio", "r_max", "center_stride",
                    "max_time_levels", "tops"},
    "suites": {"run"},
    "output": {"directory"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None and line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class DiagnosticsConfig:
    margin: float = 0.5
    gamma: float = 0.5
    tau: float | None = None
    c: float | None = None
    ladder: int = 6
    ladder_ratio: float = 0.5
    r_max: float = 1.0
    center_stride: float = 0.25
    max_time_levels: int | None = 32
    tops: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be positive")
        if self.ladder < 1 or not 0.0 < self.ladder_ratio < 1.0:
            raise ValueError("ladder depth must be >= 1 and ladder_ratio in (0, 1)")
        if not 0.0 < self.center_stride <= 1.0:
            raise ValueError("center_stride must lie in (0, 1]")


@dataclass(frozen=True)
class ExperimentConfig:
    solver: SolverConfig
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    suites: tuple[str, ...] | None = None
    output: Path = Path(".")
    seed: int = 0
    name: str = "experiment"

    @property
    def forcing(self) -> ForcingSpec:
        return self.solver.forcing


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return i
    return None


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in re.split(r"[,\s]+", value.strip()) if v)


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _opt(value: str):
    return None if value.strip().lower() in ("", "none") else value


def loads(text: str, path=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc), path, line) from exc

    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", path, _line_of(text, sec, None))
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", path, _line_of(text, sec, key))
    if not cp.has_option("solver", "n"):
        raise ConfigError("[solver] n is required", path, _line_of(text, "solver", None))

    def get(sec, key, conv, default=None):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key} in [{sec}]: {raw!r} ({exc})", path, _line_of(text, sec, key)) from exc

    def build(sec, factory):
        try:
            return factory()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{sec}] section: {exc}", path, _line_of(text, sec, None)) from exc

    seed = get("experiment", "seed", int, 0)
    name = get("experiment", "name", str, "experiment")

    def initial():
        return InitialCondition(
            kind=get("initial", "kind", str, "Zero"),
            seed=get("initial", "seed", int, seed),
            spectrum_slope=get("initial", "spectrum_slope", float, 3.0),
            amplitude=get("initial", "amplitude", float, 1.0),
            kmax=get("initial", "kmax", float, 4.0),
            k=get("initial", "k", lambda v: tuple(int(x) for x in _floats(v)), (1, 0)),
        )

    def forcing():
        geometry = {}
        c = get("forcing", "center", _floats)
        if c is not None:
            if len(c) != 2:
                raise ConfigError("center needs two coordinates", path, _line_of(text, "forcing", "center"))
            geometry["center"] = c
        for key in ("radius", "cutoff", "q", "delta"):
            v = get("forcing", key, float)
            if v is not None:
                geometry[key] = v
        return ForcingSpec(
            kind=get("forcing", "kind", str, "Zero"),
            gamma=get("forcing", "gamma", float, 0.0),
            amplitude=get("forcing", "amplitude", float, 1.0),
            seed=get("forcing", "seed", int, seed),
            geometry=geometry,
            time_dependence=get("forcing", "time_dependence", str, "static"),
            frequency=get("forcing", "frequency", float, 0.0),
        )

    ini = build("initial", initial)
    frc = build("forcing", forcing)

    def solver():
        dense = get("solver", "dense_from", lambda v: None if _opt(v) is None else float(v))
        return SolverConfig(
            grid=Grid(get("solver", "n", int), get("solver", "length", float, 2.0 * math.pi)),
            dt=get("solver", "dt", float, 1e-3),
            t_end=get("solver", "t_end", float, 1.0),
            viscosity=get("solver", "viscosity", float, 1.0),
            forcing=frc,
            initial=ini,
            output_every=get("solver", "output_every", int, 10),
            nonlinearity=get("solver", "nonlinearity", str, "on"),
            projection=get("solver", "projection", _bool, True),
            dense_from=dense,
            dense_every=get("solver", "dense_every", int, 1),
            max_halvings=get("solver", "max_halvings", int, 8),
            scheme=get("solver", "scheme", str, "etdrk2"),
        )

    slv = build("solver", solver)

    def diagnostics():
        opt_float = lambda v: None if _opt(v) is None else float(v)
        return DiagnosticsConfig(
            margin=get("diagnostics", "margin", float, 0.5),
            gamma=get("diagnostics", "gamma", float, 0.5),
            tau=get("diagnostics", "tau", opt_float),
            c=get("diagnostics", "c", opt_float),
            ladder=get("diagnostics", "ladder", int, 6),
            ladder_ratio=get("diagnostics", "ladder_ratio", float, 0.5),
            r_max=get("diagnostics", "r_max", float, 1.0),
            center_stride=get("diagnostics", "center_stride", float, 0.25),
            max_time_levels=get("diagnostics", "max_time_levels", lambda v: None if _opt(v) is None else int(v), 32),
            tops=get("diagnostics", "tops", _floats, ()),
        )

    diag = build("diagnostics", diagnostics)
    suites = get("suites", "run", lambda v: tuple(s for s in re.split(r"[,\s]+", v.strip()) if s))
    out = Path(get("output", "directory", str, "."))
    if path is not None and not out.is_absolute():
        out = Path(path).parent / out
    return ExperimentConfig(slv, diag, suites, out, seed, name)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path) from exc
    return loads(text, path)
