"""Experiment configuration: TOML schema, validation, presets glue.

A config file names a preset and overrides any subset of keys; ``custom``
starts from neutral defaults and requires the caller to fill in what the
run needs. Parameters marked paper-default in presets.py carry the values
stated in the source experiments; everything else (particle counts, mesh
sizes) is a desk-scale choice documented there.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields as dc_fields

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigInvalid

_MODES = ("forward", "optimize")
_PRESETS = ("landau", "two_stream", "confinement", "smoke", "custom")
_INIT_KINDS = ("landau", "maxwellian", "two_stream", "bump", "uniform_box", "gaussian")


@dataclass
class GridConfig:
    p_max: float = 12.566370614359172  # 4*pi
    v_max: float = 10.0
    n_x: int = 64
    n_v: int = 64


@dataclass
class TimeConfig:
    t_final: float = 10.0
    n_t: int = 400


@dataclass
class ParticleConfig:
    n_forward: int = 200_000
    n_terminal: int = 100_000
    species_mass: float = 12.566370614359172


@dataclass
class IonConfig:
    mu_x: float = 0.023337417088286416
    mu_v: float = 0.023337417088286416


@dataclass
class InitConfig:
    kind: str = "maxwellian"
    params: dict = field(default_factory=dict)


@dataclass
class WeightConfig:
    amplitude: float = 0.0
    var: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    center: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class SpeciesTrackingConfig:
    theta: WeightConfig = field(default_factory=WeightConfig)
    phi: WeightConfig = field(default_factory=WeightConfig)


@dataclass
class TrackingConfig:
    electrons: SpeciesTrackingConfig = field(default_factory=SpeciesTrackingConfig)
    ions: SpeciesTrackingConfig = field(default_factory=SpeciesTrackingConfig)


@dataclass
class PenaltySection:
    alpha: float = 1e-2
    kappa_t: float = 1e-2
    kappa_x: float = 1e-2


@dataclass
class NcgSection:
    tol: float = 1e-6
    l_max: int = 10
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    sigma_init: float = 1.0
    restart_every: int = 0
    max_backtracks: int = 30
    sigma_growth: float = 2.0


@dataclass
class ForwardSection:
    static_ions: bool = False
    escape_threshold: float = 0.01


@dataclass
class FitSection:
    window: list = field(default_factory=lambda: [0.0, 10.0])


@dataclass
class ExportSection:
    fields: bool = False
    phase: bool = False
    phase_stride: int = 0       # >0: stream phase_k#####.csv every n-th level
    gradient: bool = False
    adjoint: bool = False


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    mode: str = "forward"
    seed: int = 20240817
    threads: int = 1
    output_dir: str = "out"
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    particles: ParticleConfig = field(default_factory=ParticleConfig)
    ion: IonConfig = field(default_factory=IonConfig)
    init_electrons: InitConfig = field(default_factory=InitConfig)
    init_ions: InitConfig = field(default_factory=InitConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    penalty: PenaltySection = field(default_factory=PenaltySection)
    ncg: NcgSection = field(default_factory=NcgSection)
    forward: ForwardSection = field(default_factory=ForwardSection)
    fit: FitSection = field(default_factory=FitSection)
    export: ExportSection = field(default_factory=ExportSection)


_SECTION_TYPES = {
    "grid": GridConfig, "time": TimeConfig, "particles": ParticleConfig,
    "ion": IonConfig, "init_electrons": InitConfig, "init_ions": InitConfig,
    "tracking": TrackingConfig, "penalty": PenaltySection, "ncg": NcgSection,
    "forward": ForwardSection, "fit": FitSection, "export": ExportSection,
}


def _build_section(cls, data: dict, path: str):
    known = {f.name: f for f in dc_fields(cls)}
    obj = cls()
    for key, value in data.items():
        if key not in known:
            raise ConfigInvalid(f"{path}.{key}", "unknown key")
        current = getattr(obj, key)
        if isinstance(current, (GridConfig, TimeConfig, ParticleConfig, IonConfig,
                                InitConfig, WeightConfig, SpeciesTrackingConfig,
                                TrackingConfig, PenaltySection, NcgSection,
                                ForwardSection, FitSection, ExportSection)):
            if not isinstance(value, dict):
                raise ConfigInvalid(f"{path}.{key}", "expected a table")
            setattr(obj, key, _build_section(type(current), value, f"{path}.{key}"))
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigInvalid(f"{path}.{key}", "expected a boolean")
            setattr(obj, key, value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigInvalid(f"{path}.{key}", "expected an integer")
            setattr(obj, key, value)
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigInvalid(f"{path}.{key}", "expected a number")
            setattr(obj, key, float(value))
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigInvalid(f"{path}.{key}", "expected a string")
            setattr(obj, key, value)
        elif isinstance(current, list):
            if not isinstance(value, list):
                raise ConfigInvalid(f"{path}.{key}", "expected an array")
            setattr(obj, key, [float(v) for v in value])
        elif isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigInvalid(f"{path}.{key}", "expected a table")
            setattr(obj, key, {k: (float(v) if isinstance(v, (int, float))
                                   and not isinstance(v, bool) else v)
                               for k, v in value.items()})
        else:
            setattr(obj, key, value)
    return obj


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def from_dict(data: dict) -> ExperimentConfig:
    """Build a validated config from a (possibly partial) dict.

    A ``preset`` key pulls that preset's full config as the base; file
    values override it.
    """
    from . import presets  # deferred to avoid a cycle

    preset = data.get("preset", "custom")
    if not isinstance(preset, str) or preset not in _PRESETS:
        raise ConfigInvalid("preset", f"must be one of {_PRESETS}")
    base = asdict(presets.preset_config(preset))
    merged = _deep_merge(base, data)
    cfg = _build_section(ExperimentConfig, merged, "config")
    validate(cfg)
    return cfg


def from_toml(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = _toml.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid("<file>", f"config file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise ConfigInvalid("<file>", f"TOML parse error: {exc}")
    return from_dict(data)


def validate(cfg: ExperimentConfig) -> None:
    """Field-level validation; raises ConfigInvalid naming the bad key."""
    if cfg.mode not in _MODES:
        raise ConfigInvalid("mode", f"must be one of {_MODES}")
    if cfg.threads < 1:
        raise ConfigInvalid("threads", "must be >= 1")
    if cfg.grid.p_max <= 0 or cfg.grid.v_max <= 0:
        raise ConfigInvalid("grid.p_max", "p_max and v_max must be positive")
    if cfg.grid.n_x < 2 or cfg.grid.n_v < 2:
        raise ConfigInvalid("grid.n_x", "n_x and n_v must be >= 2")
    if cfg.time.t_final <= 0 or cfg.time.n_t < 1:
        raise ConfigInvalid("time.t_final", "need t_final > 0 and n_t >= 1")
    if cfg.particles.n_forward < 1:
        raise ConfigInvalid("particles.n_forward", "must be >= 1")
    if cfg.particles.n_terminal < 1:
        raise ConfigInvalid("particles.n_terminal", "must be >= 1")
    if cfg.particles.species_mass <= 0:
        raise ConfigInvalid("particles.species_mass", "must be positive")
    if cfg.ion.mu_x <= 0 or cfg.ion.mu_v <= 0:
        raise ConfigInvalid("ion.mu_x", "ion scalings must be positive")
    for name, init in (("init_electrons", cfg.init_electrons),
                       ("init_ions", cfg.init_ions)):
        if init.kind not in _INIT_KINDS:
            raise ConfigInvalid(f"{name}.kind", f"must be one of {_INIT_KINDS}")
    for sp_name, sp in (("electrons", cfg.tracking.electrons),
                        ("ions", cfg.tracking.ions)):
        for w_name, w in (("theta", sp.theta), ("phi", sp.phi)):
            path = f"tracking.{sp_name}.{w_name}"
            if w.amplitude < 0:
                raise ConfigInvalid(f"{path}.amplitude", "must be >= 0")
            if len(w.var) != 3 or any(v <= 0 for v in w.var):
                raise ConfigInvalid(f"{path}.var", "need 3 positive entries")
            if len(w.center) != 3:
                raise ConfigInvalid(f"{path}.center", "need 3 entries")
    if cfg.penalty.alpha <= 0 or cfg.penalty.kappa_t <= 0 or cfg.penalty.kappa_x <= 0:
        raise ConfigInvalid("penalty.alpha", "alpha, kappa_t, kappa_x must be positive")
    if not 0 < cfg.ncg.armijo_c1 < 1:
        raise ConfigInvalid("ncg.armijo_c1", "must lie in (0, 1)")
    if not 0 < cfg.ncg.armijo_shrink < 1:
        raise ConfigInvalid("ncg.armijo_shrink", "must lie in (0, 1)")
    if cfg.ncg.tol <= 0 or cfg.ncg.l_max < 1:
        raise ConfigInvalid("ncg.tol", "need tol > 0 and l_max >= 1")
    if not 0 < cfg.forward.escape_threshold <= 1:
        raise ConfigInvalid("forward.escape_threshold", "must lie in (0, 1]")
    if len(cfg.fit.window) != 2 or cfg.fit.window[0] >= cfg.fit.window[1]:
        raise ConfigInvalid("fit.window", "need [t0, t1] with t0 < t1")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)!r}")


def _emit(data: dict, prefix: str, lines: list) -> None:
    scalars = {k: v for k, v in data.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    if scalars and prefix:
        lines.append(f"[{prefix}]")
    for k, v in scalars.items():
        lines.append(f"{k} = {_toml_value(v)}")
    if scalars:
        lines.append("")
    for k, v in tables.items():
        _emit(v, f"{prefix}.{k}" if prefix else k, lines)


def to_toml_str(cfg: ExperimentConfig) -> str:
    """Serialize the full config; from_toml of the result round-trips."""
    lines = []
    _emit(asdict(cfg), "", lines)
    return "\n".join(lines).rstrip() + "\n"


def write_toml(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_toml_str(cfg))
