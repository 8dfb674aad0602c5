"""TOML run configuration with strict key checking.

Every section maps onto a dataclass below; its field defaults form the
single table of documented defaults. Unknown sections or keys are rejected
with a message naming the offending key.
"""

from __future__ import annotations

import sys
from dataclasses import MISSING, asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration file or value."""


@dataclass
class IOSection:
    input: str = ""
    input_b: str = ""
    out_dir: str = "."


@dataclass
class GeometrySection:
    fresnel_number: float | None = None
    pixel_size_nm: float = 1.0
    pad: bool = True


@dataclass
class PhantomSection:
    kind: str = "two_material"  # two_material | packing
    size: int = 256
    disc_radius: float = 32.0
    glyph_text: str = "OB"
    glyph_scale: float = 5.0
    phi: float = 0.2
    mu: float = 0.04
    missing_material: bool = False
    vol_size: int = 64
    lattice: str = "hcp"  # hcp | fcc | random
    lattice_dims: list = field(default_factory=lambda: [2, 5, 2])
    n_spheres: int = 20
    radius: float = 4.0
    spacing_radius: float = 4.4
    delta: float = 0.01
    jitter: float = 0.0


@dataclass
class TomoSection:
    n_angles: int = 60
    angle_range_deg: float = 180.0
    projection_scale: float = 1.0


@dataclass
class NoiseSection:
    kind: str = "none"  # none | gaussian | poisson
    sigma: float = 0.0
    peak_flux: float = 770.0


@dataclass
class ConstraintsSection:
    support_radius: float | None = None
    real_valued: bool = False
    homogeneous_ratio: float | None = None
    sign: str | None = None  # nonnegative | nonpositive
    penalty_weight: object = "auto"


@dataclass
class SolverSection:
    alpha0: object = "auto"
    alpha_reduction: float = 2.0 / 3.0
    tau: float = 1.5
    max_newton: int = 50
    cg_tol: float = 1e-3
    cg_max: int = 50
    sobolev_s: float = 0.0
    fidelity: str = "l2"  # l2 | poisson_quadratic
    I0: float = 1.0
    stop_rule: str = "auto"
    plateau_fraction: float = 0.01
    endgame_steps: int = 2
    endgame_factor: float = 10.0
    ctf: bool = False
    ctf_reg: float = 1e-2


@dataclass
class KaczmarzSection:
    wedge_size: int = 6
    passes: int = 2
    order: str = "random"
    beta: float = 0.001
    alpha0: object = "auto"
    gamma: object = "auto"
    cg_tol: float = 1e-3
    cg_max: int = 50
    split_half: bool = False


@dataclass
class AnalysisSection:
    n_shells: int | None = None
    sphere_diameter: float = 8.0
    smooth_fwhm: float = 2.0
    reg: float = 1e-3
    min_separation: float = 4.0
    threshold_frac: float = 0.1


@dataclass
class ExportSection:
    input: str = ""
    output: str = "image.png"
    slice_index: int | None = None
    slice_axis: int = 0
    component: str = "real"  # real | imag | abs | phi | mu
    normalization: str = "minmax"  # minmax | percentile
    p_low: float = 1.0
    p_high: float = 99.0
    bits: int = 8


SECTIONS = {
    "io": IOSection,
    "geometry": GeometrySection,
    "phantom": PhantomSection,
    "tomo": TomoSection,
    "noise": NoiseSection,
    "constraints": ConstraintsSection,
    "solver": SolverSection,
    "kaczmarz": KaczmarzSection,
    "analysis": AnalysisSection,
    "export": ExportSection,
}

_CHOICES = {
    ("phantom", "kind"): ("two_material", "packing"),
    ("phantom", "lattice"): ("hcp", "fcc", "random"),
    ("noise", "kind"): ("none", "gaussian", "poisson"),
    ("constraints", "sign"): (None, "nonnegative", "nonpositive"),
    ("solver", "fidelity"): ("l2", "poisson_quadratic"),
    ("solver", "stop_rule"): ("auto", "discrepancy", "plateau", "max_iter"),
    ("kaczmarz", "order"): ("sequential", "random"),
    ("export", "component"): ("real", "imag", "abs", "phi", "mu"),
    ("export", "normalization"): ("minmax", "percentile"),
    ("export", "bits"): (8, 16),
}

# fields accepting a number or the string "auto"
_AUTO_NUMERIC = {"alpha0", "gamma", "penalty_weight"}

# expected types of fields whose default is None
_NULLABLE = {
    ("geometry", "fresnel_number"): float,
    ("constraints", "support_radius"): float,
    ("constraints", "homogeneous_ratio"): float,
    ("constraints", "sign"): lambda: "",
    ("analysis", "n_shells"): int,
    ("export", "slice_index"): int,
}


@dataclass
class RunConfig:
    seed: int = 0
    io: IOSection = field(default_factory=IOSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    phantom: PhantomSection = field(default_factory=PhantomSection)
    tomo: TomoSection = field(default_factory=TomoSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    constraints: ConstraintsSection = field(default_factory=ConstraintsSection)
    solver: SolverSection = field(default_factory=SolverSection)
    kaczmarz: KaczmarzSection = field(default_factory=KaczmarzSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    export: ExportSection = field(default_factory=ExportSection)

    def to_dict(self):
        return asdict(self)


def _coerce(section, key, default, value):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if key in _AUTO_NUMERIC:
        if value == "auto":
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number or \"auto\", got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    return value


def _build(section, cls, table):
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
    kwargs = {}
    for name, f in known.items():
        if name not in table:
            continue
        default = f.default if f.default is not MISSING else f.default_factory()
        value = table[name]
        if default is None:
            default = _NULLABLE[(section, name)]()
        value = _coerce(section, name, default, value)
        choices = _CHOICES.get((section, name))
        if choices is not None and value not in choices:
            raise ConfigError(f"{section}.{name}: {value!r} is not one of {choices}")
        kwargs[name] = value
    return cls(**kwargs)


def parse_config(text):
    """Parse TOML text into a :class:`RunConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    cfg = {}
    for key, value in raw.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"seed: expected an integer, got {value!r}")
            cfg["seed"] = value
        elif key in SECTIONS:
            cfg[key] = _build(key, SECTIONS[key], value)
        else:
            raise ConfigError(f"unknown key {key}")
    return RunConfig(**cfg)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
