"""Scenario configs: schema, validation, canonical serialization.

One YAML document per scenario.  Parsing is strict: unknown keys are
rejected and every error names the offending field path, so a typo like
``halfline.a`` fails loudly instead of silently running with a default.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field

import yaml

from .errors import ConfigError

VARIANTS = ("line1fb", "linecs", "halfline", "radial")
KERNEL_KINDS = ("triangle", "uniform", "table")
INITIAL_KINDS = ("bump", "table", "trivial")

# decay-exponent acceptance bands and related check tolerances; scenario
# files may override any subset under diagnostics.tolerances
DEFAULT_TOLERANCES = {
    "sup_exponent": (-1.15, -0.85),
    "mass_exponent": (-0.62, -0.38),
    "gap_exponent": (-0.62, -0.38),
    "conservation": 1e-10,
    "eigenvalue_rel": 0.10,
    "speed_rel": 0.15,
    "cstar_rel": 0.10,
    "profile_decay_factor": 0.25,
}


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "triangle"
    d: float = 1.0
    table: tuple | None = None


@dataclass(frozen=True)
class GridConfig:
    h: float = 0.05
    x_min: float | None = None
    x_max: float | None = None
    margin_left: float | None = None
    margin_right: float | None = None


@dataclass(frozen=True)
class TimeConfig:
    t_end: float = 10.0
    dt: float | None = None
    record_every: float | None = None
    snapshot_times: tuple = ()


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "bump"
    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0
    mass: float | None = None
    s0: float | None = None
    s0_minus: float | None = None
    s0_plus: float | None = None
    R0: float | None = None
    table_x: tuple | None = None
    table_u: tuple | None = None


@dataclass(frozen=True)
class HalflineConfig:
    A: float = 0.0


@dataclass(frozen=True)
class RadialConfig:
    N: int = 2


@dataclass(frozen=True)
class StepperConfig:
    picard_iters: int = 0
    picard_tol: float = 1e-10


@dataclass(frozen=True)
class CorrectorsConfig:
    extent_factor: float = 40.0
    tol: float = 1e-10


@dataclass(frozen=True)
class DiagnosticsConfig:
    fit_window: tuple = (0.25, 1.0)
    collect_moments: bool = True
    tolerances: dict = dc_field(default_factory=lambda: dict(DEFAULT_TOLERANCES))


@dataclass(frozen=True)
class ScenarioConfig:
    variant: str
    kernel: KernelConfig = KernelConfig()
    grid: GridConfig = GridConfig()
    time: TimeConfig = TimeConfig()
    initial: InitialConfig = InitialConfig()
    halfline: HalflineConfig | None = None
    radial: RadialConfig | None = None
    stepper: StepperConfig = StepperConfig()
    correctors: CorrectorsConfig = CorrectorsConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()

    @property
    def dt(self) -> float:
        return self.time.dt if self.time.dt is not None else min(0.1, self.grid.h)

    @property
    def record_every(self) -> float:
        if self.time.record_every is not None:
            return self.time.record_every
        return max(self.dt, self.time.t_end / 1000.0)


def _reject_unknown(d: dict, allowed, path: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field" if path else f"{key}: unknown field")


def _get(d: dict, key: str, path: str, kind, default=None, required: bool = False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing" if path else f"{key}: required")
        return default
    val = d[key]
    try:
        if kind is float:
            if isinstance(val, bool):
                raise TypeError
            return float(val)
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            return int(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
        if kind is tuple:
            if not isinstance(val, (list, tuple)):
                raise TypeError
            return tuple(float(x) for x in val)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {val!r}") from None
    raise AssertionError(kind)


def parse_config_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(
        raw,
        (
            "variant",
            "kernel",
            "grid",
            "time",
            "initial",
            "halfline",
            "radial",
            "stepper",
            "correctors",
            "diagnostics",
        ),
        "",
    )
    variant = _get(raw, "variant", "", str, required=True)
    if variant not in VARIANTS:
        raise ConfigError(f"variant: {variant!r} is not one of {VARIANTS}")

    kd = raw.get("kernel") or {}
    _reject_unknown(kd, ("kind", "d", "table"), "kernel")
    kernel = KernelConfig(
        kind=_get(kd, "kind", "kernel", str, default="triangle"),
        d=_get(kd, "d", "kernel", float, default=1.0),
        table=_get(kd, "table", "kernel", tuple),
    )
    if kernel.kind not in KERNEL_KINDS:
        raise ConfigError(f"kernel.kind: {kernel.kind!r} is not one of {KERNEL_KINDS}")
    if kernel.d <= 0:
        raise ConfigError(f"kernel.d: must be positive, got {kernel.d}")
    if (kernel.kind == "table") != (kernel.table is not None):
        raise ConfigError("kernel.table: required exactly when kernel.kind is 'table'")

    gd = raw.get("grid") or {}
    _reject_unknown(gd, ("h", "x_min", "x_max", "margin_left", "margin_right"), "grid")
    grid = GridConfig(
        h=_get(gd, "h", "grid", float, default=0.05),
        x_min=_get(gd, "x_min", "grid", float),
        x_max=_get(gd, "x_max", "grid", float),
        margin_left=_get(gd, "margin_left", "grid", float),
        margin_right=_get(gd, "margin_right", "grid", float),
    )
    if grid.h <= 0:
        raise ConfigError(f"grid.h: must be positive, got {grid.h}")
    if grid.h > kernel.d / 4:
        raise ConfigError(f"grid.h: {grid.h} under-resolves the kernel (need h <= d/4 = {kernel.d / 4})")

    td = raw.get("time") or {}
    _reject_unknown(td, ("t_end", "dt", "record_every", "snapshot_times"), "time")
    time = TimeConfig(
        t_end=_get(td, "t_end", "time", float, required=True),
        dt=_get(td, "dt", "time", float),
        record_every=_get(td, "record_every", "time", float),
        snapshot_times=_get(td, "snapshot_times", "time", tuple, default=()),
    )
    if time.t_end <= 0:
        raise ConfigError(f"time.t_end: must be positive, got {time.t_end}")
    if time.dt is not None and not 0 < time.dt <= 0.5:
        raise ConfigError(f"time.dt: must lie in (0, 0.5], got {time.dt}")
    for ts in time.snapshot_times:
        if not 0 <= ts <= time.t_end:
            raise ConfigError(f"time.snapshot_times: {ts} outside [0, t_end]")

    idd = raw.get("initial") or {}
    _reject_unknown(
        idd,
        ("kind", "center", "width", "amplitude", "mass", "s0", "s0_minus", "s0_plus", "R0", "table_x", "table_u"),
        "initial",
    )
    initial = InitialConfig(
        kind=_get(idd, "kind", "initial", str, default="bump"),
        center=_get(idd, "center", "initial", float, default=0.0),
        width=_get(idd, "width", "initial", float, default=1.0),
        amplitude=_get(idd, "amplitude", "initial", float, default=1.0),
        mass=_get(idd, "mass", "initial", float),
        s0=_get(idd, "s0", "initial", float),
        s0_minus=_get(idd, "s0_minus", "initial", float),
        s0_plus=_get(idd, "s0_plus", "initial", float),
        R0=_get(idd, "R0", "initial", float),
        table_x=_get(idd, "table_x", "initial", tuple),
        table_u=_get(idd, "table_u", "initial", tuple),
    )
    if initial.kind not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind: {initial.kind!r} is not one of {INITIAL_KINDS}")
    if initial.kind == "bump":
        if initial.width <= 0:
            raise ConfigError(f"initial.width: must be positive, got {initial.width}")
        if initial.amplitude < 0:
            raise ConfigError("initial.amplitude: must be nonnegative")
    if initial.kind == "table":
        if initial.table_x is None or initial.table_u is None:
            raise ConfigError("initial.table_x/table_u: required for kind 'table'")
        if len(initial.table_x) != len(initial.table_u) or len(initial.table_x) < 2:
            raise ConfigError("initial.table_x/table_u: need matching length >= 2")
    if initial.mass is not None and initial.mass < 0:
        raise ConfigError("initial.mass: must be nonnegative")

    if variant in ("line1fb", "halfline"):
        if initial.s0 is None:
            raise ConfigError("initial.s0: required for this variant")
        if variant == "halfline" and initial.s0 < 0:
            raise ConfigError(f"initial.s0: half line needs s0 >= 0, got {initial.s0}")
    elif variant == "linecs":
        if initial.s0_minus is None or initial.s0_plus is None:
            raise ConfigError("initial.s0_minus/s0_plus: required for linecs")
        if not initial.s0_minus < initial.s0_plus:
            raise ConfigError("initial.s0_minus: must be below initial.s0_plus")
    else:
        if initial.R0 is None or initial.R0 <= 0:
            raise ConfigError("initial.R0: required and positive for radial")

    halfline = None
    if variant == "halfline":
        hd = raw.get("halfline")
        if hd is None:
            raise ConfigError("halfline.A: required for the halfline variant")
        _reject_unknown(hd, ("A",), "halfline")
        halfline = HalflineConfig(A=_get(hd, "A", "halfline", float, required=True))
        if halfline.A < 0:
            raise ConfigError(f"halfline.A: must be nonnegative, got {halfline.A}")
    elif "halfline" in raw:
        raise ConfigError("halfline: only valid for the halfline variant")

    radial = None
    if variant == "radial":
        rd = raw.get("radial")
        if rd is None:
            raise ConfigError("radial.N: required for the radial variant")
        _reject_unknown(rd, ("N",), "radial")
        radial = RadialConfig(N=_get(rd, "N", "radial", int, required=True))
        if radial.N < 2:
            raise ConfigError(f"radial.N: need N >= 2 (got {radial.N}; use linecs for the line)")
    elif "radial" in raw:
        raise ConfigError("radial: only valid for the radial variant")

    sd = raw.get("stepper") or {}
    _reject_unknown(sd, ("picard_iters", "picard_tol"), "stepper")
    stepper = StepperConfig(
        picard_iters=_get(sd, "picard_iters", "stepper", int, default=0),
        picard_tol=_get(sd, "picard_tol", "stepper", float, default=1e-10),
    )
    if stepper.picard_iters < 0:
        raise ConfigError("stepper.picard_iters: must be >= 0")
    if stepper.picard_tol <= 0:
        raise ConfigError("stepper.picard_tol: must be positive")

    cd = raw.get("correctors") or {}
    _reject_unknown(cd, ("extent_factor", "tol"), "correctors")
    correctors = CorrectorsConfig(
        extent_factor=_get(cd, "extent_factor", "correctors", float, default=40.0),
        tol=_get(cd, "tol", "correctors", float, default=1e-10),
    )
    if correctors.extent_factor < 20.0:
        raise ConfigError("correctors.extent_factor: need at least 20 kernel supports")
    if correctors.tol <= 0:
        raise ConfigError("correctors.tol: must be positive")

    dd = raw.get("diagnostics") or {}
    _reject_unknown(dd, ("fit_window", "collect_moments", "tolerances"), "diagnostics")
    tolerances = dict(DEFAULT_TOLERANCES)
    user_tol = dd.get("tolerances") or {}
    _reject_unknown(user_tol, tuple(DEFAULT_TOLERANCES), "diagnostics.tolerances")
    for key, val in user_tol.items():
        tolerances[key] = tuple(float(x) for x in val) if isinstance(val, (list, tuple)) else float(val)
    fw = _get(dd, "fit_window", "diagnostics", tuple, default=(0.25, 1.0))
    if len(fw) != 2 or not 0 <= fw[0] < fw[1] <= 1:
        raise ConfigError(f"diagnostics.fit_window: need fractions 0 <= a < b <= 1, got {fw}")
    diagnostics = DiagnosticsConfig(
        fit_window=fw,
        collect_moments=_get(dd, "collect_moments", "diagnostics", bool, default=True),
        tolerances=tolerances,
    )

    cfg = ScenarioConfig(
        variant=variant,
        kernel=kernel,
        grid=grid,
        time=time,
        initial=initial,
        halfline=halfline,
        radial=radial,
        stepper=stepper,
        correctors=correctors,
        diagnostics=diagnostics,
    )
    if cfg.record_every < cfg.dt:
        raise ConfigError("time.record_every: must be at least dt")
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return parse_config_dict(raw if raw is not None else {})


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out: dict = {
        "variant": cfg.variant,
        "kernel": {"kind": cfg.kernel.kind, "d": cfg.kernel.d},
        "grid": {"h": cfg.grid.h},
        "time": {"t_end": cfg.time.t_end},
        "initial": {"kind": cfg.initial.kind},
        "stepper": {
            "picard_iters": cfg.stepper.picard_iters,
            "picard_tol": cfg.stepper.picard_tol,
        },
        "correctors": {
            "extent_factor": cfg.correctors.extent_factor,
            "tol": cfg.correctors.tol,
        },
        "diagnostics": {
            "fit_window": list(cfg.diagnostics.fit_window),
            "collect_moments": cfg.diagnostics.collect_moments,
            "tolerances": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in sorted(cfg.diagnostics.tolerances.items())
            },
        },
    }
    if cfg.kernel.table is not None:
        out["kernel"]["table"] = list(cfg.kernel.table)
    for key in ("x_min", "x_max", "margin_left", "margin_right"):
        val = getattr(cfg.grid, key)
        if val is not None:
            out["grid"][key] = val
    for key in ("dt", "record_every"):
        val = getattr(cfg.time, key)
        if val is not None:
            out["time"][key] = val
    if cfg.time.snapshot_times:
        out["time"]["snapshot_times"] = list(cfg.time.snapshot_times)
    ini = out["initial"]
    if cfg.initial.kind == "bump":
        ini.update(center=cfg.initial.center, width=cfg.initial.width, amplitude=cfg.initial.amplitude)
    if cfg.initial.kind == "table":
        ini.update(table_x=list(cfg.initial.table_x), table_u=list(cfg.initial.table_u))
    if cfg.initial.mass is not None:
        ini["mass"] = cfg.initial.mass
    for key in ("s0", "s0_minus", "s0_plus", "R0"):
        val = getattr(cfg.initial, key)
        if val is not None:
            ini[key] = val
    if cfg.halfline is not None:
        out["halfline"] = {"A": cfg.halfline.A}
    if cfg.radial is not None:
        out["radial"] = {"N": cfg.radial.N}
    return out


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:12]
