"""Grids, density fields, boundary state and run records.

The habitat is a subset of a fixed uniform grid.  A node is *active* when
it lies strictly inside the current habitat; inactive nodes carry value
zero and an activation time of +inf until the boundary sweeps past them.
The grid is pre-sized from the conservation laws (the mass bound caps how
far any boundary can travel), so apart from the growing half-line case no
reallocation happens during a run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import MarginError
from .kernels import radial_volume_weights, unit_ball_volume

VARIANTS = ("line1fb", "linecs", "halfline", "radial")


@dataclass(eq=False)
class Grid:
    """Uniform grid x0 + h*i, i = 0..n-1."""

    x0: float
    h: float
    n: int

    def __post_init__(self):
        if self.h <= 0 or self.n < 2:
            raise ValueError(f"grid needs h > 0 and n >= 2, got h={self.h}, n={self.n}")
        self._nodes = self.x0 + self.h * np.arange(self.n)

    @property
    def nodes(self) -> np.ndarray:
        return self._nodes

    @property
    def x_end(self) -> float:
        return float(self._nodes[-1])


@dataclass(eq=False)
class DensityField:
    """Density samples plus habitat bookkeeping on a shared grid.

    ``ghost`` is the constant exterior value on (-d, 0) for the half-line
    variant (None otherwise); ``radial_dim`` switches the quadrature to
    shell volumes.  Inactive nodes hold exactly zero.
    """

    grid: Grid
    values: np.ndarray
    active: np.ndarray
    activation_time: np.ndarray
    ghost: float | None = None
    radial_dim: int | None = None
    _vw: np.ndarray | None = dc_field(default=None, repr=False)

    def volume_weights(self) -> np.ndarray:
        if self.radial_dim is None:
            return np.full(self.grid.n, self.grid.h)
        if self._vw is None or len(self._vw) != self.grid.n:
            self._vw = radial_volume_weights(self.radial_dim, self.grid.nodes)
        return self._vw

    def copy(self) -> DensityField:
        return DensityField(
            grid=self.grid,
            values=self.values.copy(),
            active=self.active.copy(),
            activation_time=self.activation_time.copy(),
            ghost=self.ghost,
            radial_dim=self.radial_dim,
        )


@dataclass(frozen=True)
class BoundaryState:
    """Free-boundary position(s) for one variant."""

    variant: str
    s: float | None = None
    s_minus: float | None = None
    s_plus: float | None = None
    R: float | None = None
    N: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "linecs" and not (self.s_minus < self.s_plus):
            raise ValueError("linecs needs s_minus < s_plus")
        if self.variant == "radial" and (self.R < 0 or self.N < 1):
            raise ValueError("radial needs R >= 0 and N >= 1")

    @property
    def length(self) -> float:
        return self.s_plus - self.s_minus

    @property
    def volume(self) -> float:
        """Habitat volume: omega_N R^N for radial, edge position(s) else."""
        if self.variant == "radial":
            return unit_ball_volume(self.N) * self.R**self.N
        if self.variant == "linecs":
            return self.length
        return self.s


def mass(field: DensityField) -> float:
    """Volume-weighted sum over active nodes; the ghost region is excluded."""
    return float(np.dot(field.values, field.volume_weights()))


def sup_norm(field: DensityField) -> float:
    return float(field.values.max(initial=0.0))


def weighted_moment(field: DensityField, weight, anchor: float = 0.0) -> float:
    """Quadrature of u(x) * w(x - anchor) over the active region.

    ``weight`` is evaluated as a callable; tabulated profiles raise
    CoverageError themselves if the anchored range escapes them.
    """
    x = field.grid.nodes
    w = np.asarray(weight(x - anchor), dtype=float)
    return float(np.dot(field.values * field.volume_weights(), w))


def is_active_node(boundary: BoundaryState, x: np.ndarray) -> np.ndarray:
    """Habitat membership test used by init and activation alike."""
    if boundary.variant in ("line1fb", "halfline"):
        inside = x < boundary.s
        if boundary.variant == "halfline":
            inside &= x >= 0.0
        return inside
    if boundary.variant == "linecs":
        return (x > boundary.s_minus) & (x < boundary.s_plus)
    return x < boundary.R


def activate_nodes(
    field: DensityField, boundary_old: BoundaryState, boundary_new: BoundaryState, t: float
) -> DensityField:
    """Mark nodes the boundary swept over during [t - dt, t] as active.

    Fresh nodes start at value zero with activation_time t.  Boundary
    regression is not part of the model and raises.
    """
    if boundary_new.variant != boundary_old.variant:
        raise ValueError("variant mismatch")
    v = boundary_new.variant
    if v in ("line1fb", "halfline"):
        if boundary_new.s < boundary_old.s:
            raise MarginError(f"boundary regressed: {boundary_old.s} -> {boundary_new.s}")
    elif v == "linecs":
        if boundary_new.s_plus < boundary_old.s_plus or boundary_new.s_minus > boundary_old.s_minus:
            raise MarginError("boundary regressed")
    elif boundary_new.R < boundary_old.R:
        raise MarginError(f"boundary regressed: R {boundary_old.R} -> {boundary_new.R}")

    fresh = is_active_node(boundary_new, field.grid.nodes) & ~field.active
    if np.any(fresh):
        field.active[fresh] = True
        field.values[fresh] = 0.0
        field.activation_time[fresh] = t
    return field


def make_field(
    grid: Grid,
    u0: np.ndarray,
    boundary: BoundaryState,
    ghost: float | None = None,
    boundary_tol: float | None = None,
) -> DensityField:
    """Wrap initial samples, validating sign and habitat support.

    u0 must be nonnegative, vanish outside the habitat, and be small
    (<= boundary_tol, default the grid step) at the starting boundary.
    """
    u = np.asarray(u0, dtype=float)
    if u.shape != (grid.n,):
        raise ValueError("u0 does not match the grid")
    if np.any(u < 0):
        raise ValueError("u0 must be nonnegative")
    act = is_active_node(boundary, grid.nodes)
    outside = u[~act]
    if outside.size and outside.max(initial=0.0) > 1e-12:
        raise ValueError("u0 is nonzero outside the habitat")
    tol = grid.h if boundary_tol is None else boundary_tol
    edges = [boundary.s] if boundary.variant in ("line1fb", "halfline") else (
        [boundary.s_minus, boundary.s_plus] if boundary.variant == "linecs" else [boundary.R]
    )
    for edge in edges:
        val = float(np.interp(edge, grid.nodes, u))
        if val > tol:
            raise ValueError(f"u0 does not vanish at the boundary (u({edge}) = {val:g})")
    tau = np.where(act, 0.0, np.inf)
    radial_dim = boundary.N if boundary.variant == "radial" else None
    return DensityField(
        grid=grid,
        values=np.where(act, u, 0.0),
        active=act,
        activation_time=tau,
        ghost=ghost,
        radial_dim=radial_dim,
    )


def _sample_initial(initial, x: np.ndarray) -> np.ndarray:
    if initial.kind == "trivial":
        return np.zeros_like(x)
    if initial.kind == "bump":
        z = (x - initial.center) / initial.width
        return initial.amplitude * np.maximum(0.0, 1.0 - z * z)
    return np.interp(x, initial.table_x, initial.table_u, left=0.0, right=0.0)


def _initial_mass_estimate(initial, one_d: bool, N: int = 1) -> float:
    """Continuum-quadrature estimate used only for grid sizing."""
    if initial.mass is not None:
        return initial.mass
    if initial.kind == "trivial":
        return 0.0
    if initial.kind == "table":
        lo, hi = min(initial.table_x), max(initial.table_x)
    else:
        lo = initial.center - initial.width
        hi = initial.center + initial.width
    xs = np.linspace(lo, hi, 4001)
    u = _sample_initial(initial, xs)
    if one_d:
        return float(np.trapezoid(u, xs))
    xs = xs[xs >= 0] if lo < 0 else xs
    u = _sample_initial(initial, xs)
    omega = unit_ball_volume(N)
    return float(np.trapezoid(omega * N * xs ** (N - 1) * u, xs))


def _support_left(initial, fallback: float) -> float:
    if initial.kind == "bump":
        return initial.center - initial.width
    if initial.kind == "table":
        xs = np.asarray(initial.table_x)
        us = np.asarray(initial.table_u)
        nz = xs[us > 1e-14]
        return float(nz.min()) if nz.size else fallback
    return fallback


def init_from_config(cfg, kernel) -> tuple[DensityField, BoundaryState, dict]:
    """Build the pre-sized grid, initial field and boundary for a scenario.

    Grid extents come from the conservation laws: the boundary can never
    outrun the initial mass, so habitat growth plus one kernel reach plus
    a pad bounds the needed span.  The far-left extent of the whole-line
    layout additionally covers diffusive leakage over the run duration,
    sized from the kernel's second moment.  Explicit grid.x_min/x_max
    override everything.
    """
    from .kernels import second_moment  # local import to keep module load light

    variant = cfg.variant
    h = cfg.grid.h
    d = kernel.d
    q = second_moment(kernel)
    ini = cfg.initial
    meta: dict = {"q": q}

    if variant == "line1fb":
        m_est = _initial_mass_estimate(ini, one_d=True)
        pad_r = cfg.grid.margin_right if cfg.grid.margin_right is not None else 0.5 * d + 0.5
        pad_l = (
            cfg.grid.margin_left
            if cfg.grid.margin_left is not None
            else 2.0 * d + 9.0 * math.sqrt(2.0 * q * cfg.time.t_end)
        )
        x_max = cfg.grid.x_max if cfg.grid.x_max is not None else ini.s0 + m_est + d + pad_r
        x_min = (
            cfg.grid.x_min
            if cfg.grid.x_min is not None
            else min(_support_left(ini, ini.s0 - d), ini.s0) - pad_l
        )
        boundary = BoundaryState(variant="line1fb", s=ini.s0)
    elif variant == "linecs":
        m_est = _initial_mass_estimate(ini, one_d=True)
        pad = m_est + d + 0.5 * d + 0.5
        pad_l = cfg.grid.margin_left if cfg.grid.margin_left is not None else pad
        pad_r = cfg.grid.margin_right if cfg.grid.margin_right is not None else pad
        x_min = cfg.grid.x_min if cfg.grid.x_min is not None else ini.s0_minus - pad_l
        x_max = cfg.grid.x_max if cfg.grid.x_max is not None else ini.s0_plus + pad_r
        boundary = BoundaryState(variant="linecs", s_minus=ini.s0_minus, s_plus=ini.s0_plus)
    elif variant == "halfline":
        m_est = _initial_mass_estimate(ini, one_d=True)
        x_min = 0.0
        if cfg.grid.x_max is not None:
            x_max = cfg.grid.x_max
        elif cfg.halfline.A > 0:
            # the boundary creeps indefinitely; start modest, the stepper
            # doubles the extent as needed
            x_max = ini.s0 + m_est + max(8.0 * d, 2.0)
        else:
            pad_r = cfg.grid.margin_right if cfg.grid.margin_right is not None else 0.5 * d + 0.5
            x_max = ini.s0 + m_est + d + pad_r
        boundary = BoundaryState(variant="halfline", s=ini.s0)
    else:
        N = cfg.radial.N
        m_est = _initial_mass_estimate(ini, one_d=False, N=N)
        omega = unit_ball_volume(N)
        r_inf = (m_est / omega + ini.R0**N) ** (1.0 / N)
        pad_r = cfg.grid.margin_right if cfg.grid.margin_right is not None else 0.5 * d + 0.5
        x_min = 0.0
        x_max = cfg.grid.x_max if cfg.grid.x_max is not None else r_inf + d + pad_r
        boundary = BoundaryState(variant="radial", R=ini.R0, N=N)

    # snap extents outward onto the h lattice so that, e.g., mirrored
    # scenarios produce mirrored node sets
    x_min = math.floor(x_min / h + 1e-9) * h
    x_max = math.ceil(x_max / h - 1e-9) * h
    n = int(round((x_max - x_min) / h)) + 1
    grid = Grid(x0=x_min, h=h, n=n)
    u0 = _sample_initial(ini, grid.nodes)
    ghost = cfg.halfline.A if variant == "halfline" else None
    fld = make_field(grid, u0, boundary, ghost=ghost)
    if ini.mass is not None:
        m_disc = mass(fld)
        if ini.mass > 0 and m_disc <= 0:
            raise ValueError("initial.mass requested but the sampled datum has no mass")
        if m_disc > 0:
            fld.values *= ini.mass / m_disc
    meta["mass0"] = mass(fld)
    if variant == "line1fb":
        meta["s_inf"] = boundary.s + meta["mass0"]
    elif variant == "linecs":
        meta["l_inf"] = boundary.length + meta["mass0"]
    elif variant == "radial":
        omega = unit_ball_volume(boundary.N)
        meta["R_inf"] = (meta["mass0"] / omega + boundary.R ** boundary.N) ** (1.0 / boundary.N)
    return fld, boundary, meta


@dataclass(eq=False)
class Snapshot:
    t: float
    x: np.ndarray
    u: np.ndarray


@dataclass(eq=False)
class RunRecord:
    """Time series and snapshots collected by the stepper."""

    variant: str
    times: list = dc_field(default_factory=list)
    series: dict = dc_field(default_factory=dict)
    snapshots: list = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    def append(self, t: float, **row: float) -> None:
        self.times.append(t)
        for key, val in row.items():
            self.series.setdefault(key, []).append(float(val))

    def finalize(self) -> RunRecord:
        self.times = np.asarray(self.times, dtype=float)
        self.series = {k: np.asarray(v, dtype=float) for k, v in self.series.items()}
        return self

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return np.asarray(self.times, dtype=float)
        return np.asarray(self.series[name], dtype=float)
