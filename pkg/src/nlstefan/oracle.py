"""Brute-force fixed-point solver and property checks.

The stepper advances one step at a time; this module instead iterates
the problem's defining map on a whole space-time cylinder: given a
trajectory (u, boundary), the next iterate rebuilds the boundary by
integrating the flux of the input trajectory in time, assigns each node
the crossing time of the new boundary, and rebuilds u from the
variation-of-constants integral started at that crossing time.  The map
contracts for short horizons, so long horizons are split into slabs that
restart from the previous slab's final state.  None of the stepper's
update algebra is reused; agreement between the two is a genuine
cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .config import ScenarioConfig
from .errors import ConvergenceError
from .kernels import (
    build_kernel,
    convolve_1d,
    convolve_radial,
    radial_reduce,
    radial_volume_weights,
    unit_ball_volume,
)
from .state import RunRecord, Snapshot, init_from_config

_MAX_SWEEPS = 200
_BOUNDARY_KEYS = {
    "line1fb": ("s",),
    "halfline": ("s",),
    "linecs": ("s_minus", "s_plus"),
    "radial": ("R",),
}


@dataclass
class PicardSolution:
    """Fixed point of the trajectory map on a space-time grid."""

    variant: str
    times: np.ndarray
    nodes: np.ndarray
    u: np.ndarray
    boundary: dict
    residual: float
    sweeps: int
    dim: int | None = None
    contraction_ratios: list = dc_field(default_factory=list)
    slab_edges: list = dc_field(default_factory=list)

    @property
    def record(self) -> RunRecord:
        """Boundary and mass series in run-record form."""
        rec = RunRecord(variant=self.variant)
        vol = self._volumes()
        for j, t in enumerate(self.times):
            row = {k: float(v[j]) for k, v in self.boundary.items()}
            row["mass"] = float(self.u[j] @ vol)
            row["sup_u"] = float(self.u[j].max(initial=0.0))
            rec.append(float(t), **row)
        rec.snapshots.append(
            Snapshot(t=float(self.times[-1]), x=self.nodes.copy(), u=self.u[-1].copy())
        )
        rec.finalize()
        if self.dim is not None:
            rec.meta["N"] = self.dim
        return rec

    def _volumes(self) -> np.ndarray:
        if self.variant == "radial":
            return radial_volume_weights(self.dim, self.nodes)
        h = float(self.nodes[1] - self.nodes[0])
        return np.full(len(self.nodes), h)


def _crossing_times(times: np.ndarray, path: np.ndarray, xs: np.ndarray, start: float):
    """First time the nondecreasing path reaches each node beyond start.

    Nodes the path never reaches get +inf.  Linear interpolation inside
    a step inverts the path exactly where it is strictly increasing and
    lands on the late edge of any flat stretch.
    """
    tau = np.zeros(len(xs))
    beyond = xs > start
    # np.interp wants strictly increasing samples; drop flat repeats
    keep = np.concatenate([[True], np.diff(path) > 1e-300])
    tau[beyond] = np.interp(xs[beyond], path[keep], times[keep], right=np.inf)
    tau[xs > path[-1]] = np.inf
    return tau


def _cumtrapz(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros(len(values))
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1])) * dt
    return out


def _outward_flux(w: np.ndarray, vol: np.ndarray, xs: np.ndarray, path: np.ndarray, side: str):
    """Volume-weighted integral of w beyond the boundary, per time.

    The cell the boundary sits in contributes its overlap fraction, so
    the flux is continuous in the path.  A sharp node cutoff would make
    the fixed-point map jump at lattice crossings, and when the solution
    parks the boundary near a threshold the iteration locks into a
    two-cycle instead of converging.
    """
    h = xs[1] - xs[0]
    if side == "right":
        frac = np.clip((xs[None, :] + 0.5 * h - path[:, None]) / h, 0.0, 1.0)
    else:
        frac = np.clip((path[:, None] - (xs[None, :] - 0.5 * h)) / h, 0.0, 1.0)
    return np.einsum("ji,ji,i->j", frac, w, vol)


def _sweep(variant, dim, times, xs, vol, u0, bnd0, apply_avg, u, bnd):
    """One application of the trajectory map; returns (u_new, bnd_new)."""
    n_t = len(times)
    dt = times[1] - times[0]
    w = np.empty_like(u)
    for j in range(n_t):
        w[j] = apply_avg(u[j])

    # rebuild boundaries from the input trajectory's outward flux
    new_bnd = {}
    if variant in ("line1fb", "halfline"):
        s_new = bnd0["s"][0] + _cumtrapz(_outward_flux(w, vol, xs, bnd["s"], "right"), dt)
        new_bnd["s"] = s_new
        active = xs[None, :] < s_new[:, None]
        tau = _crossing_times(times, s_new, xs, bnd0["s"][0])
        if variant == "halfline":
            active &= xs[None, :] >= 0.0
    elif variant == "linecs":
        sp = bnd0["s_plus"][0] + _cumtrapz(_outward_flux(w, vol, xs, bnd["s_plus"], "right"), dt)
        sm = bnd0["s_minus"][0] - _cumtrapz(_outward_flux(w, vol, xs, bnd["s_minus"], "left"), dt)
        new_bnd["s_plus"], new_bnd["s_minus"] = sp, sm
        active = (xs[None, :] < sp[:, None]) & (xs[None, :] > sm[:, None])
        tau_p = _crossing_times(times, sp, xs, bnd0["s_plus"][0])
        tau_m = _crossing_times(times, -sm, -xs, -bnd0["s_minus"][0])
        tau = np.where(xs > bnd0["s_plus"][0], tau_p, 0.0)
        tau = np.where(xs < bnd0["s_minus"][0], tau_m, tau)
    elif variant == "radial":
        omega = unit_ball_volume(dim)
        vol_path = omega * bnd0["R"][0] ** dim + _cumtrapz(
            _outward_flux(w, vol, xs, bnd["R"], "right"), dt
        )
        r_new = (vol_path / omega) ** (1.0 / dim)
        new_bnd["R"] = r_new
        active = xs[None, :] < r_new[:, None]
        tau = _crossing_times(times, r_new, xs, bnd0["R"][0])
    else:
        raise ValueError(f"unknown variant {variant!r}")

    # variation of constants from each node's activation time; work with
    # e^{t} w so the history integral has a running antiderivative
    weighted = np.exp(times)[:, None] * w
    cumulative = np.zeros_like(weighted)
    cumulative[1:] = np.cumsum(0.5 * (weighted[1:] + weighted[:-1]), axis=0) * dt
    at_tau = np.zeros(len(xs))
    reached = np.isfinite(tau)
    for i in np.nonzero(reached)[0]:
        at_tau[i] = np.interp(tau[i], times, cumulative[:, i])
    integral = np.where(reached[None, :], cumulative - at_tau[None, :], 0.0)
    u_new = np.exp(-times)[:, None] * (u0[None, :] + integral)
    u_new = np.where(active, u_new, 0.0)
    # trapezoid wiggle can dip a hair below zero; the solution class is u >= 0
    np.clip(u_new, 0.0, None, out=u_new)
    return u_new, new_bnd


def _trajectory_distance(vol, u_a, bnd_a, u_b, bnd_b):
    du = float(np.max(np.abs(u_a - u_b) @ vol))
    ds = max(float(np.max(np.abs(bnd_a[k] - bnd_b[k]))) for k in bnd_a)
    return du + ds


def picard_solve(
    cfg: ScenarioConfig,
    T: float | None = None,
    tol: float = 1e-10,
    slab: float | None = None,
) -> PicardSolution:
    """Solve by iterating the trajectory map to a fixed point.

    Works on slabs of length ``slab`` (default min(1, T)); within each
    slab the map is iterated until successive trajectories differ by
    less than ``tol`` in sup-in-time of the volume-weighted l1 norm plus
    sup of the boundary gap.  If the measured contraction ratio exceeds
    0.5 the slab is halved and rerun; this mirrors the shortness
    condition under which the map provably contracts.
    """
    total = float(T if T is not None else cfg.time.t_end)
    n_total = max(1, int(round(total / cfg.dt)))
    dt = total / n_total
    kernel = build_kernel(cfg.kernel.kind, cfg.kernel.d, cfg.grid.h, table=cfg.kernel.table)
    fld, bnd_state, _meta = init_from_config(cfg, kernel)
    xs = fld.grid.nodes
    vol = fld.volume_weights()
    variant = cfg.variant
    dim = bnd_state.N if variant == "radial" else None

    if variant == "radial":
        matrix = radial_reduce(kernel, dim, xs)
        apply_avg = lambda v: convolve_radial(matrix, v)
    elif variant == "halfline":
        m = kernel.half_width
        ghost = np.full(m, cfg.halfline.A)
        apply_avg = lambda v: convolve_1d(kernel, np.concatenate([ghost, v]))[m:]
    else:
        apply_avg = lambda v: convolve_1d(kernel, v)

    keys = _BOUNDARY_KEYS[variant]
    cur_state = {k: getattr(bnd_state, k) for k in keys}
    u0 = fld.values.copy()

    slab_len = float(slab if slab is not None else min(1.0, total))
    out_times = [np.array([0.0])]
    out_u = [u0[None, :]]
    out_bnd = {k: [np.array([cur_state[k]])] for k in keys}
    ratios: list = []
    edges: list = []
    sweeps_total = 0
    residual = 0.0

    t_done = 0.0
    while t_done < total - 1e-12:
        cur_slab = min(slab_len, total - t_done)
        while True:
            n_steps = max(1, int(round(cur_slab / dt)))
            times = np.linspace(0.0, n_steps * dt, n_steps + 1)
            bnd0 = {k: np.full(n_steps + 1, cur_state[k]) for k in keys}
            u = np.repeat(u0[None, :], n_steps + 1, axis=0)
            bnd = {k: v.copy() for k, v in bnd0.items()}
            dist_prev = None
            slab_ratios: list = []
            converged = False
            for _ in range(_MAX_SWEEPS):
                u_new, bnd_new = _sweep(
                    variant, dim, times, xs, vol, u0, bnd0, apply_avg, u, bnd
                )
                dist = _trajectory_distance(vol, u_new, bnd_new, u, bnd)
                u, bnd = u_new, bnd_new
                sweeps_total += 1
                if dist_prev is not None and dist_prev > 0:
                    slab_ratios.append(dist / dist_prev)
                dist_prev = dist
                if dist < tol:
                    residual = max(residual, dist)
                    converged = True
                    break
            measured = max(slab_ratios[1:], default=0.0)
            if converged and measured <= 0.5:
                ratios.extend(slab_ratios)
                break
            if cur_slab <= 4 * dt + 1e-12:
                raise ConvergenceError(
                    f"trajectory map does not contract on a {cur_slab:g}-long slab "
                    f"(measured ratio {measured:.3f})"
                )
            cur_slab = max(4 * dt, 0.5 * cur_slab)

        out_times.append(times[1:] + t_done)
        out_u.append(u[1:])
        for k in keys:
            out_bnd[k].append(bnd[k][1:])
        t_done += float(times[-1])
        edges.append(t_done)
        u0 = u[-1].copy()
        cur_state = {k: float(bnd[k][-1]) for k in keys}

    return PicardSolution(
        variant=variant,
        times=np.concatenate(out_times),
        nodes=xs,
        u=np.concatenate(out_u, axis=0),
        boundary={k: np.concatenate(v) for k, v in out_bnd.items()},
        residual=residual,
        sweeps=sweeps_total,
        dim=dim,
        contraction_ratios=ratios,
        slab_edges=edges,
    )


@dataclass(frozen=True)
class Discrepancy:
    boundary_gap: float
    l1_gap: float


def compare_runs(record_a: RunRecord, record_b: RunRecord) -> Discrepancy:
    """Sup-in-time gaps between two records of the same scenario.

    Boundary series are compared at the coarser record's times (linear
    interpolation in between); field snapshots, where both records carry
    them at matching times on the same grid, by the volume-weighted l1
    norm.
    """
    if record_a.variant != record_b.variant:
        raise ValueError(f"cannot compare {record_a.variant!r} with {record_b.variant!r}")
    keys = _BOUNDARY_KEYS[record_a.variant]
    coarse, fine = (
        (record_a, record_b)
        if len(record_a.times) <= len(record_b.times)
        else (record_b, record_a)
    )
    tc = np.asarray(coarse.times, dtype=float)
    gap = 0.0
    for k in keys:
        own = np.asarray(coarse.series[k], dtype=float)
        other = np.interp(
            tc, np.asarray(fine.times, dtype=float), np.asarray(fine.series[k], dtype=float)
        )
        gap = max(gap, float(np.max(np.abs(own - other))))

    l1 = 0.0
    snaps_b = {round(float(s.t), 9): s for s in record_b.snapshots}
    for sa in record_a.snapshots:
        sb = snaps_b.get(round(float(sa.t), 9))
        if sb is None:
            continue
        if len(sa.x) != len(sb.x) or not np.allclose(sa.x, sb.x):
            raise ValueError(f"snapshot grids at t={sa.t:g} do not match")
        if record_a.variant == "radial":
            weights = radial_volume_weights(int(record_a.meta["N"]), sa.x)
        else:
            h = float(sa.x[1] - sa.x[0]) if len(sa.x) > 1 else 1.0
            weights = np.full(len(sa.x), h)
        l1 = max(l1, float(np.abs(sa.u - sb.u) @ weights))
    return Discrepancy(boundary_gap=gap, l1_gap=l1)


@dataclass(frozen=True)
class ComparisonReport:
    ordered: bool
    worst_field_violation: float
    worst_boundary_violation: float
    first_violation_time: float | None


def check_comparison(cfg_low: ScenarioConfig, cfg_high: ScenarioConfig) -> ComparisonReport:
    """Run an ordered pair of scenarios and verify order is preserved.

    The initial data must satisfy u0 <= u0_hat nodewise with the initial
    boundaries ordered the same way; both configs must agree on variant,
    kernel, grid, and time discretization.  Field order is checked at
    every snapshot time both runs carry, boundary order at every
    recorded time.
    """
    from .stepper import run as _run

    if cfg_low.variant != cfg_high.variant:
        raise ValueError("comparison needs a single variant")
    for section in ("kernel", "grid", "time"):
        if getattr(cfg_low, section) != getattr(cfg_high, section):
            raise ValueError(f"comparison needs identical {section} sections")

    kernel = build_kernel(
        cfg_low.kernel.kind, cfg_low.kernel.d, cfg_low.grid.h, table=cfg_low.kernel.table
    )
    fld_lo, bnd_lo, _ = init_from_config(cfg_low, kernel)
    fld_hi, bnd_hi, _ = init_from_config(cfg_high, kernel)
    if len(fld_lo.grid.nodes) != len(fld_hi.grid.nodes) or not np.allclose(
        fld_lo.grid.nodes, fld_hi.grid.nodes
    ):
        raise ValueError("comparison needs a shared grid; pin grid.x_min and grid.x_max")
    if np.any(fld_lo.values > fld_hi.values + 1e-12):
        raise ValueError("initial data are not ordered: lower datum exceeds upper")

    def boundary_ordered(lo, hi):
        if cfg_low.variant == "linecs":
            return lo.s_minus >= hi.s_minus - 1e-12 and lo.s_plus <= hi.s_plus + 1e-12
        if cfg_low.variant == "radial":
            return lo.R <= hi.R + 1e-12
        return lo.s <= hi.s + 1e-12

    if not boundary_ordered(bnd_lo, bnd_hi):
        raise ValueError("initial boundaries are not ordered")

    rec_lo = _run(cfg_low)
    rec_hi = _run(cfg_high)

    worst_b = 0.0
    first_t = None
    t_lo = np.asarray(rec_lo.times, dtype=float)
    for k in _BOUNDARY_KEYS[cfg_low.variant]:
        a = np.asarray(rec_lo.series[k], dtype=float)
        b = np.asarray(rec_hi.series[k], dtype=float)
        viol = (b - a) if k == "s_minus" else (a - b)
        w = float(np.max(viol))
        if w > worst_b:
            worst_b = w
            if w > 1e-10:
                first_t = float(t_lo[int(np.argmax(viol > 1e-10))])

    worst_u = 0.0
    snaps_hi = {round(float(s.t), 9): s for s in rec_hi.snapshots}
    for sa in rec_lo.snapshots:
        sb = snaps_hi.get(round(float(sa.t), 9))
        if sb is None:
            continue
        viol = float(np.max(sa.u - sb.u, initial=0.0))
        if viol > worst_u:
            worst_u = viol
            if viol > 1e-10 and first_t is None:
                first_t = float(sa.t)

    return ComparisonReport(
        ordered=worst_u <= 1e-10 and worst_b <= 1e-10,
        worst_field_violation=worst_u,
        worst_boundary_violation=worst_b,
        first_violation_time=first_t,
    )
