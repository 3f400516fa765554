"""Post-processing of run records into quantitative claims.

Everything here consumes finished RunRecords (or snapshot arrays) and
produces numbers: decay exponents, limit positions from the conservation
identity, the weighted-moment limit M*, the dipole-profile discrepancy,
the refined front-speed constant, and the half-line square-root law.
Fits are plain least squares on fixed windows, default [T/4, T]; no
adaptive transient detection, so two runs of the same scenario always
fit the same points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import medfilt

from .correctors import CorrectorProfile
from .errors import NumericsError
from .kernels import Kernel, unit_ball_volume
from .state import RunRecord


@dataclass(frozen=True)
class RateFit:
    """Least-squares rate over a time window.

    For power laws ``exponent`` is the slope in (log t, log y); for
    exponentials it is the decay rate lambda in y ~ prefactor e^{-lambda t}.
    ``rms_residual`` is measured in the fit's log coordinates.
    """

    exponent: float
    prefactor: float
    window: tuple[float, float]
    rms_residual: float


def default_window(times) -> tuple[float, float]:
    t_end = float(np.asarray(times)[-1])
    return (0.25 * t_end, t_end)


def _fit_points(times, values, window):
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = default_window(t)
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"fit window must have t_lo < t_hi, got ({lo}, {hi})")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 2:
        raise ValueError(f"fit window ({lo}, {hi}) contains {int(sel.sum())} samples")
    if np.any(y[sel] <= 0):
        raise ValueError("series must be positive on the fit window")
    return t[sel], y[sel], (lo, hi)


def fit_power_law(times, values, window=None) -> RateFit:
    """Fit y ~ C t^p on the window; returns p as the exponent."""
    t, y, window = _fit_points(times, values, window)
    if t[0] <= 0:
        raise ValueError("power-law fit needs strictly positive times")
    coeffs, res = _line_fit(np.log(t), np.log(y))
    return RateFit(
        exponent=coeffs[0],
        prefactor=math.exp(coeffs[1]),
        window=window,
        rms_residual=res,
    )


def fit_exponential(times, values, window=None) -> RateFit:
    """Fit y ~ C e^{-lambda t}; the exponent is lambda (positive = decay)."""
    t, y, window = _fit_points(times, values, window)
    coeffs, res = _line_fit(t, np.log(y))
    return RateFit(
        exponent=-coeffs[0],
        prefactor=math.exp(coeffs[1]),
        window=window,
        rms_residual=res,
    )


def _line_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return (float(slope), float(intercept)), float(np.sqrt(np.mean(resid**2)))


def limit_boundary(record: RunRecord) -> float:
    """Limit position of the boundary from the conservation identity.

    The boundary update converts mass into habitat exactly, so the final
    position plus the habitat-equivalent of the remaining mass equals the
    limit, at any stopping time: s(T)+M(T) for the line, the interval
    length plus M(T) for two boundaries, (V(T)+M(T) over the unit-ball
    volume)^{1/N} for the radial ball.
    """
    variant = record.variant
    mass_T = record.series["mass"][-1]
    if variant == "line1fb":
        return record.series["s"][-1] + mass_T
    if variant == "linecs":
        length_T = record.series["s_plus"][-1] - record.series["s_minus"][-1]
        return length_T + mass_T
    if variant == "radial":
        dim = int(record.meta["N"])
        omega = unit_ball_volume(dim)
        vol_T = omega * record.series["R"][-1] ** dim
        return ((vol_T + mass_T) / omega) ** (1.0 / dim)
    raise ValueError(
        "halfline runs trade mass with the boundary source; no conservation limit"
    )


def conservation_drift(record: RunRecord) -> float:
    """Worst deviation of the conserved boundary+mass combination.

    The quantity tracked is the same one limit_boundary evaluates at the
    final time: s+M, length+M, or omega_N R^N + M.  The stepper moves
    mass into habitat with the identical factor on both sides, so this
    should stay at its initial value to rounding.
    """
    variant = record.variant
    mass_t = np.asarray(record.series["mass"], dtype=float)
    if variant == "line1fb":
        conserved = np.asarray(record.series["s"], dtype=float) + mass_t
    elif variant == "linecs":
        length = np.asarray(record.series["s_plus"], dtype=float) - np.asarray(
            record.series["s_minus"], dtype=float
        )
        conserved = length + mass_t
    elif variant == "radial":
        dim = int(record.meta["N"])
        omega = unit_ball_volume(dim)
        conserved = omega * np.asarray(record.series["R"], dtype=float) ** dim + mass_t
    else:
        raise ValueError(
            "halfline runs trade mass with the boundary source; nothing is conserved"
        )
    return float(np.abs(conserved - conserved[0]).max())


@dataclass(frozen=True)
class MomentLimit:
    """Extrapolated limit of the anchored weighted-moment series.

    ``value`` extrapolates the tail model M* + c t^{-1/2}; ``last`` is
    the final recorded sample, which brackets the limit from above since
    the series decreases.  ``tail_bound`` bounds |last - limit| from the
    measured increment decay.
    """

    value: float
    last: float
    tail_bound: float
    cross_gap: float
    cross_bound: float
    worst_increase: float


def limit_moment(
    record: RunRecord,
    phi_profile: CorrectorProfile,
    tol: float = 1e-10,
    window=None,
) -> MomentLimit:
    """Limit M* of the corrector-weighted moment of a line run.

    The recorded M_phi series (weights anchored at the limit position) is
    nonincreasing for the scheme up to solver precision; M* is the
    intercept of a least-squares tail model M* + c t^{-1/2} over the
    window, cross-checked against the last sample via a tail bound
    integrated from the measured decay of the increments.  Also checks
    the recorded plain first moment against M_phi: the two differ by at
    most the corrector's affine-correction constant times the remaining
    mass.
    """
    t = np.asarray(record.times, dtype=float)
    m_phi = np.asarray(record.series["M_phi"], dtype=float)
    increments = np.diff(m_phi)
    worst = float(increments.max(initial=0.0))
    if worst > tol:
        raise NumericsError(
            f"weighted moment rises by {worst:.3e} in one step (tol {tol:.1e}); "
            "the corrector weights do not match the run quadrature"
        )
    if window is None:
        window = default_window(t)
    sel = (t >= window[0]) & (t <= window[1])
    # model M_phi(t) = M* + c t^{-1/2} on the window
    X = np.vstack([np.ones(int(sel.sum())), t[sel] ** -0.5]).T
    coef, *_ = np.linalg.lstsq(X, m_phi[sel], rcond=None)
    # tail of the limit from |dM_phi/dt| <= C t^{-3/2}
    mid = 0.5 * (t[1:] + t[:-1])
    rate = np.abs(increments) / np.diff(t)
    sel_mid = (mid >= window[0]) & (mid <= window[1])
    c_tail = float((rate[sel_mid] * mid[sel_mid] ** 1.5).max(initial=0.0))
    tail = 2.0 * c_tail / math.sqrt(t[-1])

    first = np.asarray(record.series["first_moment"], dtype=float)
    cross_gap = float(abs(m_phi[-1] - first[-1]))
    cross_bound = float(phi_profile.affine_bound * record.series["mass"][-1])
    return MomentLimit(
        value=float(coef[0]),
        last=float(m_phi[-1]),
        tail_bound=tail,
        cross_gap=cross_gap,
        cross_bound=cross_bound,
        worst_increase=worst,
    )


def asymptotic_profile(
    x, t: float, m_star: float, phi_profile: CorrectorProfile, q: float, s_infinity: float
):
    """Predicted late-time profile at the nodes x.

    The shape is the corrector times a Gaussian factor; away from the
    boundary layer it merges into m_star times the dipole of the heat
    kernel with diffusivity q centered at the limit position.  Writing
    the dipole as (s_infinity - x) times a Gaussian cancels the
    denominator of the corrector ratio, so the expression is regular
    through x = s_infinity.
    """
    xi = np.asarray(x, dtype=float) - s_infinity
    phi_vals = phi_profile.evaluate(xi, extend=True)
    gauss = np.exp(-(xi**2) / (4.0 * q * t)) / math.sqrt(4.0 * math.pi * q * t)
    return 2.0 * m_star * phi_vals * gauss / (2.0 * q * t)


def profile_error(
    x,
    u,
    t: float,
    m_star: float,
    phi_profile: CorrectorProfile,
    q: float,
    s_infinity: float,
    s_cut: float,
) -> float:
    """Weighted sup distance between a snapshot and the predicted profile.

    The weight t^{3/2}/(|x|+1) matches the size of the profile itself, so
    a vanishing result means convergence in the profile's own scale.
    Only nodes with x < s_cut enter; s_cut must stay strictly below the
    limit position to exclude the contact point.
    """
    if t <= 0:
        raise ValueError(f"need t > 0, got {t}")
    if s_cut >= s_infinity:
        raise ValueError(f"s_cut must lie below s_infinity ({s_cut} >= {s_infinity})")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    sel = x < s_cut
    if not sel.any():
        raise ValueError("no nodes below s_cut")
    target = asymptotic_profile(x[sel], t, m_star, phi_profile, q, s_infinity)
    weight = t**1.5 / (np.abs(x[sel]) + 1.0)
    return float(np.max(weight * np.abs(u[sel] - target)))


def refined_speed_constant(
    kernel: Kernel, phi_profile: CorrectorProfile, q: float, m_star: float
) -> float:
    """Predicted limit of t^{3/2} times the front speed.

    Quadrature of J(x - y) phi(y) over the exchange cell y in (-d, 0),
    x in (0, d), scaled by m_star/(2 sqrt(pi) q^{3/2}).
    """
    d, h = kernel.d, kernel.h
    n = max(2, int(round(d / h)) + 1)
    xs = np.linspace(0.0, d, n)
    ys = np.linspace(-d, 0.0, n)
    jmat = kernel.evaluate(xs[:, None] - ys[None, :])
    vals = jmat * phi_profile.evaluate(ys)[None, :]
    integral = float(np.trapezoid(np.trapezoid(vals, ys, axis=1), xs))
    return m_star / (2.0 * math.sqrt(math.pi) * q**1.5) * integral


def front_speed(record: RunRecord):
    """Per-record boundary speed, median-smoothed.

    Returns interval midpoints and ds/dt over each recorded interval,
    passed through a centered 5-sample median to flatten the ripple a
    front crossing one node at a time imprints on the raw increments.
    """
    t = np.asarray(record.times, dtype=float)
    key = "R" if record.variant == "radial" else "s"
    s = np.asarray(record.series[key], dtype=float)
    mid = 0.5 * (t[1:] + t[:-1])
    rate = np.diff(s) / np.diff(t)
    if len(rate) >= 5:
        rate = medfilt(rate, kernel_size=5)
    return mid, rate


def measured_speed_level(record: RunRecord, window=None) -> float:
    """Average of t^{3/2} ds/dt over the window."""
    mid, rate = front_speed(record)
    if window is None:
        window = default_window(mid)
    sel = (mid >= window[0]) & (mid <= window[1])
    if not sel.any():
        raise ValueError(f"no speed samples in window {window}")
    return float(np.mean(mid[sel] ** 1.5 * rate[sel]))


@dataclass(frozen=True)
class GrowthFit:
    """Half-line square-root law: moment growth rate vs front constant."""

    F_infinity: float
    c_star_pred: float
    c_star_meas: float
    c_star_late: float
    F_worst_dip: float
    clock_worst_dip: float


def halfline_growth(
    record: RunRecord, C1: float, A: float, window=None
) -> GrowthFit:
    """Growth rate of the psi-weighted moment and the front constant.

    F(t) = M_psi(t)/t converges to F_infinity; the front then spreads
    like c* sqrt(t) with c*^2 = 2 C1 A - 2 F_infinity.  Both F_infinity
    and the measured c* are extrapolated by fitting a + b t^{-1/2} over
    the window ([T/4, T] by default); c_star_late repeats the c* fit on
    [T/2, T] as a stability probe.

    Monotonicity of F is reported two ways.  ``clock_worst_dip`` is the
    worst per-step drop of M_psi(t)/(1 - e^{-t}): for a trivial datum the
    update multiplies the moment by at least (1-e^{-t_{n+1}})/(1-e^{-t_n})
    each step -- the source term contributes the full gain while the
    decayed part telescopes -- so this quantity is nondecreasing for the
    scheme up to roundoff, step by step.  ``F_worst_dip`` tracks the raw
    t-normalization, which inherits a sawtooth from node activation at
    any fixed grid spacing and is only monotone on average.
    """
    if A <= 0:
        raise ValueError(f"growth analysis needs A > 0, got {A}")
    t = np.asarray(record.times, dtype=float)
    m_psi = np.asarray(record.series["M_psi"], dtype=float)
    s = np.asarray(record.series["s"], dtype=float)
    pos = t > 0
    tp, mp, sp = t[pos], m_psi[pos], s[pos]
    F = mp / tp
    if window is None:
        window = default_window(t)

    def tail_fit(values, lo, hi):
        sel = (tp >= lo) & (tp <= hi)
        X = np.vstack([np.ones(int(sel.sum())), tp[sel] ** -0.5]).T
        coef, *_ = np.linalg.lstsq(X, values[sel], rcond=None)
        return float(coef[0])

    f_inf = tail_fit(F, *window)
    disc = 2.0 * C1 * A - 2.0 * f_inf
    if disc <= 0:
        raise NumericsError(
            f"2 C1 A - 2 F_infinity = {disc:.3e} <= 0; corrector constant and "
            "moment growth are inconsistent"
        )
    ratio = sp / np.sqrt(tp)
    c_meas = tail_fit(ratio, *window)
    c_late = tail_fit(ratio, 0.5 * (window[0] + window[1]), window[1])
    clock = mp / -np.expm1(-tp)
    return GrowthFit(
        F_infinity=f_inf,
        c_star_pred=math.sqrt(disc),
        c_star_meas=c_meas,
        c_star_late=c_late,
        F_worst_dip=float(np.diff(F).min(initial=0.0)),
        clock_worst_dip=float(np.diff(clock).min(initial=0.0)),
    )


def monotone_flags(record: RunRecord, tol: float = 1e-10) -> dict:
    """Per-step monotonicity checks of the recorded series.

    Returns a dict of booleans: boundary monotone in the right direction
    for the variant, and mass nonincreasing where no source feeds it.
    """
    flags = {}
    diffs = lambda key: np.diff(np.asarray(record.series[key], dtype=float))
    if record.variant == "line1fb":
        flags["s_nondecreasing"] = bool((diffs("s") >= -tol).all())
        flags["mass_nonincreasing"] = bool((diffs("mass") <= tol).all())
    elif record.variant == "linecs":
        flags["s_plus_nondecreasing"] = bool((diffs("s_plus") >= -tol).all())
        flags["s_minus_nonincreasing"] = bool((diffs("s_minus") <= tol).all())
        flags["mass_nonincreasing"] = bool((diffs("mass") <= tol).all())
    elif record.variant == "halfline":
        flags["s_nondecreasing"] = bool((diffs("s") >= -tol).all())
        if record.meta.get("A", 0.0) == 0.0:
            flags["mass_nonincreasing"] = bool((diffs("mass") <= tol).all())
    elif record.variant == "radial":
        flags["R_nondecreasing"] = bool((diffs("R") >= -tol).all())
        flags["mass_nonincreasing"] = bool((diffs("mass") <= tol).all())
    if "M_phi" in record.series:
        flags["weighted_moment_nonincreasing"] = bool((diffs("M_phi") <= tol).all())
    return flags
