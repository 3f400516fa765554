"""Figure rendering for run records and diagnostics.

Everything draws through the Agg backend and writes PNG files next to
the delimited output, so runs on headless boxes produce inspectable
pictures without a display server.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_BOUNDARY_LABELS = {
    "s": "s(t)",
    "s_minus": "s-(t)",
    "s_plus": "s+(t)",
    "R": "R(t)",
}
_LIMIT_KEYS = {"line1fb": "s_inf", "linecs": "l_inf", "radial": "R_inf"}


def _save(fig, outdir: str, name: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_series(record, outdir: str, basename: str = "series") -> str:
    """Boundary trajectories on the left, mass and sup-norm on the right."""
    t = np.asarray(record.times, dtype=float)
    fig, (ax_b, ax_m) = plt.subplots(1, 2, figsize=(9.6, 3.6), constrained_layout=True)

    for key, label in _BOUNDARY_LABELS.items():
        if key in record.series:
            ax_b.plot(t, record.series[key], label=label)
    limit_key = _LIMIT_KEYS.get(record.variant)
    if limit_key and limit_key in record.meta and record.variant != "linecs":
        ax_b.axhline(record.meta[limit_key], ls=":", c="gray", label=limit_key)
    ax_b.set_xlabel("t")
    ax_b.set_ylabel("position")
    ax_b.legend(fontsize="small")
    ax_b.set_title(f"{record.variant}: boundary")

    for key in ("mass", "sup_u"):
        if key in record.series:
            ax_m.plot(t, record.series[key], label=key)
    vals = np.concatenate(
        [np.asarray(record.series[k], float) for k in ("mass", "sup_u") if k in record.series]
    )
    if np.all(vals > 0) and t[-1] > 0:
        ax_m.set_yscale("log")
    ax_m.set_xlabel("t")
    ax_m.legend(fontsize="small")
    ax_m.set_title("mass and sup norm")
    return _save(fig, outdir, f"{basename}.png")


def plot_snapshots(record, outdir: str, basename: str = "snapshots") -> str | None:
    """Overlay of the recorded field profiles; None when there are none."""
    if not record.snapshots:
        return None
    fig, ax = plt.subplots(figsize=(6.4, 4.0), constrained_layout=True)
    for snap in record.snapshots:
        ax.plot(snap.x, snap.u, label=f"t={snap.t:g}", lw=1.0)
    ax.set_xlabel("r" if record.variant == "radial" else "x")
    ax.set_ylabel("u")
    ax.legend(fontsize="small")
    ax.set_title(f"{record.variant}: profiles")
    return _save(fig, outdir, f"{basename}.png")


def plot_rates(record, power_fits: dict, exp_fits: dict, outdir: str,
               basename: str = "rates") -> str | None:
    """Fitted decay laws over the measured series, one panel per fit.

    ``power_fits`` and ``exp_fits`` map a label to (series, RateFit)
    pairs, where series is the positive signal the fit was made on.
    """
    n = len(power_fits) + len(exp_fits)
    if n == 0:
        return None
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), constrained_layout=True, squeeze=False)
    t = np.asarray(record.times, dtype=float)
    col = 0
    for label, (series, fit) in power_fits.items():
        ax = axes[0][col]
        col += 1
        pos = (t > 0) & (series > 0)
        ax.loglog(t[pos], series[pos], lw=1.0, label=label)
        lo, hi = fit.window
        tw = np.linspace(max(lo, t[pos][0]), hi, 50)
        ax.loglog(tw, fit.prefactor * tw**fit.exponent, "k--", lw=1.0,
                  label=f"slope {fit.exponent:.2f}")
        ax.set_xlabel("t")
        ax.legend(fontsize="small")
    for label, (series, fit) in exp_fits.items():
        ax = axes[0][col]
        col += 1
        pos = series > 0
        ax.semilogy(t[pos], series[pos], lw=1.0, label=label)
        lo, hi = fit.window
        tw = np.linspace(lo, hi, 50)
        ax.semilogy(tw, fit.prefactor * np.exp(-fit.exponent * tw), "k--", lw=1.0,
                    label=f"rate {fit.exponent:.3f}")
        ax.set_xlabel("t")
        ax.legend(fontsize="small")
    return _save(fig, outdir, f"{basename}.png")


def plot_correctors(phi, psi, outdir: str, mode=None, basename: str = "correctors") -> str:
    """The two anchored profiles, plus the eigenmode when supplied."""
    n = 2 if mode is None else 3
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), constrained_layout=True, squeeze=False)
    for ax, prof, name in zip(axes[0], (phi, psi), ("phi", "psi")):
        ax.plot(prof.xs, prof.values, lw=1.2)
        ax.plot(prof.xs, np.abs(prof.xs) + prof.offset, "k:", lw=0.8, label="affine tail")
        ax.set_xlabel("x")
        ax.set_title(name)
        ax.legend(fontsize="small")
    if mode is not None:
        ax = axes[0][2]
        ax.plot(mode.xs, mode.values, lw=1.2)
        ax.set_xlabel("x")
        ax.set_title("principal mode")
    return _save(fig, outdir, f"{basename}.png")
