"""Corrector profiles, the principal eigenvalue, and the dipole.

The corrector phi is the stationary profile of the averaging operator on
the closed left half line: A_J phi = phi for x <= 0, phi = 0 for x > 0,
growing like -x + offset toward -inf.  It measures how the nonlocal
boundary layer deforms the linear profile of the local problem; psi is
its mirror image on the right half line and stays bounded away from zero
there.  Both enter the long-time asymptotics: phi shapes the limiting
profile/dipole product, psi weights the mass functional whose growth
rate fixes the half-line spreading constant.

Discretely the problem closes on a finite window [-X, 0]: beyond -X the
profile is continued by the affine ansatz phi(-X) + (-X - x), beyond 0
by zero, and the resulting linear system is banded with the kernel
bandwidth.  The zero condition on the right breaks translation
invariance, so the discrete solution (and with it the additive offset)
is unique; re-applying the operator afterwards measures the residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, CoverageError
from .kernels import Kernel, RadialKernelMatrix, convolve_1d

_MIRROR = {"left": "right", "right": "left"}


@dataclass(eq=False)
class CorrectorProfile:
    """Tabulated corrector with its far-field calibration.

    ``side`` is where the profile lives ("left" for phi, "right" for
    psi); beyond the far end it continues affinely with ``far_slope``,
    beyond the near end it is zero.  ``offset`` is the additive constant
    of the affine asymptote, ``affine_bound`` the measured sup of
    |values - far_slope * x| (the bounded-correction constant), and
    ``residual`` the sup norm of values - A_J values after the solve.
    """

    side: str
    xs: np.ndarray
    values: np.ndarray
    far_slope: float
    offset: float
    affine_bound: float
    residual: float

    @property
    def extent(self) -> float:
        return float(abs(self.xs[0] if self.side == "left" else self.xs[-1]))

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def evaluate(self, x, extend: bool = False) -> np.ndarray:
        """Profile values at x; zero past the near end.

        Points beyond the tabulated far end raise CoverageError unless
        ``extend`` is set, in which case the affine ansatz is used.
        """
        xv = np.asarray(x, dtype=float)
        lo, hi = float(self.xs[0]), float(self.xs[-1])
        if self.side == "left":
            beyond = xv < lo
            out = np.where(xv > hi, 0.0, np.interp(xv, self.xs, self.values))
            affine = self.values[0] + self.far_slope * (xv - lo)
        else:
            beyond = xv > hi
            out = np.where(xv < lo, 0.0, np.interp(xv, self.xs, self.values))
            affine = self.values[-1] + self.far_slope * (xv - hi)
        if np.any(beyond):
            if not extend:
                raise CoverageError(
                    f"profile covers [{lo:g}, {hi:g}], asked for "
                    f"[{xv.min():g}, {xv.max():g}]"
                )
            out = np.where(beyond, affine, out)
        return out


def _solve_left_anchored(kernel: Kernel, n: int) -> np.ndarray:
    """Solve v = A_J v on nodes 0..n-1 with affine pad left, zeros right.

    Node i sits at -(n-1-i)*h relative to the habitat edge; the pad
    prescribes v = v[0] + k*h for k nodes left of the window, the zero
    extension on the right encodes the Dirichlet exterior condition.
    """
    h, m = kernel.h, kernel.half_width
    if n <= m:
        raise ValueError("corrector window shorter than the kernel stencil")
    w = kernel.weights  # length 2m+1, center at m
    ab = np.zeros((2 * m + 1, n))
    for off in range(-m, m + 1):
        ab[m + off, :] = -w[m + off]
    ab[m, :] += 1.0
    rhs = np.zeros(n)
    # rows within reach of the left pad couple to v[0] and pick up the
    # inhomogeneous affine part
    for i in range(min(m, n)):
        tail = w[m + i + 1 : 2 * m + 1]
        ks = np.arange(i + 1, i + 1 + len(tail))
        ab[m + i, 0] -= tail.sum()
        rhs[i] = float(np.dot(tail, (ks - i) * h))
    return solve_banded((m, m), ab, rhs)


def _left_residual(kernel: Kernel, values: np.ndarray) -> float:
    m = kernel.half_width
    h = kernel.h
    pad = values[0] + h * np.arange(m, 0, -1)
    ext = np.concatenate([pad, values, np.zeros(m)])
    avg = convolve_1d(kernel, ext)[m : m + len(values)]
    return float(np.abs(values - avg).max())


def solve_phi(kernel: Kernel, extent: float | None = None, tol: float = 1e-10) -> CorrectorProfile:
    """Corrector on the left half line, tabulated on [-X, 0].

    X defaults to 40 kernel supports.  The window is doubled once to
    confirm the profile is insensitive to the truncation (values on
    [-X/2, 0] must move by less than 10 * tol).
    """
    h = kernel.h
    X = 40.0 * kernel.d if extent is None else float(extent)
    n = int(round(X / h)) + 1
    X = (n - 1) * h
    vals = _solve_left_anchored(kernel, n)
    wide = _solve_left_anchored(kernel, 2 * n - 1)[n - 1 :]
    drift = float(np.abs(wide[n // 2 :] - vals[n // 2 :]).max())
    if drift > 10.0 * tol:
        raise ConvergenceError(
            f"corrector window X={X:g} too small: doubling moved values by {drift:.2e}"
        )
    res = _left_residual(kernel, vals)
    if res > tol:
        raise ConvergenceError(f"corrector residual {res:.2e} above tol {tol:g}")
    xs = -X + h * np.arange(n)
    offset = float(vals[0] - X)
    affine_bound = float(np.abs(vals + xs).max())
    return CorrectorProfile(
        side="left",
        xs=xs,
        values=vals,
        far_slope=-1.0,
        offset=offset,
        affine_bound=affine_bound,
        residual=res,
    )


def solve_psi(kernel: Kernel, extent: float | None = None, tol: float = 1e-10) -> CorrectorProfile:
    """Mirror corrector on the right half line; records alpha = min psi."""
    phi = solve_phi(kernel, extent=extent, tol=tol)
    return CorrectorProfile(
        side="right",
        xs=-phi.xs[::-1],
        values=phi.values[::-1].copy(),
        far_slope=1.0,
        offset=phi.offset,
        affine_bound=phi.affine_bound,
        residual=phi.residual,
    )


def anchored_profile(kernel: Kernel, grid_nodes: np.ndarray, anchor: float, side: str) -> CorrectorProfile:
    """Corrector solved directly on a run grid, boundary at ``anchor``.

    The solved nodes are those on the profile's side of the anchor; the
    remaining grid nodes are the zero exterior.  Solving on the run grid
    itself (rather than interpolating the canonical profile) keeps the
    discrete identity A_J phi = phi exact in the run's own quadrature,
    which is what makes the weighted-moment series monotone to solver
    precision.
    """
    xs = np.asarray(grid_nodes, dtype=float)
    if side == "left":
        sel = xs <= anchor
        vals = _solve_left_anchored(kernel, int(sel.sum()))
    elif side == "right":
        sel = xs >= anchor
        vals = _solve_left_anchored(kernel, int(sel.sum()))[::-1].copy()
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    res = _left_residual(kernel, vals if side == "left" else vals[::-1])
    sx = xs[sel]
    slope = -1.0 if side == "left" else 1.0
    far_idx = 0 if side == "left" else -1
    offset = float(vals[far_idx] - slope * (sx[far_idx] - anchor))
    return CorrectorProfile(
        side=side,
        xs=sx - anchor,
        values=vals,
        far_slope=slope,
        offset=offset,
        affine_bound=float(np.abs(vals - slope * (sx - anchor)).max()),
        residual=res,
    )


@dataclass(eq=False)
class EigenMode:
    xs: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int


def principal_eigenvalue(
    operator: Kernel | RadialKernelMatrix,
    domain,
    tol: float = 1e-10,
    max_iter: int = 500_000,
) -> tuple[float, EigenMode]:
    """Principal Dirichlet eigenvalue of -L by power iteration.

    ``domain`` is an interval (a, b) for a 1D kernel or a ball radius for
    a radial matrix; the substochastic averaging restricted to interior
    nodes has a largest eigenvalue mu in (0, 1) with positive mode, and
    lambda = 1 - mu.
    """
    if isinstance(operator, Kernel):
        a, b = domain
        if b - a <= 2 * operator.h:
            raise ValueError("interval too short for the grid step")
        xs = np.arange(a + operator.h, b - operator.h / 2.0, operator.h)

        def apply(v: np.ndarray) -> np.ndarray:
            return convolve_1d(operator, v)

    else:
        R = float(domain)
        sel = operator.r_grid < R
        if sel.sum() < 2:
            raise ValueError("ball too small for the grid step")
        xs = operator.r_grid[sel]
        core = operator.weights[np.ix_(sel, sel)] * operator.volume_weights[sel][None, :]

        def apply(v: np.ndarray) -> np.ndarray:
            return core @ v

    v = np.ones(len(xs))
    v /= np.linalg.norm(v)
    mu = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        mu = float(np.dot(v, w))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise ConvergenceError("averaging annihilated the iterate")
        v = w / nrm
        if it % 10 == 0 or it == max_iter:
            res = float(np.abs(apply(v) - mu * v).max() / np.abs(v).max())
            if res <= tol:
                mode = v / np.abs(v).max()
                lam = 1.0 - mu
                if not 0.0 < lam < 1.0:
                    raise ConvergenceError(f"eigenvalue {lam} outside (0, 1)")
                return lam, EigenMode(xs=xs, values=mode, residual=res, iterations=it)
    raise ConvergenceError(f"power iteration did not reach {tol:g} in {max_iter} steps")


def dipole(q: float, x, t: float) -> np.ndarray:
    """Dipole solution of the heat equation with diffusivity q.

    D(x, t) = -x/(2 q t) * exp(-x^2 / (4 q t)) / sqrt(4 pi q t); positive
    for x < 0, first moment over the left half line equal to 1/2, maximal
    there at x = -sqrt(2 q t).
    """
    if q <= 0:
        raise ValueError(f"diffusivity must be positive, got {q}")
    if t <= 0:
        raise ValueError(f"dipole needs t > 0, got {t}")
    xv = np.asarray(x, dtype=float)
    return -xv / (2.0 * q * t) * np.exp(-(xv**2) / (4.0 * q * t)) / math.sqrt(4.0 * math.pi * q * t)
