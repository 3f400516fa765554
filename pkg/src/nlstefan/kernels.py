"""Dispersal kernels and the averaging operators built from them.

A kernel J is nonnegative, radially symmetric, supported in the ball of
radius d, and carries unit mass.  The diffusion operator of the model is

    L u = A_J u - u,      A_J u (x) = (J * u)(x),

so everything downstream reduces to evaluating the convolution A_J on a
uniform grid.  The kernel is tabulated once at the simulation step h and
turned into symmetric quadrature weights with *exactly* unit discrete
mass; that normalization is what makes the habitat/mass balance of the
steppers telescope to machine precision.

For radially symmetric densities in N >= 2 dimensions the convolution
collapses to a one-dimensional matrix in the radius.  Writing y in
spherical coordinates around the evaluation direction,

    (J * f)(r) = int_0^inf f(rho) rho^(N-1) A(r, rho) drho,
    A(r, rho)  = |S^(N-2)| int_0^pi J(sqrt(r^2 + rho^2 - 2 r rho cos th))
                 (sin th)^(N-2) dth,

and the angular integral is done with Gauss quadrature in the polar
angle, restricted to the sub-interval where the chord length stays
inside the support (the integrand is smooth there, so the rule is
spectral even when r >> d).  The assembled matrix is column-normalized
against the discrete volume weights so the radial stepper conserves
mass exactly, not just to quadrature order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as _gamma

from .errors import NumericsError

_KINDS = ("triangle", "uniform", "table")


@dataclass(eq=False)
class Kernel:
    """A kernel tabulated at grid spacing h on [0, d].

    Attributes
    ----------
    profile : ndarray
        Samples of J at radii 0, h, .., m*h, rescaled so the trapezoid
        mass of the symmetric extension is exactly 1.
    weights : ndarray
        Symmetric quadrature weights w[-m..m] (stored as length 2m+1,
        center at index m) with sum exactly 1.
    """

    kind: str
    d: float
    h: float
    profile: np.ndarray
    weights: np.ndarray

    @property
    def half_width(self) -> int:
        return len(self.profile) - 1

    def evaluate(self, r) -> np.ndarray:
        """Linear interpolation of J at |r|; zero beyond the support."""
        rr = np.abs(np.asarray(r, dtype=float))
        xs = self.h * np.arange(len(self.profile))
        return np.interp(rr, xs, self.profile, right=0.0)


@dataclass(eq=False)
class RadialKernelMatrix:
    """Radial reduction of the convolution for dimension N >= 2.

    ``weights[i, j]`` maps density at radius r[j] to the average at
    radius r[i]; ``volume_weights[j]`` is the discrete shell volume
    omega_N * N * r[j]^(N-1) * h with trapezoid endpoint correction.
    Every column satisfies sum_i volume_weights[i] * weights[i, j] = 1,
    which is the exact-conservation invariant.
    """

    dimension: int
    r_grid: np.ndarray
    h: float
    d: float
    weights: np.ndarray
    volume_weights: np.ndarray


def unit_ball_volume(N: int) -> float:
    """omega_N, the volume of the unit ball in R^N."""
    return math.pi ** (N / 2.0) / _gamma(N / 2.0 + 1.0)


def radial_volume_weights(N: int, r_grid: np.ndarray) -> np.ndarray:
    """Discrete shell volumes for a uniform radius grid starting at 0."""
    r = np.asarray(r_grid, dtype=float)
    h = r[1] - r[0]
    w = unit_ball_volume(N) * N * r ** (N - 1) * h
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def build_kernel(kind: str, d: float, h: float, table=None) -> Kernel:
    """Tabulate a kernel at spacing h and normalize its discrete mass.

    The support radius d should be resolved by at least four cells.
    ``table`` supplies the samples J(0), J(h), .., J(d) for kind="table";
    entries must be nonnegative and not all zero.
    """
    if d <= 0 or h <= 0:
        raise ValueError(f"kernel needs d > 0 and h > 0, got d={d}, h={h}")
    if h > d / 4:
        raise ValueError(f"kernel support under-resolved: h={h} exceeds d/4={d / 4}")
    m = int(np.floor(d / h + 1e-12))
    if kind == "triangle":
        raw = (1.0 - np.arange(m + 1) * h / d) / d
    elif kind == "uniform":
        warnings.warn(
            "uniform kernel: discontinuous at |x| = d, quadrature is only O(h)",
            stacklevel=2,
        )
        raw = np.full(m + 1, 1.0 / (2.0 * d))
    elif kind == "table":
        if table is None:
            raise ValueError("kind='table' needs explicit samples")
        raw = np.asarray(table, dtype=float)
        if raw.ndim != 1 or len(raw) != m + 1:
            raise ValueError(
                f"table must hold {m + 1} samples at spacing h={h} on [0, d], got {len(raw)}"
            )
        if np.any(raw < 0):
            raise ValueError("table samples must be nonnegative")
        if not np.any(raw > 0):
            raise ValueError("table samples are all zero")
        if np.any(raw[:-1] == 0):
            # Strict positivity inside the support is assumed by the model;
            # accept the kernel but flag it.
            warnings.warn("kernel table has zeros inside the support", stacklevel=2)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}, expected one of {_KINDS}")

    trap = np.ones(m + 1)
    trap[-1] = 0.5
    half = h * raw * trap  # weights for k = 0..m, endpoint halved
    total = half[0] + 2.0 * half[1:].sum()
    if total <= 0:
        raise ValueError("kernel has zero mass")
    weights = np.concatenate([half[:0:-1], half]) / total
    profile = raw / total
    return Kernel(kind=kind, d=d, h=h, profile=profile, weights=weights)


def second_moment(kernel: Kernel) -> float:
    """Diffusivity q = (1/2) * sum_k w_k (k h)^2.

    Converges O(h^2) to (1/2) int J(xi) xi^2 dxi: 1/12 for the unit
    triangle kernel, 1/6 for the unit uniform kernel.
    """
    m = kernel.half_width
    offsets = kernel.h * np.arange(-m, m + 1)
    return 0.5 * float(np.dot(kernel.weights, offsets**2))


def convolve_1d(kernel: Kernel, values: np.ndarray, grid=None) -> np.ndarray:
    """Discrete A_J u on a uniform grid: out[i] = sum_k w_k u[i-k].

    Values beyond the array are treated as zero, so fields must vanish
    within the kernel reach of both ends for the result to be exact.
    ``grid`` (an object with .h, or a bare step) must match the kernel step.
    """
    if grid is not None:
        step = getattr(grid, "h", grid)
        if not math.isclose(step, kernel.h, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"grid step {step} does not match kernel step {kernel.h}")
    u = np.asarray(values, dtype=float)
    if len(u) == 0:
        raise ValueError("empty field")
    m = kernel.half_width
    if len(u) <= 2 * m:
        # np.convolve 'same' keys on the longer operand; pad short fields
        padded = np.concatenate([np.zeros(m), u, np.zeros(m)])
        return np.convolve(padded, kernel.weights, mode="same")[m : m + len(u)]
    # weights are symmetric, so correlation and convolution coincide
    return np.convolve(u, kernel.weights, mode="same")


def radial_reduce(
    kernel: Kernel, N: int, r_grid: np.ndarray, quad_points: int = 48
) -> RadialKernelMatrix:
    """Assemble the radial convolution matrix for dimension N >= 2.

    For each radius pair the polar angle runs over [0, th*], where th* is
    the angle at which the chord sqrt(r^2 + rho^2 - 2 r rho cos th)
    leaves the kernel support; ``quad_points`` Gauss-Legendre nodes are
    mapped onto that interval and the (sin th)^(N-2) factor is folded
    into the integrand.  The result is column-normalized so that
    volume_weights @ weights == 1 holds exactly column by column.
    """
    if N < 2:
        raise ValueError(f"radial reduction needs N >= 2, got {N} (use the 1D variants)")
    r = np.asarray(r_grid, dtype=float)
    if len(r) < 2:
        raise ValueError("radius grid too short")
    steps = np.diff(r)
    if r[0] != 0.0 or not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
        raise ValueError("radius grid must be uniform and start at 0")
    h = float(steps[0])
    if not math.isclose(h, kernel.h, rel_tol=1e-12):
        raise ValueError(f"radius step {h} does not match kernel step {kernel.h}")

    glx, glw = leggauss(quad_points)
    surf = 2.0 * math.pi ** ((N - 1) / 2.0) / _gamma((N - 1) / 2.0)

    rr = r[:, None]
    pp = r[None, :]
    cross = 2.0 * rr * pp
    # cos of the angle where the chord length equals d; columns fully
    # inside (r + rho < d) get the whole interval, disjoint pairs get none
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_star = np.where(cross > 0, (rr**2 + pp**2 - kernel.d**2) / np.where(cross > 0, cross, 1.0), 0.0)
    cos_star = np.where(cross > 0, cos_star, np.where(rr + pp < kernel.d, -1.0, 1.0))
    theta_star = np.arccos(np.clip(cos_star, -1.0, 1.0))

    ang = np.zeros((len(r), len(r)))
    for q in range(quad_points):
        th = 0.5 * theta_star * (glx[q] + 1.0)
        dist = np.sqrt(np.maximum(rr**2 + pp**2 - cross * np.cos(th), 0.0))
        ang += glw[q] * kernel.evaluate(dist) * np.sin(th) ** (N - 2)
    ang *= surf * 0.5 * theta_star

    vw = radial_volume_weights(N, r)
    colsum = vw @ ang
    if np.any(colsum <= 0):
        raise NumericsError("radial kernel column with no mass on the grid")
    weights = ang / colsum[None, :]
    return RadialKernelMatrix(
        dimension=N, r_grid=r, h=h, d=kernel.d, weights=weights, volume_weights=vw
    )


def convolve_radial(matrix: RadialKernelMatrix, values: np.ndarray) -> np.ndarray:
    """A_J applied to a radial profile tabulated on matrix.r_grid."""
    v = np.asarray(values, dtype=float)
    if v.shape != matrix.r_grid.shape:
        raise ValueError("profile does not match the radius grid")
    return matrix.weights @ (v * matrix.volume_weights)


def corrector_constants(kernel: Kernel, psi, s1: float) -> tuple[float, float]:
    """Exchange constants of the half-line problem.

    C0 integrates J(x - y) psi(x) over y in (-d, 0), x in (0, s1); C1 is
    the same with x in (0, d).  ``psi`` is evaluated as a callable on
    [0, max(s1, d)].  Since J vanishes beyond d, C0 == C1 once s1 >= d.
    """
    if s1 <= 0:
        raise ValueError(f"s1 must be positive, got {s1}")
    d, h = kernel.d, kernel.h

    def inner(x_hi: float) -> float:
        nx = max(2, int(round(x_hi / h)) + 1)
        ny = max(2, int(round(d / h)) + 1)
        xs = np.linspace(0.0, x_hi, nx)
        ys = np.linspace(-d, 0.0, ny)
        jmat = kernel.evaluate(xs[:, None] - ys[None, :])
        vals = jmat * np.asarray(psi(xs))[:, None]
        return float(np.trapezoid(np.trapezoid(vals, ys, axis=1), xs))

    c1 = inner(d)
    c0 = c1 if s1 >= d else inner(s1)
    return c0, c1
