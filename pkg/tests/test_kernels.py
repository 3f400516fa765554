import numpy as np
import pytest
from scipy.signal import convolve2d

from nlstefan.kernels import (
    build_kernel,
    convolve_1d,
    convolve_radial,
    corrector_constants,
    radial_reduce,
    radial_volume_weights,
    second_moment,
    unit_ball_volume,
)


def test_weights_normalized_and_symmetric():
    k = build_kernel("triangle", d=1.0, h=0.05)
    assert k.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(k.weights, k.weights[::-1])
    assert k.half_width == 20
    with pytest.warns(UserWarning, match="uniform kernel"):
        k = build_kernel("uniform", d=1.0, h=0.05)
    assert k.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(k.weights, k.weights[::-1])


def test_second_moment_triangle():
    # continuum value for the unit triangle is 1/12; quadrature is O(h^2)
    coarse = second_moment(build_kernel("triangle", 1.0, 0.1))
    fine = second_moment(build_kernel("triangle", 1.0, 0.0125))
    assert fine == pytest.approx(1.0 / 12.0, rel=2e-3)
    assert abs(fine - 1.0 / 12.0) < abs(coarse - 1.0 / 12.0)


def test_convolve_preserves_mass_and_positivity():
    k = build_kernel("triangle", 1.0, 0.05)
    rng = np.random.default_rng(7)
    u = np.zeros(200)
    u[60:140] = rng.uniform(0.0, 2.0, 80)
    a = convolve_1d(k, u)
    assert a.min() >= 0.0
    # supported 3 supports away from both ends, so no quadrature leaks
    assert a.sum() == pytest.approx(u.sum(), rel=1e-14)


def test_convolve_matches_direct_sum():
    k = build_kernel("triangle", 1.0, 0.2)
    u = np.array([0.0, 1.0, 3.0, 0.5, 2.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.0])
    m = k.half_width
    direct = np.zeros(len(u))
    for i in range(len(u)):
        for j, w in enumerate(k.weights):
            src = i - (j - m)
            if 0 <= src < len(u):
                direct[i] += w * u[src]
    assert convolve_1d(k, u) == pytest.approx(direct, abs=1e-14)


def test_short_field_padding_path():
    k = build_kernel("triangle", 1.0, 0.2)
    u = np.array([1.0, 2.0])
    out = convolve_1d(k, u)
    assert out.shape == (2,)
    assert out.sum() < u.sum()  # mass leaks past the array ends here


def test_kernel_validation():
    with pytest.raises(ValueError, match="under-resolved"):
        build_kernel("triangle", 1.0, 0.3)
    with pytest.raises(ValueError, match="d > 0"):
        build_kernel("triangle", -1.0, 0.05)
    with pytest.raises(ValueError, match="unknown kernel kind"):
        build_kernel("gauss", 1.0, 0.05)
    with pytest.raises(ValueError, match="samples"):
        build_kernel("table", 1.0, 0.25, table=[1.0, 1.0])
    with pytest.raises(ValueError, match="nonnegative"):
        build_kernel("table", 1.0, 0.25, table=[1.0, 1.0, -0.1, 0.5, 0.0])
    with pytest.warns(UserWarning, match="zeros inside"):
        build_kernel("table", 1.0, 0.25, table=[1.0, 0.0, 1.0, 0.5, 0.0])


def test_table_kernel_round_trip():
    samples = [2.0, 1.5, 1.0, 0.5, 0.0]
    k = build_kernel("table", 1.0, 0.25, table=samples)
    assert k.weights.sum() == pytest.approx(1.0, abs=1e-15)
    # profile keeps the shape of the samples up to one normalization factor
    ratio = k.profile[0] / samples[0]
    assert k.profile == pytest.approx(ratio * np.asarray(samples), abs=1e-15)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(np.pi)
    assert unit_ball_volume(3) == pytest.approx(4.0 * np.pi / 3.0)


def test_radial_reduce_column_conservation():
    k = build_kernel("triangle", 1.0, 0.05)
    r = np.arange(0.0, 4.0 + 1e-9, 0.05)
    mat = radial_reduce(k, 2, r)
    col_mass = mat.volume_weights @ mat.weights
    assert col_mass == pytest.approx(np.ones(len(r)), abs=1e-12)
    # operator therefore conserves radial mass for interior-supported profiles
    u = np.maximum(0.0, 1.0 - (r / 1.5) ** 2)
    vol = mat.volume_weights
    assert convolve_radial(mat, u) @ vol == pytest.approx(u @ vol, rel=1e-12)


def test_radial_reduce_rejects_1d():
    k = build_kernel("triangle", 1.0, 0.05)
    with pytest.raises(ValueError, match="N >= 2"):
        radial_reduce(k, 1, np.arange(0.0, 2.0, 0.05))


def test_radial_matches_tensor_grid():
    """The reduced operator agrees with a full 2-D convolution.

    Build J(|x|) on a tensor grid, convolve a radial profile, and compare
    the x-axis trace with the matrix applied to the 1-D radial samples.
    Both are column-normalized, so this probes the angular quadrature.
    """
    h = 0.05
    k = build_kernel("triangle", 1.0, h)
    L = 3.0
    ax = np.arange(-L, L + 1e-9, h)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    rad = np.hypot(X, Y)
    u2 = np.maximum(0.0, 1.0 - (rad / 1.2) ** 2)

    m = k.half_width
    off = h * np.arange(-m, m + 1)
    OX, OY = np.meshgrid(off, off, indexing="ij")
    w2 = k.evaluate(np.hypot(OX, OY)) * h * h
    w2 /= w2.sum()
    out2 = convolve2d(u2, w2, mode="same")

    r = np.arange(0.0, L + 1e-9, h)
    mat = radial_reduce(k, 2, r)
    out_r = convolve_radial(mat, np.maximum(0.0, 1.0 - (r / 1.2) ** 2))

    center = len(ax) // 2
    trace = out2[center:, center]
    # skip the outermost two supports where the tensor grid truncates;
    # the residual is the two quadratures' O(h^2) disagreement, largest
    # in the degenerate r=0 cell (1.4e-3 relative at h=0.05)
    sel = r <= L - 2.0 * k.d
    scale = np.abs(trace[sel]).max()
    assert np.abs(trace[sel] - out_r[sel]).max() <= 2e-3 * scale


def test_radial_volume_weights_total():
    r = np.arange(0.0, 2.0 + 1e-9, 0.01)
    w = radial_volume_weights(2, r)
    # trapezoid shell volumes add up to the ball volume
    assert w.sum() == pytest.approx(np.pi * 4.0, rel=1e-4)


def test_corrector_constants_saturate():
    from nlstefan.correctors import solve_psi

    k = build_kernel("triangle", 1.0, 0.05)
    psi = solve_psi(k)
    c0_small, c1 = corrector_constants(k, psi, 0.3)
    c0_sat, c1_sat = corrector_constants(k, psi, 2.0)
    assert c1 == pytest.approx(c1_sat, rel=1e-12)
    assert 0.0 < c0_small < c1
    assert c0_sat == c1_sat
    with pytest.raises(ValueError, match="positive"):
        corrector_constants(k, psi, 0.0)
