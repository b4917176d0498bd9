import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spect_bayes import io
from spect_bayes.phantoms import VoxelGrid, make_point_source, make_uniform
from spect_bayes.uncertainty import (
    FWHM_PER_SIGMA,
    FitError,
    GaussianFit,
    build_histogram,
    central_profile,
    fit_gaussian,
    fwhm_from_fit,
    mean_of_variances,
    posterior_mean,
    relative_norm,
    summarize,
    voxel_variance,
)


def test_mean_of_identical_samples(rng):
    s = rng.uniform(0, 1, 8)
    m = posterior_mean(np.tile(s, (5, 1)), (2, 2, 2))
    assert np.allclose(m.values, s, rtol=0, atol=1e-15)


def test_mean_two_samples():
    m = posterior_mean(np.array([[0.0, 2.0], [2.0, 0.0]]), (2, 1, 1))
    assert m.values.tolist() == [1.0, 1.0]


def test_mean_matches_loop(rng):
    s = rng.uniform(0, 3, size=(40, 27))
    expected = np.zeros(27)
    for row in s:
        for j, v in enumerate(row):
            expected[j] += v
    expected /= 40
    assert np.allclose(posterior_mean(s, (3, 3, 3)).values, expected, rtol=1e-12, atol=0)


def test_mean_dims_mismatch():
    with pytest.raises(ValueError):
        posterior_mean(np.ones((3, 8)), (3, 3, 3))


def test_variance_basics():
    assert not voxel_variance(np.ones((10, 4))).any()
    assert voxel_variance(np.array([[0.0], [2.0]]))[0] == 2.0
    with pytest.raises(ValueError):
        voxel_variance(np.ones((1, 4)))


def _welford(col):
    n, mean, m2 = 0, 0.0, 0.0
    for x in col:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    return m2 / (n - 1)


def test_variance_matches_welford(rng):
    s = rng.normal(3.0, 2.0, size=(200, 10))
    v = voxel_variance(s)
    for j in range(10):
        assert v[j] == pytest.approx(_welford(s[:, j]), rel=1e-10)


def test_variance_equals_moment_formula(rng):
    s = rng.gamma(2.0, 1.0, size=(500, 30))
    n = s.shape[0]
    moment = (np.mean(s**2, axis=0) - np.mean(s, axis=0) ** 2) * n / (n - 1)
    assert np.allclose(voxel_variance(s), moment, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_mean_of_variances_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    s = r.uniform(0, 1, size=(30, 12))
    a = mean_of_variances(voxel_variance(s))
    b = mean_of_variances(voxel_variance(s[r.permutation(30)]))
    assert a == pytest.approx(b, rel=1e-12)


def test_mean_of_variances_basics(rng):
    assert mean_of_variances(np.zeros(5)) == 0.0
    with pytest.raises(ValueError):
        mean_of_variances([])
    v = rng.uniform(size=33)
    total = 0.0
    for x in v:
        total += x
    assert mean_of_variances(v) == pytest.approx(total / 33, rel=1e-12)


# -- histogram ---------------------------------------------------------------------


def test_histogram_constant_values():
    h = build_histogram([2.5] * 7, 10)
    assert h.counts.tolist() == [7]
    assert np.all(np.diff(h.bin_edges) > 0)


def test_histogram_two_bins():
    h = build_histogram([0.0, 1.0, 2.0, 3.0], 2)
    assert h.bin_edges.tolist() == [0.0, 1.5, 3.0]
    assert h.counts.tolist() == [2, 2]


def test_histogram_matches_direct_assignment(rng):
    x = rng.standard_normal(10_000)
    h = build_histogram(x, 50)
    e = h.bin_edges
    counts = [0] * 50
    for v in x:
        for k in range(50):
            last = k == 49
            if e[k] <= v < e[k + 1] or (last and v == e[k + 1]):
                counts[k] += 1
                break
    assert h.counts.tolist() == counts


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e6, 1e6)), st.integers(1, 60))
def test_histogram_conserves_counts(x, bins):
    h = build_histogram(x, bins)
    assert h.counts.sum() == x.size
    assert np.all(np.diff(h.bin_edges) > 0)


def test_histogram_empty():
    with pytest.raises(ValueError):
        build_histogram([], 5)


def test_histogram_csv(tmp_path):
    h = build_histogram([0.0, 1.0, 2.0, 3.0], 2)
    header, rows = io.read_csv(h.to_csv(tmp_path / "h.csv"))
    assert header == ["bin_left", "bin_right", "count"]
    assert rows == [["0.0", "1.5", "2"], ["1.5", "3.0", "2"]]


# -- Gaussian fit / FWHM -------------------------------------------------------------


def test_fit_exact_gaussian():
    x = np.arange(-5, 6, dtype=float)
    y = 10 * np.exp(-(x**2) / 2)
    fit = fit_gaussian(y, x)
    assert fit.amplitude == pytest.approx(10, abs=1e-8)
    assert fit.center == pytest.approx(0, abs=1e-8)
    assert fit.sigma_fit == pytest.approx(1, abs=1e-8)
    assert fit.rmse < 1e-8


@pytest.mark.parametrize("k", [1e-3, 0.5, 7.0, 1e4])
def test_fit_scaling(k):
    x = np.arange(-6, 7, dtype=float)
    y = 3 * np.exp(-((x - 0.4) ** 2) / (2 * 1.7**2))
    a, b = fit_gaussian(y, x), fit_gaussian(k * y, x)
    assert b.center == pytest.approx(a.center, abs=1e-9)
    assert b.sigma_fit == pytest.approx(a.sigma_fit, rel=1e-9)
    assert b.amplitude == pytest.approx(k * a.amplitude, rel=1e-9)


def test_fit_with_noise(rng):
    x = np.linspace(-6, 6, 49)
    worst = 0.0
    for _ in range(20):
        y = 10 * np.exp(-(x**2) / (2 * 1.3**2)) + rng.uniform(-0.1, 0.1, x.size)
        worst = max(worst, abs(fit_gaussian(y, x).sigma_fit / 1.3 - 1))
    assert worst < 0.03


SPIKE = [0.067, 0.058, 0.057, 0.056, 0.055, 0.060, 0.063, 0.090, 8.887, 0.066, 0.059, 0.054, 0.057, 0.058, 0.059, 0.067]


def test_fit_spike_on_floor_reaches_least_squares_optimum():
    # a posterior-mean point source: one bright voxel over a small positive floor
    from scipy.optimize import least_squares

    x = np.arange(16) - 7.5
    y = np.array(SPIKE)
    fit = fit_gaussian(y, x)
    ref = least_squares(lambda p: y - p[0] * np.exp(-((x - p[1]) ** 2) / (2 * p[2] ** 2)), [9.0, 0.5, 0.5], xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert fit.amplitude == pytest.approx(ref.x[0], rel=1e-6)
    assert fit.center == pytest.approx(ref.x[1], abs=1e-6)
    assert fit.sigma_fit == pytest.approx(abs(ref.x[2]), rel=1e-6)
    assert fit.amplitude > 0.99 * y.max()


def test_fit_failures():
    with pytest.raises(FitError):
        fit_gaussian([0.0, -1.0, 0.0, -2.0], [0, 1, 2, 3])
    with pytest.raises(ValueError):
        fit_gaussian([1.0, 2.0, 1.0], [0, 1, 2])


def test_fwhm_constants():
    assert fwhm_from_fit(GaussianFit(1, 0, 1.0, 0), 1.0) == pytest.approx(2.3548200, abs=1e-7)
    assert fwhm_from_fit(GaussianFit(1, 0, 1.0, 0), 0.5) == pytest.approx(1.1774100, abs=1e-7)
    assert FWHM_PER_SIGMA == pytest.approx(2 * math.sqrt(2 * math.log(2)))
    with pytest.raises(FitError):
        fwhm_from_fit(GaussianFit(1, 0, 0.0, 0), 1.0)


@given(st.floats(0.01, 100), st.floats(0.01, 10))
def test_fwhm_linear_in_pitch(sigma, pitch):
    fit = GaussianFit(1.0, 0.0, sigma, 0.0)
    assert fwhm_from_fit(fit, 2 * pitch) == pytest.approx(2 * fwhm_from_fit(fit, pitch), rel=1e-12)


# -- relative norm / profiles --------------------------------------------------------


def test_relative_norm_cases(rng):
    f = VoxelGrid((3, 3, 3), 1.0, rng.uniform(0.1, 1, 27))
    assert relative_norm(f, f) == 0.0
    assert relative_norm(f, make_uniform((3, 3, 3), 0.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_norm(make_uniform((3, 3, 3), 0.0), f)
    with pytest.raises(ValueError):
        relative_norm(f, make_uniform((3, 3, 2), 0.0))


@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_relative_norm_scale_invariant(k, seed):
    r = np.random.default_rng(seed)
    a, b = r.uniform(0.1, 1, 20), r.uniform(0, 1, 20)
    assert relative_norm(k * a, k * b) == pytest.approx(relative_norm(a, b), rel=1e-9)


def test_central_profile_point_and_uniform():
    coords, vals = central_profile(make_point_source((9, 9, 9), 10.0), "x")
    assert int(np.argmax(vals)) == 4
    assert coords[4] == 0.0
    _, vals = central_profile(make_uniform((6, 6, 6), 2.0), "y")
    assert np.all(vals == 2.0)


def test_central_profile_matches_indexing(rng):
    dims = (5, 6, 7)
    g = VoxelGrid(dims, 0.5, rng.uniform(0, 1, 210))
    cx, cy, cz = 2, 3, 3
    for axis, n in zip("xyz", dims):
        coords, vals = central_profile(g, axis)
        expected = []
        for i in range(n):
            ijk = {"x": (i, cy, cz), "y": (cx, i, cz), "z": (cx, cy, i)}[axis]
            expected.append(g.values[ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2])])
        assert vals.tolist() == expected
        assert np.allclose(coords, (np.arange(n) + 0.5 - n / 2) * 0.5)


def test_summarize(rng):
    s = rng.uniform(0, 1, size=(20, 8))
    rep = summarize(s, (2, 2, 2))
    assert rep.mean_of_variances == pytest.approx(rep.variance_volume.mean(), abs=1e-12)
    assert rep.histograms[0].counts.sum() == 8
