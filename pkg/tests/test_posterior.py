import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spect_bayes.bayes.posterior import (
    PosteriorModel,
    from_unconstrained,
    grad_log_posterior,
    log_jacobian,
    log_posterior,
    to_unconstrained,
)
from spect_bayes.phantoms import make_point_source
from spect_bayes.projector import DetectorGeometry, Projector, angles_from_step, default_geometry


class MatrixProjector:
    """Hand-built operator standing in for the ray tracer."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)

    def forward(self, f):
        return self.a @ f

    def adjoint(self, g):
        return self.a.T @ g


def two_voxel_model(observed, sigma=1.0, mu=1.0, s=5.0):
    geom = DetectorGeometry(1, 1, 1.0, (0.0, 90.0))
    m = PosteriorModel(np.asarray(observed, float), (2, 1, 1), 1.0, geom, sigma, mu, s)
    m._projector = MatrixProjector([[1.0, 2.0], [0.5, 1.5]])
    return m


def random_model(seed, n=4, step=30):
    r = np.random.default_rng(seed)
    geom = default_geometry((n, n, n), 1.0, angles_from_step(step))
    truth = r.uniform(0.2, 3.0, n**3)
    P = Projector((n, n, n), 1.0, geom)
    obs = P.forward(truth) + r.normal(0, 0.5, geom.num_rays)
    m = PosteriorModel(obs, (n, n, n), 1.0, geom, r.uniform(0.5, 2), r.uniform(0.5, 2), r.uniform(1, 6))
    return m, r.uniform(0.1, 4.0, n**3)


def test_two_voxel_quadratic_form():
    g = np.array([3.0, -1.0])
    m = two_voxel_model(g, sigma=0.7, mu=1.5, s=2.0)
    f1, f2 = 0.8, 1.9
    r1 = 3.0 - (1.0 * f1 + 2.0 * f2)
    r2 = -1.0 - (0.5 * f1 + 1.5 * f2)
    expected = (
        -(r1**2 + r2**2) / (2 * 0.49)
        - ((f1 - 1.5) ** 2 + (f2 - 1.5) ** 2) / (2 * 4.0)
        - 2 * math.log(0.7 * math.sqrt(2 * math.pi))
        - 2 * math.log(2.0 * math.sqrt(2 * math.pi))
    )
    assert log_posterior(m, [f1, f2]) == pytest.approx(expected, rel=1e-14)


def test_global_maximum_and_stationarity():
    # f = prior_mu = 1 and g = A f: both terms are at their maxima
    g = np.array([3.0, 2.0])
    m = two_voxel_model(g, mu=1.0)
    best = log_posterior(m, [1.0, 1.0])
    assert np.max(np.abs(grad_log_posterior(m, [1.0, 1.0]))) < 1e-9
    r = np.random.default_rng(1)
    for _ in range(20):
        f = np.array([1.0, 1.0]) + r.normal(0, 0.3, 2)
        f = np.abs(f) + 1e-3
        assert log_posterior(m, f) < best


def test_sigma_doubling_scales_quadratic():
    g = np.array([3.0, -1.0])
    f = [0.8, 1.9]
    a, b = two_voxel_model(g, sigma=1.0), two_voxel_model(g, sigma=2.0)
    prior = -((0.8 - 1) ** 2 + (1.9 - 1) ** 2) / 50
    quad_a = log_posterior(a, f) - a._const() - prior
    quad_b = log_posterior(b, f) - b._const() - prior
    assert quad_b == pytest.approx(quad_a / 4, rel=1e-12)
    assert b._const() - a._const() == pytest.approx(-2 * math.log(2.0))


def test_zero_residual_gradient_is_prior_only():
    geom = default_geometry((4, 4, 4), 1.0, angles_from_step(45))
    f = np.random.default_rng(3).uniform(0.5, 2, 64)
    obs = Projector((4, 4, 4), 1.0, geom).forward(f)
    m = PosteriorModel(obs, (4, 4, 4), 1.0, geom, 1.0, 1.0, 5.0)
    assert np.allclose(grad_log_posterior(m, f), -(f - 1.0) / 25.0, atol=1e-12)


def test_nonpositive_rejected():
    m = two_voxel_model([1.0, 1.0])
    with pytest.raises(ValueError):
        log_posterior(m, [1.0, 0.0])
    with pytest.raises(ValueError):
        grad_log_posterior(m, [-1.0, 1.0])
    with pytest.raises(ValueError):
        to_unconstrained([0.0, 1.0])


def test_model_validation():
    geom = DetectorGeometry(1, 1, 1.0, (0.0,))
    with pytest.raises(ValueError):
        PosteriorModel([1.0, 2.0], (1, 1, 1), 1.0, geom)
    with pytest.raises(ValueError):
        PosteriorModel([1.0], (1, 1, 1), 1.0, geom, sigma_like=0.0)
    with pytest.raises(ValueError):
        PosteriorModel([1.0], (1, 1, 1), 1.0, geom, prior_sigma=-1.0)


def central_fd(fn, x, j, h):
    e = np.zeros_like(x)
    e[j] = h
    return (fn(x + e) - fn(x - e)) / (2 * h)


def max_rel_error(analytic, fd):
    return float(np.max(np.abs(analytic - fd) / np.abs(analytic)))


def test_gradient_matches_finite_differences():
    m, f = random_model(0)
    grad = grad_log_posterior(m, f)
    fd = np.array([central_fd(lambda v: log_posterior(m, v), f, j, 1e-5 * max(1.0, abs(f[j]))) for j in range(64)])
    assert max_rel_error(grad, fd) < 1e-5


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_fd_property(seed):
    m, f = random_model(seed)
    grad = grad_log_posterior(m, f)
    fd = np.array([central_fd(lambda v: log_posterior(m, v), f, j, 1e-5 * max(1.0, abs(f[j]))) for j in range(64)])
    assert max_rel_error(grad, fd) < 1e-5


def test_transform_identity_point():
    x = to_unconstrained(np.ones(5))
    assert np.all(x == 0)
    assert log_jacobian(x) == 0.0


@given(st.lists(st.floats(1e-8, 1e8), min_size=1, max_size=30))
def test_transform_roundtrip(vals):
    f = np.array(vals)
    back = from_unconstrained(to_unconstrained(f))
    assert np.allclose(back, f, rtol=1e-12, atol=0)


def test_log_jacobian_is_sum():
    x = np.array([0.5, -2.0, 1.25])
    assert log_jacobian(x) == pytest.approx(-0.25)


def test_unconstrained_density_and_gradient():
    m, f = random_model(7)
    x = to_unconstrained(f)
    logp, grad = m.logp_and_grad(x)
    assert logp == pytest.approx(log_posterior(m, f) + log_jacobian(x), rel=1e-13)
    fd = np.array([central_fd(lambda v: m.logp_and_grad(v)[0], x, j, 1e-5 * max(1.0, abs(x[j]))) for j in range(64)])
    assert max_rel_error(grad, fd) < 1e-5


def test_point_source_model_initial_point():
    ps = make_point_source((4, 4, 4), 10.0)
    geom = default_geometry(ps.dims, 1.0, angles_from_step(10))
    m = PosteriorModel(Projector(ps.dims, 1.0, geom).forward(ps.values), ps.dims, 1.0, geom)
    assert np.all(m.constrain(m.initial_point()) == 1.0)
    logp, grad = m.logp_and_grad(m.initial_point())
    assert np.isfinite(logp) and grad.shape == (64,)
