import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agmix.mixture import (GaussianComponent, GaussianMixture, LossFunction, eval_density, gaussian_overlap,
                           gaussian_pdf, mixture_moments)

from conftest import normal_pdf


def test_standard_normal_peak():
    mix = GaussianMixture.from_arrays([1.0], [0.0], [1.0])
    assert eval_density(mix, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)


def test_symmetric_pair_at_origin():
    mix = GaussianMixture.from_arrays([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    assert eval_density(mix, [0.0]) == pytest.approx(0.24197072451914337, rel=1e-12)


def test_two_component_scalar_oracle():
    mix = GaussianMixture.from_arrays([0.3, 0.7], [0.0, 2.0], [0.25, 0.25])
    expected = 0.3 * normal_pdf(1.0, 0.0, 0.25) + 0.7 * normal_pdf(1.0, 2.0, 0.25)
    assert eval_density(mix, [1.0]) == pytest.approx(expected, rel=1e-12)


def test_density_batch_shapes():
    mix = GaussianMixture.from_arrays([1.0], [0.0], [1.0])
    assert np.shape(eval_density(mix, np.linspace(-1, 1, 7))) == (7,)
    mix2 = GaussianMixture.from_arrays([1.0], [[0.0, 0.0]], [np.eye(2)])
    assert np.shape(eval_density(mix2, np.zeros((4, 2)))) == (4,)
    with pytest.raises(ValueError):
        eval_density(mix2, np.zeros(3))


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        GaussianMixture.from_arrays([0.5, 0.4], [0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianMixture.from_arrays([1.2, -0.2], [0.0, 1.0], [1.0, 1.0])
    GaussianMixture.from_arrays([0.5, 0.4], [0.0, 1.0], [1.0, 1.0], unnormalized=True)


def test_rejects_bad_covariance():
    with pytest.raises(ValueError):
        GaussianComponent(1.0, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianComponent(1.0, [0.0, 0.0], [[1.0, 0.1], [0.0, 1.0]])


def test_components_are_immutable():
    c = GaussianComponent(1.0, [0.0], [[1.0]])
    with pytest.raises(ValueError):
        c.mean[0] = 3.0


def test_moments_identity_and_pair():
    mu, P = mixture_moments(GaussianMixture.from_arrays([1.0], [2.0], [0.3]))
    assert mu[0] == 2.0 and P[0, 0] == pytest.approx(0.3)
    mu, P = mixture_moments(GaussianMixture.from_arrays([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0]))
    assert mu[0] == pytest.approx(0.0) and P[0, 0] == pytest.approx(2.0)


def test_moments_unnormalized_rejected():
    mix = GaussianMixture.from_arrays([0.5, 0.4], [0.0, 1.0], [1.0, 1.0], unnormalized=True)
    with pytest.raises(ValueError):
        mixture_moments(mix)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.05, 1.0), st.floats(-3, 3), st.floats(0.05, 2.0)), min_size=3, max_size=3))
def test_moments_match_grid_quadrature(parts):
    w = np.array([p[0] for p in parts])
    w /= w.sum()
    mix = GaussianMixture.from_arrays(w, [p[1] for p in parts], [p[2] for p in parts])
    x = np.linspace(-15, 15, 60001)
    p = eval_density(mix, x)
    mean = np.trapezoid(x * p, x)
    var = np.trapezoid((x - mean) ** 2 * p, x)
    mu, P = mixture_moments(mix)
    assert mu[0] == pytest.approx(mean, abs=1e-8)
    assert P[0, 0] == pytest.approx(var, rel=1e-7)


def test_overlap_identities():
    assert gaussian_overlap([0.0], [[1.0]], [0.0], [[1.0]]) == pytest.approx(1 / math.sqrt(4 * math.pi))
    assert gaussian_overlap([0.0], [[1.0]], [10.0], [[1.0]]) == pytest.approx(normal_pdf(10, 0, 2), rel=1e-10)
    with pytest.raises(ValueError):
        gaussian_overlap([0.0], [[-1.0]], [0.0], [[1.0]])


def test_overlap_2d_grid_oracle():
    m1, P1 = np.zeros(2), np.diag([1.0, 2.0])
    m2, P2 = np.ones(2), np.diag([2.0, 1.0])
    g = np.linspace(-10, 11, 841)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([X, Y], -1).reshape(-1, 2)
    prod = (gaussian_pdf(pts, m1, P1) * gaussian_pdf(pts, m2, P2)).reshape(X.shape)
    grid = np.trapezoid(np.trapezoid(prod, g, axis=1), g)
    assert gaussian_overlap(m1, P1, m2, P2) == pytest.approx(grid, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 4), st.floats(-5, 5), st.floats(0.01, 4))
def test_overlap_symmetric(m1, v1, m2, v2):
    a = gaussian_overlap([m1], [[v1]], [m2], [[v2]])
    b = gaussian_overlap([m2], [[v2]], [m1], [[v1]])
    assert a == pytest.approx(b, rel=1e-12)


def test_loss_function_is_gaussian():
    loss = LossFunction([math.pi / 2], [[0.01]])
    assert loss([math.pi / 2]) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.01))


def test_extended_appends_zero_weight():
    mix = GaussianMixture.from_arrays([1.0], [0.0], [1.0])
    ext = mix.extended([GaussianComponent(0.0, [1.0], [[0.1]])])
    assert len(ext) == 2 and ext.weights.tolist() == [1.0, 0.0]
