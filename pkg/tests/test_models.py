"""State-space and finite models, noise wrappers, trajectory simulation."""

import math

import numpy as np
import pytest

from ldlab.densities import GaussianDensity
from ldlab.dists import PointMassPrior
from ldlab.errors import ModelValidationError
from ldlab.models import (
    FiniteModel,
    IidNoise,
    MisspecifiedTruth,
    StateSpaceModel,
    Trajectory,
    audit_lipschitz,
    finite_model_make,
    gaussian_finite_model,
    loglik,
    make_misspecified_truth,
    simulate_finite,
    simulate_misspecified,
    simulate_trajectory,
    transition_logpdf,
)
from ldlab.modelspec import model_from_spec


def _rw_model(sigma_state=1.0, sigma_obs=1.0):
    return model_from_spec({
        "kind": "linear_gaussian",
        "f": {"type": "identity"},
        "h": {"type": "affine", "c0": 1.0, "c1": 1.0},
        "state_noise": {"kind": "iid",
                        "density": {"family": "gaussian", "sigma": sigma_state}},
        "obs_noise": {"family": "gaussian", "sigma": sigma_obs},
    })


def test_iid_noise_wraps_density():
    noise = IidNoise(GaussianDensity(sigma=2.0))
    # conditional form, but an iid wrapper ignores the state argument
    assert noise.logpdf(3.0, 0.0) == pytest.approx(math.log(0.3989422804014327 / 2.0))
    assert noise.logpdf(-1.0, 0.0) == noise.logpdf(99.0, 0.0)
    rng = np.random.default_rng(3)
    assert np.isfinite(noise.sample(rng, x=0.0))


def test_simulate_trajectory_is_reproducible_and_consistent():
    model = _rw_model()
    t1 = simulate_trajectory(model, init=PointMassPrior(0.0), n=50, seed=11)
    t2 = simulate_trajectory(model, init=PointMassPrior(0.0), n=50, seed=11)
    t3 = simulate_trajectory(model, init=PointMassPrior(0.0), n=50, seed=12)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.observations, t2.observations)
    assert not np.array_equal(t1.states, t3.states)
    # recorded noises must reproduce the recursion exactly
    for k in range(1, 51):
        assert t1.states[k] == pytest.approx(
            model.f(t1.states[k - 1]) + t1.state_noise[k - 1], abs=0.0)
    for k in range(51):
        assert t1.observations[k] == pytest.approx(
            model.h(t1.states[k]) + t1.obs_noise[k], abs=0.0)


def test_trajectory_shapes():
    model = _rw_model()
    t = simulate_trajectory(model, init=PointMassPrior(1.5), n=7, seed=0)
    assert t.states.shape == (8,)
    assert t.observations.shape == (8,)
    assert t.state_noise.shape == (7,)
    assert t.obs_noise.shape == (8,)
    assert t.states[0] == 1.5


def test_separate_streams_decouple():
    model = _rw_model()
    a = simulate_trajectory(model, init=PointMassPrior(0.0), n=20, seed=5, stream=0)
    b = simulate_trajectory(model, init=PointMassPrior(0.0), n=20, seed=5, stream=1)
    assert not np.array_equal(a.states, b.states)


def test_transition_logpdf_matches_noise():
    model = _rw_model(sigma_state=0.5)
    x, xp = 1.0, 1.7
    expect = GaussianDensity(sigma=0.5).logpdf(xp - x)
    assert transition_logpdf(model, x, xp) == pytest.approx(float(expect))


def test_loglik_vectorizes_over_states():
    model = _rw_model(sigma_obs=2.0)
    xs = np.array([0.0, 1.0, -3.0])
    y = 0.5
    out = loglik(model, xs, y)
    expect = GaussianDensity(sigma=2.0).logpdf(y - (1.0 + xs))  # h(x) = 1 + x
    assert np.allclose(out, expect, rtol=1e-14)


def test_audit_lipschitz_passes_affine_and_flags_lies():
    model = _rw_model()
    # worst violation of the declared constant; <= 0 means it holds
    assert audit_lipschitz(model, np.random.default_rng(0), pairs=500) <= 1e-12

    lying = StateSpaceModel(
        f=lambda x: 3.0 * x, f_lip=1.0,
        h=model.h, h_b0=model.h_b0, h_b=model.h_b,
        state_noise=model.state_noise, obs_noise=model.obs_noise,
        h_inverse=model.h_inverse)
    assert audit_lipschitz(lying, np.random.default_rng(1), pairs=500) > 1.0


def test_misspecified_truth_kappa():
    filt = _rw_model()
    truth = model_from_spec({
        "kind": "nonlinear",
        "f": {"type": "sine_perturbed_affine", "c0": 0.0, "c1": 1.0,
              "amp": 1.0, "freq": 1.0},
        "h": {"type": "affine", "c0": 1.0, "c1": 1.0},
        "state_noise": {"kind": "iid",
                        "density": {"family": "gaussian", "sigma": 1.0}},
        "obs_noise": {"family": "gaussian", "sigma": 1.0},
    })
    mt = make_misspecified_truth(filt, truth, f_gap=1.0, h_gap=0.5)
    # kappa = f_gap + (b0 + b * h_gap) * (1 + a_true); affine h has b0=0, b=1,
    # and the sine-perturbed map has slope bound 2
    assert mt.kappa == pytest.approx(1.0 + (0.0 + 1.0 * 0.5) * (1.0 + 2.0))
    tr = simulate_misspecified(mt, init=PointMassPrior(0.0), n=30, seed=9)
    assert tr.states.shape == (31,)
    for k in range(1, 31):
        assert tr.states[k] == pytest.approx(
            truth.f(tr.states[k - 1]) + tr.state_noise[k - 1], abs=0.0)


def test_finite_model_make_validates():
    Q = np.array([[0.7, 0.3], [0.4, 0.6]])
    pdfs = [lambda y: 0.8 if y == 0 else 0.7,
            lambda y: 0.4 if y == 0 else 0.9]
    fm = finite_model_make(Q, pdfs, label="toy")
    assert fm.m == 2
    assert np.allclose(fm.emission_vector(0), [0.8, 0.4])
    assert np.allclose(fm.emission_vector(1), [0.7, 0.9])
    with pytest.raises(ModelValidationError):
        finite_model_make(np.array([[0.7, 0.2], [0.4, 0.6]]), pdfs)
    with pytest.raises(ModelValidationError):
        finite_model_make(Q, pdfs[:1])


def test_gaussian_finite_model_emissions():
    fm = gaussian_finite_model(
        Q=np.array([[0.9, 0.1], [0.2, 0.8]]),
        means=np.array([-1.0, 1.0]),
        stds=np.array([1.0, 1.0]))
    v = fm.emission_vector(0.0)
    expect = 0.24197072451914337  # both states sit one std away from y=0
    assert v[0] == pytest.approx(expect, rel=1e-14)
    assert v[1] == pytest.approx(expect, rel=1e-14)
    states, ys = simulate_finite(fm, nu=np.array([0.5, 0.5]), n=25, seed=4)
    assert states.shape == (26,) and ys.shape == (26,)
    assert set(np.unique(states)) <= {0, 1}


def test_dependent_noise_sampler_matches_density():
    # sine-modulated family: empirical CDF of draws at fixed x against its own q
    model = model_from_spec({
        "kind": "dependent_noise",
        "f": {"type": "affine", "c0": 0.0, "c1": 0.5},
        "h": {"type": "identity"},
        "state_noise": {"kind": "sine_modulated", "c": 0.1},
        "obs_noise": {"family": "gaussian", "sigma": 1.0},
    })
    noise = model.state_noise
    assert noise.mu_minus == pytest.approx(0.9)
    assert noise.mu_plus == pytest.approx(1.1)
    x = 0.7
    rng = np.random.default_rng(21)
    draws = np.array([noise.sample(rng, x) for _ in range(4000)])
    # compare mean of draws to the density's mean by quadrature
    us = np.linspace(-10, 10, 4001)
    q = np.exp(noise.log_q(x, us))
    mean_q = np.trapezoid(us * q, us) / np.trapezoid(q, us)
    assert draws.mean() == pytest.approx(mean_q, abs=0.05)


def test_state_dim_defaults():
    model = _rw_model()
    assert model.state_dim == 1 and model.obs_dim == 1
