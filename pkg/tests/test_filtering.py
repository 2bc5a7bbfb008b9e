"""Filter recursions: finite exact, grid, particles, paired runner, fits."""

import math

import numpy as np
import pytest

from ldlab.dists import NormalPrior, PointMassPrior
from ldlab.errors import FilterCollapseError
from ldlab.filtering import (
    FilterState,
    ReprConfig,
    TvSeries,
    decay_rate,
    exact_filter_finite,
    exhaustive_filter_finite,
    exhaustive_terminal_sums,
    filter_init,
    filter_step,
    grid_adapt,
    grid_kernel,
    grid_moments,
    noise_tail_radius,
    project_particles_to_grid,
    run_grid_pair,
    systematic_resample,
    trap_weights,
    tv_distance,
    tv_half_l1,
)
from ldlab.models import finite_model_make, gaussian_finite_model, simulate_trajectory
from ldlab.modelspec import model_from_spec

# hand-computed two-step fixture:
#   nu = (.5, .5), Q = [[.7, .3], [.4, .6]], g(y0) = (.8, .4), g(y1) = (.7, .9)
#   after y0: (.4, .2)/.6            = (2/3, 1/3)
#   predict:  (.7*2/3+.4/3, .3*2/3+.6/3) = (.6, .4)
#   after y1: (.42, .36)/.78         = (7/13, 6/13)
FIX_Q = np.array([[0.7, 0.3], [0.4, 0.6]])
FIX_PDFS = [lambda y: {0: 0.8, 1: 0.7}[y], lambda y: {0: 0.4, 1: 0.9}[y]]


def _toy_finite():
    return finite_model_make(FIX_Q, FIX_PDFS, label="two-state fixture")


def _rw_model():
    return model_from_spec({
        "kind": "linear_gaussian",
        "f": {"type": "identity"},
        "h": {"type": "identity"},
        "state_noise": {"kind": "iid", "density": {"family": "gaussian", "sigma": 1.0}},
        "obs_noise": {"family": "gaussian", "sigma": 1.0},
    })


def test_finite_filter_two_step_fixture():
    fm = _toy_finite()
    filters, log_z = exact_filter_finite(fm, np.array([0.5, 0.5]), [0, 1])
    assert filters.shape == (2, 2)
    assert np.allclose(filters[0], [2 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(filters[1], [7 / 13, 6 / 13], atol=1e-15)
    # evidence: 0.6 from the first update, 0.78 from the second
    assert log_z == pytest.approx(math.log(0.6) + math.log(0.78), abs=1e-13)


def test_exhaustive_filter_agrees_with_recursion():
    fm = _toy_finite()
    rng = np.random.default_rng(8)
    ys = list(rng.integers(0, 2, size=7))
    nu = np.array([0.3, 0.7])
    rec, log_z = exact_filter_finite(fm, nu, ys)
    exh, exh_log_z = exhaustive_filter_finite(fm, nu, ys)
    assert np.max(np.abs(rec[-1] - exh)) < 1e-12
    assert exh_log_z == pytest.approx(log_z, abs=1e-12)


def test_exhaustive_terminal_sums_normalize_to_evidence():
    fm = _toy_finite()
    nu = np.array([0.5, 0.5])
    ys = [0, 1, 1, 0]
    sums, log_scale = exhaustive_terminal_sums(fm, nu, ys)
    _, log_z = exact_filter_finite(fm, nu, ys)
    assert math.log(sums.sum()) + log_scale == pytest.approx(log_z, abs=1e-12)


def test_tv_half_l1_reference():
    assert tv_half_l1(np.array([0.5, 0.5]), np.array([0.2, 0.8])) == pytest.approx(0.3)
    assert tv_half_l1(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)
    p = np.array([0.25, 0.25, 0.5])
    assert tv_half_l1(p, p) == 0.0


def _kalman_filter(ys, m0, p0):
    """Scalar Kalman recursion for the identity random walk, unit noises."""
    m, p = m0, p0
    out = [(m0 * p0 + 0, 0)]  # placeholder, replaced below
    # initial update with y0
    k = p0 / (p0 + 1.0)
    m = m0 + k * (ys[0] - m0)
    p = (1.0 - k) * p0
    out = [(m, p)]
    for y in ys[1:]:
        pp = p + 1.0
        k = pp / (pp + 1.0)
        m = m + k * (y - m)
        p = (1.0 - k) * pp
        out.append((m, p))
    return out


def test_grid_filter_tracks_kalman_moments():
    model = _rw_model()
    rng = np.random.default_rng(5)
    traj = simulate_trajectory(model, PointMassPrior(0.0), n=30, seed=5)
    ys = traj.observations
    cfg = ReprConfig(kind="grid", nodes=512)
    state = filter_init(model, NormalPrior(0.0, 2.0), ys[0], cfg)
    kalman = _kalman_filter(ys, 0.0, 4.0)
    for k in range(1, 31):
        state = filter_step(model, state, ys[k], cfg)
        state = grid_adapt(state)
    mean, std = grid_moments(state)
    km, kp = kalman[-1]
    assert mean == pytest.approx(km, abs=1e-6)
    assert std == pytest.approx(math.sqrt(kp), abs=1e-6)


def test_grid_kernel_source_target_shapes_and_mass():
    model = _rw_model()
    src = np.linspace(-3.0, 3.0, 101)
    tgt = np.linspace(-9.0, 9.0, 361)
    K = grid_kernel(model, src, tgt)
    assert K.shape == (361, 101)
    # each source column integrates to ~1: target window clears 6 sigma
    tau = trap_weights(tgt)
    col_mass = (K * tau[:, None]).sum(axis=0)
    assert np.all(np.abs(col_mass - 1.0) < 1e-6)


def test_noise_tail_radius_gaussian():
    model = _rw_model()
    r = noise_tail_radius(model.state_noise, eta=1e-12)
    assert r == pytest.approx(math.sqrt(2.0 * 12.0 * math.log(10.0)), rel=1e-12)


def test_paired_runner_equal_priors_is_exact_zero():
    model = _rw_model()
    traj = simulate_trajectory(model, PointMassPrior(0.0), n=12, seed=3)
    cfg = ReprConfig(kind="grid", nodes=256, paired=True)
    res = run_grid_pair(model, NormalPrior(0.0, 1.0), NormalPrior(0.0, 1.0),
                        traj.observations, cfg)
    assert np.all(res.tv == 0.0)


def test_paired_runner_matches_steady_state_contraction():
    # identity map, unit noises: the filter pair contracts at a fixed
    # data-independent rate; log rate = ln((3 - sqrt(5))/2)
    expected_slope = math.log((3.0 - math.sqrt(5.0)) / 2.0)
    model = _rw_model()
    traj = simulate_trajectory(model, NormalPrior(-5.0, 1.0), n=100, seed=101)
    cfg = ReprConfig(kind="grid", nodes=512, paired=True)
    res = run_grid_pair(model, NormalPrior(-5.0, 1.0), NormalPrior(5.0, 1.0),
                        traj.observations, cfg)
    series = TvSeries(n=np.arange(101), tv=res.tv, log_tv=res.log_tv)
    fit = decay_rate(series, fit_lo=20, fit_hi=100)
    assert fit.slope == pytest.approx(expected_slope, abs=2e-3)
    assert fit.r_squared > 0.999


def test_paired_runner_log_tv_reaches_deep_underflow_territory():
    # the quotient update keeps relative precision far below float floor on tv
    model = _rw_model()
    traj = simulate_trajectory(model, NormalPrior(-5.0, 1.0), n=100, seed=102)
    cfg = ReprConfig(kind="grid", nodes=512, paired=True)
    res = run_grid_pair(model, NormalPrior(-5.0, 1.0), NormalPrior(5.0, 1.0),
                        traj.observations, cfg)
    assert res.log_tv[-1] < -60.0
    assert np.all(np.isfinite(res.log_tv))


def test_unstable_drift_does_not_collapse():
    model = model_from_spec({
        "kind": "linear_gaussian",
        "f": {"type": "affine", "c0": 0.0, "c1": 1.05},
        "h": {"type": "identity"},
        "state_noise": {"kind": "iid", "density": {"family": "gaussian", "sigma": 1.0}},
        "obs_noise": {"family": "gaussian", "sigma": 1.0},
    })
    traj = simulate_trajectory(model, NormalPrior(-5.0, 1.0), n=100, seed=201)
    cfg = ReprConfig(kind="grid", nodes=512, paired=True)
    res = run_grid_pair(model, NormalPrior(-5.0, 1.0), NormalPrior(5.0, 1.0),
                        traj.observations, cfg)
    assert np.isfinite(res.log_tv[-1])
    assert res.diagnostics["adapt_count"] > 0


def test_particle_filter_stays_near_grid_filter():
    model = _rw_model()
    traj = simulate_trajectory(model, PointMassPrior(0.0), n=40, seed=7)
    ys = traj.observations
    rng = np.random.default_rng(7)
    gcfg = ReprConfig(kind="grid", nodes=512)
    pcfg = ReprConfig(kind="particles", particles=20_000)
    g = filter_init(model, NormalPrior(0.0, 2.0), ys[0], gcfg)
    p = filter_init(model, NormalPrior(0.0, 2.0), ys[0], pcfg, rng=rng)
    worst = 0.0
    for k in range(1, 41):
        g = grid_adapt(filter_step(model, g, ys[k], gcfg))
        p = filter_step(model, p, ys[k], pcfg, rng=rng)
        worst = max(worst, tv_distance(g, p))
    assert worst < 0.06


def test_project_particles_normalizes_on_grid():
    model = _rw_model()
    rng = np.random.default_rng(11)
    gcfg = ReprConfig(kind="grid", nodes=256)
    pcfg = ReprConfig(kind="particles", particles=50_000)
    g = filter_init(model, NormalPrior(0.0, 1.0), 0.2, gcfg)
    p = filter_init(model, NormalPrior(0.0, 1.0), 0.2, pcfg, rng=rng)
    proj = project_particles_to_grid(p, g)
    tau = trap_weights(g.nodes)
    assert (proj * tau).sum() == pytest.approx(1.0, rel=1e-9)
    # both represent the same posterior; deposition noise stays small
    assert 0.5 * float(tau @ np.abs(proj - np.exp(g.log_weights))) < 0.02


def test_systematic_resample_uniform_and_degenerate():
    rng = np.random.default_rng(1)
    n = 1000
    idx = systematic_resample(np.zeros(n), rng)
    # uniform weights: every particle survives exactly once
    assert np.array_equal(np.sort(idx), np.arange(n))
    log_w = np.full(n, -np.inf)
    log_w[137] = 0.0
    idx = systematic_resample(log_w, rng)
    assert np.all(idx == 137)


def test_filter_state_grid_density_normalized():
    model = _rw_model()
    cfg = ReprConfig(kind="grid", nodes=128)
    state = filter_init(model, NormalPrior(0.0, 1.0), 0.3, cfg)
    tau = trap_weights(state.nodes)
    assert (np.exp(state.log_weights) * tau).sum() == pytest.approx(1.0, rel=1e-12)


def test_grid_adapt_recians_window_after_drift():
    # posterior mass walks away from the initial window; adapt must follow
    model = _rw_model()
    cfg = ReprConfig(kind="grid", nodes=256)
    state = filter_init(model, NormalPrior(0.0, 1.0), 0.0, cfg)
    ys = np.linspace(0.0, 12.0, 25)
    for y in ys[1:]:
        state = grid_adapt(filter_step(model, state, y, cfg))
    mean, std = grid_moments(state)
    assert abs(mean - 12.0) < 2.0
    assert state.nodes.min() < mean < state.nodes.max()


def test_decay_rate_recovers_exact_geometric_sequence():
    n = np.arange(51)
    log_tv = -0.7 * n + 1.3
    series = TvSeries(n=n, tv=np.exp(log_tv), log_tv=log_tv)
    fit = decay_rate(series, fit_lo=10, fit_hi=50)
    assert fit.slope == pytest.approx(-0.7, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.n_points == 41 and fit.n_clipped == 0


def test_decay_rate_clips_nonpositive_tv():
    n = np.arange(11)
    tv = np.exp(-0.5 * n)
    tv[7] = 0.0  # collided pair: clipped to the smallest finite value, counted
    log_tv = np.where(tv > 0, np.log(np.maximum(tv, 1e-300)), -np.inf)
    fit = decay_rate(TvSeries(n=n, tv=tv, log_tv=log_tv), fit_lo=0, fit_hi=10)
    assert fit.n_points == 11
    assert fit.n_clipped == 1
    assert -0.6 < fit.slope < -0.4


def test_tv_distance_identical_states_is_zero():
    model = _rw_model()
    cfg = ReprConfig(kind="grid", nodes=128)
    state = filter_init(model, NormalPrior(0.0, 1.0), 0.1, cfg)
    assert tv_distance(state, state) == 0.0


def test_tv_series_csv_roundtrip(tmp_path):
    n = np.arange(4)
    tv = np.array([0.5, 0.25, 0.125, 0.0625])
    series = TvSeries(n=n, tv=tv, log_tv=np.log(tv),
                      meta={"scenario": "unit", "seed": 1})
    path = tmp_path / "tv.csv"
    series.to_csv(path)
    text = path.read_text().splitlines()
    assert text[0].startswith("n,")
    assert len(text) == 5
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(back[:, 1], tv, rtol=0, atol=0)


def test_filter_collapse_raises_cleanly():
    # an observation with zero density under every state kills the filter
    fm = finite_model_make(
        FIX_Q,
        [lambda y: {0: 0.8, 1: 0.7}.get(y, 0.0),
         lambda y: {0: 0.4, 1: 0.9}.get(y, 0.0)])
    with pytest.raises(FilterCollapseError) as err:
        exact_filter_finite(fm, np.array([0.5, 0.5]), [0, 1, 2])
    assert "2" in str(err.value)


def test_gaussian_finite_filter_matches_direct_computation():
    fm = gaussian_finite_model(
        Q=np.array([[0.9, 0.1], [0.2, 0.8]]),
        means=np.array([-1.0, 1.0]),
        stds=np.array([0.5, 0.5]))
    nu = np.array([0.5, 0.5])
    rng = np.random.default_rng(2)
    ys = rng.normal(size=6)
    filters, _ = exact_filter_finite(fm, nu, ys)
    # direct dense recomputation
    pi = nu * fm.emission_vector(ys[0])
    pi = pi / pi.sum()
    for y in ys[1:]:
        pi = fm.Q.T @ pi
        pi = pi * fm.emission_vector(y)
        pi = pi / pi.sum()
    assert np.allclose(filters[-1], pi, atol=1e-14)
