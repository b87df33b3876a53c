import itertools
import json

import numpy as np
import pytest
from scipy import stats

from bipkit import evaluation as ev
from bipkit.basis import reconstruct
from bipkit.errors import DegenerateDataWarning, InsufficientDataError, LayoutError
from bipkit.filter import NoiseConfig, SpatiotemporalFilter
from bipkit.interaction import DofLayout, PartialObservation
from bipkit.prior import learn_prior
from bipkit.simgen import HandshakeWorld, default_layout, gen_demo_set, gen_test_scenario

from conftest import make_interaction


# --- time to completion ---

def test_ttc_constructed_settle_point(rng):
    T, s = 300, 170
    data = np.ones((2, T))
    data[:, :s] += rng.normal(size=(2, s))
    res = ev.time_to_completion(make_interaction(data), window_s=1.0)
    assert res.completed and res.index == s
    assert res.ratio == s / T


def test_ttc_constant_is_zero():
    res = ev.time_to_completion(make_interaction(np.full((3, 200), 0.4)))
    assert res.ratio == 0.0 and res.completed


def test_ttc_noise_never_settles(rng):
    res = ev.time_to_completion(make_interaction(rng.normal(size=(2, 300))))
    assert res.ratio == 1.0 and not res.completed


def test_ttc_window_must_be_shorter():
    with pytest.raises(ValueError):
        ev.time_to_completion(make_interaction(np.zeros((2, 60))), window_s=2.0)


def test_ttc_group_thresholds():
    T = 300
    data = np.zeros((2, T))
    data[1, :100] = np.linspace(0, 1, 100)  # the controlled DoF moves early
    data[0, :50] = np.linspace(0, 0.01, 50)
    inter = make_interaction(data)
    loose_ctl = ev.time_to_completion(inter, 1.0, (1e-9, 10.0))
    tight = ev.time_to_completion(inter, 1.0, (1e-9, 1e-9))
    assert loose_ctl.index == 50 and tight.index == 100


def test_ttc_monotone_in_threshold():
    g = gen_test_scenario(2, "normal", hold_s=4.0)
    previous = 2.0
    for threshold in (1e-7, 1e-6, 1e-5, 1e-4, 1e-3):
        ratio = ev.time_to_completion(g.interaction, 2.0, (threshold, threshold)).ratio
        assert ratio <= previous
        previous = ratio


# --- Pearson ---

def test_pearson_affine_cases(rng):
    x = rng.normal(size=500)
    r = ev.pearson_matrix(make_interaction([x, 2 * x + 1, -x]))
    np.testing.assert_allclose(r, [[1, 1, -1], [1, 1, -1], [-1, -1, 1]], atol=1e-12)
    np.testing.assert_array_equal(r, r.T)


def test_pearson_matches_numpy(rng):
    data = rng.normal(size=(4, 50)).cumsum(axis=1)
    np.testing.assert_allclose(ev.pearson_matrix(make_interaction(data)), np.corrcoef(data), atol=1e-12)


def test_pearson_independent_noise(rng):
    r = ev.pearson_matrix(make_interaction(rng.normal(size=(2, 10_000))))
    assert abs(r[0, 1]) < 0.05


def test_pearson_constant_dof(rng):
    data = np.vstack([rng.normal(size=40), np.full(40, 3.0), rng.normal(size=40)])
    with pytest.warns(DegenerateDataWarning):
        r = ev.pearson_matrix(make_interaction(data))
    assert r[1, 1] == 1.0
    np.testing.assert_array_equal(r[1, [0, 2]], 0.0)
    np.testing.assert_array_equal(r[[0, 2], 1], 0.0)
    assert ev.constant_dofs(make_interaction(data)) == [1]
    with pytest.raises(InsufficientDataError):
        ev.pearson_matrix(make_interaction(np.zeros((2, 2))))


# --- sliding histograms ---

def test_full_window_histogram_is_one_bin(rng):
    data = rng.normal(size=(2, 80))
    data[1] += data[0]
    inter = make_interaction(data)
    hist = ev.sliding_corr_histogram(inter, (0, 1), window=80)
    assert hist.total == 1 and hist.skipped == 0
    r = ev.pearson_matrix(inter)[0, 1]
    k = int(np.flatnonzero(hist.counts)[0])
    assert hist.edges[k] <= r < hist.edges[k + 1]


def test_histogram_totals_and_skips(rng):
    data = rng.normal(size=(2, 100))
    data[1, 40:70] = 1.0
    hist = ev.sliding_corr_histogram(make_interaction(data), (0, 1), window=10)
    windows = 100 - 10 + 1
    assert hist.total + hist.skipped == windows
    assert hist.skipped == 70 - 40 - 10 + 1
    assert hist.counts.shape == (ev.HISTOGRAM_BINS,)
    with pytest.raises(ValueError):
        ev.sliding_corr_histogram(make_interaction(data), (0, 1), window=2)


def test_histogram_shapes(rng):
    noise = ev.sliding_corr_histogram(make_interaction(rng.normal(size=(2, 5000))), (0, 1), window=30)
    centers = 0.5 * (noise.edges[1:] + noise.edges[:-1])
    assert abs(np.average(centers, weights=noise.counts)) < 0.05
    x = np.sin(np.linspace(0, 20, 400))
    coupled = ev.sliding_corr_histogram(make_interaction([x, -3 * x + 0.01 * rng.normal(size=400)]), (0, 1), window=30)
    assert coupled.mass_beyond(0.8) > 0.9


# --- Mann-Whitney ---

def brute_u(a, b):
    return sum((x > y) + 0.5 * (x == y) for x in a for y in b)


def test_mwu_statistic_matches_pair_count(rng):
    for _ in range(20):
        a = rng.integers(0, 6, size=rng.integers(1, 12))
        b = rng.integers(0, 6, size=rng.integers(1, 12))
        u, p = ev.mann_whitney_u(a, b)
        assert u == pytest.approx(brute_u(a, b))
        assert 0.0 <= p <= 1.0


def test_mwu_matches_scipy(rng):
    for n, m in [(3, 5), (8, 8), (9, 12), (30, 30)]:
        a, b = rng.normal(size=n), rng.normal(0.7, size=m)
        u, p = ev.mann_whitney_u(a, b)
        method = "exact" if max(n, m) <= 8 else "asymptotic"
        ref = stats.mannwhitneyu(a, b, alternative="two-sided", method=method)
        assert u == pytest.approx(ref.statistic)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_mwu_with_ties_matches_scipy(rng):
    a, b = rng.integers(0, 5, size=25), rng.integers(1, 6, size=20)
    ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
    assert ev.mann_whitney_u(a, b)[1] == pytest.approx(ref.pvalue, rel=1e-9)


def test_mwu_exact_by_enumeration():
    a, b = [1.0, 4.0, 6.0], [2.0, 3.0, 5.0, 7.0]
    u = brute_u(a, b)
    pooled = a + b
    splits = list(itertools.combinations(range(7), 3))
    us = [brute_u([pooled[i] for i in s], [pooled[i] for i in range(7) if i not in s]) for s in splits]
    expected = np.mean([abs(x - 6.0) >= abs(u - 6.0) for x in us])
    assert ev.mann_whitney_u(a, b) == (pytest.approx(u), pytest.approx(expected))


def test_mwu_reference_cases(rng):
    x = rng.normal(size=20)
    assert ev.mann_whitney_u(x, x)[1] > 0.9
    assert ev.mann_whitney_u(range(1, 11), range(101, 111))[1] < 0.01
    with pytest.raises(InsufficientDataError):
        ev.mann_whitney_u([], [1.0])


def test_mwu_rank_invariance(rng):
    a, b = rng.uniform(0.1, 3, size=15), rng.uniform(0.5, 4, size=12)
    p = ev.mann_whitney_u(a, b)[1]
    assert ev.mann_whitney_u(np.exp(a), np.exp(b))[1] == pytest.approx(p)
    assert ev.mann_whitney_u(np.log(a), np.log(b))[1] == pytest.approx(p)


# --- phase error ---

def test_phase_error_cases():
    truth = np.linspace(0, 1, 50)
    assert ev.phase_error(truth, truth) == ev.PhaseError(0.0, 0.0)
    err = ev.phase_error(truth + 0.1, truth)
    assert err.rmse == pytest.approx(0.1) and err.terminal == pytest.approx(0.1)
    trace = np.column_stack([truth, np.ones(50)])
    assert ev.phase_error(trace, truth, active=slice(10, 20)).rmse == 0.0
    with pytest.raises(ValueError):
        ev.phase_error(truth[:-1], truth)


def test_phase_error_on_replayed_demo(handshake_model, handshake_demos):
    demo = handshake_demos[0]
    filt = SpatiotemporalFilter(handshake_model)
    mask = demo.layout.observed_mask()
    trace = [filt.step(PartialObservation(np.where(mask, c, 0.0), mask)).phase for c in demo.data.T]
    assert ev.phase_error(trace, np.linspace(0, 1, demo.length)).terminal < 0.05


# --- grid oracle ---

@pytest.fixture(scope="module")
def one_dof_model():
    layout = DofLayout.default(1, 1)
    world = HandshakeWorld.default(default_layout(1, 1))
    return learn_prior(gen_demo_set(10, seed=7, repetitions=2, world=world, layout=layout))


def test_grid_posterior_normalized(one_dof_model):
    noise = NoiseConfig.for_model(one_dof_model)
    demo = gen_demo_set(2, seed=99, world=HandshakeWorld.default(default_layout(1, 1)))[0]
    obs = [PartialObservation(c, np.array([True, False])) for c in demo.data.T[:60]]
    post = ev.grid_phase_oracle(one_dof_model, obs, noise, phase_bins=60, velocity_bins=12)
    np.testing.assert_allclose(post.posterior.reshape(60, -1).sum(axis=1), 1.0, atol=1e-9)
    assert post.map_trace().shape == (60,)


def test_grid_prediction_only_spreads(one_dof_model):
    noise = NoiseConfig.for_model(one_dof_model)
    prior = np.zeros((100, 10))
    prior[0, :] = 1.0
    obs = [PartialObservation(np.zeros(2), np.zeros(2, dtype=bool))] * 20
    post = ev.grid_phase_oracle(one_dof_model, obs, noise, phase_bins=100, velocity_bins=10, prior=prior)
    marg = post.phase_marginals()
    mean = marg @ post.phases
    assert np.all(np.diff(mean) > 0)
    spread = marg @ post.phases**2 - mean**2
    assert spread[-1] > spread[0]


def test_grid_sharp_likelihood(one_dof_model):
    noise = NoiseConfig.for_model(one_dof_model, relative_sd=1e-4)
    target = 0.6
    y = float(reconstruct(one_dof_model.w0.per_dof[0], np.array([target]), one_dof_model.basis[0])[0])
    prior = np.ones((200, 10))
    post = ev.grid_phase_oracle(one_dof_model, [PartialObservation(np.array([y, 0.0]), np.array([True, False]))], noise, velocity_bins=10, prior=prior)
    spacing = post.phases[1] - post.phases[0]
    # One transition step blurs by far less than a cell before the likelihood is applied.
    assert abs(post.map_trace()[0] - target) <= spacing + one_dof_model.phase_vel0 * 3


def test_grid_validation(one_dof_model, small_model):
    noise = NoiseConfig.for_model(one_dof_model)
    with pytest.raises(ValueError):
        ev.grid_phase_oracle(one_dof_model, [], noise, phase_bins=1)
    with pytest.raises(LayoutError):
        ev.grid_phase_oracle(small_model, [], NoiseConfig.for_model(small_model))


# --- reports ---

def test_evaluate_runs_report():
    runs, groups = {}, {}
    for i in range(4):
        g = gen_test_scenario(i, "normal", hold_s=3.0)
        runs[f"a{i}"] = g.interaction
        groups[f"a{i}"] = "bip"
        still = gen_test_scenario(i, "none", hold_s=3.0)
        runs[f"b{i}"] = still.interaction
        groups[f"b{i}"] = "static"
    report = ev.evaluate_runs(runs, groups, thresholds=(1e-5, 1e-5))
    doc = json.loads(report.to_json())
    assert doc["groups"]["bip"]["n"] == 4
    assert doc["tests"][0]["name"] == "mann_whitney_bip_vs_static"
    assert 0.0 <= doc["tests"][0]["p_value"] <= 1.0
    lines = report.metrics_csv().splitlines()
    assert lines[0] == "metric,scenario,value"
    assert any(line.startswith("ttc_ratio,a0,") for line in lines)
    for r in report.pearson.values():
        np.testing.assert_array_equal(np.diag(r), 1.0)
    with pytest.raises(InsufficientDataError):
        ev.evaluate_runs({})
