"""Scenario catalog: sampling contracts and Bayes ground truth."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest, ks_2samp, norm

from onebitsim import scenarios as sc

ALL_IDS = sc.SCENARIO_IDS
CLS_IDS = [s for s in ALL_IDS if sc.make_scenario(s).task == "classification"]

PHI_MINUS_1 = 0.15865525393145707  # standard normal CDF at -1


def test_catalog_ids():
    assert set(ALL_IDS) == {
        "gauss_mix_1d",
        "gauss_mix_2d",
        "checkerboard_2d",
        "sine_1d",
        "cityscape_2d",
    }
    with pytest.raises(ValueError, match="unknown scenario"):
        sc.make_scenario("nope")
    with pytest.raises(ValueError, match="bad parameters"):
        sc.make_scenario("sine_1d", wavelength=3)


@pytest.mark.parametrize("sid", ALL_IDS)
def test_sample_example_type_contract(sid):
    scen = sc.make_scenario(sid)
    rng = np.random.default_rng(1)
    for _ in range(50):
        ex = sc.sample_example(scen, rng)
        assert ex.x.shape == (scen.dimension,)
        assert np.all(np.isfinite(ex.x))
        assert math.isfinite(ex.y)
        if scen.task == "classification":
            assert ex.y in (0, 1)
        if scen.support_box is not None:
            lo, hi = scen.support_box
            assert np.all(ex.x >= lo) and np.all(ex.x <= hi)


def test_sampling_deterministic_given_seed():
    scen = sc.make_scenario("gauss_mix_2d")
    a = scen.sample(np.random.default_rng(5), 100)
    b = scen.sample(np.random.default_rng(5), 100)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_gauss_mix_prior_law_of_large_numbers():
    # empirical P(Y=1) over 1e6 draws; 3 sigma = 3 * 0.5 / 1000 = 0.0015
    scen = sc.make_scenario("gauss_mix_1d")
    _, ys = scen.sample(np.random.default_rng(2), 10**6)
    assert abs(ys.mean() - 0.5) <= 0.002


def test_regression_function_values():
    sine = sc.make_scenario("sine_1d")
    assert sc.regression_function(sine, 0.25) == pytest.approx(1.0, abs=1e-15)
    gm = sc.make_scenario("gauss_mix_1d")
    assert sc.regression_function(gm, 0.0) == 0.5
    # posterior at x=1 from the two class densities (independent oracle)
    dens1 = norm.pdf(1.0 - 1.0)
    dens0 = norm.pdf(1.0 + 1.0)
    oracle = 0.5 * dens1 / (0.5 * dens1 + 0.5 * dens0)
    assert sc.regression_function(gm, 1.0) == pytest.approx(oracle, abs=1e-12)
    assert sc.regression_function(gm, 1.0) == pytest.approx(0.8807970779778823, abs=1e-12)


def test_bayes_classifier_values_and_tie():
    gm = sc.make_scenario("gauss_mix_1d")
    assert sc.bayes_classifier(gm, 2.0) == 1
    assert sc.bayes_classifier(gm, -2.0) == 0
    # eta(0) = 1/2 exactly: the tie resolves to label 1
    assert sc.bayes_classifier(gm, 0.0) == 1
    with pytest.raises(ValueError, match="not a classification"):
        sc.bayes_classifier(sc.make_scenario("sine_1d"), 0.5)


def test_bayes_risk_values():
    sine = sc.make_scenario("sine_1d", noise=0.1)
    assert sc.bayes_risk(sine) == pytest.approx(0.01, abs=1e-15)
    gm = sc.make_scenario("gauss_mix_1d")
    assert sc.bayes_risk(gm) == pytest.approx(PHI_MINUS_1, abs=1e-12)
    assert sc.bayes_risk(gm) == pytest.approx(float(norm.cdf(-1.0)), abs=1e-15)
    # degenerate: Y identically 1 on every cell
    const = sc.make_scenario("checkerboard_2d", p_on=1.0, p_off=1.0)
    assert sc.bayes_risk(const) == 0.0
    _, ys = const.sample(np.random.default_rng(3), 1000)
    assert np.all(ys == 1)


@pytest.mark.parametrize("sid", ALL_IDS)
def test_closed_form_matches_quadrature(sid):
    scen = sc.make_scenario(sid)
    closed = scen.closed_form_bayes_risk()
    assert closed is not None
    assert abs(closed - sc.numerical_bayes_risk(scen, tol=1e-6)) <= 1e-6


@pytest.mark.parametrize("sid", CLS_IDS)
def test_bayes_classifier_risk_matches_bayes_risk(sid):
    # the integrated risk of the implemented classifier, not of the formula
    scen = sc.make_scenario(sid)
    assert abs(sc.numerical_classifier_risk(scen) - sc.bayes_risk(scen)) <= 1e-5


def test_sine_second_moment_quadrature_cross_check():
    scen = sc.make_scenario("sine_1d", noise=0.1)
    signal, err = quad(lambda x: math.sin(2 * math.pi * x) ** 2, 0.0, 1.0, epsabs=1e-10)
    assert err < 1e-9
    assert scen.second_moment() == pytest.approx(signal + 0.01, abs=1e-9)


# ---------------------------------------------------------------------------
# conditional sampling


def test_conditional_sample_stays_in_region():
    scen = sc.make_scenario("sine_1d")
    region = sc.Region([0.5], 0.1)
    rng = np.random.default_rng(4)
    for _ in range(200):
        ex = sc.sample_conditional_example(scen, region, rng)
        assert region.contains(ex.x)
    for _ in range(50):
        ex = sc.rejection_conditional_example(scen, region, rng, 10_000)
        assert region.contains(ex.x)


def test_conditional_sample_zero_mass_region():
    scen = sc.make_scenario("sine_1d")
    far = sc.Region([5.0], 0.1)
    rng = np.random.default_rng(5)
    assert sc.rejection_conditional_example(scen, far, rng, 1000) is sc.UNTRAINABLE
    assert sc.sample_conditional_example(scen, far, rng) is sc.UNTRAINABLE


def test_conditional_uniform_is_uniform_on_intersection():
    # X ~ U[0,1] given |x - 0.5| <= 0.1 must be U[0.4, 0.6]
    scen = sc.make_scenario("sine_1d")
    rng = np.random.default_rng(6)
    xs, _, untrainable = sc.sample_conditional_batch(
        scen, np.full((10**5, 1), 0.5), 0.1, rng
    )
    assert not untrainable.any()
    stat = kstest(xs[:, 0], "uniform", args=(0.4, 0.2))
    assert stat.pvalue > 0.01
    # scalar route agrees
    draws = np.array(
        [sc.sample_conditional_example(scen, sc.Region([0.5], 0.1), rng).x[0]
         for _ in range(2000)]
    )
    assert kstest(draws, "uniform", args=(0.4, 0.2)).pvalue > 0.01


@pytest.mark.parametrize("sid,center,radius", [
    ("sine_1d", [0.35], 0.12),
    ("checkerboard_2d", [0.5, 0.4], 0.2),
    ("cityscape_2d", [0.9, 0.9], 0.15),  # corner-clipped ball
])
def test_direct_sampler_matches_rejection(sid, center, radius):
    scen = sc.make_scenario(sid)
    assert scen.has_direct_conditional
    rng = np.random.default_rng(7)
    centers = np.tile(np.asarray(center, dtype=float), (10**5, 1))
    direct, _, un_d = sc.sample_conditional_batch(scen, centers, radius, rng)
    forced = sc.make_scenario(sid)
    forced.has_direct_conditional = False  # force the generic rejection path
    rejected, _, un_r = sc.sample_conditional_batch(forced, centers, radius, rng)
    assert not un_d.any() and not un_r.any()
    for axis in range(scen.dimension):
        assert ks_2samp(direct[:, axis], rejected[:, axis]).pvalue > 0.001
    dist_d = np.linalg.norm(direct - np.asarray(center), axis=1)
    dist_r = np.linalg.norm(rejected - np.asarray(center), axis=1)
    assert ks_2samp(dist_d, dist_r).pvalue > 0.001


def test_conditional_batch_labels_follow_posterior():
    scen = sc.make_scenario("cityscape_2d", flip=0.1)
    rng = np.random.default_rng(8)
    center = np.array([0.5, 0.5])  # deep inside the positive zone
    xs, ys, _ = sc.sample_conditional_batch(scen, np.tile(center, (20_000, 1)), 0.05, rng)
    assert abs(ys.mean() - 0.9) < 0.01


def test_region_validation():
    with pytest.raises(ValueError, match="radius"):
        sc.Region([0.0], -1.0)
    region = sc.Region([0.0, 0.0], 0.5)
    assert region.contains([0.3, 0.4])  # boundary point of the closed ball
    assert not region.contains([0.4, 0.4])


def test_example_validation():
    with pytest.raises(ValueError, match="finite"):
        sc.Example(np.array([np.nan]), 1.0)
    with pytest.raises(ValueError, match="finite"):
        sc.Example(np.array([0.0]), float("inf"))
