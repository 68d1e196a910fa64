import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from micromacro.detection import (
    DetectorChain,
    FactoredDistribution,
    OFOutcome,
    apply_loss,
    binomial_matrix,
    detected_distribution,
    of_decide,
    of_probabilities,
    pm_response,
    sample_events,
    thermal_pair,
    thin_vector,
)
from micromacro.fock_core import ModeBasis, PhotonDistribution, number_distribution
from micromacro.opa_states import AmplifiedState, GainParams, macro_single, macro_two_photon, seed_ket

import oracles

EQ0 = ModeBasis.equatorial(0.0)


@pytest.mark.parametrize("kw", [{"eta": 1.5}, {"eta": -0.1}, {"xi": 0.0}, {"sigma_noise": -1}, {"k": -1}, {"background_rate": 2}])
def test_chain_validation(kw):
    with pytest.raises(ValueError):
        DetectorChain(**kw)


@pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
def test_thinning_matches_purification(eta):
    rng = np.random.default_rng(7)
    c = rng.normal(size=9) + 1j * rng.normal(size=9)
    c /= np.linalg.norm(c)
    ref = oracles.thin_by_purification(c, eta)
    out = thin_vector(np.abs(c) ** 2, eta, eps_tail=0.0)
    assert np.allclose(out, ref[: out.size], atol=1e-12)
    assert np.allclose(binomial_matrix(8, eta) @ np.abs(c) ** 2, ref, atol=1e-12)


def test_banded_thinning_matches_full_matrix():
    rng = np.random.default_rng(0)
    p = rng.random(3000)
    p /= p.sum()
    a = thin_vector(p, 0.03, eps_tail=0.0)
    b = binomial_matrix(2999, 0.03) @ p
    assert np.allclose(a, b[: a.size], atol=1e-14)
    assert b[a.size :].sum() < 1e-14


@pytest.mark.parametrize("eta", [0.0, 0.3, 1.0])
def test_loss_scales_mean(eta):
    d = number_distribution(macro_single("aligned", 0.0, GainParams(0.8)))
    out = apply_loss(d, eta)
    assert out.mean("first") == pytest.approx(eta * d.mean("first"), rel=1e-9, abs=1e-12)
    assert out.total() == pytest.approx(d.total(), abs=1e-12)


def test_thermal_stays_thermal_under_loss():
    mu, eta = 5.0, 0.2
    x = mu / (1 + mu)
    p = (1 - x) * x ** np.arange(400)
    out = thin_vector(p, eta, eps_tail=0.0)
    y = eta * mu / (1 + eta * mu)
    ref = (1 - y) * y ** np.arange(out.size)
    assert np.allclose(out, ref, atol=1e-13)
    t = thermal_pair(mu, eta)
    assert t.mean("first") == pytest.approx(eta * mu, rel=1e-9)


def test_factored_and_dense_paths_agree():
    gp = GainParams(1.0)
    st_ = AmplifiedState({(2, 0): 0.8, (1, 1): 0.6}, EQ0, gp)
    chain = DetectorChain(eta=0.4, k=2.0)
    dense = number_distribution(st_.to_state())
    a = of_probabilities(dense, chain)
    b = of_probabilities(st_, chain)
    assert np.allclose(a, b, atol=1e-9)
    fd = detected_distribution(st_, 0.4)
    assert np.allclose(fd.to_dense().P[:20, :20], apply_loss(dense, 0.4).P[:20, :20], atol=1e-12)


def test_filter_boundaries_are_strict():
    chain = DetectorChain(k=3.0, xi=2.0)
    assert of_decide(8.0, 2.0, chain) is OFOutcome.INCONCLUSIVE
    assert of_decide(8.1, 2.0, chain) is OFOutcome.PLUS
    assert of_decide(2.0, 8.1, chain) is OFOutcome.MINUS
    assert of_decide(5.0, 5.0, DetectorChain(k=0.0)) is OFOutcome.INCONCLUSIVE


def test_pm_response_noise_needs_rng():
    chain = DetectorChain(sigma_noise=0.5)
    with pytest.raises(ValueError):
        pm_response(3, 2, chain)
    with pytest.raises(ValueError):
        pm_response(-1, 2, DetectorChain())
    assert pm_response(3, 2, DetectorChain(xi=2.0)) == (6.0, 4.0)


@pytest.mark.parametrize("sigma", [0.0, 0.7])
def test_exact_filter_matches_monte_carlo(sigma):
    gp = GainParams(0.7)
    chain = DetectorChain(eta=0.5, k=1.0, sigma_noise=sigma)
    d = number_distribution(macro_single("aligned", 0.0, gp))
    p = of_probabilities(d, chain)
    n = 20000
    counts = sample_events(d, chain, n, np.random.default_rng(11))
    for o, pe in zip((OFOutcome.PLUS, OFOutcome.MINUS, OFOutcome.INCONCLUSIVE), p):
        sig = math.sqrt(n * pe * (1 - pe))
        assert abs(counts[o] - n * pe) < 4 * sig + 1


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10))
def test_inconclusive_nondecreasing_in_k(k1, k2):
    lo, hi = sorted((k1, k2))
    st_ = AmplifiedState(seed_ket(1, 0), EQ0, GainParams(1.0))
    a = of_probabilities(st_, DetectorChain(eta=0.5, k=lo))
    b = of_probabilities(st_, DetectorChain(eta=0.5, k=hi))
    assert b[2] >= a[2] - 1e-12


@pytest.mark.parametrize("seed", [(1, 0), (2, 0), (1, 1)])
def test_filter_phase_covariance(seed):
    gp = GainParams(1.2)
    chain = DetectorChain(eta=0.3, k=1.5)
    vals = [of_probabilities(AmplifiedState(seed_ket(*seed), ModeBasis.equatorial(p), gp), chain) for p in (0, 1.0, math.pi, 4.5)]
    assert np.ptp(np.array(vals), axis=0).max() < 1e-12


def test_swapping_ports_swaps_outcomes():
    gp = GainParams(0.9)
    chain = DetectorChain(eta=0.5, k=1.0)
    a = of_probabilities(number_distribution(macro_two_photon("two_plus", gp)), chain)
    b = of_probabilities(number_distribution(macro_two_photon("two_minus", gp)), chain)
    assert a[0] == pytest.approx(b[1], abs=1e-12)
    assert a[1] == pytest.approx(b[0], abs=1e-12)


def test_factored_distribution_total_and_difference():
    u = np.array([0.5, 0.5])
    v = np.array([0.2, 0.3, 0.5])
    fd = FactoredDistribution(((1.0, u, v),), EQ0)
    off, d = fd.difference_distribution()
    dense = PhotonDistribution(np.outer(u, v), EQ0)
    off2, d2 = dense.difference_distribution()
    assert off == off2
    assert np.allclose(d, d2)
    assert fd.total() == pytest.approx(1.0)
