import math

import numpy as np
import pytest

from micromacro import analysis, experiments as ex
from micromacro.config import ExperimentConfig
from micromacro.detection import DetectorChain
from micromacro.records import CountsTable

SMALL = dict(g=1.0, chain=DetectorChain(eta=0.5), threshold_k=1.0)


def test_sample_counts_trivial():
    t = ex.sample_counts((1, 0, 0, 0, 0), 500, 1)
    assert (t.n_pp, t.n_pm, t.n_mp, t.n_mm, t.n_inconclusive) == (500, 0, 0, 0, 0)


def test_sample_counts_uniform_within_4_sigma():
    n = 400_000
    t = ex.sample_counts((0.25, 0.25, 0.25, 0.25, 0.0), n, 3)
    sig = math.sqrt(n * 0.25 * 0.75)
    for c in (t.n_pp, t.n_pm, t.n_mp, t.n_mm):
        assert abs(c - n / 4) < 4 * sig


def test_sample_counts_deterministic_and_keyed():
    p = (0.1, 0.2, 0.3, 0.1, 0.3)
    assert ex.sample_counts(p, 1000, 9, key=(1, 2)) == ex.sample_counts(p, 1000, 9, key=(1, 2))
    assert ex.sample_counts(p, 1000, 9, key=(1, 2)) != ex.sample_counts(p, 1000, 9, key=(1, 3))


@pytest.mark.parametrize("p", [(0.5, 0.5, 0.5, 0, 0), (-0.1, 0.6, 0.2, 0.2, 0.1), (1, 0, 0)])
def test_sample_counts_rejects_bad_tables(p):
    with pytest.raises(ValueError):
        ex.sample_counts(p, 10, 0)


def test_events_mode_counts_conclusive_events():
    p = np.array([0.001, 0.002, 0.003, 0.004, 0.99])
    t = ex.sample_counts(p, 5000, 4, mode="events", batch_size=1234)
    assert t.conclusive == 5000
    exact = ex.sample_counts(p, 5000, 4, mode="events", exact=True)
    assert exact.n_inconclusive == pytest.approx(5000 * 0.99 / 0.01)
    assert abs(t.n_inconclusive - exact.n_inconclusive) < 4 * math.sqrt(5000 * 0.99) / 0.01


def test_counts_table_invariants():
    with pytest.raises(ValueError):
        CountsTable(-1, 0, 0, 0)
    with pytest.raises(ValueError):
        CountsTable(1, 1, 1, 1, n_inconclusive=1, n_trials=9)
    t = CountsTable(1, 2, 3, 4)
    assert t.swapped_bob() == CountsTable(2, 1, 4, 3)


def test_exact_and_sampled_agree():
    cfg = ExperimentConfig(**SMALL, n_trials=200_000, phi_scan=(0.0, 1.0, 2.0))
    sampled = ex.run_micro_macro_fringe(cfg, 3)
    exact = ex.run_micro_macro_fringe(cfg.replace(exact=True), 3)
    for (_, s), (_, e) in zip(sampled.points, exact.points):
        for a, b in ((s.n_pp, e.n_pp), (s.n_pm, e.n_pm), (s.n_mp, e.n_mp), (s.n_mm, e.n_mm)):
            q = b / cfg.n_trials
            assert abs(a - b) < 4 * math.sqrt(cfg.n_trials * q * (1 - q)) + 1


def test_ideal_fringe_visibility_is_one():
    cfg = ExperimentConfig(g=0.8, chain=DetectorChain(eta=1.0), discriminator="ideal", exact=True)
    for b in (2, 3):
        scan = ex.run_micro_macro_fringe(cfg, b)
        assert analysis.visibility_fringe(scan, "plus").V == pytest.approx(1.0, abs=1e-9)


def test_complementary_ports_shifted_by_pi():
    cfg = ExperimentConfig(**SMALL, exact=True)
    scan = ex.run_micro_macro_fringe(cfg, 2)
    plus = np.array(scan.series("plus"))
    minus = np.array(scan.series("minus"))
    half = len(plus) // 2
    assert np.allclose(plus, np.roll(minus, half), rtol=1e-9)
    assert analysis.visibility_fringe(scan, "plus").V == pytest.approx(analysis.visibility_fringe(scan, "minus").V, rel=1e-9)


def test_visibility_rises_with_threshold():
    cfg = ExperimentConfig(g=1.5, chain=DetectorChain(eta=0.2))
    vs = [ex.exact_visibility(cfg, 2, k=k) for k in (0, 1, 2, 4, 6)]
    assert all(b >= a - 1e-12 for a, b in zip(vs, vs[1:]))
    assert vs[-1] > vs[0]


def test_conclusive_fraction_nonincreasing_in_k():
    cfg = ExperimentConfig(g=1.5, chain=DetectorChain(eta=0.2))
    fr = [ex.conclusive_fraction(ex.setting_probabilities(cfg, "micro", 0.0, 0.0, k), cfg) for k in (0, 1, 2, 4, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(fr, fr[1:]))


def test_entanglement_ideal_and_background():
    cfg = ExperimentConfig(g=0.8, chain=DetectorChain(eta=1.0), discriminator="ideal", exact=True)
    r = ex.run_entanglement_test(cfg)
    assert r.V[2].V == pytest.approx(1.0)
    assert r.V[3].V == pytest.approx(1.0)
    assert r.S == pytest.approx(2.0)
    noisy = ExperimentConfig(**{**SMALL, "chain": DetectorChain(eta=0.5, background_rate=1.0)}, n_trials=4000)
    r = ex.run_entanglement_test(noisy)
    for b in (2, 3):
        assert r.V[b].V < 4 * math.sqrt(1 / 8000)
        assert r.exact_V[b] == pytest.approx(0.0, abs=1e-12)


def test_entanglement_needs_both_bases():
    with pytest.raises(ValueError):
        ex.run_entanglement_test(ExperimentConfig(**SMALL, analysis_bases=(2,)))


def test_setting_order_independence():
    cfg = ExperimentConfig(**SMALL, n_trials=300)
    rev = cfg.replace(chsh_settings=tuple(reversed(cfg.chsh_settings)))
    a = ex.run_chsh(cfg).tables
    b = ex.run_chsh(rev).tables
    assert a == tuple(reversed(b))


def test_workers_do_not_change_results():
    cfg = ExperimentConfig(**SMALL, n_trials=300)
    assert ex.run_micro_macro_fringe(cfg, 2) == ex.run_micro_macro_fringe(cfg.replace(workers=8), 2)


def test_ideal_chsh_matches_closed_form():
    cfg = ExperimentConfig(g=1.0, discriminator="ideal", exact=True)
    r = ex.run_chsh(cfg)
    for (a, b), E in zip(cfg.chsh_settings, r.result.E):
        d = a - b
        assert E == pytest.approx(-math.cos(d) / (1 - 0.5 * math.sin(d) ** 2), abs=1e-12)


def test_calibrated_background_hits_target():
    cfg = ExperimentConfig(**SMALL)
    b = ex.calibrate_background(cfg, 0.3)
    assert ex.exact_visibility(cfg, 2, background_rate=b) == pytest.approx(0.3, abs=1e-10)
    with pytest.raises(ValueError):
        ex.calibrate_background(cfg, 0.9999)


def test_of_characterization_law():
    r = ex.run_of_characterization(2.0, range(13), 1_000_000, rng_seed=5)
    assert r.counts[0] == 1_000_000
    for c, e, s in zip(r.counts, r.expected, r.sigma):
        assert abs(c - e) <= 4 * s + 1e-9
    ks = np.array(r.k)
    slope = np.polyfit(ks, np.log(r.counts), 1)[0]
    assert slope == pytest.approx(math.log(2 / 3), abs=0.01)
    assert r.rates[0] == pytest.approx(250e3)


def test_of_characterization_validation():
    with pytest.raises(ValueError):
        ex.run_of_characterization(0.0, [0], 10)
    with pytest.raises(ValueError):
        ex.run_of_characterization(1.0, [-1], 10)
