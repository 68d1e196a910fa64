"""Fast invariant suite run by ``micromacro validate``."""

from __future__ import annotations

import math

import numpy as np

from . import analysis
from .config import ExperimentConfig
from .detection import DetectorChain, of_probabilities
from .experiments import run_chsh, run_micro_macro_fringe, run_of_characterization, setting_probabilities
from .fock_core import ModeBasis, TwoModeState, evolve_squeezer, fidelity, inner_product, mean_photon
from .opa_states import (
    AmplifiedState,
    GainParams,
    condition_on_alice_seed,
    macro_single,
    macro_spin_operator,
    macro_two_photon,
    seed_ket,
    spin1_joint,
)


def _fidelity_oracle():
    worst = 1.0
    for g in (0.5, 1.0):
        gp = GainParams(g)
        for which, seed in (("aligned", (1, 0)), ("orthogonal", (0, 1))):
            # fidelity compares normalized truncations, so the tail is accepted here
            ref = evolve_squeezer(TwoModeState.fock(*seed, 60, ModeBasis.equatorial(0.0)), g, eps_tail=1.0)
            worst = min(worst, fidelity(macro_single(which, 0.0, gp, ref.cutoff), ref))
    return worst > 1 - 1e-6, f"min fidelity {worst!r}"


def _mean_laws():
    gp = GainParams(1.0)
    a = mean_photon(macro_single("aligned", 0.0, gp))
    o = mean_photon(macro_single("orthogonal", 0.0, gp))
    ok = abs(a - (3 * gp.mbar + 1)) < 1e-6 and abs(o - gp.mbar) < 1e-6
    return ok, f"<n> aligned {a!r}, orthogonal {o!r}"


def _orthogonality():
    gp = GainParams(1.0)
    x = inner_product(macro_two_photon("two_plus", gp, 60), macro_two_photon("two_minus", gp, 60))
    return abs(x) < 1e-10, f"|<2+|2->| = {abs(x)!r}"


def _commutators():
    gp = GainParams(0.8)
    n = 40
    S = {i: macro_spin_operator(i, gp, n).matrix for i in (1, 2, 3)}
    rng = np.random.default_rng(0)
    worst = 0.0
    for i, j, k in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
        for _ in range(3):
            v = np.zeros((n + 1, n + 1), dtype=complex)
            v[: n // 4, : n // 4] = rng.normal(size=(n // 4, n // 4)) + 1j * rng.normal(size=(n // 4, n // 4))
            v = v.ravel() / np.linalg.norm(v)
            r = S[i] @ (S[j] @ v) - S[j] @ (S[i] @ v) - 2j * (S[k] @ v)
            worst = max(worst, float(np.linalg.norm(r)))
    return worst < 1e-6, f"max residual {worst!r}"


def _fringe_law():
    gp = GainParams(1.0)
    worst = 0.0
    j = spin1_joint(0.0, gp)
    for phi in np.linspace(0, 2 * math.pi, 9):
        _, bob = condition_on_alice_seed(j, phi, (2, 0), 0.0)
        # Bob's state is the amplified |2phi> up to the singlet relabeling
        n_plus = bob.mean_photon("second")
        n_law = gp.mbar + (4 * gp.mbar + 2) * math.cos(phi / 2) ** 2
        worst = max(worst, abs(n_plus - n_law))
    return worst < 1e-6, f"max |N+ - law| {worst!r}"


def _povm_monotone():
    cfg = ExperimentConfig(g=1.0, chain=DetectorChain(eta=0.5))
    inc = [setting_probabilities(cfg, "micro", 0.0, 0.0, k)[8] for k in (0, 1, 2, 4, 8)]
    return all(b >= a - 1e-12 for a, b in zip(inc, inc[1:])), f"other-outcome probabilities {inc}"


def _phase_covariance():
    gp = GainParams(1.0)
    chain = DetectorChain(eta=0.5, k=1)
    vals = []
    for phi in (0.0, math.pi / 2, math.pi, 1.5 * math.pi):
        vals.append(of_probabilities(AmplifiedState(seed_ket(1, 0), ModeBasis.equatorial(phi), gp), chain))
    spread = float(np.ptp(np.asarray(vals), axis=0).max())
    return spread < 1e-6, f"spread {spread!r}"


def _chsh_estimator():
    r = analysis.chsh_S([(0.643, 0.0), (0.551, 0.0), (0.608, 0.0), (-0.453, 0.0)])
    return abs(r.S - 2.255) < 1e-12, f"S from table {r.S!r}"


def _ideal_chsh():
    cfg = ExperimentConfig(g=0.8, discriminator="ideal", exact=True)
    s = run_chsh(cfg).result.S
    return abs(abs(s) - 4 * (2 ** 0.5) * 2 / 3) < 1e-9, f"S {s!r}"


def _ideal_fringe():
    cfg = ExperimentConfig(g=0.8, chain=DetectorChain(eta=1.0), discriminator="ideal", exact=True)
    v = analysis.visibility_fringe(run_micro_macro_fringe(cfg, 2)).V
    return v > 1 - 1e-9, f"V {v!r}"


def _thermal():
    r = run_of_characterization(2.0, range(8), 200_000, rng_seed=1)
    z = max(abs(c - e) / max(s, 1.0) for c, e, s in zip(r.counts, r.expected, r.sigma))
    return z < 4.0, f"max |z| {z!r}"


CHECKS = [
    ("analytic macro-states match evolved seeds", _fidelity_oracle),
    ("mean photon laws 3m+1 and m", _mean_laws),
    ("two-photon macro-states orthogonal", _orthogonality),
    ("macro-spin commutation relations", _commutators),
    ("two-photon fringe law", _fringe_law),
    ("inconclusive probability nondecreasing in k", _povm_monotone),
    ("filter phase covariance", _phase_covariance),
    ("CHSH estimator on reference table", _chsh_estimator),
    ("ideal spin-1 CHSH value", _ideal_chsh),
    ("ideal micro-macro fringe visibility", _ideal_fringe),
    ("thermal threshold law", _thermal),
]


def run_all(stream=None) -> bool:
    ok_all = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as e:  # report, keep going
            ok, detail = False, f"{type(e).__name__}: {e}"
        ok_all &= bool(ok)
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(line, file=stream)
    return ok_all
