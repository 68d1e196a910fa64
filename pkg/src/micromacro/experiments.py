"""Simulated experiments: micro-macro fringes, separability test, CHSH test, OF characterization.

Every setting is evaluated in two stages. First the exact outcome
probabilities are computed (Alice projection, Bob's conditional macro-state,
loss, filter). Then counts are drawn from them, or replaced by expected counts
in exact mode.

Outcome table layout (length 9): ``N(+,+), N(+,-), N(-,+), N(-,-)`` from
genuine Bob signals, the same four from background, then everything else
(no Alice trigger, inconclusive filter, Alice outcome outside the test).

Background: with probability ``background_rate`` Bob's detectors see two
independent thermal modes instead of the conditional macro-state. Each mode
has half the state's total mean photon number, so the background has the same
brightness but no correlation with Alice.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import analysis
from .config import ExperimentConfig
from .detection import DetectorChain, detected_distribution, of_probabilities, thermal_pair
from .fock_core import UnderTruncationError
from .opa_states import AmplifiedState, GainParams, adaptive_mode_cutoff, condition_on_alice_seed, micro_macro_joint, seed_ket, spin1_joint
from .fock_core import ModeBasis
from .records import CountsTable, FringeScan

__all__ = [
    "CountsTable",
    "FringeScan",
    "ExperimentConfig",
    "sample_counts",
    "setting_probabilities",
    "run_micro_macro_fringe",
    "run_spin1_fringe",
    "run_entanglement_test",
    "run_chsh",
    "run_of_characterization",
    "calibrate_background",
]

BASIS_PHASES = {2: 1.5 * math.pi, 3: 0.0}

# stream tags keep experiments from sharing random streams
_TAGS = {"fringe": 1, "entanglement": 2, "chsh": 3, "spin1_fringe": 4, "ofchar": 5}

_ALICE = {"micro": ((1, 0), (0, 1)), "spin1": ((2, 0), (0, 2))}


def _bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def setting_key(tag: str, *phases: float) -> tuple[int, ...]:
    """Stream identity of one setting, independent of evaluation order."""
    return (_TAGS[tag],) + tuple(_bits(p) for p in phases)


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- exact probabilities ---------------------------------------------------


def _reference_total_mean(kind: str, gp: GainParams) -> float:
    st = AmplifiedState(seed_ket(*_ALICE[kind][0]), ModeBasis.equatorial(0.0), gp)
    return st.mean_photon("first") + st.mean_photon("second")


def resolve_threshold(cfg: ExperimentConfig, kind: str = "micro") -> float:
    """Explicit ``threshold_k`` or ``threshold_factor`` x mean detected photons per mode."""
    if cfg.threshold_k is not None:
        return float(cfg.threshold_k)
    per_mode = cfg.chain.eta * _reference_total_mean(kind, GainParams(cfg.g)) / 2.0
    return cfg.threshold_factor * per_mode


def _bob_filter(bob: AmplifiedState, chain: DetectorChain, discriminator: str, n_max: int, eps_tail: float) -> tuple[float, float]:
    if discriminator == "ideal":
        n = bob.photon_numbers()
        return abs(bob.seed.get((n, 0), 0.0)) ** 2, abs(bob.seed.get((0, n), 0.0)) ** 2
    det = detected_distribution(bob, chain.eta, n_max=n_max)
    if det.deficit > eps_tail:
        raise UnderTruncationError(
            f"detected distribution misses {det.deficit:.3g} of its mass at cutoff {n_max}",
            det.deficit,
            2 * n_max,
        )
    pp, pm, _ = of_probabilities(det, chain, lossy=False)
    return pp, pm


@lru_cache(maxsize=8192)
def _components(kind: str, g: float, chain: DetectorChain, discriminator: str, phi_a: float, phi_b: float, n_max: int, eps_tail: float):
    gp = GainParams(g)
    joint = micro_macro_joint(phi_b, gp) if kind == "micro" else spin1_joint(phi_b, gp)
    signal = np.zeros((2, 2))
    bg = np.zeros((2, 2))
    bg_q = None
    for x, outcome in enumerate(_ALICE[kind]):
        try:
            pa, bob = condition_on_alice_seed(joint, phi_a, outcome, phi_b)
        except ValueError as e:
            if getattr(e, "probability", None) == 0.0:
                continue
            raise
        q = _bob_filter(bob, chain, discriminator, n_max, eps_tail)
        signal[x] = pa * np.asarray(q)
        if discriminator == "ideal":
            # uncorrelated coin with the signal's conclusive rate
            bg[x] = pa * (q[0] + q[1]) / 2.0
        else:
            if bg_q is None:
                mean = (bob.mean_photon("first") + bob.mean_photon("second")) / 2.0
                bg_q = of_probabilities(thermal_pair(mean, chain.eta), chain, lossy=False)[:2]
            bg[x] = pa * np.asarray(bg_q)
    signal.setflags(write=False)
    bg.setflags(write=False)
    return signal, bg


def setting_probabilities(cfg: ExperimentConfig, kind: str, phi_a: float, phi_b: float, k: float | None = None, background_rate: float | None = None) -> np.ndarray:
    """Length-9 outcome table for one setting (see module docstring)."""
    if k is None:
        k = resolve_threshold(cfg, kind)
    chain = replace(cfg.chain, k=float(k))
    n_max = cfg.cutoff if cfg.cutoff is not None else adaptive_mode_cutoff(cfg.g, eps_tail=cfg.eps_tail)
    signal, bg = _components(kind, float(cfg.g), chain, cfg.discriminator, float(phi_a), float(phi_b), int(n_max), float(cfg.eps_tail))
    b = chain.background_rate if background_rate is None else float(background_rate)
    eff = cfg.alice_efficiency
    p = np.empty(9)
    p[:4] = eff * (1.0 - b) * signal.ravel()
    p[4:8] = eff * b * bg.ravel()
    p[8] = max(0.0, 1.0 - p[:8].sum())
    return p


def conclusive_fraction(p: np.ndarray, cfg: ExperimentConfig) -> float:
    """Bob's filter transmission given an Alice trigger in the test outcomes."""
    return float(p[:8].sum() / cfg.alice_efficiency)


# -- sampling --------------------------------------------------------------


def _as_table9(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape == (5,):
        p = np.concatenate([p[:4], np.zeros(4), p[4:]])
    if p.shape != (9,):
        raise ValueError("outcome table must have 5 or 9 entries")
    if (p < 0).any() or not np.isfinite(p).all():
        raise ValueError("outcome probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"outcome probabilities sum to {p.sum()!r}, expected 1")
    return p


def _table(c: np.ndarray, n_trials) -> CountsTable:
    sig, bg = c[:4], c[4:8]
    tot = sig + bg
    return CountsTable(*(x.item() for x in tot), n_inconclusive=c[8].item(), n_trials=n_trials, n_background=bg.sum().item())


def sample_counts(p, n_trials: int, rng_seed, key: tuple = (), mode: str = "trials", batch_size: int = 100_000, exact: bool = False) -> CountsTable:
    """Draw counts for one setting.

    ``p`` is a 5-entry ``(++, +-, -+, --, other)`` or 9-entry table.
    ``mode="trials"`` draws ``n_trials`` pulses; ``mode="events"`` draws
    ``n_trials`` conclusive coincidences plus the inconclusive pulses that
    precede them. Each batch uses its own stream derived from
    ``(rng_seed, key, batch)``, so results do not depend on evaluation order.
    """
    p = _as_table9(p)
    if n_trials <= 0:
        raise ValueError("n_trials must be > 0")
    pc = p[:8].sum()
    if mode == "events" and pc <= 0:
        raise ValueError("no conclusive outcome has positive probability")
    if exact:
        if mode == "trials":
            return _table(n_trials * p, n_trials)
        c = np.empty(9)
        c[:8] = n_trials * p[:8] / pc
        c[8] = n_trials * (1.0 - pc) / pc
        return _table(c, c.sum())
    counts = np.zeros(9, dtype=np.int64)
    nb = -(-n_trials // batch_size)
    for i in range(nb):
        n = min(batch_size, n_trials - i * batch_size)
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=tuple(key) + (i,)))
        if mode == "trials":
            counts += rng.multinomial(n, p / p.sum())
        else:
            counts[:8] += rng.multinomial(n, p[:8] / pc)
            counts[8] += rng.negative_binomial(n, pc) if pc < 1 else 0
    return _table(counts, int(counts.sum()))


def _counts(cfg: ExperimentConfig, p: np.ndarray, key: tuple, n: int | None = None) -> CountsTable:
    return sample_counts(p, n or cfg.n_trials, cfg.rng_seed, key=key, mode=cfg.count_mode, batch_size=cfg.batch_size, exact=cfg.exact)


# -- experiments -----------------------------------------------------------


def run_micro_macro_fringe(cfg: ExperimentConfig, basis_index: int = 2) -> FringeScan:
    """Coincidences versus Alice's phase offset ``phi`` relative to Bob's basis.

    Series ``plus`` is ``[L_B, D_A]`` and ``minus`` is ``[L_B*, D_A]``.
    """
    if basis_index not in BASIS_PHASES:
        raise ValueError("fringes are recorded in basis 2 or 3")
    phi_b = BASIS_PHASES[basis_index]
    k = resolve_threshold(cfg, "micro")

    def one(phi):
        phi_a = phi_b + phi
        p = setting_probabilities(cfg, "micro", phi_a, phi_b, k)
        return phi, _counts(cfg, p, setting_key("fringe", phi_a, phi_b))

    return FringeScan(tuple(_pmap(one, cfg.phi_scan, cfg.workers)))


def run_spin1_fringe(cfg: ExperimentConfig) -> FringeScan:
    """Two-photon macro-state fringe: Alice projects on ``|2phi>``, Bob analyzes in ``+/-``."""
    k = resolve_threshold(cfg, "spin1")

    def one(phi):
        p = setting_probabilities(cfg, "spin1", phi, 0.0, k)
        return phi, _counts(cfg, p, setting_key("spin1_fringe", phi, 0.0))

    return FringeScan(tuple(_pmap(one, cfg.phi_scan, cfg.workers)))


@dataclass(frozen=True)
class EntanglementResult:
    V: dict  # basis -> VisibilityResult
    S: float
    sigma_S: float
    violated: bool
    tables: dict  # basis -> (table at phi=0, table at phi=pi)
    exact_V: dict
    conclusive_fraction: float
    k: float
    background_rate: float


def _extremum_visibility(t0: CountsTable, tpi: CountsTable) -> analysis.VisibilityResult:
    # at phi = pi Bob's ports swap roles, so pool them after relabeling
    return analysis.visibility_counts(t0 + tpi.swapped_bob())


def exact_visibility(cfg: ExperimentConfig, basis_index: int, k: float | None = None, background_rate: float | None = None) -> float:
    phi_b = BASIS_PHASES[basis_index]
    ps = [setting_probabilities(cfg, "micro", phi_b + d, phi_b, k, background_rate) for d in (0.0, math.pi)]
    t0, tpi = (sample_counts(p, 1, 0, exact=True) for p in ps)
    return _extremum_visibility(t0, tpi).V


def run_entanglement_test(cfg: ExperimentConfig) -> EntanglementResult:
    """``V_2``, ``V_3`` at the fringe extrema and ``S = V_1 + V_2 + V_3``, with ``V_1`` fixed by config."""
    bases = [b for b in cfg.analysis_bases if b in BASIS_PHASES]
    if set(bases) != {2, 3}:
        raise ValueError("the separability test needs bases 2 and 3 enabled")
    k = resolve_threshold(cfg, "micro")
    jobs = [(b, d) for b in bases for d in (0.0, math.pi)]

    def one(job):
        b, d = job
        phi_b = BASIS_PHASES[b]
        p = setting_probabilities(cfg, "micro", phi_b + d, phi_b, k)
        return p, _counts(cfg, p, setting_key("entanglement", phi_b + d, phi_b))

    res = dict(zip(jobs, _pmap(one, jobs, cfg.workers)))
    V, tables, exact_V = {}, {}, {}
    for b in bases:
        t0, tpi = res[(b, 0.0)][1], res[(b, math.pi)][1]
        tables[b] = (t0, tpi)
        V[b] = _extremum_visibility(t0, tpi)
        e0, epi = (sample_counts(res[(b, d)][0], 1, 0, exact=True) for d in (0.0, math.pi))
        exact_V[b] = _extremum_visibility(e0, epi).V
    S, violated = analysis.separability_S(cfg.V1, V[2].V, V[3].V)
    sigma = math.hypot(V[2].sigma_V, V[3].sigma_V)
    frac = float(np.mean([conclusive_fraction(p, cfg) for p, _ in res.values()]))
    return EntanglementResult(V, S, sigma, violated, tables, exact_V, frac, k, cfg.chain.background_rate)


@dataclass(frozen=True)
class CHSHRun:
    tables: tuple
    result: analysis.CHSHResult
    exact: analysis.CHSHResult
    conclusive_fraction: float
    k: float


def run_chsh(cfg: ExperimentConfig) -> CHSHRun:
    """Spin-1 Bell test: Alice's ``|2phi_a>`` is +1, ``|2phi_a_perp>`` is -1; Bob uses the filter."""
    k = resolve_threshold(cfg, "spin1")

    def one(setting):
        a, b = setting
        p = setting_probabilities(cfg, "spin1", a, b, k)
        return p, _counts(cfg, p, setting_key("chsh", a, b))

    res = _pmap(one, cfg.chsh_settings, cfg.workers)
    tables = tuple(t for _, t in res)
    result = analysis.chsh_S([analysis.correlation_E(t) for t in tables])
    exact = analysis.chsh_S([analysis.correlation_E(sample_counts(p, 1, 0, exact=True))[0] for p, _ in res])
    frac = float(np.mean([conclusive_fraction(p, cfg) / (2.0 / 3.0) for p, _ in res]))
    return CHSHRun(tables, result, exact, frac, k)


def calibrate_background(cfg: ExperimentConfig, target_V: float, basis_index: int = 2, k: float | None = None) -> float:
    """Background rate giving exact visibility ``target_V`` in one basis."""
    if k is None:
        k = resolve_threshold(cfg, "micro")
    f = lambda b: exact_visibility(cfg, basis_index, k, b) - target_V
    lo, hi = f(0.0), f(1.0)
    if lo < 0 or hi > 0:
        raise ValueError(f"target visibility {target_V} not reachable (range {hi + target_V:.4g}..{lo + target_V:.4g})")
    return float(brentq(f, 0.0, 1.0, xtol=1e-14, rtol=1e-14))


@dataclass(frozen=True)
class OFCharacterization:
    mean_n: float
    k: tuple
    counts: tuple
    expected: tuple
    sigma: tuple
    n_trials: int
    repetition_rate: float

    @property
    def rates(self) -> tuple:
        """Above-threshold events per second."""
        return tuple(self.repetition_rate * c / self.n_trials for c in self.counts)


def run_of_characterization(mean_n: float, k_list, n_trials: int, repetition_rate: float = 250e3, rng_seed: int = 0, batch_size: int = 1_000_000) -> OFCharacterization:
    """Threshold counts on a thermal source.

    An event counts at threshold ``k`` when ``n >= k``, matching
    ``Pi(k) = sum_{n >= k} P(n) = (<n>/(1+<n>))^k``.
    """
    if mean_n <= 0:
        raise ValueError("mean photon number must be > 0")
    if n_trials <= 0:
        raise ValueError("n_trials must be > 0")
    ks = np.asarray(sorted(int(k) for k in k_list))
    if (ks < 0).any():
        raise ValueError("thresholds must be >= 0")
    counts = np.zeros(ks.size, dtype=np.int64)
    nb = -(-n_trials // batch_size)
    for i in range(nb):
        n = min(batch_size, n_trials - i * batch_size)
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(_TAGS["ofchar"], i)))
        x = rng.geometric(1.0 / (1.0 + mean_n), size=n) - 1
        hist = np.bincount(x)
        tail = np.concatenate([np.cumsum(hist[::-1])[::-1], [0]])
        counts += tail[np.minimum(ks, hist.size)]
    pi = np.array([analysis.thermal_threshold_prob(mean_n, int(k)) for k in ks])
    expected = n_trials * pi
    sigma = np.sqrt(n_trials * pi * (1.0 - pi))
    return OFCharacterization(
        float(mean_n), tuple(int(k) for k in ks), tuple(int(c) for c in counts),
        tuple(float(e) for e in expected), tuple(float(s) for s in sigma), int(n_trials), float(repetition_rate),
    )
