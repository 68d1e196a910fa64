"""Experiment configuration: defaults, JSON schema checks and roundtrip."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .detection import DetectorChain
from .fock_core import DEFAULT_EPS_TAIL, TWO_PI, _normalize_phase

SCHEMA_VERSION = 1

_Q = math.pi / 4.0
DEFAULT_CHSH_SETTINGS = ((_Q, 0.0), (-_Q, 0.0), (_Q, 2 * _Q), (-_Q, 2 * _Q))


class ConfigError(ValueError):
    """Schema or range violation in a configuration file."""


def _default_scan() -> tuple[float, ...]:
    return tuple(TWO_PI * i / 16 for i in range(16))


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a simulated run.

    ``threshold_k`` of ``None`` picks ``threshold_factor`` times the mean
    detected photon number per mode of Bob's conditional state. ``count_mode``
    ``"events"`` draws ``n_trials`` conclusive coincidences per setting (the
    lab's fixed statistics per setting); ``"trials"`` draws ``n_trials`` laser
    pulses instead.
    """

    g: float = 4.40
    cutoff: int | None = None
    eps_tail: float = DEFAULT_EPS_TAIL
    phi_scan: tuple = field(default_factory=_default_scan)
    analysis_bases: tuple = (2, 3)
    chain: DetectorChain = field(default_factory=DetectorChain)
    threshold_k: float | None = None
    threshold_factor: float = 8.0
    discriminator: str = "of"
    alice_efficiency: float = 0.10
    n_trials: int = 500
    count_mode: str = "events"
    batch_size: int = 100_000
    rng_seed: int = 0
    chsh_settings: tuple = DEFAULT_CHSH_SETTINGS
    V1: float = 0.0
    repetition_rate: float = 250e3
    of_mean_n: float = 2.0
    of_k_list: tuple = tuple(range(13))
    of_trials: int = 1_000_000
    exact: bool = False
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        s = object.__setattr__
        s(self, "phi_scan", tuple(sorted({_normalize_phase(p) for p in self.phi_scan})))
        s(self, "chsh_settings", tuple((_normalize_phase(a), _normalize_phase(b)) for a, b in self.chsh_settings))
        s(self, "analysis_bases", tuple(int(b) for b in self.analysis_bases))
        s(self, "of_k_list", tuple(int(k) for k in self.of_k_list))
        self.validate()

    def validate(self):
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if not self.g >= 0 or not math.isfinite(self.g):
            bad("g", f"gain must be finite and >= 0, got {self.g}")
        if self.cutoff is not None and self.cutoff < 2:
            bad("cutoff", "must be >= 2")
        if not 0 < self.eps_tail < 1:
            bad("eps_tail", "must lie in (0, 1)")
        if not self.phi_scan:
            bad("phi_scan", "needs at least one phase")
        if not set(self.analysis_bases) <= {1, 2, 3}:
            bad("analysis_bases", "must be a subset of {1, 2, 3}")
        if self.threshold_k is not None and self.threshold_k < 0:
            bad("threshold_k", "must be >= 0")
        if self.threshold_factor < 0:
            bad("threshold_factor", "must be >= 0")
        if self.discriminator not in ("of", "ideal"):
            bad("discriminator", "must be 'of' or 'ideal'")
        if not 0 < self.alice_efficiency <= 1:
            bad("alice_efficiency", "must lie in (0, 1]")
        if self.n_trials <= 0:
            bad("n_trials", "must be > 0")
        if self.count_mode not in ("events", "trials"):
            bad("count_mode", "must be 'events' or 'trials'")
        if self.batch_size <= 0:
            bad("batch_size", "must be > 0")
        if not 0 <= self.rng_seed < 2**64:
            bad("rng_seed", "must be an unsigned 64-bit integer")
        if len(self.chsh_settings) != 4:
            bad("chsh_settings", "needs four (phi_a, phi_b) pairs")
        if not 0 <= self.V1 <= 1:
            bad("V1", "must lie in [0, 1]")
        if self.repetition_rate <= 0:
            bad("repetition_rate", "must be > 0")
        if self.of_mean_n <= 0:
            bad("of_mean_n", "must be > 0")
        if any(k < 0 for k in self.of_k_list):
            bad("of_k_list", "thresholds must be >= 0")
        if self.of_trials <= 0:
            bad("of_trials", "must be > 0")
        if self.workers < 1:
            bad("workers", "must be >= 1")
        if self.schema_version != SCHEMA_VERSION:
            bad("schema_version", f"unsupported version {self.schema_version}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("phi_scan", "analysis_bases", "of_k_list"):
            d[key] = list(d[key])
        d["chsh_settings"] = [list(p) for p in self.chsh_settings]
        return d

    def replace(self, **kw) -> ExperimentConfig:
        return dataclasses.replace(self, **kw)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_CHAIN_FIELDS = {f.name for f in dataclasses.fields(DetectorChain)}
_INT_KEYS = {"cutoff", "n_trials", "batch_size", "rng_seed", "of_trials", "workers", "schema_version"}
_FLOAT_KEYS = {"g", "eps_tail", "threshold_k", "threshold_factor", "alice_efficiency", "V1", "repetition_rate", "of_mean_n"}


def _check_number(key, v, integer):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        raise ConfigError(f"{key}: expected {'an integer' if integer else 'a number'}, got {v!r}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    kw = {}
    for key, v in data.items():
        if key not in _FIELDS:
            raise ConfigError(f"{key}: unknown configuration key")
        if key == "chain":
            if not isinstance(v, dict):
                raise ConfigError("chain: expected an object")
            for ck, cv in v.items():
                if ck not in _CHAIN_FIELDS:
                    raise ConfigError(f"chain.{ck}: unknown configuration key")
                _check_number(f"chain.{ck}", cv, False)
            try:
                v = DetectorChain(**v)
            except ValueError as e:
                raise ConfigError(f"chain: {e}") from None
        elif key in _INT_KEYS:
            if not (key == "cutoff" and v is None):
                _check_number(key, v, True)
        elif key in _FLOAT_KEYS:
            if not (key == "threshold_k" and v is None):
                _check_number(key, v, False)
        elif key in ("discriminator", "count_mode"):
            if not isinstance(v, str):
                raise ConfigError(f"{key}: expected a string")
        elif key == "exact":
            if not isinstance(v, bool):
                raise ConfigError("exact: expected true or false")
        elif key == "chsh_settings":
            if not isinstance(v, list) or not all(isinstance(p, list) and len(p) == 2 for p in v):
                raise ConfigError("chsh_settings: expected a list of [phi_a, phi_b] pairs")
            for p in v:
                for x in p:
                    _check_number(key, x, False)
            v = tuple(tuple(p) for p in v)
        else:
            if not isinstance(v, list):
                raise ConfigError(f"{key}: expected a list")
            for x in v:
                _check_number(key, x, key != "phi_scan")
            v = tuple(v)
        kw[key] = v
    try:
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


def parse_config(path) -> ExperimentConfig:
    """Read a JSON config; missing keys take defaults."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}") from None
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
