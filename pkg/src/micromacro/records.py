"""Coincidence-count records shared by the experiment and analysis layers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CountsTable:
    """Coincidence counts ``N(alice, bob)`` for dichotomic outcomes.

    Counts are integers for sampled runs and expected (float) counts in
    exact-probability mode. ``n_background`` is the part of the conclusive
    coincidences whose Bob signal came from the accidental background.
    """

    n_pp: float
    n_pm: float
    n_mp: float
    n_mm: float
    n_inconclusive: float = 0
    n_trials: float = 0
    n_background: float = 0

    def __post_init__(self):
        vals = (self.n_pp, self.n_pm, self.n_mp, self.n_mm, self.n_inconclusive, self.n_background)
        if min(vals) < 0:
            raise ValueError("counts must be non-negative")
        if self.n_trials == 0:
            object.__setattr__(self, "n_trials", self.conclusive + self.n_inconclusive)
        elif abs(self.conclusive + self.n_inconclusive - self.n_trials) > 1e-6 * max(1.0, self.n_trials):
            raise ValueError("counts do not add up to n_trials")

    @property
    def conclusive(self) -> float:
        return self.n_pp + self.n_pm + self.n_mp + self.n_mm

    @property
    def correlated(self) -> float:
        return self.n_pp + self.n_mm

    @property
    def anticorrelated(self) -> float:
        return self.n_pm + self.n_mp

    def swapped_bob(self) -> CountsTable:
        """Relabel Bob's two filter ports (L_B <-> L_B*)."""
        return CountsTable(self.n_pm, self.n_pp, self.n_mm, self.n_mp, self.n_inconclusive, self.n_trials, self.n_background)

    def __add__(self, other: CountsTable) -> CountsTable:
        return CountsTable(
            self.n_pp + other.n_pp,
            self.n_pm + other.n_pm,
            self.n_mp + other.n_mp,
            self.n_mm + other.n_mm,
            self.n_inconclusive + other.n_inconclusive,
            self.n_trials + other.n_trials,
            self.n_background + other.n_background,
        )


@dataclass(frozen=True)
class FringeScan:
    """Counts tables recorded at strictly increasing phases."""

    points: tuple  # of (phi, CountsTable)

    def __post_init__(self):
        phis = [p for p, _ in self.points]
        if any(b <= a for a, b in zip(phis, phis[1:])):
            raise ValueError("fringe phases must be strictly increasing")

    @property
    def phases(self) -> list[float]:
        return [p for p, _ in self.points]

    def series(self, name: str = "plus") -> list[float]:
        """``plus``: [L_B, D_A] = N(+,+); ``minus``: [L_B*, D_A] = N(+,-); ``background``."""
        if name == "plus":
            return [t.n_pp for _, t in self.points]
        if name == "minus":
            return [t.n_pm for _, t in self.points]
        if name == "background":
            return [t.n_background for _, t in self.points]
        raise ValueError(f"unknown series {name!r}")
