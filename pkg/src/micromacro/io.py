"""Bit-stable result files: CSV data, JSON summaries, run manifest.

Floats are written with ``repr`` (shortest round-trip text), which does not
depend on the locale.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .fock_core import PhotonDistribution, write_distribution_csv
from .records import CountsTable, FringeScan


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def to_jsonable(obj):
    """Recursively convert records to JSON-ready builtins."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, CountsTable):
        return {
            "N_pp": to_jsonable(obj.n_pp), "N_pm": to_jsonable(obj.n_pm),
            "N_mp": to_jsonable(obj.n_mp), "N_mm": to_jsonable(obj.n_mm),
            "n_inconclusive": to_jsonable(obj.n_inconclusive),
            "n_trials": to_jsonable(obj.n_trials), "n_background": to_jsonable(obj.n_background),
        }
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite value in results")
        return x
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj) -> None:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def write_fringe_csv(path, scan: FringeScan) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("phi,counts_plus,counts_minus,counts_background\n")
        for phi, t in scan.points:
            fh.write(f"{fmt(phi)},{fmt(t.n_pp)},{fmt(t.n_pm)},{fmt(t.n_background)}\n")


def read_fringe_csv(path) -> FringeScan:
    pts = []
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "phi,counts_plus,counts_minus,counts_background":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            phi, cp, cm, cb = line.strip().split(",")
            num = lambda s: int(s) if s.lstrip("-").isdigit() else float(s)
            pts.append((float(phi), CountsTable(num(cp), num(cm), 0, 0, n_background=num(cb))))
    return FringeScan(tuple(pts))


def write_counts_csv(path, labels, tables) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("setting,N_pp,N_pm,N_mp,N_mm,n_inconclusive,n_background\n")
        for lab, t in zip(labels, tables):
            vals = (t.n_pp, t.n_pm, t.n_mp, t.n_mm, t.n_inconclusive, t.n_background)
            fh.write(lab + "," + ",".join(fmt(v) for v in vals) + "\n")


def write_ofchar_csv(path, ks, counts) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("k,counts\n")
        for k, c in zip(ks, counts):
            fh.write(f"{fmt(k)},{fmt(c)}\n")


def write_grid_csv(path, d: PhotonDistribution) -> None:
    write_distribution_csv(d, path)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """What was run, with which seed, and every file it produced."""

    command: str
    config: dict
    seed: int
    code_version: str = __version__
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    def add(self, path) -> None:
        self.outputs.append({"file": Path(path).name, "sha256": sha256(path)})

    def to_dict(self) -> dict:
        return {
            "command": self.command, "config": self.config, "seed": self.seed,
            "code_version": self.code_version, "outputs": self.outputs, "wall_clock_s": self.wall_clock_s,
        }


def emit_results(manifest: RunManifest, records: dict, out_dir) -> list[Path]:
    """Write each record by file name, then the manifest. Returns written paths.

    Record values: :class:`FringeScan` (fringe CSV), :class:`PhotonDistribution`
    (grid CSV), ``("ofchar", ks, counts)`` (threshold CSV),
    ``("counts", labels, tables)`` (counts CSV) or anything JSON-serializable.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rec in records.items():
        p = out / name
        if isinstance(rec, FringeScan):
            write_fringe_csv(p, rec)
        elif isinstance(rec, PhotonDistribution):
            write_grid_csv(p, rec)
        elif isinstance(rec, tuple) and rec and rec[0] == "ofchar":
            write_ofchar_csv(p, rec[1], rec[2])
        elif isinstance(rec, tuple) and rec and rec[0] == "counts":
            write_counts_csv(p, rec[1], rec[2])
        else:
            write_json(p, rec)
        manifest.add(p)
        paths.append(p)
    mp = out / "manifest.json"
    write_json(mp, manifest.to_dict())
    paths.append(mp)
    return paths
