"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(under-truncation).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace

from . import analysis, experiments
from .config import ConfigError, ExperimentConfig, parse_config
from .fock_core import ModeBasis, UnderTruncationError, number_distribution
from .io import RunManifest, emit_results
from .opa_states import TWO_PHOTON_SEEDS, AmplifiedState, GainParams, seed_ket

STATE_SEEDS = {"aligned": (1, 0), "orthogonal": (0, 1), **TWO_PHOTON_SEEDS}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="JSON configuration file")
    p.add_argument("--seed", type=int, metavar="U64", help="master random seed")
    p.add_argument("--out", metavar="DIR", default="results", help="output directory (default: results)")
    p.add_argument("--g", type=float, metavar="REAL", help="parametric gain")
    p.add_argument("--eta", type=float, metavar="REAL", help="overall efficiency of Bob's detectors")
    p.add_argument("--threshold-k", type=float, metavar="REAL", help="filter threshold in photons")
    p.add_argument("--trials", type=int, metavar="N", help="events per setting")
    p.add_argument("--exact", action="store_true", help="exact probabilities, no sampling")
    p.add_argument("--workers", type=int, metavar="N", help="parallel worker threads")
    p.add_argument("--background", type=float, metavar="REAL", help="background rate in [0, 1]")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="micromacro", description="Micro-macro entanglement simulations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    f = sub.add_parser("fringe", parents=[common], help="coincidence fringes versus phase")
    f.add_argument("--basis", type=int, choices=(2, 3), action="append", help="analysis basis (repeatable)")
    f.add_argument("--spin1", action="store_true", help="two-photon macro-state fringe instead")
    e = sub.add_parser("entanglement", parents=[common], help="separability test V2 + V3")
    e.add_argument("--calibrate-V", type=float, metavar="REAL", help="set background so the exact V equals this")
    c = sub.add_parser("chsh", parents=[common], help="spin-1 CHSH test")
    c.add_argument("--discriminator", choices=("of", "ideal"))
    o = sub.add_parser("ofchar", parents=[common], help="filter threshold law on a thermal source")
    o.add_argument("--mean-n", type=float, metavar="REAL")
    s = sub.add_parser("state", parents=[common], help="dump photon-number grids of macro-states")
    s.add_argument("--kind", choices=sorted(STATE_SEEDS), action="append", help="state to dump (repeatable)")
    s.add_argument("--phi", type=float, default=0.0, help="equatorial basis phase of the seed")
    s.add_argument("--cutoff", type=int, help="grid cutoff (adaptive by default)")
    sub.add_parser("validate", parents=[common], help="run the invariant suite")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    over = {}
    for flag, key in (("seed", "rng_seed"), ("g", "g"), ("threshold_k", "threshold_k"), ("trials", "n_trials"), ("workers", "workers")):
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    if args.exact:
        over["exact"] = True
    if getattr(args, "discriminator", None):
        over["discriminator"] = args.discriminator
    chain = {}
    if args.eta is not None:
        chain["eta"] = args.eta
    if args.background is not None:
        chain["background_rate"] = args.background
    if chain:
        over["chain"] = replace(cfg.chain, **chain)
    if getattr(args, "mean_n", None) is not None:
        over["of_mean_n"] = args.mean_n
    return cfg.replace(**over) if over else cfg


def _fringe(cfg, args):
    if args.spin1:
        scan = experiments.run_spin1_fringe(cfg)
        v = analysis.visibility_fringe(scan)
        return {"fringe_spin1.csv": scan, "summary.json": {"kind": "spin1", "V": v.V, "sigma_V": v.sigma_V, "k": experiments.resolve_threshold(cfg, "spin1")}}
    recs, summary = {}, {"kind": "micro", "k": experiments.resolve_threshold(cfg, "micro"), "bases": {}}
    for b in args.basis or [2, 3]:
        scan = experiments.run_micro_macro_fringe(cfg, b)
        recs[f"fringe_basis{b}.csv"] = scan
        summary["bases"][b] = {
            name: {"V": r.V, "sigma_V": r.sigma_V}
            for name, r in (("plus", analysis.visibility_fringe(scan, "plus")), ("minus", analysis.visibility_fringe(scan, "minus")))
        }
    recs["summary.json"] = summary
    return recs


def _entanglement(cfg, args):
    if args.calibrate_V is not None:
        b = experiments.calibrate_background(cfg, args.calibrate_V)
        cfg = cfg.replace(chain=replace(cfg.chain, background_rate=b))
    r = experiments.run_entanglement_test(cfg)
    summary = {
        "V": {b: {"V": v.V, "sigma_V": v.sigma_V} for b, v in r.V.items()},
        "V_exact": r.exact_V,
        "V1": cfg.V1,
        "S_separability": r.S,
        "sigma_S": r.sigma_S,
        "violated": r.violated,
        "conclusive_fraction": r.conclusive_fraction,
        "k": r.k,
        "background_rate": r.background_rate,
    }
    labels, tables = [], []
    for b, (t0, tpi) in r.tables.items():
        labels += [f"basis{b}_phi0", f"basis{b}_phipi"]
        tables += [t0, tpi]
    return {"entanglement_counts.csv": ("counts", labels, tables), "summary.json": summary}


def _chsh(cfg, args):
    r = experiments.run_chsh(cfg)
    labels = [f"a={a!r};b={b!r}" for a, b in cfg.chsh_settings]
    summary = {
        "settings": [list(s) for s in cfg.chsh_settings],
        "E": list(r.result.E),
        "sigma_E": list(r.result.sigma_E),
        "S_CHSH": r.result.S,
        "sigma_S": r.result.sigma_S,
        "E_exact": list(r.exact.E),
        "S_exact": r.exact.S,
        "conclusive_fraction": r.conclusive_fraction,
        "k": r.k,
    }
    return {"chsh_counts.csv": ("counts", labels, r.tables), "summary.json": summary}


def _ofchar(cfg, args):
    r = experiments.run_of_characterization(cfg.of_mean_n, cfg.of_k_list, cfg.of_trials, cfg.repetition_rate, cfg.rng_seed)
    summary = {"mean_n": r.mean_n, "k": list(r.k), "counts": list(r.counts), "expected": list(r.expected), "sigma": list(r.sigma), "rates": list(r.rates), "n_trials": r.n_trials}
    return {"ofchar.csv": ("ofchar", r.k, r.counts), "summary.json": summary}


def _state(cfg, args):
    gp = GainParams(cfg.g)
    recs, summary = {}, {"g": cfg.g, "phi": args.phi, "states": {}}
    for kind in args.kind or ["aligned", "orthogonal"]:
        st = AmplifiedState(seed_ket(*STATE_SEEDS[kind]), ModeBasis.equatorial(args.phi), gp)
        s = st.to_state(args.cutoff, cfg.eps_tail)
        if s.is_under_truncated(cfg.eps_tail):
            raise UnderTruncationError(f"{kind}: tail {s.tail_deficit:.3g} beyond cutoff {s.cutoff}", s.tail_deficit, 2 * s.cutoff)
        d = number_distribution(s)
        recs[f"state_{kind}.csv"] = d
        summary["states"][kind] = {"cutoff": s.cutoff, "mean_first": d.mean("first"), "mean_second": d.mean("second"), "tail_deficit": s.tail_deficit}
    recs["summary.json"] = summary
    return recs


COMMANDS = {"fringe": _fringe, "entanglement": _entanglement, "chsh": _chsh, "ofchar": _ofchar, "state": _state}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = load_config(args)
    except (ConfigError, OSError, ValueError) as e:
        print(f"micromacro: config error: {e}", file=sys.stderr)
        return 1
    if args.command == "validate":
        from .validation import run_all

        return 0 if run_all() else 1
    t0 = time.perf_counter()
    try:
        records = COMMANDS[args.command](cfg, args)
    except UnderTruncationError as e:
        print(f"micromacro: numerical failure: {e} (suggested cutoff {e.suggested_cutoff})", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"micromacro: error: {e}", file=sys.stderr)
        return 1
    manifest = RunManifest(args.command, cfg.to_dict(), cfg.rng_seed)
    manifest.wall_clock_s = time.perf_counter() - t0
    try:
        paths = emit_results(manifest, records, args.out)
    except OSError as e:
        print(f"micromacro: cannot write results: {e}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
