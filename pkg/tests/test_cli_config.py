import json
import math

import pytest

from micromacro import analysis, experiments as ex
from micromacro.cli import main
from micromacro.config import ConfigError, ExperimentConfig, config_from_dict, dump_config, parse_config
from micromacro.detection import DetectorChain
from micromacro.io import read_fringe_csv, write_fringe_csv


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{}")
    cfg = parse_config(p)
    assert cfg.g == 4.40
    assert cfg.chain.eta == 0.03
    assert cfg.alice_efficiency == 0.10
    assert cfg.repetition_rate == 250e3
    assert cfg.n_trials == 500
    assert cfg == ExperimentConfig()


@pytest.mark.parametrize(
    "data,key",
    [({"g": -1}, "g"), ({"gg": 1}, "gg"), ({"chain": {"eta": 2}}, "chain"), ({"chain": {"bogus": 1}}, "chain.bogus"),
     ({"n_trials": 0}, "n_trials"), ({"n_trials": 1.5}, "n_trials"), ({"phi_scan": "x"}, "phi_scan"),
     ({"discriminator": "magic"}, "discriminator"), ({"schema_version": 2}, "schema_version")],
)
def test_config_rejections_name_the_key(data, key):
    with pytest.raises(ConfigError, match=key):
        config_from_dict(data)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(g=1.3, chain=DetectorChain(eta=0.2, k=3.0, sigma_noise=0.1), phi_scan=(0.1, 5.0, -1.0), threshold_k=7.5)
    p = tmp_path / "c.json"
    p.write_text(dump_config(cfg))
    assert parse_config(p) == cfg


def test_phases_are_normalized():
    cfg = ExperimentConfig(phi_scan=(-math.pi / 2, 2 * math.pi))
    assert cfg.phi_scan == (0.0, 1.5 * math.pi)
    assert all(0 <= a < 2 * math.pi for s in cfg.chsh_settings for a in s)


def test_fringe_csv_reproduces_visibility(tmp_path):
    cfg = ExperimentConfig(g=1.0, chain=DetectorChain(eta=0.5), threshold_k=1.0, exact=True)
    scan = ex.run_micro_macro_fringe(cfg, 2)
    p = tmp_path / "f.csv"
    write_fringe_csv(p, scan)
    back = read_fringe_csv(p)
    assert abs(analysis.visibility_fringe(back).V - analysis.visibility_fringe(scan).V) < 1e-12


def _run(args, out):
    return main(args + ["--out", str(out)])


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["nonsense"]) == 1
    assert _run(["fringe", "--g", "-1"], tmp_path / "a") == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"eta": 0.1}')
    assert _run(["chsh", "--config", str(bad)], tmp_path / "b") == 1
    assert _run(["state"], tmp_path / "c") == 2
    assert _run(["state", "--g", "1.0", "--cutoff", "5"], tmp_path / "d") == 2


def test_cli_state_dump(tmp_path):
    assert _run(["state", "--g", "1.6", "--kind", "aligned"], tmp_path) == 0
    lines = (tmp_path / "state_aligned.csv").read_text().splitlines()
    assert lines[0] == "m,n,p"
    summary = json.loads((tmp_path / "summary.json").read_text())
    mbar = math.sinh(1.6) ** 2
    assert summary["states"]["aligned"]["mean_first"] == pytest.approx(3 * mbar + 1, rel=1e-6)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert {o["file"] for o in manifest["outputs"]} == {"state_aligned.csv", "summary.json"}


def test_cli_ofchar_csv(tmp_path):
    assert _run(["ofchar", "--seed", "3"], tmp_path) == 0
    lines = (tmp_path / "ofchar.csv").read_text().splitlines()
    assert lines[0] == "k,counts"
    assert lines[1] == "0,1000000"


@pytest.mark.parametrize("cmd", [["fringe", "--g", "1.0", "--eta", "0.5", "--threshold-k", "1"], ["chsh", "--g", "1.0", "--eta", "0.5", "--threshold-k", "1"]])
def test_cli_byte_identical_reruns(tmp_path, cmd):
    outs = []
    for i, w in enumerate(("1", "8", "1")):
        d = tmp_path / f"r{i}"
        assert _run(cmd + ["--seed", "11", "--workers", w], d) == 0
        outs.append({p.name: p.read_bytes() for p in d.iterdir() if p.name != "manifest.json"})
    assert outs[0] == outs[1] == outs[2]
