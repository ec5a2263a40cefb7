import json
import time
from pathlib import Path

import numpy as np
import pytest

from tiltpump import cli, io
from tiltpump.experiments import REGISTRY

ROOT = Path(__file__).resolve().parents[1]
TINY = ROOT / "configs" / "tiny.cfg"


def _write_cfg(tmp_path, obj, name="c.cfg"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def test_list_groups_shared_anchors(capsys):
    assert cli.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len({e.anchor for e in REGISTRY.values()})
    text = "\n".join(lines)
    for exp_id in REGISTRY:
        assert exp_id in text


def test_describe(capsys):
    assert cli.main(["describe", "scattering"]) == 0
    out = capsys.readouterr().out
    assert "scattering" in out and "31" in out


def test_describe_unknown_suggests(capsys):
    assert cli.main(["describe", "scatering"]) == 2
    assert "did you mean 'scattering'" in capsys.readouterr().err


def test_run_unknown_experiment(capsys):
    assert cli.main(["run", "bandz"]) == 2
    assert "bands" in capsys.readouterr().err


@pytest.mark.parametrize("cfg, needle", [
    ({"experiment": "bands", "bogus": 1}, "unknown config key"),
    ({"experiment": "bands", "params": {"Uu": 3}}, "unknown parameter"),
    ({"experiment": "bands", "controls": {"Nq": 3}}, "unknown control"),
    ({"experiment": "bands", "emit": {"png": True}}, "unknown emit"),
    ({"experiment": "bands", "schema_version": 7}, "schema_version"),
    ({"experiment": "bands", "params": {"L_t": 7}}, "invalid parameters"),
    ({}, "no experiment"),
])
def test_config_errors(tmp_path, capsys, cfg, needle):
    assert cli.main(["run", "--config", _write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_config_experiment_mismatch(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.load_config(_write_cfg(tmp_path, {"experiment": "obc"}), "bands")


def test_bad_threads(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert cli.main(["run", "--config", str(TINY), "--out", str(tmp_path)]) == 2
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.main(["run", "--config", str(TINY), "--out", str(tmp_path), "--threads", "0"]) == 2


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.default_threads() == 3
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.default_threads() == 1


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    outs = []
    for n in range(2):
        out = tmp_path_factory.mktemp(f"tiny{n}")
        start = time.perf_counter()
        code = cli.main(["run", "--config", str(TINY), "--out", str(out)])
        outs.append((out, code, time.perf_counter() - start))
    return outs


def test_tiny_run_is_fast_and_complete(tiny_runs):
    out, code, wall = tiny_runs[0]
    assert wall < 5.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["experiment"] == "bands"
    assert manifest["reference_parameters"] is False
    assert manifest["status"] == ("pass" if code == 0 else "fail")
    for art in manifest["artifacts"]:
        assert io.sha256(out / art["path"]) == art["sha256"]
    assert any(a["path"].endswith(".csv") for a in manifest["artifacts"])
    assert any(a["path"].endswith(".svg") for a in manifest["artifacts"])


def test_tiny_run_is_reproducible(tiny_runs):
    (a, _, _), (b, _, _) = tiny_runs
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert [x["sha256"] for x in ma["artifacts"]] == [x["sha256"] for x in mb["artifacts"]]


def test_emit_flags(tmp_path):
    cfg = json.loads(TINY.read_text())
    cfg["emit"] = {"svg": False, "json": False}
    cfg["controls"]["chern"] = False
    assert cli.main(["run", "--config", _write_cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) in (0, 1)
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["artifacts"] and all(a["path"].endswith(".csv") for a in manifest["artifacts"])


# ------------------------------------------------------------ writers

def test_csv_round_trip(tmp_path):
    path = io.write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.1), (np.int64(2), np.float64(1 / 3))])
    header, rows = io.read_csv(path)
    assert header == ["x", "y"]
    assert rows == [["1", "0.1"], ["2", "0.333333333333"]]


def test_json_handles_numpy_and_nan(tmp_path):
    path = io.write_json(tmp_path / "a.json", {"a": np.arange(3), "b": np.float64("nan"), "c": np.bool_(True)})
    assert json.loads(path.read_text()) == {"a": [0, 1, 2], "b": None, "c": True}


def test_svg_writers(tmp_path):
    h = io.svg_heatmap(tmp_path / "h.svg", np.arange(12.0).reshape(3, 4), np.arange(3), np.arange(4))
    l = io.svg_lines(tmp_path / "l.svg", {"a": ([0, 1, 2], [1, 0, np.nan])}, markers=True)
    for p in (h, l):
        text = p.read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
