import subprocess
import sys

import numpy as np
import pytest

from co3 import cli
from co3.checkpoint import load_checkpoint
from co3.cloud_io import write_text
from co3.geom import PointCloud
from co3.gradcheck import GateResult
from co3.shape_context import ScConfig, raw_histograms

SMALL_CFG = """# tiny run
n_scenes = 3
steps = 4
batch_scenes = 2
n1 = 32
n2 = 32
d1 = 16
mlp1_hidden = 16
mlp2_hidden = 16
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL_CFG)
    return p


def test_synth_pretrain_eval(tmp_path, cfg_file, capsys):
    assert cli.main(["synth", "--out", str(tmp_path / "scenes"), "--scenes", "3", "--seed", "1"]) == 0
    assert len(list((tmp_path / "scenes").iterdir())) == 3
    ck, met = tmp_path / "m.ckpt", tmp_path / "m.txt"
    assert cli.main(["pretrain", "--config", str(cfg_file), "--out", str(ck), "--metrics", str(met)]) == 0
    assert len(met.read_text().splitlines()) == 4
    load_checkpoint(ck)
    capsys.readouterr()
    assert cli.main(["eval", "--ckpt", str(ck), "--scenes", str(tmp_path / "scenes"), "--seed", "0"]) == 0
    acc = float(capsys.readouterr().out.split()[-1])
    assert 0.0 <= acc <= 1.0


def test_unknown_config_key_exits_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("learning_rat = 0.1\n")
    assert cli.main(["pretrain", "--config", str(bad), "--out", str(tmp_path / "c"), "--metrics", str(tmp_path / "m")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["pretrain", "--config", str(tmp_path / "none"), "--out", "x", "--metrics", "y"]) == 2


def test_divergence_exits_4(tmp_path, cfg_file):
    cfg_file.write_text(SMALL_CFG.replace("steps = 4", "steps = 120") + "learning_rate = 10000\n")
    met = tmp_path / "m.txt"
    assert cli.main(["pretrain", "--config", str(cfg_file), "--out", str(tmp_path / "c"), "--metrics", str(met)]) == 4
    assert not (tmp_path / "c").exists()


def test_eval_data_errors_exit_3(tmp_path, cfg_file):
    assert cli.main(["eval", "--ckpt", str(tmp_path / "none"), "--scenes", str(tmp_path)]) == 3
    (tmp_path / "scenes").mkdir()
    ck = tmp_path / "m.ckpt"
    cli.main(["pretrain", "--config", str(cfg_file), "--out", str(ck), "--metrics", str(tmp_path / "m")])
    assert cli.main(["eval", "--ckpt", str(ck), "--scenes", str(tmp_path / "scenes")]) == 3
    data = bytearray(ck.read_bytes())
    data[100] ^= 1
    ck.write_bytes(bytes(data))
    cli.main(["synth", "--out", str(tmp_path / "scenes"), "--scenes", "2"])
    assert cli.main(["eval", "--ckpt", str(ck), "--scenes", str(tmp_path / "scenes")]) == 3


def test_shape_context_command(tmp_path, capsys):
    pts = np.random.default_rng(0).normal(size=(30, 3))
    write_text(PointCloud(pts), tmp_path / "c.txt")
    assert cli.main(["shape-context", str(tmp_path / "c.txt"), "--r1", "0.2", "--r2", "1.0",
                     "--nbins-xy", "2", "--nbins-zy", "2", "--out", str(tmp_path / "h.txt")]) == 0
    got = np.loadtxt(tmp_path / "h.txt", dtype=np.int64)
    np.testing.assert_array_equal(got, raw_histograms(pts, pts, ScConfig(0.2, 1.0, 2, 2)).histograms)
    capsys.readouterr()
    assert cli.main(["shape-context", str(tmp_path / "c.txt"), "--finalize", "--sf-csp", "4"]) == 0
    rows = np.loadtxt(capsys.readouterr().out.splitlines())
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)


def test_shape_context_errors(tmp_path):
    (tmp_path / "c.txt").write_text("1 2\n")
    assert cli.main(["shape-context", str(tmp_path / "c.txt")]) == 3
    assert cli.main(["shape-context", str(tmp_path / "c.txt"), "--r1", "5", "--r2", "1"]) == 2


def test_grad_check_reporting(monkeypatch, capsys):
    import co3.gradcheck as gc

    monkeypatch.setattr(gc, "run_gate", lambda seed, h: GateResult(1e-9, 0.5, 10, 1e-3))
    assert cli.main(["grad-check", "--seed", "0"]) == 0
    assert "PASS" in capsys.readouterr().out
    monkeypatch.setattr(gc, "run_gate", lambda seed, h: GateResult(1e-3, 0.5, 10, 1e-3))
    assert cli.main(["grad-check"]) == 1


def test_synth_bad_count(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path), "--scenes", "0"]) == 2


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "co3.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "grad-check" in out.stdout
