"""End-to-end CLI behavior: subcommands, exit codes, config files, outputs."""

import json

import numpy as np
import pytest

from shufflestereo import cli
from shufflestereo.data_io import load_manifest, read_pfm
from shufflestereo.metrics import EvalReport


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesize a tiny dataset and train a 2-step checkpoint once."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    ckpt = root / "ckpt"
    assert cli.main(["synth", "--out", str(data), "--pairs", "2",
                     "--dmax", "24", "--seed", "0"]) == 0
    assert cli.main(["train", "--synthetic", "--steps", "2",
                     "--out", str(ckpt), "--seed", "0"]) == 0
    return root, data, ckpt


def test_synth_manifest_is_loadable(workspace):
    _, data, _ = workspace
    samples = load_manifest(data / "manifest.txt")
    assert len(samples) == 2
    assert samples[0].left.shape == (3, 64, 128)


def test_train_writes_checkpoint(workspace):
    _, _, ckpt = workspace
    manifest = json.loads((ckpt / "manifest.json").read_text())
    assert manifest["config"]["variant"] == "S-desk"
    assert manifest["extra"]["steps_run"] == 2


def test_eval_writes_reports(workspace):
    root, data, ckpt = workspace
    out = root / "eval"
    code = cli.main(["eval", "--checkpoint", str(ckpt),
                     "--manifest", str(data / "manifest.txt"),
                     "--out", str(out)])
    assert code == 0
    rep = EvalReport.from_json((out / "report.json").read_text())
    assert rep.valid_pixel_count > 0
    assert "epe=" in (out / "report.txt").read_text()


def test_infer_writes_disparity_and_visualizations(workspace):
    root, data, ckpt = workspace
    out = root / "infer"
    code = cli.main(["infer", "--checkpoint", str(ckpt),
                     "--manifest", str(data / "manifest.txt"),
                     "--out", str(out)])
    assert code == 0
    for i in range(2):
        disp, _ = read_pfm(out / f"{i:04d}_disp.pfm")
        assert disp.shape == (64, 128)
        assert np.isfinite(disp).all()
        assert (out / f"{i:04d}_disp.png").exists()
        assert (out / f"{i:04d}_err.png").exists()


def test_gradcheck_exits_zero():
    assert cli.main(["gradcheck", "--seeds", "1"]) == 0


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("steps = 1\nseed = 4  # inline comment\n")
    out = tmp_path / "ck"
    code = cli.main(["train", "--synthetic", "--config", str(cfg),
                     "--out", str(out), "--steps", "2"])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["extra"]["steps_run"] == 2  # flag beats config file


def test_usage_errors_exit_one(tmp_path, capsys):
    assert cli.main(["train", "--out", str(tmp_path)]) == 1  # no manifest
    assert cli.main(["bogus-command"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("not a key value line\n")
    assert cli.main(["train", "--synthetic", "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == 1
    capsys.readouterr()


def test_data_errors_exit_two(workspace, tmp_path):
    _, _, ckpt = workspace
    assert cli.main(["eval", "--checkpoint", str(ckpt),
                     "--manifest", "/nonexistent/m.txt",
                     "--out", str(tmp_path)]) == 2
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    assert cli.main(["eval", "--checkpoint", str(ckpt),
                     "--manifest", str(empty), "--out", str(tmp_path)]) == 2


def test_infer_determinism(workspace, tmp_path):
    _, data, ckpt = workspace
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["infer", "--checkpoint", str(ckpt),
                         "--manifest", str(data / "manifest.txt"),
                         "--out", str(out)]) == 0
        outs.append(read_pfm(out / "0000_disp.pfm")[0])
    assert np.array_equal(outs[0], outs[1])
