import csv
import json
from dataclasses import asdict

import numpy as np
import pytest
import torch
import yaml
from PIL import Image

from grnet.checkpoint import Checkpoint
from grnet.cli import main, predict
from grnet.config import PRESET_ROWS, PRESETS, preset
from grnet.data import load_dataset, save_dataset
from grnet.exceptions import DataError
from grnet.model import to_tensors
from grnet.trainer import load_model

TRAIN = ["--plan", "tiny", "--input-size", "32", "--max-steps", "2"]


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["synth", "--out", str(root), "--n-samples", "4", "--image-size", "32",
                 "--seed", "0"]) == 0
    return root


@pytest.fixture(scope="module")
def run_dir(dataset_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", str(dataset_dir), "--run-dir", str(run), *TRAIN]) == 0
    return run


def test_synth_writes_loadable_dataset(dataset_dir):
    samples = load_dataset(dataset_dir)
    assert len(samples) == 4 and samples[0].size == (32, 32)


def test_train_outputs_and_manifest(run_dir, dataset_dir):
    assert (run_dir / "checkpoint.grck").exists()
    rows = list(csv.DictReader((run_dir / "loss.csv").open()))
    assert len(rows) == 2
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 0
    assert manifest["config"]["max_steps"] == 2
    assert manifest["dataset"]["path"] == str(dataset_dir)
    assert len(manifest["dataset_fingerprint"]) == 16
    assert {"code_version", "outputs"} <= set(manifest)


def test_train_from_config_file_with_cli_override(tmp_path):
    cfg = {
        "synth": {"n_samples": 4, "image_size": 32, "seed": 1},
        "train": {"max_steps": 5, "input_size": 32, "plan": "tiny"},
        "ablation": {"preset": "en_fpn"},
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    run = tmp_path / "run"
    assert main(["train", "--config", str(path), "--run-dir", str(run), "--max-steps", "1"]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["config"]["max_steps"] == 1
    assert manifest["config"]["ablation"] == asdict(preset("en_fpn"))
    assert manifest["dataset"]["synth"]["seed"] == 1


def test_eval_outputs(run_dir, dataset_dir, tmp_path):
    out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(run_dir / "checkpoint.grck"), "--data", str(dataset_dir),
                 "--run-dir", str(out), "--export-maps", "--name", "syn"]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "dataset,model,metric,value" and lines[1].startswith("syn,checkpoint,")
    assert "f_w_beta" in (out / "metrics.txt").read_text()
    assert len(list((out / "maps").glob("*.png"))) == 4


def test_predict_quantization_contract(run_dir, dataset_dir, tmp_path):
    ck = Checkpoint.load(run_dir / "checkpoint.grck")
    n = predict(ck, dataset_dir, tmp_path / "pred")
    assert n == 4
    samples = load_dataset(dataset_dir)
    model = load_model(ck)
    for s in samples:
        rgb, depth, _, _ = to_tensors([s])
        with torch.no_grad():
            logits = model(rgb, depth).logits[0, 0]
        expected = np.rint(255 * torch.sigmoid(logits).numpy().astype(np.float64))
        got = np.asarray(Image.open(tmp_path / "pred" / f"{s.id}.png"))
        assert got.shape == (32, 32) and got.dtype == np.uint8
        assert np.array_equal(got, expected.astype(np.uint8))


def test_predict_empty_dir_succeeds(run_dir, tmp_path):
    (tmp_path / "in" / "rgb").mkdir(parents=True)
    (tmp_path / "in" / "depth").mkdir()
    assert main(["predict", "--checkpoint", str(run_dir / "checkpoint.grck"),
                 "--input", str(tmp_path / "in"), "--output", str(tmp_path / "out")]) == 0
    assert list((tmp_path / "out").glob("*.png")) == []


def test_predict_skips_bad_files_and_fails_when_all_bad(run_dir, dataset_dir, tmp_path):
    ck = Checkpoint.load(run_dir / "checkpoint.grck")
    src = tmp_path / "in"
    save_dataset(load_dataset(dataset_dir)[:1], src)
    (src / "rgb" / "broken.png").write_bytes(b"not a png")
    (src / "depth" / "broken.png").write_bytes(b"not a png")
    assert predict(ck, src, tmp_path / "o1") == 1

    bad = tmp_path / "bad"
    (bad / "rgb").mkdir(parents=True)
    (bad / "depth").mkdir()
    (bad / "rgb" / "x.png").write_bytes(b"junk")
    (bad / "depth" / "x.png").write_bytes(b"junk")
    with pytest.raises(DataError):
        predict(ck, bad, tmp_path / "o2")
    assert main(["predict", "--checkpoint", str(run_dir / "checkpoint.grck"),
                 "--input", str(bad), "--output", str(tmp_path / "o3")]) == 3


def test_gate_stats_cli(run_dir, dataset_dir, tmp_path):
    out = tmp_path / "gates.csv"
    assert main(["gate-stats", "--checkpoint", str(run_dir / "checkpoint.grck"),
                 "--data", f"syn={dataset_dir}", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][0] == "dataset" and len(rows[0]) == 9
    assert [r[0] for r in rows[1:]] == ["syn", "ALL"]


def test_gate_stats_on_ungated_checkpoint_exits_3(dataset_dir, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--data", str(dataset_dir), "--run-dir", str(run), *TRAIN,
                 "--preset", "en_fpn"]) == 0
    assert main(["gate-stats", "--checkpoint", str(run / "checkpoint.grck"),
                 "--data", str(dataset_dir), "--out", str(tmp_path / "g.csv")]) == 3


def test_ablate_reproducible_csv(dataset_dir, tmp_path):
    args = ["ablate", "--data", str(dataset_dir), *TRAIN, "--rows", "1", "en_fpn"]
    assert main([*args, "--run-dir", str(tmp_path / "a")]) == 0
    assert main([*args, "--run-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "ablation.csv").read_bytes()
    assert a == (tmp_path / "b" / "ablation.csv").read_bytes()
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert [r["preset"] for r in rows] == ["w/o_depth", "en_fpn"]
    assert all(r["status"] == "ok" for r in rows)


def test_preset_list(capsys):
    assert main(["preset-list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 9
    assert lines[0].startswith("1 w/o_depth:")


def test_preset_bijection():
    flags = [PRESETS[PRESET_ROWS[i]] for i in range(1, 10)]
    assert len(set(flags)) == 9
    assert [preset(i) for i in range(1, 10)] == flags


def test_preset_examples():
    row1 = preset("w/o_depth")
    assert (row1.use_depth, row1.use_mixer, row1.decoder_mode) == (False, False, "fpn")
    row3 = preset("en_mix_minus_fpn")
    assert row3.use_mixer and not row3.mgu_gating
    row9 = preset("grnet_mlp")
    assert (row9.wam_variant, row9.loss_mode, row9.decoder_mode) == ("mlp", "structure", "full")


# ---------------------------------------------------------------- exit codes


def test_exit_code_config_errors(dataset_dir, tmp_path, capsys):
    assert main(["train", "--data", str(dataset_dir), "--run-dir", str(tmp_path),
                 "--preset", "bogus"]) == 2
    assert "valid presets" in capsys.readouterr().err
    assert main(["train", "--run-dir", str(tmp_path)]) == 2  # no dataset
    bad = tmp_path / "c.yaml"
    bad.write_text("nonsense_section: {}\n")
    assert main(["train", "--config", str(bad), "--run-dir", str(tmp_path)]) == 2
    assert main(["synth", "--out", str(tmp_path / "s"), "--image-size", "33"]) == 2


def test_exit_code_data_error(tmp_path):
    (tmp_path / "rgb").mkdir()
    (tmp_path / "depth").mkdir()
    (tmp_path / "gt").mkdir()
    Image.fromarray(np.zeros((32, 32, 3), np.uint8)).save(tmp_path / "rgb" / "a.png")
    assert main(["train", "--data", str(tmp_path), "--run-dir", str(tmp_path / "r"), *TRAIN]) == 3
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.grck"), "--data", str(tmp_path),
                 "--run-dir", str(tmp_path / "e")]) == 3


def test_exit_code_divergence(dataset_dir, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"train": {"lr_backbone_max": 1e6, "lr_other_max": 1e8}}))
    run = tmp_path / "run"
    code = main(["train", "--config", str(cfg), "--data", str(dataset_dir), "--run-dir", str(run),
                 "--plan", "tiny", "--input-size", "32", "--max-steps", "40", "--preset", "en_fpn"])
    assert code == 4
    assert (run / "last_finite.grck").exists()
