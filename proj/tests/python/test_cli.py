import json
import os
import shutil

import numpy as np
import pytest
from PIL import Image

TINY_MODEL = {
    "image_size": 64,
    "encoder": {"embed_dim": 16, "heads": [1, 2, 2, 4]},
    "lm": {"hidden_size": 32, "layers": 1, "heads": 2},
    "mask": {"dim": 32, "heads": 2, "ffn_dim": 64, "groups": 4, "decoder_layers": 2},
}


def tree(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in files:
            p = os.path.join(base, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    from conftest import run_cli

    work = tmp_path_factory.mktemp("cli")
    r = run_cli("synth-data", "--out", work / "data", "--n", 4, "--size", 64, "--seed", 0)
    assert r.returncode == 0, r.stderr
    r = run_cli("synth-data", "--out", work / "data", "--n", 3, "--size", 64, "--seed", 5, "--split", "val")
    assert r.returncode == 0, r.stderr
    config = {"model": TINY_MODEL, "train": {"steps": 4, "batch_size": 2, "lr": 1e-3}, "data": {"root": str(work / "data")}}
    (work / "tiny.json").write_text(json.dumps(config))
    r = run_cli("train", "--config", work / "tiny.json", "--out", work / "run")
    assert r.returncode == 0, r.stderr
    return work


def test_train_desk_preset_ten_steps(cli, config_dir, tmp_path):
    assert cli("synth-data", "--out", tmp_path / "data", "--n", 8, "--size", 128).returncode == 0
    r = cli("train", "--config", config_dir / "desk.json", "--steps", 10, cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    run = tmp_path / "runs" / "desk"
    assert sorted(p.name for p in (run / "checkpoints").iterdir()) == ["final.ckpt"]
    assert (run / "run_config.json").exists()
    assert len((run / "loss_curve.csv").read_text().splitlines()) == 11
    assert json.loads((run / "run_config.json").read_text())["train"]["steps"] == 10


def test_missing_dataset_is_a_usage_error(cli, config_dir, tmp_path):
    r = cli("train", "--config", config_dir / "desk.json", "--data", tmp_path / "nowhere")
    assert r.returncode == 2
    assert str(tmp_path / "nowhere") in r.stderr


def test_flag_overrides_config_file(cli, tiny_run, tmp_path):
    r = cli("train", "--config", tiny_run / "tiny.json", "--steps", 1, "--freeze-encoder", "false", "--out", tmp_path / "r")
    assert r.returncode == 0, r.stderr
    snapshot = json.loads((tmp_path / "r" / "run_config.json").read_text())
    assert snapshot["train"]["freeze_encoder"] is False
    assert snapshot["train"]["steps"] == 1


def test_invalid_config_names_the_field(cli, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"train": {"lr": "fast"}}))
    r = cli("train", "--config", tmp_path / "bad.json")
    assert r.returncode == 2
    assert "train.lr" in r.stderr


def test_seed_layering(cli, tiny_run, tmp_path):
    r = cli("train", "--config", tiny_run / "tiny.json", "--steps", 1, "--out", tmp_path / "a", env={"GEOPIX_SEED": "7"})
    assert r.returncode == 0, r.stderr
    assert json.loads((tmp_path / "a" / "run_config.json").read_text())["seed"] == 7
    r = cli("train", "--config", tiny_run / "tiny.json", "--steps", 1, "--seed", 9, "--out", tmp_path / "b",
            env={"GEOPIX_SEED": "7"})
    assert json.loads((tmp_path / "b" / "run_config.json").read_text())["seed"] == 9
    assert cli("train", "--config", tiny_run / "tiny.json", env={"GEOPIX_SEED": "x"}).returncode == 2


def test_training_is_byte_deterministic(cli, tiny_run, tmp_path):
    for name in ["a", "b"]:
        (tmp_path / name).mkdir()
        r = cli("train", "--config", tiny_run / "tiny.json", "--out", "run", cwd=tmp_path / name)
        assert r.returncode == 0, r.stderr
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_eval_report_schema(cli, tiny_run, tmp_path):
    ckpt = tiny_run / "run" / "checkpoints" / "final.ckpt"
    out = tmp_path / "report.json"
    r = cli("eval", "--checkpoint", ckpt, "--split", "val", "--data", tiny_run / "data", "--out", out)
    assert r.returncode == 0, r.stderr
    report = json.loads(out.read_text())
    assert set(report) >= {"giou", "ciou", "p_at", "n_samples", "per_sample_iou", "total_intersection", "total_union"}
    assert set(report["p_at"]) == {"0.5", "0.6", "0.7", "0.8", "0.9"}
    assert report["n_samples"] == 3 == len(report["per_sample_iou"])
    assert all(0.0 <= v <= 1.0 for v in report["per_sample_iou"])
    printed = json.loads(r.stdout)
    assert printed["giou"] == report["giou"]
    assert (tmp_path / "report.json.run_config.json").exists()

    train_out = tmp_path / "train.json"
    assert cli("eval", "--checkpoint", ckpt, "--split", "train", "--data", tiny_run / "data", "--out", train_out).returncode == 0
    ids_val = {s.split("#")[0] for s in report["sample_ids"]}
    ids_train = {s.split("#")[0] for s in json.loads(train_out.read_text())["sample_ids"]}
    assert len(ids_train) == 4
    assert ids_val.isdisjoint(ids_train)


def test_corrupt_checkpoint_fails(cli, tiny_run, tmp_path):
    bad = tmp_path / "bad.ckpt"
    data = (tiny_run / "run" / "checkpoints" / "final.ckpt").read_bytes()
    bad.write_bytes(data[: len(data) // 2])
    r = cli("eval", "--checkpoint", bad, "--split", "val", "--data", tiny_run / "data", "--out", tmp_path / "r.json")
    assert r.returncode != 0
    assert "bad.ckpt" in r.stderr


def test_infer(cli, tiny_run, tmp_path):
    ckpt = tiny_run / "run" / "checkpoints" / "final.ckpt"
    image = tmp_path / "in.png"
    Image.fromarray(np.random.default_rng(0).integers(0, 256, (70, 110, 3), dtype=np.uint8)).save(image)
    (tmp_path / "q.txt").write_text("where is the pond?\n")

    outs = []
    for i, how in enumerate([["--instruction", "where is the pond?"], ["--instruction", "where is the pond?"],
                             ["--instruction-file", tmp_path / "q.txt"]]):
        out = tmp_path / f"m{i}.png"
        r = cli("infer", "--checkpoint", ckpt, "--image", image, *how, "--out", out)
        assert r.returncode == 0, r.stderr
        outs.append((out.read_bytes(), r.stdout))
    assert outs[0] == outs[1] == outs[2]
    mask = np.array(Image.open(tmp_path / "m0.png"))
    assert mask.shape == (70, 110)
    assert (tmp_path / "m0.png.run_config.json").exists()

    (tmp_path / "broken.png").write_text("not an image")
    r = cli("infer", "--checkpoint", ckpt, "--image", tmp_path / "broken.png", "--instruction", "x", "--out", tmp_path / "o.png")
    assert r.returncode != 0
    r = cli("infer", "--checkpoint", ckpt, "--image", image, "--out", tmp_path / "o.png")
    assert r.returncode == 2


def test_redundancy_csv(cli, tiny_run, tmp_path):
    images = tiny_run / "data" / "train" / "images"
    r = cli("redundancy", "--input", images, "--out", tmp_path / "r.csv")
    assert r.returncode == 0, r.stderr
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "id,r_e,r_s,N"
    assert len(rows) == 1 + len(list(images.iterdir()))


def test_synth_data_is_reproducible(cli, tmp_path):
    for name in ["a", "b"]:
        (tmp_path / name).mkdir()
        assert cli("synth-data", "--n", 8, "--seed", 0, "--out", "data", cwd=tmp_path / name).returncode == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_unknown_flag_prints_usage(cli):
    r = cli("train", "--bogus", 1)
    assert r.returncode != 0
    assert "--config" in r.stdout + r.stderr
