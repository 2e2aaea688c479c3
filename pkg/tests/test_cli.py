import csv
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from dealias import cli, kspace
from dealias.config import RunConfig
from dealias.errors import InvalidArgument
from dealias.persistence import load_checkpoint

TINY = ["--set", "data.size=16", "--set", "data.count=10", "--set", "model.gen_depth=2", "--set",
        "model.gen_base=4", "--set", "model.disc_depth=2", "--set", "model.disc_base=4", "--set",
        "model.perc_blocks=2", "--set", "model.perc_base=2", "--set", "train.batch_size=4"]


# -- config ------------------------------------------------------------------------------

def test_config_defaults_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[train]\nvariant = PG  # comment\nepochs = 3\n[mask]\nratio = 0.3\n")
    cfg = RunConfig.load(p, ["train.epochs=5", "train.early_stop_patience=none"])
    assert cfg.train.variant == "PG" and cfg.train.epochs == 5 and cfg.mask.ratio == 0.3
    assert cfg.train.early_stop_patience is None and cfg.model.gen_base == 64
    assert cfg.to_train_config().effective_weights.beta == 0


def test_config_rejects_unknown(tmp_path):
    with pytest.raises(InvalidArgument, match="unknown key"):
        RunConfig.load(None, ["train.epoch=3"])
    with pytest.raises(InvalidArgument, match="unknown config section"):
        RunConfig.load(None, ["optim.lr=3"])
    with pytest.raises(InvalidArgument):
        RunConfig.load(None, ["train.epochs=three"])
    p = tmp_path / "c.ini"
    p.write_text("[data]\nsize = 32\nbogus = 1\n")
    with pytest.raises(InvalidArgument):
        RunConfig.load(p)


def test_config_text_roundtrip(tmp_path):
    cfg = RunConfig.load(None, ["train.augment=true", "eval.profile_row=7", "train.lr=0.0003"])
    again = RunConfig.load(cfg.write(tmp_path / "r.ini"))
    assert again == cfg
    assert again.to_train_config() == cfg.to_train_config()


# -- maskgen --------------------------------------------------------------------------------

def test_maskgen_popcount(tmp_path, capsys):
    out = tmp_path / "m"
    assert cli.main(["maskgen", "--kind", "gaussian2d", "--size", "64", "--ratio", "0.2", "--seed", "1",
                     "--out", str(out)]) == 0
    mask = kspace.load_mask(out.with_suffix(".csm1"))
    assert mask.popcount == 819 == round(0.2 * 4096)
    assert "819" in capsys.readouterr().out
    assert np.array_equal(np.array(Image.open(out.with_suffix(".png"))) > 0, mask.bits)


def test_maskgen_full_ratio_white(tmp_path):
    out = tmp_path / "full"
    assert cli.main(["maskgen", "--kind", "gaussian1d", "--size", "32x16", "--ratio", "1.0", "--out", str(out)]) == 0
    assert np.all(np.array(Image.open(out.with_suffix(".png"))) == 255)


def test_maskgen_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["maskgen", "--kind", "gaussian2d", "--ratio", "0.2"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert cli.main(["maskgen", "--kind", "gaussian2d", "--size", "64", "--ratio", "1.5"]) == 2
    assert cli.main(["maskgen", "--kind", "gaussian2d", "--size", "64", "--ratio", "0"]) == 2


# -- simulate -------------------------------------------------------------------------------

def read_manifest(path):
    return list(csv.DictReader(open(path)))


def test_simulate_full_mask(tmp_path):
    cli.main(["maskgen", "--kind", "gaussian2d", "--size", "32", "--ratio", "1.0", "--out", str(tmp_path / "full")])
    out = tmp_path / "sim"
    code = cli.main(["simulate", "--set", "data.size=32", "--set", "data.count=6", "--set",
                     f"mask.file={tmp_path / 'full.csm1'}", "--out", str(out), "--png"])
    assert code == 0
    rows = read_manifest(out / "manifest.csv")
    assert len(rows) == 6
    assert all(float(r["nmse"]) < 1e-5 for r in rows)
    assert (out / "config.ini").exists() and (out / "gt" / "phantom_0000.png").exists()


def test_simulate_partial_mask_ordering(tmp_path):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--set", "data.size=32", "--set", "data.count=5", "--set", "mask.ratio=0.2",
                     "--out", str(out)]) == 0
    for r in read_manifest(out / "manifest.csv"):
        assert np.isfinite(float(r["psnr"])) and float(r["psnr"]) < float(r["psnr_full"])


def test_simulate_shape_mismatch(tmp_path, capsys):
    cli.main(["maskgen", "--kind", "gaussian2d", "--size", "16", "--ratio", "0.5", "--out", str(tmp_path / "m")])
    code = cli.main(["simulate", "--set", "data.size=32", "--set", "data.count=2", "--set",
                     f"mask.file={tmp_path / 'm.csm1'}", "--out", str(tmp_path / "s")])
    assert code == 1
    assert "does not match" in capsys.readouterr().err


def test_unknown_config_key_is_usage_error(tmp_path):
    assert cli.main(["simulate", "--set", "data.sise=32", "--out", str(tmp_path)]) == 2


# -- train / eval / compare / kfold ------------------------------------------------------------

def train(tmp_path, *extra):
    code = cli.main(["train", *TINY, "--epochs", "2", "--out", str(tmp_path / "runs"), *extra])
    assert code == 0
    runs = sorted((tmp_path / "runs").iterdir(), key=lambda p: p.stat().st_mtime)
    return runs[-1]


def test_train_run_directory(tmp_path):
    run = train(tmp_path, "--variant", "PG", "--ratio", "0.3")
    assert run.name.endswith("-PG") and len(run.name.split("-")[2]) == 8
    for name in ("config.ini", "train_config.json", "train_log.csv", "val_log.csv", "final.ckpt", "last.ckpt"):
        assert (run / name).exists(), name
    echoed = json.loads((run / "train_config.json").read_text())
    assert echoed["weights"]["beta"] == 0 and echoed["mask"]["ratio"] == 0.3
    assert RunConfig.load(run / "config.ini").train.variant == "PG"


def test_train_env_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DEALIAS_RUNS", str(tmp_path / "envroot"))
    assert cli.main(["train", *TINY, "--epochs", "1"]) == 0
    assert len(list((tmp_path / "envroot").iterdir())) == 1


def test_train_resume_schedule(tmp_path):
    run = train(tmp_path, "--set", "train.lr_halve_every=1")
    ck = load_checkpoint(run / "last.ckpt")
    assert ck.metadata["epoch"] == 2
    # extending the run changes the config hash, so resuming requires --force
    args = ["train", *TINY, "--set", "train.lr_halve_every=1", "--epochs", "3", "--resume", str(run / "last.ckpt")]
    assert cli.main(args) == 1
    assert cli.main(args + ["--force"]) == 0
    rows = list(csv.DictReader(open(run / "train_log.csv")))
    lrs = {int(r["epoch"]): float(r["lr"]) for r in rows}
    assert lrs == {0: 1e-4, 1: 5e-5, 2: 2.5e-5}
    assert [int(r["step"]) for r in rows] == list(range(len(rows)))


def test_eval_outputs(tmp_path):
    run_a = train(tmp_path, "--variant", "PPGR")
    run_b = train(tmp_path, "--variant", "PPGR", "--ratio", "0.4")
    out = tmp_path / "eval"
    code = cli.main(["eval", *TINY, "--checkpoint", str(run_a / "final.ckpt"), "--checkpoint",
                     str(run_b / "final.ckpt"), "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    gt = [r for r in rows if r["variant"] == "GT"]
    assert gt and all(float(r["nmse"]) == 0 and float(r["ssim"]) == 1 for r in gt)
    pairs = {(r["variant"], r["ratio"]) for r in rows}
    assert {("ZF", "0.2"), ("PPGR", "0.2"), ("ZF", "0.4"), ("PPGR", "0.4")} <= pairs
    table = list(csv.reader(open(out / "table.csv")))
    assert table[0][:2] == ["mask", "method"] and "20%_psnr" in table[0] and "40%_psnr" in table[0]
    lat = list(csv.DictReader(open(out / "latency.csv")))
    assert len(lat) == 2 and all(float(r["ms_per_image"]) > 0 for r in lat)
    assert list((out / "diff").glob("PPGR_*.png")) and list((out / "profiles").glob("*.csv"))
    assert (out / "boxplot_ssim.csv").exists()


def test_eval_mismatch(tmp_path):
    run = train(tmp_path)
    args = ["eval", *TINY, "--set", "data.size=32", "--checkpoint", str(run / "final.ckpt"), "--out",
            str(tmp_path / "e")]
    assert cli.main(args) == 1
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"DLCK" + b"\x00" * 20)
    assert cli.main(["eval", *TINY, "--checkpoint", str(bad), "--out", str(tmp_path / "e2")]) == 1


def test_compare_runs(tmp_path):
    a = train(tmp_path, "--variant", "PPG")
    b = train(tmp_path, "--variant", "PPGR")
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--runs", str(a), str(b), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "steps.csv")))
    assert list(rows[0]) == ["seed", "step", "PPG_g_total", "PPGR_g_total"]
    c = train(tmp_path, "--variant", "PG", "--seed", "5")
    assert cli.main(["compare", "--runs", str(a), str(c), "--out", str(tmp_path / "x")]) == 1


def test_compare_fresh(tmp_path):
    out = tmp_path / "cmp"
    assert cli.main(["compare", *TINY, "--set", "train.epochs=1", "--seeds", "0", "1", "--out", str(out)]) == 0
    assert len(list(csv.DictReader(open(out / "psnr.csv")))) == 2


def test_kfold(tmp_path):
    out = tmp_path / "folds"
    assert cli.main(["kfold", "--set", "data.count=7", "--set", "data.size=16", "--k", "5", "--out", str(out)]) == 0
    vals = [Path(out / f"fold{i}_val.txt").read_text().split() for i in range(5)]
    assert sorted(len(v) for v in vals) == [1, 1, 1, 2, 2]
    assert sorted(x for v in vals for x in v) == [f"phantom_{i:04d}" for i in range(7)]
    assert cli.main(["kfold", "--set", "data.count=3", "--set", "data.size=16", "--k", "5", "--out", str(out)]) == 1


def test_desk_preset_file_matches_code():
    from dealias.training import desk_config

    path = Path(__file__).resolve().parents[1] / "configs" / "desk.ini"
    assert RunConfig.load(path).to_train_config() == desk_config()
