"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Run directories
are created under ``$DEALIAS_RUNS`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from dealias import kspace, metrics
from dealias.config import RunConfig
from dealias.data import Dataset, load_directory, phantom_dataset, write_png, write_raw
from dealias.errors import FormatError, InvalidArgument, NumericFault
from dealias.persistence import load_checkpoint, save_checkpoint

logger = logging.getLogger("dealias")

RUNS_ENV = "DEALIAS_RUNS"


class UsageError(Exception):
    pass


# -- helpers ----------------------------------------------------------------------------------

def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}")
    return dims


def _run_config(args) -> RunConfig:
    try:
        return RunConfig.load(getattr(args, "config", None), getattr(args, "set", None) or ())
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc


def _load_dataset(cfg: RunConfig) -> Dataset:
    size = (cfg.data.size, cfg.data.size)
    if cfg.data.source == "phantom":
        return phantom_dataset(cfg.data.count, size, cfg.data.seed)
    return load_directory(cfg.data.source, size)


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def new_run_dir(root: Path, config_hash: str, tag: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = root / f"{stamp}-{config_hash[:8]}-{tag}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def _mask_for(cfg: RunConfig, shape: tuple[int, int]) -> kspace.SamplingMask:
    if cfg.mask.file:
        return kspace.load_mask(cfg.mask.file)
    return kspace.make_mask(cfg.mask.kind, shape, cfg.mask.ratio, cfg.mask.sigma_fraction, cfg.mask_seed)


# -- maskgen ------------------------------------------------------------------------------------

def cmd_maskgen(args) -> int:
    if not 0 < args.ratio <= 1:
        raise UsageError(f"--ratio must be in (0, 1], got {args.ratio}")
    try:
        mask = kspace.make_mask(args.kind, args.size, args.ratio, args.sigma_fraction, args.seed)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else Path(f"mask_{mask.kind.label}_{args.size[0]}x{args.size[1]}_{args.ratio}")
    out.parent.mkdir(parents=True, exist_ok=True)
    kspace.save_mask(mask, out.with_suffix(".csm1"))
    kspace.save_mask_png(mask, out.with_suffix(".png"))
    print(f"wrote {out.with_suffix('.csm1')} popcount {mask.popcount} achieved ratio {mask.achieved_ratio:.6f}")
    return 0


# -- simulate -----------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _run_config(args)
    ds = _load_dataset(cfg)
    mask = _mask_for(cfg, ds.shape)
    if mask.shape != ds.shape:
        raise InvalidArgument(f"mask shape {mask.shape} does not match image shape {ds.shape}")
    out = Path(args.out)
    for sub in ("gt", "zf"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.ini")
    full = kspace.full_mask(ds.shape)
    rows = []
    for image_id, gt in ds:
        zf = kspace.simulate_zero_filled(gt, mask)
        ref = kspace.simulate_zero_filled(gt, full)
        gt_path = write_raw(gt, out / "gt" / image_id)
        zf_path = write_raw(zf, out / "zf" / image_id)
        if args.png:
            write_png(gt, out / "gt" / f"{image_id}.png")
            write_png(zf, out / "zf" / f"{image_id}.png")
        rows.append([image_id, gt_path.relative_to(out), zf_path.relative_to(out), repr(metrics.nmse(zf, gt)),
                     repr(metrics.psnr(zf, gt)), repr(metrics.ssim(zf, gt)), repr(metrics.psnr(ref, gt))])
    with open(out / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "gt", "zf", "nmse", "psnr", "ssim", "psnr_full"])
        w.writerows(rows)
    kspace.save_mask(mask, out / "mask.csm1")
    print(f"simulated {len(rows)} images at ratio {mask.achieved_ratio:.4f} into {out}")
    return 0


# -- train --------------------------------------------------------------------------------------

def cmd_train(args) -> int:
    from dealias.training import fit

    cfg = _run_config(args)
    for key, value in (("variant", args.variant), ("epochs", args.epochs), ("seed", args.seed)):
        if value is not None:
            cfg.set("train", key, str(value))
    if args.ratio is not None:
        cfg.set("mask", "ratio", str(args.ratio))
    if args.kind is not None:
        cfg.set("mask", "kind", args.kind)
    try:
        tcfg = cfg.to_train_config()
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc

    resume = resume_best = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        run_dir = Path(args.resume).parent
        best_path = run_dir / "best.ckpt"
        if tcfg.early_stop_patience is not None and best_path.exists():
            resume_best = load_checkpoint(best_path)
    else:
        root = Path(args.out) if args.out else runs_root()
        run_dir = new_run_dir(root, tcfg.config_hash(), tcfg.variant)
    cfg.write(run_dir / "config.ini")
    (run_dir / "train_config.json").write_text(json.dumps(tcfg.to_dict(), indent=2, sort_keys=True))

    ds = _load_dataset(cfg)
    print(f"run directory {run_dir}", flush=True)
    t0 = time.perf_counter()

    def report(epoch, m):
        print(f"epoch {epoch}  val psnr {m['psnr']:.3f}  ssim {m['ssim']:.4f}  nmse {m['nmse']:.4f}"
              f"  ({time.perf_counter() - t0:.0f}s)", flush=True)

    result = fit(ds, tcfg, log_dir=run_dir, resume=resume, resume_best=resume_best, force=args.force,
                 on_epoch=report)
    save_checkpoint(run_dir / "final.ckpt", result.checkpoint)
    print(f"finished: {result.state.epoch} epochs, {result.state.global_step} steps, checkpoint "
          f"{run_dir / 'final.ckpt'}")
    return 0


# -- eval ---------------------------------------------------------------------------------------

def cmd_eval(args) -> int:
    from dealias.training import make_pairs, reconstruct, restore, train_val_split

    cfg = _run_config(args)
    out = Path(args.out)
    for sub in ("diff", "profiles"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.ini")
    ds = _load_dataset(cfg)

    records: list[metrics.MetricRecord] = []
    latency_rows = []
    gt_done = False
    for ck_path in args.checkpoint:
        nets, tcfg, _ = restore(load_checkpoint(ck_path))
        if tcfg.image_size != ds.shape:
            raise InvalidArgument(f"{ck_path}: trained on {tcfg.image_size} images, data is {ds.shape}")
        test = ds if args.all_images else train_val_split(ds, tcfg.val_fraction, tcfg.seed)[1]
        if len(test) == 0:
            test = ds
        mask = kspace.load_mask(cfg.mask.file) if cfg.mask.file else None
        if mask is not None and mask.shape != ds.shape:
            raise InvalidArgument(f"mask shape {mask.shape} does not match image shape {ds.shape}")
        mask_label = (mask.kind if mask is not None else kspace.MaskKind.parse(tcfg.mask.kind)).label
        ratio = mask.target_ratio if mask is not None else tcfg.mask.ratio
        x_u, x_t = make_pairs(test.images, tcfg, mask=mask)

        reconstruct(nets.generator, x_u[:1])  # warm-up
        t = time.perf_counter()
        x_hat = reconstruct(nets.generator, x_u, cfg.eval.batch_size)
        ms = 1000.0 * (time.perf_counter() - t) / len(x_u)
        latency_rows.append([tcfg.variant, mask_label, ratio, len(x_u), f"{ms:.4f}"])

        row = cfg.eval.profile_row if cfg.eval.profile_row is not None else ds.shape[0] // 2
        limit = cfg.eval.max_images if cfg.eval.max_images is not None else len(test)
        for i, image_id in enumerate(test.ids):
            gt, zf, rec = x_t[i, 0], x_u[i, 0], x_hat[i, 0]
            if not gt_done:
                records.append(metrics.evaluate_pair(image_id, "GT", mask_label, ratio, gt, gt))
            records.append(metrics.evaluate_pair(image_id, "ZF", mask_label, ratio, zf, gt))
            records.append(metrics.evaluate_pair(image_id, tcfg.variant, mask_label, ratio, rec, gt))
            if i < limit:
                tag = f"{mask_label}_{ratio}_{image_id}"
                metrics.save_diff_png(zf, gt, out / "diff" / f"ZF_{tag}.png", cfg.eval.diff_gain)
                metrics.save_diff_png(rec, gt, out / "diff" / f"{tcfg.variant}_{tag}.png", cfg.eval.diff_gain)
                metrics.write_line_profiles(out / "profiles" / f"{tcfg.variant}_{tag}.csv",
                                            {"GT": gt[row], "ZF": zf[row], tcfg.variant: rec[row]}, row)
        gt_done = True

    metrics.write_metrics_csv(out / "metrics.csv", records)
    metrics.write_table_csv(out / "table.csv", records)
    report = metrics.aggregate_report(records)
    for m in ("ssim", "psnr", "nmse"):
        metrics.write_boxplot_csv(out / f"boxplot_{m}.csv", report, m)
    with open(out / "latency.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "mask", "ratio", "images", "ms_per_image"])
        w.writerows(latency_rows)
    for gkey, stats in report.groups.items():
        if "psnr" in stats:
            print(f"{'/'.join(map(str, gkey)):28s} psnr {stats['psnr'].mean:7.3f}  ssim {stats['ssim'].mean:.4f}"
                  f"  nmse {stats['nmse'].mean:.4f}")
    for r in latency_rows:
        print(f"latency {r[0]} {r[1]} {r[2]}: {r[4]} ms/image")
    return 0


# -- kfold ---------------------------------------------------------------------------------------

def cmd_kfold(args) -> int:
    from dealias.training import kfold_split

    cfg = _run_config(args)
    ds = _load_dataset(cfg)
    folds = kfold_split(ds.ids, args.k, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (train, val) in enumerate(folds):
        (out / f"fold{i}_train.txt").write_text("".join(ds.ids[j] + "\n" for j in train))
        (out / f"fold{i}_val.txt").write_text("".join(ds.ids[j] + "\n" for j in val))
    print(f"wrote {len(folds)} folds to {out}: val sizes {[len(v) for _, v in folds]}")
    return 0


# -- compare -----------------------------------------------------------------------------------

def _read_run(run: Path) -> tuple[dict, list[float], list[float]]:
    tcfg = json.loads((run / "train_config.json").read_text())
    with open(run / "train_log.csv") as f:
        steps = [float(r["g_total"]) for r in csv.DictReader(f)]
    with open(run / "val_log.csv") as f:
        psnrs = [float(r["psnr"]) for r in csv.DictReader(f)]
    return tcfg, steps, psnrs


def cmd_compare(args) -> int:
    from dataclasses import replace

    from dealias.training import (
        ComparisonResult,
        convergence_comparison,
        train_val_split,
        write_comparison_csvs,
    )

    out = Path(args.out)
    if args.runs:
        (ca, sa, pa), (cb, sb, pb) = (_read_run(Path(r)) for r in args.runs)
        strip = lambda c: {k: v for k, v in c.items() if k not in ("variant",)}
        if strip(ca) != strip(cb):
            raise InvalidArgument("runs differ in more than the variant")
        if ca["variant"] == cb["variant"]:
            raise InvalidArgument("runs have the same variant")
        if len(sa) != len(sb) or len(pa) != len(pb):
            raise InvalidArgument("runs have different lengths; were both completed?")
        names = (ca["variant"], cb["variant"])
        result = ComparisonResult(names, {ca["seed"]: {names[0]: sa, names[1]: sb}},
                                  {ca["seed"]: {names[0]: pa, names[1]: pb}})
        write_comparison_csvs(result, out)
    else:
        cfg = _run_config(args)
        base = cfg.to_train_config()
        ds = _load_dataset(cfg)
        train, val = train_val_split(ds, base.val_fraction, base.seed)
        a, b = (replace(base, variant=v) for v in args.variants)
        result = convergence_comparison(a, b, args.seeds, train, val, out)
        cfg.write(out / "config.ini")
    print(f"wrote {out / 'steps.csv'} and {out / 'psnr.csv'}")
    return 0


# -- parser --------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dealias", description="Undersampled MRI simulation and GAN de-aliasing.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key=value config file with [data] [mask] [model] [train] [eval]")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config entry (repeatable)")
        return sp

    m = sub.add_parser("maskgen", help="generate a Gaussian sampling mask")
    m.add_argument("--kind", required=True, choices=["gaussian1d", "gaussian2d"])
    m.add_argument("--size", required=True, type=_parse_size, help="N or HxW")
    m.add_argument("--ratio", required=True, type=float)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--sigma-fraction", type=float, default=kspace.DEFAULT_SIGMA_FRACTION)
    m.add_argument("--out", help="output path stem (.csm1 and .png are appended)")
    m.set_defaults(func=cmd_maskgen)

    s = with_config(sub.add_parser("simulate", help="write ground-truth and zero-filled image pairs"))
    s.add_argument("--out", required=True)
    s.add_argument("--png", action="store_true", help="also write PNG previews")
    s.set_defaults(func=cmd_simulate)

    t = with_config(sub.add_parser("train", help="train one variant"))
    t.add_argument("--variant", choices=["PG", "PPG", "PPGR"])
    t.add_argument("--ratio", type=float)
    t.add_argument("--kind", choices=["gaussian1d", "gaussian2d"])
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help=f"run root (default ${RUNS_ENV} or ./runs)")
    t.add_argument("--resume", help="checkpoint to continue from (its run directory is reused)")
    t.add_argument("--force", action="store_true", help="resume even if the config hash differs")
    t.set_defaults(func=cmd_train)

    e = with_config(sub.add_parser("eval", help="evaluate checkpoints against ZF and GT"))
    e.add_argument("--checkpoint", required=True, action="append")
    e.add_argument("--out", required=True)
    e.add_argument("--all-images", action="store_true", help="evaluate every image, not only the held-out split")
    e.set_defaults(func=cmd_eval)

    k = with_config(sub.add_parser("kfold", help="write k-fold id lists"))
    k.add_argument("--k", type=int, default=5)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_kfold)

    c = with_config(sub.add_parser("compare", help="convergence comparison of two variants"))
    c.add_argument("--runs", nargs=2, metavar="RUN_DIR", help="align two finished run directories")
    c.add_argument("--variants", nargs=2, default=["PPG", "PPGR"])
    c.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dealias {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NumericFault as exc:
        print(f"dealias {args.command}: numeric fault: {exc}", file=sys.stderr)
        return 1
    except (InvalidArgument, FormatError, OSError, KeyError, ValueError) as exc:
        print(f"dealias {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
