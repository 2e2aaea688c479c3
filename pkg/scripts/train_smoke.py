"""Desk-scale end-to-end run: phantoms, shared 2-D Gaussian mask, one variant.

Prints per-epoch validation metrics and the zero-filled baseline, and writes
logs and checkpoints under --out.
"""

import argparse
import time

from dealias.data import phantom_dataset
from dealias.losses import LossWeights
from dealias.training import MaskSpec, ModelConfig, TrainConfig, fit, make_pairs, mean_metrics, train_val_split


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--variant", default="PPGR")
    ap.add_argument("--ratio", type=float, default=0.2)
    ap.add_argument("--kind", default="gaussian2d")
    ap.add_argument("--base", type=int, default=16)
    ap.add_argument("--perc-base", type=int, default=8)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--alpha", type=float, default=15.0)
    ap.add_argument("--beta", type=float, default=0.0025)
    ap.add_argument("--halve-every", type=int, default=30)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    ds = phantom_dataset(args.images, (64, 64), seed=args.seed)
    cfg = TrainConfig(variant=args.variant, epochs=args.epochs, batch_size=args.batch, lr=args.lr, lr_halve_every=args.halve_every, seed=args.seed,
                      mask=MaskSpec(args.kind, args.ratio), weights=LossWeights(args.alpha, args.beta),
                      model=ModelConfig(4, args.base, 4, args.base, 4, args.perc_base))
    train, test = train_val_split(ds, cfg.val_fraction, cfg.seed)
    x_u, x_t = make_pairs(test.images, cfg)
    zf = mean_metrics(x_u, x_t)
    print(f"ZF  psnr {zf['psnr']:.2f}  ssim {zf['ssim']:.4f}  nmse {zf['nmse']:.4f}", flush=True)
    t0 = time.perf_counter()

    def report(epoch, m):
        print(f"epoch {epoch:3d}  psnr {m['psnr']:.2f}  ssim {m['ssim']:.4f}  nmse {m['nmse']:.4f}"
              f"  [{time.perf_counter() - t0:.0f}s]", flush=True)

    fit(train, cfg, val=test, log_dir=args.out, on_epoch=report)


if __name__ == "__main__":
    main()
