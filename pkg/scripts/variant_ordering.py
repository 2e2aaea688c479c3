"""Mean test PSNR of ZF, PG, PPG and PPGR at one sampling ratio on phantoms."""

import argparse
from dataclasses import replace

from dealias.data import phantom_dataset
from dealias.training import desk_config, fit, make_pairs, mean_metrics, reconstruct, train_val_split


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--ratio", type=float, default=0.5)
    ap.add_argument("--variants", nargs="+", default=["PG", "PPGR"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = phantom_dataset(args.images, (64, 64), seed=args.seed)
    base = replace(desk_config("PPGR", args.epochs, args.ratio), seed=args.seed)
    train, test = train_val_split(ds, base.val_fraction, base.seed)
    x_u, x_t = make_pairs(test.images, base)
    zf = mean_metrics(x_u, x_t)
    print(f"ZF    psnr {zf['psnr']:.2f}  ssim {zf['ssim']:.4f}", flush=True)
    for variant in args.variants:
        r = fit(train, replace(base, variant=variant), val=test)
        m = mean_metrics(reconstruct(r.networks.generator, x_u), x_t)
        print(f"{variant:5s} psnr {m['psnr']:.2f}  ssim {m['ssim']:.4f}", flush=True)


if __name__ == "__main__":
    main()
