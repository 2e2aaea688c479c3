"""PPG vs PPGR convergence and stability over several seeds.

Writes aligned steps.csv / psnr.csv under --out and prints, per seed, the
step at which the smoothed generator loss first reaches the threshold and
the PSNR variance over the last epochs.
"""

import argparse

from dealias.data import phantom_dataset
from dealias.training import (
    convergence_comparison,
    desk_config,
    late_variance,
    steps_to_threshold,
    train_val_split,
    zf_loss_threshold,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--images", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=12)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--window", type=int, default=5)
    ap.add_argument("--last", type=int, default=10)
    ap.add_argument("--out", default="convergence_out")
    args = ap.parse_args()

    ds = phantom_dataset(args.images, (64, 64), seed=0)
    a, b = desk_config("PPG", args.epochs), desk_config("PPGR", args.epochs)
    train, val = train_val_split(ds, a.val_fraction, 0)
    thr = zf_loss_threshold(a, train.images)
    res = convergence_comparison(a, b, args.seeds, train, val, args.out)
    print(f"threshold (alpha * ZF pixel loss) = {thr:.3f}")
    for seed in args.seeds:
        s = res.steps[seed]
        p = res.psnr[seed]
        hits = {v: steps_to_threshold(s[v], thr, args.window) for v in res.variants}
        var = {v: late_variance(p[v], args.last) for v in res.variants}
        print(f"seed {seed}: steps-to-threshold {hits}  late psnr var {var}  final psnr "
              f"{ {v: round(p[v][-1], 2) for v in res.variants} }")


if __name__ == "__main__":
    main()
