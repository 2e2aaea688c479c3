"""Image-quality metrics and the evaluation artifacts built on them.

Images arrive in ``[-1, 1]``. PSNR and SSIM are computed after mapping to
``[0, 1]`` with peak / dynamic range 1; NMSE is the relative l2 error and
is scale-free, so it is computed on the values as given.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from dealias.errors import DegenerateReference, InvalidArgument

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x_hat, gt) -> tuple[np.ndarray, np.ndarray]:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if x_hat.shape != gt.shape:
        raise InvalidArgument(f"shape mismatch: {x_hat.shape} vs {gt.shape}")
    return x_hat, gt


def to_unit(img) -> np.ndarray:
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def nmse(x_hat, gt) -> float:
    """``||x_hat - gt|| / ||gt||``."""
    x_hat, gt = _pair(x_hat, gt)
    ref = np.linalg.norm(gt)
    if ref == 0:
        raise DegenerateReference("ground truth has zero norm")
    return float(np.linalg.norm(x_hat - gt) / ref)


def psnr(x_hat, gt) -> float:
    """PSNR in dB with peak 1 on the ``[0, 1]`` scale; ``inf`` for identical images."""
    x_hat, gt = _pair(x_hat, gt)
    err = to_unit(x_hat) - to_unit(gt)
    mse = float(np.mean(err * err))
    if mse == 0:
        return math.inf
    return -10.0 * math.log10(mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim_map(x_hat, gt) -> np.ndarray:
    x_hat, gt = _pair(x_hat, gt)
    if x_hat.ndim != 2 or min(x_hat.shape) < SSIM_WINDOW:
        raise InvalidArgument(f"SSIM needs a 2-D image of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    a, b = to_unit(x_hat), to_unit(gt)
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))


def ssim(x_hat, gt) -> float:
    """Mean SSIM over all fully contained 11×11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03, L 1)."""
    return float(np.mean(ssim_map(x_hat, gt)))


# -- qualitative artifacts ------------------------------------------------------------

def diff_image(x_hat, gt, gain: float = 10.0) -> np.ndarray:
    """Amplified absolute error on the ``[0, 1]`` scale, quantised to uint8 (round half up)."""
    if gain <= 0:
        raise InvalidArgument("gain must be positive")
    x_hat, gt = _pair(x_hat, gt)
    d = np.clip(gain * np.abs(to_unit(x_hat) - to_unit(gt)), 0.0, 1.0)
    return np.floor(d * 255 + 0.5).astype(np.uint8)


def save_diff_png(x_hat, gt, path: str | Path, gain: float = 10.0) -> None:
    from PIL import Image

    Image.fromarray(diff_image(x_hat, gt, gain)).save(path)


def line_profile(img, row: int) -> np.ndarray:
    img = np.asarray(img)
    if not 0 <= row < img.shape[0]:
        raise InvalidArgument(f"row {row} outside [0, {img.shape[0]})")
    return img[row].copy()


def write_line_profiles(path: str | Path, profiles: dict[str, np.ndarray], row: int) -> None:
    """One column per tagged image (e.g. GT, ZF, PG, PPG, PPGR), one line per pixel column."""
    names = list(profiles)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", *names])
        for c in range(len(next(iter(profiles.values())))):
            w.writerow([row, c, *(repr(float(profiles[n][c])) for n in names)])


# -- aggregation ------------------------------------------------------------------------

@dataclass
class MetricRecord:
    id: str
    variant: str
    mask: str
    ratio: float
    nmse: float
    psnr: float
    ssim: float

    @property
    def identical(self) -> bool:
        return math.isinf(self.psnr)


def evaluate_pair(image_id: str, variant: str, mask: str, ratio: float, x_hat, gt) -> MetricRecord:
    return MetricRecord(image_id, variant, mask, float(ratio), nmse(x_hat, gt), psnr(x_hat, gt), ssim(x_hat, gt))


@dataclass
class GroupStats:
    count: int
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_lo: float
    whisker_hi: float
    outliers: list[float] = field(default_factory=list)


def describe(values: Sequence[float]) -> GroupStats:
    """Summary statistics with linearly interpolated quartiles and 1.5 IQR whiskers."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InvalidArgument("cannot describe an empty group")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = sorted(float(x) for x in v[(v < lo_fence) | (v > hi_fence)])
    return GroupStats(int(v.size), float(v.mean()), float(v.std(ddof=0)), float(v.min()), float(q1), float(med),
                      float(q3), float(v.max()), float(inside.min()), float(inside.max()), outliers)


@dataclass
class MetricsReport:
    records: list[MetricRecord]
    keys: tuple[str, ...]
    groups: dict[tuple, dict[str, GroupStats]]


def aggregate_report(records: Iterable[MetricRecord], keys: Sequence[str] = ("variant", "mask", "ratio"),
                     metrics: Sequence[str] = ("nmse", "psnr", "ssim")) -> MetricsReport:
    records = list(records)
    if not records:
        raise InvalidArgument("no records to aggregate")
    grouped: dict[tuple, list[MetricRecord]] = {}
    for r in records:
        grouped.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    groups = {}
    for gkey, rs in grouped.items():
        stats = {}
        for m in metrics:
            vals = [getattr(r, m) for r in rs if np.isfinite(getattr(r, m))]
            if not vals:
                logger.warning("group %s has no finite %s values; omitted", gkey, m)
                continue
            stats[m] = describe(vals)
        groups[gkey] = stats
    return MetricsReport(records, tuple(keys), groups)


def write_metrics_csv(path: str | Path, records: Iterable[MetricRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "variant", "mask", "ratio", "nmse", "psnr", "ssim"])
        for r in records:
            w.writerow([r.id, r.variant, r.mask, r.ratio, repr(r.nmse), "inf" if r.identical else repr(r.psnr),
                        repr(r.ssim)])


def write_boxplot_csv(path: str | Path, report: MetricsReport, metric: str = "ssim") -> None:
    """Box-plot data per group: whisker ends as min/max, points beyond 1.5 IQR as outliers."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["group", "min", "q1", "median", "q3", "max", "outliers"])
        for gkey, stats in report.groups.items():
            if metric not in stats:
                continue
            s = stats[metric]
            w.writerow(["/".join(str(k) for k in gkey), s.whisker_lo, s.q1, s.median, s.q3, s.whisker_hi,
                        ";".join(repr(o) for o in s.outliers)])


def write_table_csv(path: str | Path, records: Iterable[MetricRecord]) -> None:
    """Mean NMSE and PSNR laid out with one row per (mask, method) and ratio-major columns."""
    records = list(records)
    ratios = sorted({r.ratio for r in records})
    rows: dict[tuple[str, str], dict[float, list[MetricRecord]]] = {}
    for r in records:
        rows.setdefault((r.mask, r.variant), {}).setdefault(r.ratio, []).append(r)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["mask", "method"]
        for ratio in ratios:
            pct = f"{round(ratio * 100)}%"
            header += [f"{pct}_nmse", f"{pct}_psnr"]
        w.writerow(header)
        for (mask, method), by_ratio in sorted(rows.items(), key=lambda kv: (kv[0][0], _method_order(kv[0][1]))):
            line = [mask, method]
            for ratio in ratios:
                rs = by_ratio.get(ratio)
                if not rs:
                    line += ["", ""]
                    continue
                psnrs = [r.psnr for r in rs]
                line += [f"{np.mean([r.nmse for r in rs]):.4f}",
                         "inf" if all(math.isinf(p) for p in psnrs) else f"{np.mean([p for p in psnrs if np.isfinite(p)]):.2f}"]
            w.writerow(line)


def _method_order(name: str) -> tuple[int, str]:
    order = {"GT": 0, "ZF": 1, "PG": 2, "PPG": 3, "PPGR": 4}
    return order.get(name, 9), name
