"""Datasets, phantoms and training-time augmentation.

All images are float64 H×W arrays in ``[-1, 1]``.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter

from dealias.errors import FormatError, InvalidArgument

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    ids: list[str]
    images: np.ndarray  # (N, H, W)
    source: str = "phantom"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise InvalidArgument(f"images must be stacked as (N, H, W), got {self.images.shape}")
        if len(self.ids) != len(self.images):
            raise InvalidArgument("one id per image required")
        if len(set(self.ids)) != len(self.ids):
            raise InvalidArgument("image ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(zip(self.ids, self.images))

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1:]

    def subset(self, indices) -> "Dataset":
        indices = list(indices)
        return Dataset([self.ids[i] for i in indices], self.images[indices], self.source)


def normalize_minmax(img: np.ndarray) -> np.ndarray:
    """Map to ``[-1, 1]``; a constant image maps to all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return 2.0 * (img - lo) / (hi - lo) - 1.0


# -- phantoms ----------------------------------------------------------------------

class Ellipse(NamedTuple):
    intensity: float
    a: float  # semi-axis along x
    b: float  # semi-axis along y
    x0: float
    y0: float
    phi_deg: float


# Modified Shepp-Logan (Toft's intensities), coordinates in [-1, 1] with y up.
SHEPP_LOGAN = (
    Ellipse(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def phantom_ellipses(seed: int) -> list[Ellipse]:
    """Shepp-Logan ellipses with seeded jitter plus a few random lesions.

    A global similarity transform (rotation, scale, shift) is applied to all
    ellipses; the inner structures additionally get their own center, axis,
    angle and intensity perturbations.
    """
    rng = np.random.default_rng(np.uint64(seed))
    rot = math.radians(rng.uniform(-10, 10))
    # keeps the skull at least 1/16 of the field of view away from every edge
    scale = rng.uniform(0.8, 0.9)
    shift = rng.uniform(-0.03, 0.03, size=2)
    c, s = math.cos(rot), math.sin(rot)

    out = []
    for i, e in enumerate(SHEPP_LOGAN):
        x0, y0, a, b, phi, inten = e.x0, e.y0, e.a, e.b, e.phi_deg, e.intensity
        if i >= 2:
            x0 += rng.uniform(-0.03, 0.03)
            y0 += rng.uniform(-0.03, 0.03)
            a *= rng.uniform(0.85, 1.15)
            b *= rng.uniform(0.85, 1.15)
            phi += rng.uniform(-10, 10)
            inten *= rng.uniform(0.7, 1.3)
        gx = scale * (c * x0 - s * y0) + shift[0]
        gy = scale * (s * x0 + c * y0) + shift[1]
        out.append(Ellipse(inten, a * scale, b * scale, gx, gy, phi + math.degrees(rot)))

    for _ in range(rng.integers(0, 4)):
        r = rng.uniform(0.0, 0.45) * scale
        t = rng.uniform(0, 2 * math.pi)
        size = rng.uniform(0.02, 0.08) * scale
        out.append(Ellipse(rng.choice([-1, 1]) * rng.uniform(0.05, 0.2), size, size * rng.uniform(0.6, 1.4),
                           shift[0] + r * math.cos(t), shift[1] + r * math.sin(t), rng.uniform(0, 180)))
    return out


def pixel_coordinates(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates in ``[-1, 1]``: x grows with column, y decreases with row."""
    h, w = shape
    x = (2 * np.arange(w) + 1) / w - 1
    y = 1 - (2 * np.arange(h) + 1) / h
    return np.meshgrid(x, y)


def rasterize(ellipses: list[Ellipse], shape: tuple[int, int]) -> np.ndarray:
    x, y = pixel_coordinates(shape)
    img = np.zeros(shape)
    for e in ellipses:
        phi = math.radians(e.phi_deg)
        dx, dy = x - e.x0, y - e.y0
        u = dx * math.cos(phi) + dy * math.sin(phi)
        v = -dx * math.sin(phi) + dy * math.cos(phi)
        img[(u / e.a) ** 2 + (v / e.b) ** 2 <= 1] += e.intensity
    return np.clip(img, 0.0, None)


def phantom(shape: tuple[int, int], seed: int = 0) -> np.ndarray:
    """A jittered Shepp-Logan style phantom normalised to ``[-1, 1]`` (background at -1)."""
    h, w = shape
    if h < 16 or w < 16:
        raise InvalidArgument(f"phantom needs at least 16x16 pixels, got {shape}")
    return normalize_minmax(rasterize(phantom_ellipses(seed), shape))


def phantom_dataset(count: int, shape: tuple[int, int] = (64, 64), seed: int = 0) -> Dataset:
    seeds = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    images = np.stack([phantom(shape, int(s)) for s in seeds]) if count else np.zeros((0,) + tuple(shape))
    return Dataset([f"phantom_{i:04d}" for i in range(count)], images, "phantom")


# -- raw f32 with IMG1 sidecar -------------------------------------------------------

_IMG1 = struct.Struct("<4sII")


def write_raw(img: np.ndarray, path: str | Path) -> Path:
    """Write ``<stem>.f32`` plus its ``<stem>.img1`` header; returns the .f32 path."""
    path = Path(path).with_suffix(".f32")
    img = np.asarray(img, dtype="<f4")
    path.write_bytes(img.tobytes())
    path.with_suffix(".img1").write_bytes(_IMG1.pack(b"IMG1", *img.shape))
    return path


def read_raw(path: str | Path) -> np.ndarray:
    path = Path(path).with_suffix(".f32")
    header = path.with_suffix(".img1").read_bytes()
    if len(header) != _IMG1.size:
        raise FormatError(f"{path.with_suffix('.img1')}: expected {_IMG1.size}-byte IMG1 header")
    magic, h, w = _IMG1.unpack(header)
    if magic != b"IMG1":
        raise FormatError(f"bad IMG1 magic {magic!r}")
    payload = path.read_bytes()
    if len(payload) != 4 * h * w:
        raise FormatError(f"{path}: {len(payload)} bytes for a {h}x{w} float32 image")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)


def write_png(img: np.ndarray, path: str | Path) -> None:
    """Write a ``[-1, 1]`` image as 8-bit grayscale."""
    from PIL import Image

    u8 = np.floor((np.clip(img, -1, 1) + 1) / 2 * 255 + 0.5).astype(np.uint8)
    Image.fromarray(u8).save(path)


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "I;16", "I;16B", "I;16L", "I"):
            raise FormatError(f"{path}: expected grayscale PNG, got mode {im.mode}")
        return np.array(im).astype(np.float64)


# -- resampling -----------------------------------------------------------------------

def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional positions with edge clamping.

    Interpolation is written as nested lerps so a constant image stays
    exactly constant.
    """
    h, w = img.shape
    r = np.clip(rows, 0, h - 1)
    c = np.clip(cols, 0, w - 1)
    r0 = np.minimum(np.floor(r).astype(np.intp), h - 2 if h > 1 else 0)
    c0 = np.minimum(np.floor(c).astype(np.intp), w - 2 if w > 1 else 0)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    tr = r - r0
    tc = c - c0
    v00, v01 = img[r0, c0], img[r0, c1]
    v10, v11 = img[r1, c0], img[r1, c1]
    top = v00 + tc * (v01 - v00)
    bottom = v10 + tc * (v11 - v10)
    return top + tr * (bottom - top)


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = img.shape
    th, tw = shape
    rows = (np.arange(th) + 0.5) * (h / th) - 0.5
    cols = (np.arange(tw) + 0.5) * (w / tw) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return bilinear_sample(img, rr, cc)


def center_crop_to_aspect(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = img.shape
    th, tw = shape
    if h * tw > w * th:
        nh = max(1, round(w * th / tw))
        top = (h - nh) // 2
        return img[top : top + nh]
    nw = max(1, round(h * tw / th))
    left = (w - nw) // 2
    return img[:, left : left + nw]


def load_directory(path: str | Path, shape: tuple[int, int] | None = None, resize: bool = True) -> Dataset:
    """Load grayscale PNG (8/16-bit) and raw ``.f32`` images, sorted by file name.

    Each image is center-cropped to the target aspect and bilinearly
    resized when ``resize`` is set, then min-max normalised to ``[-1, 1]``.
    """
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".f32"))
    ids, images = [], []
    for f in files:
        try:
            img = _read_png(f) if f.suffix.lower() == ".png" else read_raw(f)
        except (OSError, FormatError, ValueError) as exc:
            logger.warning("skipping unreadable %s: %s", f, exc)
            continue
        ids.append(f.stem)
        images.append(img)
    if not images:
        raise InvalidArgument(f"no readable images in {path}")
    if shape is None:
        shape = images[0].shape
    shape = tuple(int(v) for v in shape)
    out = []
    for name, img in zip(ids, images):
        if img.shape != shape:
            if not resize:
                raise InvalidArgument(f"{name}: size {img.shape} differs from {shape} and resizing is disabled")
            img = resize_bilinear(center_crop_to_aspect(img, shape), shape)
        out.append(normalize_minmax(img))
    return Dataset(ids, np.stack(out), "directory")


# -- augmentation -------------------------------------------------------------------------

def displacement_fields(shape: tuple[int, int], alpha: float, sigma: float,
                        seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column displacement fields: uniform noise, Gaussian-smoothed, scaled by ``alpha``.

    Smoothing is a normalised Gaussian of std ``sigma`` truncated at
    ``round(4 sigma)`` pixels with mirror ('reflect') boundaries.
    """
    rng = np.random.default_rng(np.uint64(seed))
    noise_r = rng.uniform(-1, 1, size=shape)
    noise_c = rng.uniform(-1, 1, size=shape)
    dr = gaussian_filter(noise_r, sigma, mode="reflect", truncate=4.0) * alpha
    dc = gaussian_filter(noise_c, sigma, mode="reflect", truncate=4.0) * alpha
    return dr, dc


def elastic_distort(img: np.ndarray, alpha: float, sigma: float, seed: int) -> np.ndarray:
    """Warp ``img`` by a smooth random displacement field (bilinear, edge-clamped)."""
    if alpha < 0 or sigma <= 0:
        raise InvalidArgument("elastic distortion needs alpha >= 0 and sigma > 0")
    img = np.asarray(img, dtype=np.float64)
    if alpha == 0:
        return img.copy()
    dr, dc = displacement_fields(img.shape, alpha, sigma, seed)
    rr, cc = np.meshgrid(np.arange(img.shape[0]), np.arange(img.shape[1]), indexing="ij")
    return bilinear_sample(img, rr + dr, cc + dc)


def flip(img: np.ndarray, horizontal: bool = True) -> np.ndarray:
    return img[:, ::-1].copy() if horizontal else img[::-1].copy()


def affine_resample(img: np.ndarray, angle_deg: float = 0.0, shift: tuple[float, float] = (0.0, 0.0),
                    zoom: float = 1.0) -> np.ndarray:
    """Rotate about the center, then shift (rows, cols), then zoom about the center, in one resampling pass."""
    if angle_deg == 0 and shift == (0.0, 0.0) and zoom == 1.0:
        return img.copy()
    h, w = img.shape
    cr, cc = (h - 1) / 2, (w - 1) / 2
    rr, cc_ = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # invert zoom, then shift, then rotation to find the source location
    r = (rr - cr) / zoom + cr - shift[0]
    c = (cc_ - cc) / zoom + cc - shift[1]
    t = math.radians(angle_deg)
    dr, dcol = r - cr, c - cc
    src_r = cr + math.cos(t) * dr - math.sin(t) * dcol
    src_c = cc + math.sin(t) * dr + math.cos(t) * dcol
    return bilinear_sample(img, src_r, src_c)


def adjust_brightness(img: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(img + delta, -1.0, 1.0)


@dataclass(frozen=True)
class AugmentSpec:
    flip_h: float = 0.5
    flip_v: float = 0.0
    rotate_deg_max: float = 10.0
    shift_px_max: int = 4
    brightness_delta_max: float = 0.1
    zoom_range: tuple[float, float] = (0.9, 1.1)
    elastic_alpha: float = 3.0
    elastic_sigma: float = 4.0
    elastic_p: float = 0.5

    def __post_init__(self):
        for name in ("flip_h", "flip_v", "elastic_p"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidArgument(f"{name} must be a probability")
        lo, hi = self.zoom_range
        if not 0 < lo <= hi:
            raise InvalidArgument("zoom_range needs 0 < lo <= hi")
        if self.rotate_deg_max < 0 or self.shift_px_max < 0 or self.brightness_delta_max < 0:
            raise InvalidArgument("augmentation magnitudes must be nonnegative")
        if self.elastic_alpha < 0 or self.elastic_sigma <= 0:
            raise InvalidArgument("elastic alpha must be >= 0 and sigma > 0")

    @classmethod
    def disabled(cls) -> "AugmentSpec":
        return cls(0.0, 0.0, 0.0, 0, 0.0, (1.0, 1.0), 0.0, 4.0, 0.0)


def augment_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample stream keyed by (run seed, epoch, sample index)."""
    return np.random.default_rng([int(seed), int(epoch), int(index)])


def augment(img: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Flip, rotate, shift, zoom, brightness, elastic; then clamp to ``[-1, 1]``.

    Draws are made unconditionally in a fixed sequence so that each
    transform's randomness does not depend on whether earlier ones fired.
    """
    u_fh, u_fv, u_el = rng.random(3)
    angle = rng.uniform(-spec.rotate_deg_max, spec.rotate_deg_max)
    shift = rng.integers(-spec.shift_px_max, spec.shift_px_max + 1, size=2)
    zoom = rng.uniform(*spec.zoom_range)
    delta = rng.uniform(-spec.brightness_delta_max, spec.brightness_delta_max)
    elastic_seed = int(rng.integers(0, 2**63))

    out = np.asarray(img, dtype=np.float64)
    if u_fh < spec.flip_h:
        out = flip(out, horizontal=True)
    if u_fv < spec.flip_v:
        out = flip(out, horizontal=False)
    out = affine_resample(out, float(angle), (float(shift[0]), float(shift[1])), float(zoom))
    if delta:
        out = adjust_brightness(out, delta)
    if u_el < spec.elastic_p and spec.elastic_alpha > 0:
        out = elastic_distort(out, spec.elastic_alpha, spec.elastic_sigma, elastic_seed)
    return np.clip(out, -1.0, 1.0)
