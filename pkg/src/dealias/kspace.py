"""Simulated Cartesian MRI acquisition.

Images in the network's value range ``[-1, 1]`` are mapped to a magnitude
image in ``[0, 1]`` before encoding, so that the zero-filled reconstruction
(complex modulus of the inverse transform) lives on the same scale as the
ground truth. Transforms are centered (DC at ``(H // 2, W // 2)``) and
orthonormal.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dealias.errors import FormatError, InvalidArgument, UnsupportedSize

DEFAULT_SIGMA_FRACTION = 0.3


class MaskKind(enum.IntEnum):
    GAUSSIAN1D = 0
    GAUSSIAN2D = 1

    @classmethod
    def parse(cls, value: "MaskKind | str | int") -> "MaskKind":
        if isinstance(value, MaskKind):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise InvalidArgument(f"unknown mask kind {value!r}; use gaussian1d or gaussian2d") from None
        return cls(int(value))

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class SamplingMask:
    bits: np.ndarray
    kind: MaskKind
    target_ratio: float
    sigma_fraction: float
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def achieved_ratio(self) -> float:
        return self.popcount / self.bits.size


def _check_shape(shape: tuple[int, ...]) -> None:
    h, w = shape[-2:]
    if h % 2 or w % 2:
        raise UnsupportedSize(f"grid {h}x{w}: both dimensions must be even")


def fft2_centered(img: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DFT over the last two axes with DC moved to the grid center."""
    img = np.asarray(img)
    _check_shape(img.shape)
    axes = (-2, -1)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img, axes=axes), norm="ortho"), axes=axes)


def ifft2_centered(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2_centered`."""
    k = np.asarray(k)
    _check_shape(k.shape)
    axes = (-2, -1)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=axes), norm="ortho"), axes=axes)


def _weighted_sample(weights: np.ndarray, count: int, rng: np.random.Generator,
                     forced: np.ndarray) -> np.ndarray:
    """Draw ``count`` indices without replacement, probability proportional to ``weights``.

    Uses exponential keys (Efraimidis-Spirakis): the ``count`` largest
    ``log(u) / w`` are a successive weighted sample. ``forced`` indices are
    always included.
    """
    u = 1.0 - rng.random(weights.size)  # (0, 1]
    keys = np.log(u) / weights
    keys[forced] = np.inf
    chosen = np.argpartition(-keys, count - 1)[:count] if count < weights.size else np.arange(weights.size)
    return np.sort(chosen)


def make_mask(kind: "MaskKind | str", shape: tuple[int, int], ratio: float,
              sigma_fraction: float = DEFAULT_SIGMA_FRACTION, seed: int = 0) -> SamplingMask:
    """Gaussian variable-density Cartesian mask with an exact sample count.

    ``gaussian2d`` picks ``round(ratio * H * W)`` individual locations with
    density ``exp(-d^2 / 2)`` where ``d`` is the distance from the center
    measured in units of ``sigma_fraction * (H / 2, W / 2)``.
    ``gaussian1d`` picks ``round(ratio * W)`` whole phase-encode columns by
    their distance from the center column, each column fully sampled.
    The DC sample (or DC column) is always included.
    """
    kind = MaskKind.parse(kind)
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise InvalidArgument(f"invalid mask shape {shape}")
    if not 0 < ratio <= 1:
        raise InvalidArgument(f"ratio must lie in (0, 1], got {ratio}")
    if sigma_fraction <= 0:
        raise InvalidArgument(f"sigma_fraction must be positive, got {sigma_fraction}")
    rng = np.random.default_rng(np.uint64(seed))

    if kind is MaskKind.GAUSSIAN2D:
        count = int(round(ratio * h * w))
        if count < 1:
            raise InvalidArgument(f"ratio {ratio} leaves no room for the DC sample on a {h}x{w} grid")
        yy = (np.arange(h) - h // 2) / (sigma_fraction * h / 2)
        xx = (np.arange(w) - w // 2) / (sigma_fraction * w / 2)
        d2 = yy[:, None] ** 2 + xx[None, :] ** 2
        weights = np.exp(-0.5 * d2).ravel()
        dc = np.array([(h // 2) * w + w // 2])
        bits = np.zeros(h * w, dtype=bool)
        bits[_weighted_sample(weights, count, rng, dc)] = True
        bits = bits.reshape(h, w)
    else:
        count = int(round(ratio * w))
        if count < 1:
            raise InvalidArgument(f"ratio {ratio} leaves no room for the DC line on {w} columns")
        xx = (np.arange(w) - w // 2) / (sigma_fraction * w / 2)
        weights = np.exp(-0.5 * xx**2)
        cols = _weighted_sample(weights, count, rng, np.array([w // 2]))
        bits = np.zeros((h, w), dtype=bool)
        bits[:, cols] = True
    return SamplingMask(bits, kind, float(ratio), float(sigma_fraction), int(seed))


def full_mask(shape: tuple[int, int]) -> SamplingMask:
    return SamplingMask(np.ones(shape, dtype=bool), MaskKind.GAUSSIAN2D, 1.0, DEFAULT_SIGMA_FRACTION, 0)


def _bits(mask: "SamplingMask | np.ndarray") -> np.ndarray:
    return mask.bits if isinstance(mask, SamplingMask) else np.asarray(mask, dtype=bool)


def undersample(img: np.ndarray, mask: "SamplingMask | np.ndarray") -> np.ndarray:
    """Fourier-encode ``img`` and keep only the sampled locations (zeros elsewhere)."""
    bits = _bits(mask)
    img = np.asarray(img)
    if img.shape[-2:] != bits.shape:
        raise InvalidArgument(f"image shape {img.shape[-2:]} does not match mask shape {bits.shape}")
    return np.where(bits, fft2_centered(img), 0)


def to_magnitude(img: np.ndarray) -> np.ndarray:
    """Map an image from ``[-1, 1]`` to the magnitude scale ``[0, 1]``."""
    return (np.asarray(img, dtype=np.float64) + 1.0) / 2.0


def zero_fill_recon(k: np.ndarray, v_max: float | np.ndarray = 1.0) -> np.ndarray:
    """Zero-filled reconstruction mapped to ``[-1, 1]`` via ``2 v / v_max - 1``.

    ``v_max`` is the maximum of the fully sampled magnitude image (1 for a
    min-max normalised image); it may be an array broadcasting against a
    batch. Values that alias above ``v_max`` are clipped.
    """
    mag = np.abs(ifft2_centered(k))
    v_max = np.asarray(v_max, dtype=np.float64)
    if v_max.ndim:
        v_max = v_max.reshape(v_max.shape + (1, 1))
    return np.clip(2.0 * mag / v_max - 1.0, -1.0, 1.0)


def simulate_zero_filled(img: np.ndarray, mask: "SamplingMask | np.ndarray") -> np.ndarray:
    """Ground truth in ``[-1, 1]`` (single image or H×W batch) to its zero-filled counterpart."""
    mag = to_magnitude(img)
    v_max = mag.max(axis=(-2, -1))
    v_max = np.where(v_max > 0, v_max, 1.0)
    return zero_fill_recon(undersample(mag, mask), v_max)


# -- CSM1 mask files -------------------------------------------------------------

_CSM1_HEADER = struct.Struct("<4sBBHIIddQ")
CSM1_MAGIC = b"CSM1"
CSM1_VERSION = 1


def mask_to_bytes(mask: SamplingMask) -> bytes:
    h, w = mask.shape
    header = _CSM1_HEADER.pack(CSM1_MAGIC, CSM1_VERSION, int(mask.kind), 0, h, w,
                               mask.target_ratio, mask.sigma_fraction, mask.seed)
    return header + np.packbits(mask.bits.ravel(), bitorder="little").tobytes()


def mask_from_bytes(blob: bytes) -> SamplingMask:
    if len(blob) < _CSM1_HEADER.size:
        raise FormatError("mask file shorter than CSM1 header")
    magic, version, kind, _, h, w, ratio, sigma, seed = _CSM1_HEADER.unpack_from(blob)
    if magic != CSM1_MAGIC:
        raise FormatError(f"bad mask magic {magic!r}")
    if version != CSM1_VERSION:
        raise FormatError(f"unsupported CSM1 version {version}; supported: {CSM1_VERSION}")
    nbytes = (h * w + 7) // 8
    payload = blob[_CSM1_HEADER.size:]
    if len(payload) != nbytes:
        raise FormatError(f"mask payload has {len(payload)} bytes, expected {nbytes}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=h * w, bitorder="little")
    return SamplingMask(bits.astype(bool).reshape(h, w), MaskKind(kind), ratio, sigma, seed)


def save_mask(mask: SamplingMask, path: str | Path) -> None:
    Path(path).write_bytes(mask_to_bytes(mask))


def load_mask(path: str | Path) -> SamplingMask:
    return mask_from_bytes(Path(path).read_bytes())


def save_mask_png(mask: SamplingMask, path: str | Path) -> None:
    from PIL import Image

    Image.fromarray(mask.bits.astype(np.uint8) * 255).save(path)
