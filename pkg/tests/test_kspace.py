import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from dealias import kspace
from dealias.errors import FormatError, InvalidArgument, UnsupportedSize
from dealias.kspace import MaskKind, fft2_centered, ifft2_centered, make_mask


def test_constant_image_is_center_delta():
    k = fft2_centered(np.full((8, 8), 0.75))
    assert abs(k[4, 4]) == pytest.approx(8 * 0.75)
    off = k.copy()
    off[4, 4] = 0
    assert np.max(np.abs(off)) < 1e-12


def test_roundtrip_64():
    x = np.random.default_rng(0).normal(size=(64, 64))
    assert np.max(np.abs(ifft2_centered(fft2_centered(x)) - x)) < 1e-10


def test_parseval_32():
    x = np.random.default_rng(1).normal(size=(32, 32))
    assert abs(np.sum(x * x) - np.sum(np.abs(fft2_centered(x)) ** 2)) < 1e-9


def test_center_delta_inverts_to_ones():
    k = np.zeros((16, 8), dtype=complex)
    k[8, 4] = np.sqrt(16 * 8)
    np.testing.assert_allclose(ifft2_centered(k), np.ones((16, 8)), atol=1e-12)


def test_inverse_linear():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    Y = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    a, b = 0.3 - 2j, 1.7
    lhs = ifft2_centered(a * X + b * Y)
    rhs = a * ifft2_centered(X) + b * ifft2_centered(Y)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_odd_size_rejected():
    with pytest.raises(UnsupportedSize):
        fft2_centered(np.zeros((7, 8)))
    with pytest.raises(UnsupportedSize):
        ifft2_centered(np.zeros((8, 9)))


def test_non_power_of_two_even_supported():
    x = np.random.default_rng(3).normal(size=(12, 20))
    assert np.max(np.abs(ifft2_centered(fft2_centered(x)) - x)) < 1e-10


# -- masks ------------------------------------------------------------------------------

def test_full_ratio_is_all_ones():
    for kind in MaskKind:
        assert make_mask(kind, (16, 16), 1.0, seed=3).bits.all()


def test_gaussian2d_exact_count():
    m = make_mask("gaussian2d", (64, 64), 0.3, seed=7)
    assert m.popcount == 1229
    assert m.bits[32, 32]


def test_gaussian1d_lines():
    m = make_mask("gaussian1d", (64, 64), 0.1, seed=5)
    cols = np.flatnonzero(m.bits.any(axis=0))
    assert len(cols) == 6
    assert np.all(m.bits[:, cols]) and m.popcount == 6 * 64
    assert 32 in cols


def test_mask_determinism():
    a = make_mask("gaussian2d", (32, 32), 0.2, 0.3, 99)
    b = make_mask("gaussian2d", (32, 32), 0.2, 0.3, 99)
    assert a.bits.tobytes() == b.bits.tobytes()
    c = make_mask("gaussian2d", (32, 32), 0.2, 0.3, 100)
    assert a.bits.tobytes() != c.bits.tobytes()


@pytest.mark.parametrize("kind,shape,ratio", [("gaussian2d", (4, 4), 0.01), ("gaussian1d", (8, 8), 0.05)])
def test_ratio_too_small(kind, shape, ratio):
    with pytest.raises(InvalidArgument):
        make_mask(kind, shape, ratio)


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
def test_ratio_out_of_range(ratio):
    with pytest.raises(InvalidArgument):
        make_mask("gaussian2d", (8, 8), ratio)


def test_sigma_must_be_positive():
    with pytest.raises(InvalidArgument):
        make_mask("gaussian2d", (8, 8), 0.5, sigma_fraction=0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(list(MaskKind)), st.integers(2, 20).map(lambda v: 2 * v),
       st.integers(2, 20).map(lambda v: 2 * v), st.floats(0.05, 1.0), st.integers(0, 2**63))
def test_mask_invariants(kind, h, w, ratio, seed):
    expected = round(ratio * h * w) if kind is MaskKind.GAUSSIAN2D else round(ratio * w) * h
    if (round(ratio * h * w) if kind is MaskKind.GAUSSIAN2D else round(ratio * w)) < 1:
        return
    m = make_mask(kind, (h, w), ratio, seed=seed)
    assert m.popcount == expected
    if kind is MaskKind.GAUSSIAN2D:
        assert m.bits[h // 2, w // 2]
    else:
        assert m.bits[:, w // 2].all()
        assert (m.bits == m.bits[:1]).all()


def test_density_decreases_with_distance():
    h = w = 32
    freq = np.zeros((h, w))
    for seed in range(300):
        freq += make_mask("gaussian2d", (h, w), 0.2, seed=seed).bits
    yy, xx = np.mgrid[:h, :w]
    d = np.hypot(yy - h // 2, xx - w // 2)
    assert spearmanr(d.ravel(), freq.ravel()).statistic < -0.9


# -- undersampling and zero filling ---------------------------------------------------------

def test_undersample_full_mask():
    x = np.random.default_rng(4).uniform(size=(16, 16))
    np.testing.assert_array_equal(kspace.undersample(x, kspace.full_mask((16, 16))), fft2_centered(x))


def test_undersample_zero_image():
    m = make_mask("gaussian2d", (16, 16), 0.3, seed=1)
    assert not np.any(kspace.undersample(np.zeros((16, 16)), m))


def test_undersample_positionwise():
    x = np.random.default_rng(5).uniform(-1, 1, size=(32, 32))
    m = make_mask("gaussian2d", (32, 32), 0.2, seed=2)
    k = kspace.undersample(x, m)
    full = fft2_centered(x)
    assert np.all(k[~m.bits] == 0)
    assert np.array_equal(k[m.bits], full[m.bits])


def test_undersample_shape_mismatch():
    with pytest.raises(InvalidArgument):
        kspace.undersample(np.zeros((8, 8)), np.ones((8, 16), dtype=bool))


def test_undersample_linear():
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
    m = make_mask("gaussian1d", (16, 16), 0.4, seed=3)
    lhs = kspace.undersample(2.5 * x - y, m)
    rhs = 2.5 * kspace.undersample(x, m) - kspace.undersample(y, m)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def normalized_image(rng, shape):
    x = rng.uniform(size=shape)
    return 2 * (x - x.min()) / (x.max() - x.min()) - 1


def test_full_mask_roundtrip():
    x = normalized_image(np.random.default_rng(7), (32, 32))
    m = kspace.to_magnitude(x)
    recon = kspace.zero_fill_recon(kspace.undersample(m, np.ones((32, 32), bool)), m.max())
    assert np.max(np.abs(recon - x)) < 1e-5
    np.testing.assert_allclose(kspace.simulate_zero_filled(x, kspace.full_mask((32, 32))), x, atol=1e-5)


def test_zero_fill_energy_not_above_full():
    x = kspace.to_magnitude(normalized_image(np.random.default_rng(8), (32, 32)))
    for ratio in (0.1, 0.3, 0.5):
        m = make_mask("gaussian2d", (32, 32), ratio, seed=4)
        zf = ifft2_centered(kspace.undersample(x, m))
        assert np.sum(np.abs(zf) ** 2) <= np.sum(x**2) + 1e-9


def test_zero_fill_aliasing_sanity():
    from dealias.data import phantom
    from dealias.metrics import psnr

    x = phantom((64, 64), 0)
    zf = kspace.simulate_zero_filled(x, make_mask("gaussian1d", (64, 64), 0.1, seed=0))
    full = kspace.simulate_zero_filled(x, kspace.full_mask((64, 64)))
    assert psnr(zf, x) < 30
    assert psnr(zf, x) < psnr(full, x) - 20


def test_zero_fill_batch_matches_single():
    rng = np.random.default_rng(9)
    batch = np.stack([normalized_image(rng, (16, 16)) for _ in range(3)])
    m = make_mask("gaussian2d", (16, 16), 0.3, seed=5)
    out = kspace.simulate_zero_filled(batch, m)
    for i in range(3):
        np.testing.assert_array_equal(out[i], kspace.simulate_zero_filled(batch[i], m))


# -- CSM1 ------------------------------------------------------------------------------

def test_csm1_roundtrip(tmp_path):
    m = make_mask("gaussian1d", (24, 40), 0.25, 0.4, 2**63 + 5)
    kspace.save_mask(m, tmp_path / "m.csm")
    back = kspace.load_mask(tmp_path / "m.csm")
    assert back.bits.tobytes() == m.bits.tobytes()
    assert (back.kind, back.target_ratio, back.sigma_fraction, back.seed) == (m.kind, 0.25, 0.4, 2**63 + 5)
    assert (tmp_path / "m.csm").read_bytes() == kspace.mask_to_bytes(back)


def test_csm1_layout():
    m = make_mask("gaussian2d", (3, 5), 1.0, seed=1)
    blob = kspace.mask_to_bytes(m)
    assert blob[:4] == b"CSM1" and blob[4] == 1 and blob[5] == 1
    assert len(blob) == 4 + 1 + 1 + 2 + 4 + 4 + 8 + 8 + 8 + 2
    assert blob[-2:] == bytes([0xFF, 0x7F])


def test_csm1_bad_magic_and_version():
    blob = bytearray(kspace.mask_to_bytes(make_mask("gaussian2d", (4, 4), 0.5)))
    with pytest.raises(FormatError):
        kspace.mask_from_bytes(b"XXXX" + bytes(blob[4:]))
    blob[4] = 9
    with pytest.raises(FormatError, match="supported"):
        kspace.mask_from_bytes(bytes(blob))


def test_mask_png(tmp_path):
    from PIL import Image

    m = make_mask("gaussian2d", (8, 8), 1.0)
    kspace.save_mask_png(m, tmp_path / "m.png")
    arr = np.array(Image.open(tmp_path / "m.png"))
    assert arr.dtype == np.uint8 and np.all(arr == 255)
