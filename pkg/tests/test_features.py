import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowcut.features import DESCRIPTOR_DIM, center, featurize, read_fgrd, write_fgrd
from flowcut.video import FormatError


def test_uniform_gray_patch():
    d = featurize(np.full((8, 8, 3), 0.5), 8)[0, 0]
    np.testing.assert_allclose(d, [0.5, 0.5, 0.5] + [0.0] * 9, atol=1e-15)


def test_vertical_step_edge():
    img = np.zeros((8, 8, 3))
    img[:, 4:] = 1.0
    d = featurize(img, 8)[0, 0]
    # horizontal gradient -> orientation 0 deg bin
    assert d[6] == pytest.approx(1.0)
    assert d[11] == pytest.approx(1.0)


def test_checker_translation_by_period():
    def checker(offset):
        yy, xx = np.mgrid[0:8, 0:8]
        par = (((yy + offset) // 2) + ((xx + offset) // 2)) % 2
        cols = np.array([[0.9, 0.1, 0.2], [0.1, 0.3, 0.7]])
        return cols[par]
    a = featurize(checker(0), 8)[0, 0]
    b = featurize(checker(4), 8)[0, 0]
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_patches_are_independent(rng):
    img = rng.random((16, 24, 3))
    f = featurize(img, 8)
    img2 = img.copy()
    img2[8:, 16:] = 0.0
    g = featurize(img2, 8)
    np.testing.assert_array_equal(f[0], g[0])
    np.testing.assert_array_equal(f[1, :2], g[1, :2])


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 40), st.integers(8, 40), st.sampled_from([4, 8]), st.integers(0, 2**32 - 1))
def test_shape_and_finite(h, w, p, seed):
    img = np.random.default_rng(seed).random((h, w, 3))
    f = featurize(img, p)
    assert f.shape == (h // p, w // p, DESCRIPTOR_DIM)
    assert np.isfinite(f).all()
    hist = f[..., 6:10].sum(-1)
    assert np.all((np.abs(hist - 1) < 1e-9) | (hist == 0))


def test_center_zero_mean(rng):
    c = center(rng.random((3, 5, 12)))
    np.testing.assert_allclose(c.reshape(-1, 12).mean(0), 0, atol=1e-15)


def test_too_small():
    with pytest.raises(ValueError):
        featurize(np.zeros((4, 20, 3)), 8)


def test_fgrd_errors(tmp_path, rng):
    p = tmp_path / "f.fgrd"
    write_fgrd(rng.random((2, 3, 12)).astype(np.float32), p)
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        read_fgrd(p)
    p.write_bytes(raw + b"\0")
    with pytest.raises(FormatError):
        read_fgrd(p)
