import numpy as np
import pytest

from flowcut.flow import (FlowField, HSConfig, WarpOperator, compose_flows, flow_to_rgb,
                          horn_schunck, read_flo, warp_mask, write_flo)
from flowcut.video import FormatError


def noise_image(rng, h=64, w=96):
    # smooth-ish texture so the linearisation holds at a 2 px shift
    base = rng.random((h // 4 + 2, w // 4 + 2, 3))
    img = np.kron(base, np.ones((4, 4, 1)))[:h, :w]
    k = np.ones(3) / 3
    for ax in (0, 1):
        img = np.apply_along_axis(lambda r: np.convolve(r, k, mode="same"), ax, img)
    return img


def test_zero_motion(rng):
    f = noise_image(rng)
    fl = horn_schunck(f, f)
    assert np.abs(fl.u).max() <= 1e-3 and np.abs(fl.v).max() <= 1e-3


def test_shift_right_two_px(rng):
    f1 = noise_image(rng, 80, 120)
    f2 = np.roll(f1, 2, axis=1)
    fl = horn_schunck(f1, f2)
    h, w = f1.shape[:2]
    cy, cx = slice(h // 10, h - h // 10), slice(w // 10, w - w // 10)
    assert 1.6 <= fl.u[cy, cx].mean() <= 2.4
    assert -0.4 <= fl.v[cy, cx].mean() <= 0.4


def test_flat_pair():
    f = np.full((32, 32, 3), 0.4)
    fl = horn_schunck(f, f.copy())
    assert np.hypot(fl.u, fl.v).max() <= 1e-3


def test_hs_shape_mismatch_and_config():
    with pytest.raises(ValueError):
        horn_schunck(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))
    with pytest.raises(ValueError):
        HSConfig(n_iters=0)


def test_flow_rgb_colours():
    fl = FlowField(np.array([[0.0, 3.0, 0.0]]), np.array([[0.0, 0.0, 3.0]]))
    rgb = flow_to_rgb(fl, max_mag=3.0)
    np.testing.assert_allclose(rgb[0, 0], [1, 1, 1])
    np.testing.assert_allclose(rgb[0, 1], [1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(rgb[0, 2], [0.5, 1, 0], atol=1e-12)


def test_warp_zero_flow_exact(rng):
    m = rng.random((13, 17))
    np.testing.assert_array_equal(warp_mask(m, FlowField.zeros(13, 17)), m)


def test_warp_edge_moves_left():
    m = np.zeros((6, 10))
    m[:, 5:] = 1.0
    out = warp_mask(m, FlowField.constant(6, 10, 1.0, 0.0))
    np.testing.assert_array_equal(out[:, :4], 0.0)
    np.testing.assert_array_equal(out[:, 4:], 1.0)


def test_warp_outside_clamps():
    m = np.arange(12, dtype=float).reshape(3, 4)
    out = warp_mask(m, FlowField.constant(3, 4, 100.0, 0.0))
    np.testing.assert_array_equal(out, np.repeat(m[:, -1:], 4, axis=1))


def test_warp_adjoint(rng):
    fl = FlowField(rng.normal(0, 2, (9, 11)), rng.normal(0, 2, (9, 11)))
    op = WarpOperator(fl)
    x, y = rng.random((9, 11)), rng.random((9, 11))
    # the clip in apply is inactive for values already inside [min, max]
    assert np.isclose(np.sum(op.apply(x) * y), np.sum(x * op.adjoint(y)))


def test_compose_constant_flows():
    a = FlowField.constant(8, 8, 1.0, 0.5)
    b = FlowField.constant(8, 8, 1.0, 0.5)
    c = compose_flows(a, b)
    np.testing.assert_allclose(c.u, 2.0)
    np.testing.assert_allclose(c.v, 1.0)


def test_flo_one_pixel(tmp_path):
    p = tmp_path / "a.flo"
    write_flo(FlowField(np.array([[1.5]]), np.array([[-2.0]])), p)
    assert p.stat().st_size == 20
    fl = read_flo(p)
    assert fl.u[0, 0] == 1.5 and fl.v[0, 0] == -2.0


def test_flo_bad_magic_and_truncation(tmp_path):
    p = tmp_path / "a.flo"
    write_flo(FlowField.zeros(2, 2), p)
    raw = p.read_bytes()
    p.write_bytes(np.float32(1.0).tobytes() + raw[4:])
    with pytest.raises(FormatError):
        read_flo(p)
    p.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        read_flo(p)
