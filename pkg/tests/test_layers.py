import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infcanvas.core import Rect, Tensor3, max_abs_diff, subpatch
from infcanvas.errors import ParameterError, ShapeError, UnderflowError
from infcanvas.geometry import backward_rect, forward_rect
from infcanvas.latent import LatentField, materialize
from infcanvas.layers import (
    ACTIVATIONS,
    AdaPixNormParams,
    LayerKind,
    PIXEL_NORM_EPS,
    LayerSpec,
    activation,
    apply_layer,
    bilinear_up_crop,
    conv_no_pad,
    conv_zero_pad,
    nearest_up,
    noisy_ada_pix_norm,
    pixel_norm,
)


def tensor(values, row=0, col=0):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    return Tensor3(Rect.of_size(arr.shape[0], arr.shape[1], row, col), arr)


def identity_kernel(c=1, k=3):
    w = np.zeros((c, c, k, k))
    for i in range(c):
        w[i, i, k // 2, k // 2] = 1.0
    return w


def naive_conv(x, w, b):
    """Direct loops: kernel row outer, kernel column middle, channel inner."""
    cout, cin, k, _ = w.shape
    h, wd, _ = x.shape
    out = np.zeros((h - k + 1, wd - k + 1, cout))
    for i in range(h - k + 1):
        for j in range(wd - k + 1):
            for o in range(cout):
                acc = 0.0
                for kr in range(k):
                    for kc in range(k):
                        for c in range(cin):
                            acc += w[o, c, kr, kc] * x[i + kr, j + kc, c]
                out[i, j, o] = acc + b[o]
    return out


# conv ---------------------------------------------------------------------


def test_conv_identity_kernel_returns_interior():
    t = tensor(np.random.default_rng(0).normal(size=(5, 5)))
    out = conv_no_pad(t, identity_kernel(), np.zeros(1))
    assert out.anchor == Rect.square(1, 4)
    assert out.data.tobytes() == t.data[1:4, 1:4].copy().tobytes()


def test_conv_all_ones():
    out = conv_no_pad(tensor(np.ones((4, 4))), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert np.all(out.data == 9.0)


def test_conv_block5_shape():
    rng = np.random.default_rng(1)
    t = Tensor3(Rect.square(0, 36), rng.normal(size=(36, 36, 128)))
    out = conv_no_pad(t, rng.normal(size=(64, 128, 3, 3)) * 0.03, np.zeros(64))
    assert out.shape == (34, 34, 64)


def test_conv_underflow():
    with pytest.raises(UnderflowError):
        conv_no_pad(tensor(np.ones((2, 5))), np.ones((1, 1, 3, 3)), np.zeros(1))


@pytest.mark.parametrize("k,cin,cout", [(1, 3, 2), (3, 2, 3), (5, 1, 1), (3, 7, 4)])
def test_conv_matches_direct_loops(k, cin, cout):
    rng = np.random.default_rng(k * 100 + cin)
    x = rng.normal(size=(7, 8, cin))
    w = rng.normal(size=(cout, cin, k, k))
    b = rng.normal(size=cout)
    out = conv_no_pad(Tensor3(Rect.of_size(7, 8), x), w, b)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b), rtol=0, atol=1e-12)


def test_zero_pad_identity_and_padding_arithmetic():
    t = tensor(np.random.default_rng(2).normal(size=(4, 4)))
    assert max_abs_diff(conv_zero_pad(t, identity_kernel(), np.zeros(1)), t) == 0.0
    out = conv_zero_pad(tensor(np.ones((3, 3))), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out.data[..., 0].tolist() == [[4, 6, 4], [6, 9, 6], [4, 6, 4]]


def test_zero_pad_disagrees_with_embedded_field():
    ones = np.ones((1, 1, 3, 3))
    padded = conv_zero_pad(tensor(np.ones((3, 3)), 1, 1), ones, np.zeros(1))
    embedded = conv_no_pad(tensor(np.ones((5, 5))), ones, np.zeros(1))
    assert embedded.anchor == padded.anchor
    assert np.all(embedded.data == 9.0)
    assert max_abs_diff(padded, embedded) == 5.0


# upsampling ---------------------------------------------------------------


def test_nearest_definition():
    out = nearest_up(tensor([[1, 2], [3, 4]]), 2)
    assert out.data[..., 0].tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]


def test_nearest_anchor_and_constant():
    t = tensor(np.full((3, 2), 0.25), row=-2, col=5)
    out = nearest_up(t, 2)
    assert out.anchor == Rect(-4, 2, 10, 14)
    assert np.all(out.data == 0.25)
    assert nearest_up(t, 3).anchor == Rect(-6, 3, 15, 21)


def test_nearest_rejects_small_scale():
    with pytest.raises(ParameterError):
        nearest_up(tensor([[1.0]]), 1)
    with pytest.raises(ParameterError):
        LayerSpec.nearest("u", 1)


def bilinear_oracle(z):
    """Four-phase formulas written out per output pixel."""
    h, w = z.shape
    out = np.zeros((2 * h - 2, 2 * w - 2))
    for a in range(h - 1):
        for b in range(w - 1):
            p, q, r, s = z[a, b], z[a, b + 1], z[a + 1, b], z[a + 1, b + 1]
            out[2 * a, 2 * b] = (9 * p + 3 * q + 3 * r + s) / 16
            out[2 * a, 2 * b + 1] = (3 * p + 9 * q + r + 3 * s) / 16
            out[2 * a + 1, 2 * b] = (3 * p + q + 9 * r + 3 * s) / 16
            out[2 * a + 1, 2 * b + 1] = (p + 3 * q + 3 * r + 9 * s) / 16
    return out


def test_bilinear_unit_impulse():
    out = bilinear_up_crop(tensor([[16, 0], [0, 0]]))
    assert out.data[..., 0].tolist() == [[9, 3], [3, 1]]
    assert out.anchor == Rect.square(0, 2)


def test_bilinear_shape_and_anchor():
    out = bilinear_up_crop(tensor(np.zeros((6, 6)), row=3, col=-1))
    assert out.shape[:2] == (10, 10)
    assert out.anchor == Rect(6, 16, -2, 8)


def test_bilinear_matches_phase_formulas():
    z = np.random.default_rng(3).normal(size=(5, 7))
    out = bilinear_up_crop(tensor(z))
    np.testing.assert_allclose(out.data[..., 0], bilinear_oracle(z), rtol=0, atol=1e-15)


def test_bilinear_constant_and_underflow():
    assert np.all(bilinear_up_crop(tensor(np.full((3, 4), -2.5))).data == -2.5)
    with pytest.raises(UnderflowError):
        bilinear_up_crop(tensor(np.ones((1, 4))))


def test_bilinear_scale_fixed():
    with pytest.raises(ParameterError):
        LayerSpec(LayerKind.BILINEAR_UP_CROP, "b", scale=3)


def _bilinear_coefficients(h=4, w=4):
    """Row ``p`` holds output pixel p's weights on the flattened input."""
    out = 2 * h - 2
    rows = []
    for i in range(out):
        for j in range(out):
            e = np.zeros((h, w))
            for a, b in itertools.product(range(h), range(w)):
                z = np.zeros((h, w))
                z[a, b] = 1.0
                e[a, b] = bilinear_oracle(z)[i, j]
            rows.append(e.ravel())
    return np.array(rows).reshape(out, out, h * w)


def test_bilinear_covariances_from_coefficients():
    coef = _bilinear_coefficients()
    cov = lambda p, q: float(coef[p] @ coef[q])
    for i in range(6):
        for j in range(6):
            assert cov((i, j), (i, j)) * 256 == 100
    # Horizontal pairs at column phase 0 sit inside one input cell.
    assert cov((2, 2), (2, 3)) * 256 == 60
    assert cov((2, 3), (2, 4)) * 256 == 90
    assert cov((2, 2), (3, 2)) * 256 == 60
    assert cov((3, 2), (4, 2)) * 256 == 90


def test_bilinear_covariances_monte_carlo():
    z = np.random.default_rng(5).normal(size=(100_000, 3, 3, 1))
    x, _ = apply_layer(LayerSpec.bilinear("b"), {}, z, Rect.square(0, 3), np.zeros(1, dtype=np.uint64))
    x = x[..., 0]
    assert abs(x[:, 1, 1].var() - 100 / 256) < 0.01
    assert abs(np.mean(x[:, 1, 0] * x[:, 1, 1]) - 60 / 256) < 0.01
    assert abs(np.mean(x[:, 1, 1] * x[:, 1, 2]) - 90 / 256) < 0.01


# pointwise ----------------------------------------------------------------


def test_activation_examples():
    t = tensor([[-1.0, 0.0, 2.0]])
    assert activation(t, "relu").data[0, :, 0].tolist() == [0, 0, 2]
    assert activation(tensor([[0.0]]), "tanh").data[0, 0, 0] == 0.0
    assert activation(tensor([[-5.0]]), "leaky_relu").data[0, 0, 0] == -1.0
    assert activation(tensor([[0.0]]), "sigmoid").data[0, 0, 0] == 0.5
    with pytest.raises(ParameterError):
        activation(t, "swish")


def test_pixel_norm_examples():
    out = pixel_norm(Tensor3(Rect.square(0, 1), np.array([[[1.0, 2.0, 3.0]]])))
    np.testing.assert_allclose(out.data[0, 0], [-1.224745, 0, 1.224745], atol=1e-6)
    flat = pixel_norm(Tensor3(Rect.square(0, 1), np.full((1, 1, 4), 3.0)))
    assert np.all(np.abs(flat.data) < 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 16), st.integers(0, 2**32 - 1))
def test_pixel_norm_standardizes(channels, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 3, channels)) * rng.uniform(0.5, 10) + rng.uniform(-5, 5)
    out = pixel_norm(Tensor3(Rect.square(0, 3), x)).data
    v = x.var(axis=-1)
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-9)
    np.testing.assert_allclose(out.var(axis=-1), v / (v + PIXEL_NORM_EPS), rtol=1e-9)


def _napn_params(c, beta=None, gamma=None, w=None, site=1):
    return AdaPixNormParams(
        np.ones(c) if beta is None else beta,
        np.zeros(c) if gamma is None else gamma,
        np.zeros(c) if w is None else w,
        site,
    )


def test_napn_without_noise_is_affine_pixel_norm():
    rng = np.random.default_rng(6)
    t = Tensor3(Rect.square(2, 5), rng.normal(size=(3, 3, 4)))
    beta, gamma = rng.normal(size=4), rng.normal(size=4)
    out = noisy_ada_pix_norm(t, _napn_params(4, beta, gamma), LatentField(1, 1, 1))
    np.testing.assert_allclose(out.data, beta * pixel_norm(t).data + gamma, rtol=0, atol=1e-15)


def test_napn_constant_pixels_vanish():
    t = Tensor3(Rect.square(0, 2), np.full((2, 2, 3), 4.0))
    out = noisy_ada_pix_norm(t, _napn_params(3), LatentField(1, 1, 1))
    assert np.all(np.abs(out.data) < 1e-12)


def test_napn_uses_global_coordinates_and_is_deterministic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(5, 5, 3))
    params = _napn_params(3, w=np.ones(3))
    field = LatentField(9, 1, 1)
    big = noisy_ada_pix_norm(Tensor3(Rect.square(10, 15), x), params, field)
    again = noisy_ada_pix_norm(Tensor3(Rect.square(10, 15), x), params, field)
    small = noisy_ada_pix_norm(Tensor3(Rect.square(11, 13), x[1:3, 1:3]), params, field)
    assert big.data.tobytes() == again.data.tobytes()
    assert subpatch(big, small.anchor).data.tobytes() == small.data.tobytes()
    moved = noisy_ada_pix_norm(Tensor3(Rect.square(0, 5), x), params, field)
    assert max_abs_diff(Tensor3(big.anchor, moved.data), big) > 0


def test_napn_shape_errors():
    t = Tensor3(Rect.square(0, 2), np.ones((2, 2, 3)))
    with pytest.raises(ShapeError):
        noisy_ada_pix_norm(t, _napn_params(2), LatentField(1, 1, 1))
    with pytest.raises(ShapeError):
        noisy_ada_pix_norm(t, _napn_params(3), LatentField(1, 1, 2))


# per-layer marginalization consistency -------------------------------------

CONSISTENT_LAYERS = [
    LayerSpec.conv("conv3", 2, 3),
    LayerSpec.conv("conv5", 2, 2, k=5),
    LayerSpec.conv1x1("conv1", 2, 2),
    LayerSpec.nearest("near2", 2),
    LayerSpec.nearest("near3", 3),
    LayerSpec.bilinear("bil"),
    LayerSpec.pixel_norm("pn"),
    LayerSpec.napn("napn", 2, 3),
] + [LayerSpec.act(f"act_{a}", a) for a in ACTIVATIONS]


def _layer_params(layer, rng):
    shapes = layer.param_shapes()
    return {k: rng.normal(size=v) for k, v in shapes.items()}


def _run(layer, params, t, seed):
    x, anchor = apply_layer(layer, params, t.data[None], t.anchor, np.array([seed], dtype=np.uint64))
    return Tensor3(anchor, x[0])


@st.composite
def layer_case(draw, layers=CONSISTENT_LAYERS):
    layer = draw(st.sampled_from(layers))
    h, w = draw(st.integers(5, 9)), draw(st.integers(5, 9))
    origin = (draw(st.integers(-30, 30)), draw(st.integers(-30, 30)))
    seed = draw(st.integers(0, 2**32 - 1))
    return layer, Rect.of_size(h, w, *origin), seed


@settings(max_examples=150, deadline=None)
@given(layer_case(), st.data())
def test_layer_subpatch_commutes(case, data):
    layer, rect, seed = case
    rng = np.random.default_rng(seed)
    params = _layer_params(layer, rng)
    t = materialize(LatentField(seed, 0, 2), rect)
    big = _run(layer, params, t, seed)
    out = big.anchor
    r0 = data.draw(st.integers(out.row_start, out.row_end - 1))
    r1 = data.draw(st.integers(r0 + 1, out.row_end))
    c0 = data.draw(st.integers(out.col_start, out.col_end - 1))
    c1 = data.draw(st.integers(c0 + 1, out.col_end))
    want = Rect(r0, r1, c0, c1)
    src = backward_rect(layer, want)
    small = _run(layer, params, subpatch(t, src), seed)
    assert small.anchor.contains(want)
    assert subpatch(big, want).data.tobytes() == subpatch(small, want).data.tobytes()
    assert np.isfinite(big.data).all()


def test_zero_padded_conv_breaks_subpatch_commutation():
    layer = LayerSpec.conv("zp", 1, 1, zero_pad=True)
    rng = np.random.default_rng(0)
    params = _layer_params(layer, rng)
    t = materialize(LatentField(4, 0, 1), Rect.square(0, 8))
    big = _run(layer, params, t, 4)
    small = _run(layer, params, subpatch(t, Rect.square(2, 6)), 4)
    assert max_abs_diff(subpatch(big, small.anchor), small) > 0.0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CONSISTENT_LAYERS + [LayerSpec.conv("zp", 2, 2, zero_pad=True)]), st.integers(0, 2**32 - 1))
def test_layers_keep_values_finite(layer, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 6, 2)) * 10.0 ** rng.uniform(-3, 3)
    out = _run(layer, _layer_params(layer, rng), Tensor3(Rect.square(0, 6), x), seed)
    assert np.isfinite(out.data).all()
    assert out.anchor == forward_rect(layer, Rect.square(0, 6))
