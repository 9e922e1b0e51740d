import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustscope import tensor as T
from robustscope.errors import ShapeError

from oracles import conv2d_loops, fd_probe, rel_err, softmax_scalar

RNG = np.random.default_rng(1234)


def rand_t(*shape, scale=1.0):
    return T.Tensor(RNG.uniform(-scale, scale, size=shape).astype(np.float32))


# ---------------------------------------------------------------------------
# Tensor type
# ---------------------------------------------------------------------------

def test_tensor_rejects_nan_from_external():
    with pytest.raises(ValueError):
        T.Tensor.from_external([1.0, np.nan, 2.0])


def test_tensor_rejects_bad_shape():
    with pytest.raises(ShapeError):
        T.Tensor.from_external([1.0, 2.0, 3.0], shape=(2, 2))


def test_tensor_immutable():
    t = T.Tensor.zeros((2, 2))
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


def test_opspec_validation():
    T.OpSpec("conv2d", {"stride": 1, "padding": 0})
    with pytest.raises(ValueError):
        T.OpSpec("conv2d", {"stride": 0, "padding": 0})
    with pytest.raises(ValueError):
        T.OpSpec("conv2d", {"stride": 1})
    with pytest.raises(ValueError):
        T.OpSpec("warp", {})
    with pytest.raises(ValueError):
        T.OpSpec("relu", {"stride": 1})


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def test_conv2d_identity_1x1():
    x = rand_t(3, 5, 5)
    w = T.Tensor(np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1))
    b = T.Tensor.zeros((3,))
    out = T.conv2d_forward(x, w, b, stride=1, padding=0)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_sum_case():
    x = T.Tensor(np.ones((1, 3, 3), dtype=np.float32))
    w = T.Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    b = T.Tensor.zeros((1,))
    out = T.conv2d_forward(x, w, b)
    assert out.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == 9.0


def test_conv2d_matches_loop_reference():
    x = RNG.uniform(-1, 1, size=(2, 5, 5)).astype(np.float32)
    w = RNG.uniform(-1, 1, size=(3, 2, 3, 3)).astype(np.float32)
    b = RNG.uniform(-1, 1, size=3).astype(np.float32)
    out = T.conv2d_forward(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=2, padding=1)
    ref = conv2d_loops(x, w, b, stride=2, padding=1)
    assert np.max(np.abs(out.data - ref)) < 1e-5


def test_conv2d_output_shape_formula():
    out = T.conv2d_forward(rand_t(1, 10, 7), rand_t(2, 1, 3, 3), rand_t(2), stride=2, padding=1)
    assert out.shape == (2, (10 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        T.conv2d_forward(rand_t(2, 5, 5), rand_t(3, 1, 3, 3), rand_t(3))
    with pytest.raises(ShapeError):
        T.conv2d_forward(rand_t(1, 2, 2), rand_t(1, 1, 3, 3), rand_t(1))


def test_conv2d_vjp_zero_upstream():
    x, w = rand_t(2, 6, 6), rand_t(3, 2, 3, 3)
    up = T.Tensor.zeros((3, 4, 4))
    g = T.conv2d_vjp(x, w, 1, 0, up)
    assert np.all(g.data == 0)


def test_conv2d_vjp_identity_kernel():
    x = rand_t(1, 4, 4)
    w = T.Tensor(np.ones((1, 1, 1, 1), dtype=np.float32))
    up = rand_t(1, 4, 4)
    g = T.conv2d_vjp(x, w, 1, 0, up)
    np.testing.assert_array_equal(g.data, up.data)


# ---------------------------------------------------------------------------
# pooling / relu / dense / concat / add / gap
# ---------------------------------------------------------------------------

def test_relu_all_negative():
    x = T.Tensor(-np.abs(RNG.normal(size=(2, 3, 3))).astype(np.float32) - 0.1)
    assert np.all(T.relu_forward(x).data == 0)
    g = T.relu_vjp(x, rand_t(2, 3, 3))
    assert np.all(g.data == 0)


def test_maxpool_2x2_block():
    x = T.Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32))
    out = T.maxpool2d_forward(x, kernel=2, stride=2)
    assert out.data.reshape(-1).tolist() == [4.0]
    up = T.Tensor(np.array([[[5.0]]], dtype=np.float32))
    g = T.maxpool2d_vjp(x, 2, 2, 0, up)
    np.testing.assert_array_equal(g.data, [[[0, 0], [0, 5.0]]])


def test_maxpool_all_2x2_blocks_exhaustive():
    # every permutation of distinct values in a 2x2 block routes to the max
    vals = [0.0, 1.0, 2.0, 3.0]
    import itertools
    for perm in itertools.permutations(vals):
        x = T.Tensor(np.array(perm, dtype=np.float32).reshape(1, 2, 2))
        out = T.maxpool2d_forward(x, 2, 2)
        assert out.data[0, 0, 0] == 3.0
        g = T.maxpool2d_vjp(x, 2, 2, 0, T.Tensor(np.ones((1, 1, 1), dtype=np.float32)))
        assert g.data.reshape(-1)[perm.index(3.0)] == 1.0
        assert g.data.sum() == 1.0


def test_maxpool_tie_break_first_in_scan():
    x = T.Tensor(np.array([[[7.0, 7.0], [7.0, 7.0]]], dtype=np.float32))
    g = T.maxpool2d_vjp(x, 2, 2, 0, T.Tensor(np.array([[[1.0]]], dtype=np.float32)))
    np.testing.assert_array_equal(g.data, [[[1.0, 0.0], [0.0, 0.0]]])


def test_avgpool_forward_and_vjp():
    x = rand_t(2, 4, 4)
    out = T.avgpool2d_forward(x, 2, 2)
    assert out.shape == (2, 2, 2)
    assert abs(out.data[0, 0, 0] - x.data[0, :2, :2].mean()) < 1e-6
    up = rand_t(2, 2, 2)
    g = T.avgpool2d_vjp(x, 2, 2, 0, up)
    assert abs(g.data[0, 0, 0] - up.data[0, 0, 0] / 4) < 1e-7


def test_dense_flattens_input():
    x = rand_t(2, 3, 3)
    w = rand_t(4, 18)
    b = rand_t(4)
    out = T.dense_forward(x, w, b)
    ref = w.data.astype(np.float64) @ x.data.reshape(-1).astype(np.float64) + b.data
    assert np.max(np.abs(out.data - ref)) < 1e-5


def test_concat_and_split_roundtrip():
    a, b = rand_t(2, 4, 4), rand_t(3, 4, 4)
    cat = T.concat_forward([a, b])
    assert cat.shape == (5, 4, 4)
    pa, pb = T.split_channels(cat, [2, 3])
    np.testing.assert_array_equal(pa.data, a.data)
    np.testing.assert_array_equal(pb.data, b.data)


def test_concat_rejects_mismatched_spatial():
    with pytest.raises(ShapeError):
        T.concat_forward([rand_t(1, 4, 4), rand_t(1, 3, 4)])


def test_add_and_gap():
    a, b = rand_t(2, 3, 3), rand_t(2, 3, 3)
    s = T.add_forward(a, b)
    assert np.max(np.abs(s.data - (a.data + b.data))) < 1e-6
    gap = T.globalavgpool_forward(a)
    assert gap.shape == (2,)
    assert abs(gap.data[0] - a.data[0].mean()) < 1e-6


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def test_softmax_uniform():
    out = T.softmax_forward(T.Tensor.zeros((4,)))
    np.testing.assert_allclose(out.data, 0.25, atol=1e-7)


def test_softmax_matches_scalar_oracle():
    logits = RNG.normal(size=9).astype(np.float32)
    out = T.softmax_forward(T.Tensor(logits))
    ref = softmax_scalar(logits)
    assert np.max(np.abs(out.data - ref)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=16), st.floats(-30, 30))
def test_softmax_shift_invariance(logits, c):
    a = T.softmax_forward(T.Tensor(np.array(logits, dtype=np.float32)))
    b = T.softmax_forward(T.Tensor(np.array(logits, dtype=np.float32) + np.float32(c)))
    assert float(np.abs(a.data.sum() - 1.0)) < 1e-6
    assert float(np.max(np.abs(a.data - b.data))) < 1e-6


# ---------------------------------------------------------------------------
# gradient checks against finite differences (float64 kernel path)
# ---------------------------------------------------------------------------

def check_grad(forward64, vjp_result, x64, n_probes=8, tol=1e-3, seed=0):
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(x64.size, size=min(n_probes, x64.size), replace=False)
    for fi in flat_idx:
        idx = np.unravel_index(fi, x64.shape)
        fd = fd_probe(forward64, x64, idx)
        assert rel_err(vjp_result[idx], fd) < tol, (idx, vjp_result[idx], fd)


def test_conv2d_grad_matches_fd():
    x = RNG.uniform(-1, 1, size=(2, 6, 6)).astype(np.float32)
    w = rand_t(3, 2, 3, 3)
    up = RNG.uniform(-1, 1, size=(3, 3, 3)).astype(np.float32)
    g = T.conv2d_vjp(T.Tensor(x), w, 2, 1, T.Tensor(up))

    def f(x64):
        out = T._conv2d(x64, w.data.astype(np.float64), np.zeros(3), 2, 1)
        return float((out * up).sum())

    check_grad(f, g.data, x.astype(np.float64))


def test_maxpool_grad_matches_fd():
    x = RNG.uniform(-1, 1, size=(2, 6, 6)).astype(np.float32)
    up = RNG.uniform(-1, 1, size=(2, 3, 3)).astype(np.float32)
    g = T.maxpool2d_vjp(T.Tensor(x), 2, 2, 0, T.Tensor(up))

    def f(x64):
        return float((T._maxpool2d(x64, 2, 2, 0) * up).sum())

    check_grad(f, g.data, x.astype(np.float64))


def test_avgpool_grad_matches_fd():
    x = RNG.uniform(-1, 1, size=(2, 6, 6)).astype(np.float32)
    up = RNG.uniform(-1, 1, size=(2, 3, 3)).astype(np.float32)
    g = T.avgpool2d_vjp(T.Tensor(x), 2, 2, 0, T.Tensor(up))

    def f(x64):
        return float((T._avgpool2d(x64, 2, 2, 0) * up).sum())

    check_grad(f, g.data, x.astype(np.float64))


def test_dense_grad_matches_fd():
    x = RNG.uniform(-1, 1, size=(2, 3, 3)).astype(np.float32)
    w = rand_t(4, 18)
    up = RNG.uniform(-1, 1, size=4).astype(np.float32)
    g = T.dense_vjp(T.Tensor(x), w, T.Tensor(up))

    def f(x64):
        return float((T._dense(x64, w.data.astype(np.float64), np.zeros(4)) * up).sum())

    check_grad(f, g.data, x.astype(np.float64))


def test_relu_grad_matches_fd():
    # keep probes away from the kink at 0
    x = RNG.uniform(0.2, 1.0, size=(2, 4, 4)).astype(np.float32)
    x[:, ::2] *= -1
    up = RNG.uniform(-1, 1, size=(2, 4, 4)).astype(np.float32)
    g = T.relu_vjp(T.Tensor(x), T.Tensor(up))

    def f(x64):
        return float((np.maximum(x64, 0) * up).sum())

    check_grad(f, g.data, x.astype(np.float64))
