import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barkemo import nn
from barkemo.errors import DegenerateBatch, LabelOutOfRange, ShapeMismatch

SEEDS = range(20)
TOL = 1e-6


def naive_conv(x, w, b, stride):
    bsz, c_in, length = x.shape
    c_out, _, k = w.shape
    t_out = (length - k) // stride + 1
    y = np.zeros((bsz, c_out, t_out))
    for bi in range(bsz):
        for o in range(c_out):
            for t in range(t_out):
                acc = b[o]
                for c in range(c_in):
                    for j in range(k):
                        acc += w[o, c, j] * x[bi, c, t * stride + j]
                y[bi, o, t] = acc
    return y


def random_conv(rng, c_in=2, c_out=3, k=5, stride=2):
    return nn.Conv1d(rng.standard_normal((c_out, c_in, k)), rng.standard_normal(c_out), stride)


# -- convolution --------------------------------------------------------------

def test_conv_worked_example():
    layer = nn.Conv1d(np.array([[[1.0, 0.0, -1.0]]]), np.zeros(1), 1)
    x = np.array([[[1.0, 2, 3, 4, 5]]])
    np.testing.assert_array_equal(nn.conv1d_forward(layer, x), [[[-2.0, -2.0, -2.0]]])
    np.testing.assert_array_equal(naive_conv(x, layer.weight, layer.bias, 1), [[[-2.0, -2.0, -2.0]]])


def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 1, 9))
    layer = nn.Conv1d(np.ones((1, 1, 1)), np.zeros(1), 1)
    np.testing.assert_array_equal(nn.conv1d_forward(layer, x), x)


def test_conv_default_length():
    assert nn.conv_out_len(12000, 64, 8) == 1493


@pytest.mark.parametrize("seed", range(5))
def test_conv_matches_naive_loops(seed):
    rng = np.random.default_rng(seed)
    k, s = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    layer = random_conv(rng, k=k, stride=s)
    x = rng.standard_normal((3, 2, int(rng.integers(k, 30))))
    np.testing.assert_allclose(nn.conv1d_forward(layer, x), naive_conv(x, layer.weight, layer.bias, s),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.integers(1, 50), st.integers(1, 20))
def test_conv_length_matches_enumeration(length, k, stride):
    starts = [t for t in range(0, length) if t % stride == 0 and t + k <= length]
    assert nn.conv_out_len(length, k, stride) == len(starts)


def test_conv_shape_errors():
    layer = random_conv(np.random.default_rng(0), c_in=2, k=5)
    with pytest.raises(ShapeMismatch):
        nn.conv1d_forward(layer, np.zeros((1, 3, 10)))
    with pytest.raises(ShapeMismatch):
        nn.conv1d_forward(layer, np.zeros((1, 2, 4)))


def test_conv_backward_zero_and_bias_identity():
    rng = np.random.default_rng(1)
    layer = random_conv(rng)
    x = rng.standard_normal((2, 2, 20))
    t_out = nn.conv_out_len(20, 5, 2)
    gx, gw, gb = nn.conv1d_backward(layer, x, np.zeros((2, 3, t_out)))
    assert not gx.any() and not gw.any() and not gb.any()
    g = rng.standard_normal((2, 3, t_out))
    _, _, gb = nn.conv1d_backward(layer, x, g)
    np.testing.assert_allclose(gb, g.sum(axis=(0, 2)))


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    k, s = int(rng.integers(1, 8)), int(rng.integers(1, 5))
    layer = random_conv(rng, c_in=int(rng.integers(1, 4)), c_out=int(rng.integers(1, 4)), k=k, stride=s)
    x = rng.standard_normal((int(rng.integers(1, 5)), layer.weight.shape[1], int(rng.integers(k, 33))))
    g = rng.standard_normal(nn.conv1d_forward(layer, x).shape)
    grads = nn.conv1d_backward(layer, x, g)
    err = nn.grad_check(lambda: float((nn.conv1d_forward(layer, x) * g).sum()),
                        [x, layer.weight, layer.bias], grads)
    assert err <= TOL


# -- batch norm ----------------------------------------------------------------

def test_bn_constant_input_gives_zero():
    layer = nn.BatchNorm1d.init(2)
    y, _ = nn.batchnorm_forward(layer, np.full((3, 2, 4), 7.5), "train")
    np.testing.assert_array_equal(y, 0.0)


def test_bn_worked_example():
    layer = nn.BatchNorm1d.init(1, eps=0.0)
    y, _ = nn.batchnorm_forward(layer, np.array([[[1.0, 2.0, 3.0]]]), "train")
    r = math.sqrt(1.5)  # (x - 2) / sqrt(2/3)
    np.testing.assert_allclose(y[0, 0], [-r, 0.0, r], rtol=1e-15)
    assert r == pytest.approx(1.2247, abs=1e-4)


def test_bn_gamma_zero_gives_beta():
    layer = nn.BatchNorm1d.init(2)
    layer.gamma[:] = 0.0
    layer.beta[:] = [0.3, -1.0]
    y, _ = nn.batchnorm_forward(layer, np.random.default_rng(0).standard_normal((2, 2, 5)), "train")
    np.testing.assert_array_equal(y[:, 0], 0.3)
    np.testing.assert_array_equal(y[:, 1], -1.0)


def test_bn_running_stats_update_and_infer():
    rng = np.random.default_rng(2)
    layer = nn.BatchNorm1d.init(3)
    x = rng.normal(2.0, 3.0, (4, 3, 10))
    nn.batchnorm_forward(layer, x, "train")
    np.testing.assert_allclose(layer.running_mean, 0.1 * x.mean(axis=(0, 2)))
    np.testing.assert_allclose(layer.running_var, 0.9 + 0.1 * x.var(axis=(0, 2)))
    before = (layer.running_mean.copy(), layer.running_var.copy())
    y, cache = nn.batchnorm_forward(layer, x, "infer")
    assert cache is None
    np.testing.assert_array_equal(layer.running_mean, before[0])
    expected = (x - before[0][None, :, None]) / np.sqrt(before[1][None, :, None] + 1e-5)
    np.testing.assert_allclose(y, expected)


def test_bn_degenerate_batch():
    with pytest.raises(DegenerateBatch):
        nn.batchnorm_forward(nn.BatchNorm1d.init(1), np.ones((1, 1, 1)), "train")
    nn.batchnorm_forward(nn.BatchNorm1d.init(1), np.ones((1, 1, 1)), "infer")


@pytest.mark.parametrize("seed", range(10))
def test_bn_train_output_standardized(seed):
    rng = np.random.default_rng(seed)
    layer = nn.BatchNorm1d.init(3, eps=1e-12)
    y, _ = nn.batchnorm_forward(layer, rng.normal(5.0, 4.0, (4, 3, 16)), "train")
    np.testing.assert_allclose(y.mean(axis=(0, 2)), 0.0, atol=1e-9)
    np.testing.assert_allclose(y.var(axis=(0, 2)), 1.0, atol=1e-9)


def test_bn_backward_zero():
    layer = nn.BatchNorm1d.init(2)
    x = np.random.default_rng(0).standard_normal((2, 2, 5))
    _, cache = nn.batchnorm_forward(layer, x, "train")
    gx, gg, gb = nn.batchnorm_backward(layer, cache, np.zeros_like(x))
    assert not gx.any() and not gg.any() and not gb.any()


@pytest.mark.parametrize("seed", range(10))
def test_bn_input_grad_sums_to_zero(seed):
    rng = np.random.default_rng(seed)
    layer = nn.BatchNorm1d.init(3)
    layer.gamma[:] = rng.uniform(0.5, 2, 3)
    x = rng.standard_normal((4, 3, 8))
    _, cache = nn.batchnorm_forward(layer, x, "train")
    gx, _, _ = nn.batchnorm_backward(layer, cache, rng.standard_normal(x.shape))
    np.testing.assert_allclose(gx.sum(axis=(0, 2)), 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_bn_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    ch = int(rng.integers(1, 4))
    layer = nn.BatchNorm1d(rng.uniform(0.5, 2, ch), rng.standard_normal(ch), np.zeros(ch), np.ones(ch))
    x = rng.standard_normal((int(rng.integers(1, 5)), ch, int(rng.integers(2, 33))))
    g = rng.standard_normal(x.shape)
    _, cache = nn.batchnorm_forward(layer, x, "train")
    grads = nn.batchnorm_backward(layer, cache, g)
    err = nn.grad_check(lambda: float((nn.batchnorm_forward(layer, x, "train")[0] * g).sum()),
                        [x, layer.gamma, layer.beta], grads)
    assert err <= TOL


# -- relu / pooling / dense ------------------------------------------------------

def test_relu():
    np.testing.assert_array_equal(nn.relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    x = np.array([0.1, 3.0])
    np.testing.assert_array_equal(nn.relu(x), x)
    np.testing.assert_array_equal(nn.relu_backward(np.array([-1.0, 0.0, 2.0]), np.ones(3)), [0.0, 0.0, 1.0])


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 2, 7))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    g = rng.standard_normal(x.shape)
    err = nn.grad_check(lambda: float((nn.relu(x) * g).sum()), [x], [nn.relu_backward(x, g)])
    assert err <= TOL


def test_global_avg_pool():
    x = np.array([[[1.0, 2.0, 3.0]]])
    np.testing.assert_array_equal(nn.global_avg_pool(x), [[2.0]])
    np.testing.assert_array_equal(nn.global_avg_pool(np.array([[[4.0], [5.0]]])), [[4.0, 5.0]])
    np.testing.assert_array_equal(nn.global_avg_pool_backward(np.array([[3.0]]), 3), [[[1.0, 1.0, 1.0]]])


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, int(rng.integers(1, 33))))
    g = rng.standard_normal((2, 3))
    err = nn.grad_check(lambda: float((nn.global_avg_pool(x) * g).sum()), [x],
                        [nn.global_avg_pool_backward(g, x.shape[-1])])
    assert err <= TOL


def test_dense_identity_and_zero_input():
    layer = nn.Dense(np.eye(4), np.zeros(4))
    x = np.random.default_rng(0).standard_normal((3, 4))
    np.testing.assert_array_equal(nn.dense_forward(layer, x), x)
    layer = nn.Dense(np.ones((2, 4)), np.array([0.5, -0.5]))
    np.testing.assert_array_equal(nn.dense_forward(layer, np.zeros((1, 4))), [[0.5, -0.5]])
    with pytest.raises(ShapeMismatch):
        nn.dense_forward(layer, np.zeros((1, 3)))


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_finite_differences(seed):
    rng = np.random.default_rng(seed)
    layer = nn.Dense(rng.standard_normal((5, 4)), rng.standard_normal(5))
    x = rng.standard_normal((int(rng.integers(1, 5)), 4))
    g = rng.standard_normal((x.shape[0], 5))
    err = nn.grad_check(lambda: float((nn.dense_forward(layer, x) * g).sum()),
                        [x, layer.weight, layer.bias], nn.dense_backward(layer, x, g))
    assert err <= TOL


# -- softmax / cross-entropy -----------------------------------------------------

def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax(np.zeros((1, 5))), np.full((1, 5), 0.2))
    x = np.random.default_rng(0).standard_normal((3, 5))
    np.testing.assert_allclose(nn.softmax(x + 17.0), nn.softmax(x), rtol=1e-12)
    p = nn.softmax(np.array([[1000.0, 0.0]]))
    assert p[0, 0] == 1.0 and 0.0 <= p[0, 1] < 1e-300 and np.all(np.isfinite(p))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_softmax_rows_are_distributions(rows, k, scale, seed):
    x = np.random.default_rng(seed).standard_normal((rows, k)) * scale
    p = nn.softmax(x)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_cross_entropy_values():
    loss, _ = nn.cross_entropy(np.eye(5)[[1, 3]], [1, 3])
    assert loss == 0.0
    loss, _ = nn.cross_entropy(np.full((4, 5), 0.2), [0, 1, 2, 3])
    assert loss == pytest.approx(math.log(5))
    assert loss == pytest.approx(1.60944, abs=1e-5)
    loss, _ = nn.cross_entropy(np.array([[1.0, 0.0]]), [1])
    assert loss == pytest.approx(-math.log(1e-12))


def test_cross_entropy_label_range():
    with pytest.raises(LabelOutOfRange):
        nn.cross_entropy(np.full((1, 5), 0.2), [5])
    with pytest.raises(LabelOutOfRange):
        nn.cross_entropy(np.full((1, 5), 0.2), [-1])


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_cross_entropy_finite_differences(seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((int(rng.integers(1, 5)), 5)) * 2
    labels = rng.integers(0, 5, logits.shape[0])
    _, grad = nn.cross_entropy(nn.softmax(logits), labels)
    err = nn.grad_check(lambda: nn.cross_entropy(nn.softmax(logits), labels)[0], [logits], [grad])
    assert err <= TOL


# -- optimizers -----------------------------------------------------------------------

def test_sgd():
    p = [np.array([1.0, 2.0])]
    nn.sgd_step(p, [np.zeros(2)], 0.1)
    np.testing.assert_array_equal(p[0], [1.0, 2.0])
    nn.sgd_step(p, [np.array([1.0, -1.0])], 0.0)
    np.testing.assert_array_equal(p[0], [1.0, 2.0])
    nn.sgd_step(p, [np.array([1.0, -1.0])], 0.5)
    np.testing.assert_array_equal(p[0], [0.5, 2.5])
    with pytest.raises(ShapeMismatch):
        nn.sgd_step(p, [np.zeros(3)], 0.1)


def test_adam_first_step_is_lr():
    p = [np.array([1.0, -2.0, 3.0])]
    state = nn.AdamState(lr=1e-3)
    nn.adam_step(state, p, [np.array([0.5, 0.5, -4.0])])
    # m_hat = g, v_hat = g^2 at t=1, so the step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p[0], [1.0 - 1e-3, -2.0 - 1e-3, 3.0 + 1e-3], atol=1e-10)


def test_adam_zero_lr_no_change():
    p = [np.array([1.0, 2.0])]
    nn.adam_step(nn.AdamState(lr=0.0), p, [np.array([3.0, -1.0])])
    np.testing.assert_array_equal(p[0], [1.0, 2.0])


def test_adam_matches_reference_loop():
    rng = np.random.default_rng(4)
    p = rng.standard_normal(3)
    ref = p.copy()
    state = nn.AdamState(lr=0.01)
    m = np.zeros(3)
    v = np.zeros(3)
    params = [p]
    for t in range(1, 11):
        g = rng.standard_normal(3)
        nn.adam_step(state, params, [g])
        for i in range(3):
            m[i] = 0.9 * m[i] + 0.1 * g[i]
            v[i] = 0.999 * v[i] + 0.001 * g[i] ** 2
            ref[i] -= 0.01 * (m[i] / (1 - 0.9 ** t)) / (math.sqrt(v[i] / (1 - 0.999 ** t)) + 1e-8)
    assert state.step == 10
    np.testing.assert_allclose(params[0], ref, rtol=1e-12)


# -- grad_check harness ----------------------------------------------------------

def test_grad_check_linear_exact():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(10)
    p = rng.standard_normal(10)
    assert nn.grad_check(lambda: float(a @ p + 3.0), [p], [a]) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_h_sweep(seed):
    # O(1) derivatives put the truncation/rounding balance near h = 1e-5
    p = np.random.default_rng(seed).uniform(-1, 1, 8)
    analytic = np.cos(p) + 0.5 * np.exp(0.5 * p)

    def err(h):
        return nn.grad_check(lambda: float(np.sum(np.sin(p) + np.exp(0.5 * p))), [p], [analytic], h)

    coarse = [err(h) for h in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)]
    fine = [err(h) for h in (1e-5, 1e-6, 1e-8, 1e-10, 1e-12)]
    assert coarse == sorted(coarse, reverse=True)
    assert fine == sorted(fine)
    assert err(1e-5) <= 1e-9


def test_seeded_init_deterministic():
    a = nn.Conv1d.init(nn.seeded_rng(42), 2, 3, 5)
    b = nn.Conv1d.init(nn.seeded_rng(42), 2, 3, 5)
    np.testing.assert_array_equal(a.weight, b.weight)
    assert a.weight.std() == pytest.approx(math.sqrt(2 / 10), rel=0.5)
