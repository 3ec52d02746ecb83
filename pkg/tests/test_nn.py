import time

import numpy as np
import pytest

from rfsense.errors import ConfigurationError, InputError, StateError
from rfsense.nn import (
    AdamState,
    BatchNorm1d,
    Conv1d,
    Linear,
    MaxPool1d,
    ParameterTable,
    ReLU,
    RoiPool1d,
    Sequential,
    Sigmoid,
    Softmax,
    adam_step,
    binary_crossentropy,
    categorical_crossentropy,
    check_layer,
    load_checkpoint,
    numerical_gradient,
    relative_error,
    save_checkpoint,
    sigmoid_binary_crossentropy,
    smooth_l1,
    softmax_crossentropy,
)

TOL = 1e-4
N_SHAPES = 20
F64 = np.float64


def away_from_zero(rng, shape, gap=1e-2):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < gap, np.sign(x + 1e-12) * gap * 2, x)


def distinct_pairs(rng, shape):
    x = rng.standard_normal(shape)
    # keep the two candidates of every pooling window apart
    x[..., 1::2] = x[..., 0::2] + np.where(rng.random(x[..., 1::2].shape) < 0.5, -1, 1) * rng.uniform(0.05, 1, x[..., 1::2].shape)
    return x


def assert_grads(errors):
    for name, err in errors.items():
        assert err < TOL, f"{name}: relative error {err:.2e}"


def shapes(rng, n=N_SHAPES):
    for _ in range(n):
        yield int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(2, 9)) * 2


def test_conv1d_gradients(rng):
    t0 = time.perf_counter()
    for n, c, length in shapes(rng):
        k = int(rng.choice([1, 3, 5, 7]))
        layer = Conv1d(c, int(rng.integers(1, 5)), k, rng, dtype=F64)
        layer.params["b"][:] = rng.standard_normal(layer.params["b"].shape)
        assert_grads(check_layer(layer, rng.standard_normal((n, c, length)), rng))
    assert time.perf_counter() - t0 < 60


def test_linear_gradients(rng):
    for n, c, length in shapes(rng):
        layer = Linear(length, c + 1, rng, dtype=F64)
        assert_grads(check_layer(layer, rng.standard_normal((n, length)), rng))


def test_relu_gradients(rng):
    for shape in shapes(rng):
        assert_grads(check_layer(ReLU(), away_from_zero(rng, shape), rng))


def test_sigmoid_softmax_gradients(rng):
    for shape in shapes(rng):
        assert_grads(check_layer(Sigmoid(), rng.standard_normal(shape), rng))
        assert_grads(check_layer(Softmax(), 2 * rng.standard_normal(shape[1:]), rng))


def test_maxpool_gradients(rng):
    for shape in shapes(rng):
        assert_grads(check_layer(MaxPool1d(), distinct_pairs(rng, shape), rng))


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradients(rng, train):
    for n, c, length in shapes(rng):
        layer = BatchNorm1d(c, dtype=F64)
        layer.params["gamma"][:] = rng.uniform(0.5, 2, c)
        layer.params["beta"][:] = rng.standard_normal(c)
        layer.running_mean[:] = rng.standard_normal(c)
        layer.running_var[:] = rng.uniform(0.5, 2, c)
        assert_grads(check_layer(layer, rng.standard_normal((max(n, 2), c, length)), rng, train=train))


def test_roipool_gradients(rng):
    for _, c, length in shapes(rng):
        stride = int(rng.choice([1, 2, 4]))
        n_cells = length * 2
        x = rng.standard_normal((1, c, n_cells))
        lo = rng.uniform(0, n_cells * stride * 0.6, 3)
        rois = np.stack([lo, lo + rng.uniform(stride, n_cells * stride * 0.4, 3)], 1)
        layer = RoiPool1d(stride, int(rng.integers(1, 8)))
        out = layer.forward(x, rois)
        w = rng.standard_normal(out.shape)
        dx = layer.backward(w)
        num = numerical_gradient(lambda: float(np.sum(layer.forward(x, rois) * w)), x)
        assert relative_error(dx, num) < TOL


def test_composite_gradients(rng):
    for n, c, length in shapes(rng, 5):
        net = Sequential([Conv1d(c, 3, 3, rng, F64), ReLU(), BatchNorm1d(3, dtype=F64), MaxPool1d(), Conv1d(3, 2, 1, rng, F64)])
        x = rng.standard_normal((max(n, 2), c, length))
        w = rng.standard_normal(net.forward(x, True).shape)
        net.forward(x, True)
        dx = net.backward(w)
        num = numerical_gradient(lambda: float(np.sum(net.forward(x, True) * w)), x)
        assert relative_error(dx, num) < TOL


def _loss_check(fn, x, y):
    _, g = fn(x, y)
    num = numerical_gradient(lambda: fn(x, y)[0], x)
    assert relative_error(g, num) < TOL


def test_loss_gradients(rng):
    for n, c, _ in shapes(rng):
        c += 1
        p = rng.uniform(0.05, 0.95, (n, c))
        y01 = (rng.random((n, c)) < 0.5).astype(float)
        _loss_check(binary_crossentropy, p, y01)
        _loss_check(sigmoid_binary_crossentropy, 3 * rng.standard_normal((n, c)), y01)
        onehot = np.eye(c)[rng.integers(0, c, n)]
        _loss_check(categorical_crossentropy, p / p.sum(1, keepdims=True), onehot)
        _loss_check(softmax_crossentropy, 2 * rng.standard_normal((n, c)), onehot)
        d = rng.uniform(0.1, 2.5, (n, 2)) * np.where(rng.random((n, 2)) < 0.5, -1, 1)
        d = np.where(np.abs(np.abs(d) - 1) < 0.05, d * 1.2, d)
        t_star = rng.standard_normal((n, 2))
        _loss_check(smooth_l1, t_star + d, t_star)


def test_loss_values():
    assert binary_crossentropy(np.array([0.5]), np.array([1.0]))[0] == pytest.approx(np.log(2))
    assert smooth_l1(np.array([0.5, 3.0]), np.zeros(2))[0] == pytest.approx(0.125 + 2.5)
    loss, _ = softmax_crossentropy(np.zeros((1, 4)), np.eye(4)[:1])
    assert loss == pytest.approx(np.log(4))
    big = sigmoid_binary_crossentropy(np.array([800.0, -800.0]), np.array([0.0, 1.0]))[0]
    assert np.isfinite(big) and big == pytest.approx(800.0)


def adam_oracle(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_adam_matches_recurrence(rng):
    p0 = rng.standard_normal(5)
    gs = [rng.standard_normal(5) for _ in range(7)]
    p = {"w": p0.copy()}
    st = AdamState(lr=1e-2)
    for g in gs:
        adam_step(p, {"w": g}, st)
    np.testing.assert_allclose(p["w"], adam_oracle(p0, gs, 1e-2), rtol=1e-12)
    assert st.step == 7
    assert AdamState().lr == 1e-5


def test_adam_first_step_is_signed_lr():
    p = {"w": np.zeros(3)}
    adam_step(p, {"w": np.array([2.0, -0.5, 1e-3])}, AdamState(lr=0.1))
    np.testing.assert_allclose(p["w"], [-0.1, 0.1, -0.1], rtol=1e-4)


def test_adam_subset_and_shape_check():
    p = {"a": np.ones(2), "b": np.ones(2)}
    adam_step(p, {"a": np.ones(2), "b": np.ones(2)}, AdamState(lr=0.5), names=["a"])
    assert np.all(p["b"] == 1) and np.all(p["a"] < 1)
    with pytest.raises(ConfigurationError):
        adam_step({"a": np.ones(2)}, {"a": np.ones(3)}, AdamState())


def test_layer_errors(rng):
    with pytest.raises(StateError):
        Conv1d(1, 1, 3, rng).backward(np.zeros((1, 1, 4)))
    with pytest.raises(InputError):
        MaxPool1d().forward(np.zeros((1, 1, 5)))
    with pytest.raises(ConfigurationError):
        Conv1d(1, 1, 4, rng)
    with pytest.raises(ConfigurationError):
        Conv1d(2, 1, 3, rng).forward(np.zeros((1, 3, 4)))


def test_conv_same_padding_oracle(rng):
    layer = Conv1d(2, 3, 5, rng, dtype=F64)
    x = rng.standard_normal((1, 2, 11))
    out = layer.forward(x)
    w, b = layer.params["W"], layer.params["b"]
    xp = np.pad(x[0], ((0, 0), (2, 2)))
    ref = np.array([[np.sum(w[o] * xp[:, i : i + 5]) + b[o] for i in range(11)] for o in range(3)])
    np.testing.assert_allclose(out[0], ref, atol=1e-12)


def test_batchnorm_running_stats(rng):
    bn = BatchNorm1d(2, momentum=0.5, dtype=F64)
    x = rng.standard_normal((4, 2, 8)) * 3 + 1
    bn.forward(x, train=True)
    np.testing.assert_allclose(bn.running_mean, 0.5 * x.mean(axis=(0, 2)))
    np.testing.assert_allclose(bn.running_var, 0.5 + 0.5 * x.var(axis=(0, 2)))


def test_parameter_table_and_checkpoint(tmp_path, rng):
    net = Sequential([Conv1d(1, 2, 3, rng), BatchNorm1d(2), Linear(4, 3, rng)], ["conv", "bn", "fc"])
    table = ParameterTable(net.named_layers("net."))
    assert table.names() == ["net.conv.W", "net.conv.b", "net.bn.gamma", "net.bn.beta", "net.fc.W", "net.fc.b"]
    net.layers[1].running_mean[:] = [1.5, -2.0]
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, table.state_dict(), {"kind": "test", "n": 3})
    tensors, meta = load_checkpoint(path)
    assert meta == {"kind": "test", "n": 3}
    net2 = Sequential([Conv1d(1, 2, 3, np.random.default_rng(99)), BatchNorm1d(2), Linear(4, 3, np.random.default_rng(98))], ["conv", "bn", "fc"])
    t2 = ParameterTable(net2.named_layers("net."))
    t2.load_state_dict(tensors)
    for k, v in table.state_dict().items():
        np.testing.assert_array_equal(t2.state_dict()[k], v)
    with pytest.raises(KeyError):
        t2.load_state_dict({})
    save_checkpoint(tmp_path / "m2.ckpt", table.state_dict(), {"kind": "test", "n": 3})
    assert (tmp_path / "m2.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(InputError):
        load_checkpoint(bad)
