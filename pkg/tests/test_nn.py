"""Layers against loop oracles, gradients against finite differences, training and checkpoints."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kiip.errors import DivergedLoss, EmptyClass, EmptyTrainingSet, FormatError, ShapeMismatch
from kiip.nn import (
    FG,
    FG_OL,
    OL_E2E,
    ClassifierModel,
    Conv3D,
    Dense,
    LabeledGrid,
    TrainConfig,
    cross_entropy,
    fg_nearest_neighbor,
    forward,
    load_model,
    nearest_label,
    predict,
    save_model,
    softmax,
    train,
)
from kiip.nn.checkpoint import from_bytes, to_bytes
from kiip.nn.models import Network, build_fg, build_ol_e2e

# --- oracles ---


def conv_oracle(x, w, b, stride):
    n, c, d, h, wd = x.shape
    f, _, k, _, _ = w.shape
    od, oh, ow = ((s - k) // stride + 1 for s in (d, h, wd))
    out = np.zeros((n, f, od, oh, ow))
    for i in range(n):
        for o in range(f):
            for z in range(od):
                for y in range(oh):
                    for q in range(ow):
                        patch = x[i, :, z * stride : z * stride + k, y * stride : y * stride + k, q * stride : q * stride + k]
                        out[i, o, z, y, q] = np.sum(patch * w[o]) + b[o]
    return out


def softmax_oracle(v):
    e = [np.exp(t - max(v)) for t in v]
    return np.array(e) / sum(e)


# --- conv / dense forward ---


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loop_oracle(stride):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 7, 8, 6))
    layer = Conv3D(rng.normal(size=(4, 3, 3, 3, 3)), rng.normal(size=4), stride, relu=False)
    out, _ = layer.forward(x)
    np.testing.assert_allclose(out, conv_oracle(x, layer.weight, layer.bias, stride), rtol=0, atol=1e-12)


def test_conv_relu_clamps_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 6, 6, 6))
    layer = Conv3D(rng.normal(size=(3, 2, 5, 5, 5)), rng.normal(size=3), 2, relu=True)
    out, _ = layer.forward(x)
    np.testing.assert_allclose(out, np.maximum(conv_oracle(x, layer.weight, layer.bias, 2), 0), atol=1e-12)


def test_conv_zero_weights_give_bias():
    x = np.random.default_rng(2).normal(size=(1, 1, 30, 30, 30))
    layer = Conv3D(np.zeros((2, 1, 5, 5, 5)), np.array([0.5, -0.5]), 2)
    out, _ = layer.forward(x)
    assert out.shape == (1, 2, 13, 13, 13)
    assert np.all(out[0, 0] == 0.5) and np.all(out[0, 1] == 0.0)


def test_conv_identity_kernel():
    x = np.random.default_rng(3).normal(size=(2, 1, 5, 5, 5))
    out, _ = Conv3D(np.ones((1, 1, 1, 1, 1)), np.zeros(1), 1, relu=False).forward(x)
    np.testing.assert_array_equal(out, x)


def test_conv_shape_errors():
    layer = Conv3D(np.zeros((2, 3, 3, 3, 3)), np.zeros(2))
    with pytest.raises(ShapeMismatch):
        layer.forward(np.zeros((1, 1, 5, 5, 5)))
    with pytest.raises(ShapeMismatch):
        layer.forward(np.zeros((1, 3, 2, 5, 5)))
    with pytest.raises(ShapeMismatch):
        layer.forward(np.zeros((3, 5, 5, 5)))


def test_dense_matches_loop_oracle():
    rng = np.random.default_rng(4)
    layer = Dense(rng.normal(size=(5, 12)), rng.normal(size=5), relu=False)
    x = rng.normal(size=(3, 2, 6))
    out, _ = layer.forward(x)
    flat = x.reshape(3, 12)
    want = [[sum(layer.weight[o, i] * flat[n, i] for i in range(12)) + layer.bias[o] for o in range(5)] for n in range(3)]
    np.testing.assert_allclose(out, want, atol=1e-12)


# --- softmax / cross-entropy ---


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-100, 100))
def test_softmax_properties(v, shift):
    p = softmax(np.array(v))
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all(p >= 0)
    np.testing.assert_allclose(p, softmax_oracle(v), atol=1e-12)
    np.testing.assert_allclose(softmax(np.array(v) + shift), p, atol=1e-12)


def test_softmax_large_logits_do_not_overflow():
    p = softmax(np.array([1000.0, 1000.0, -1000.0]))
    np.testing.assert_allclose(p, [0.5, 0.5, 0.0])


def test_cross_entropy_value_and_gradient():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(4, 3))
    y = np.array([0, 2, 1, 2])
    loss, grad = cross_entropy(logits, y)
    want = -np.mean([np.log(softmax_oracle(l)[t]) for l, t in zip(logits, y)])
    assert abs(loss - want) <= 1e-12
    h = 1e-6
    for i in range(4):
        for j in range(3):
            e = np.zeros_like(logits)
            e[i, j] = h
            fd = (cross_entropy(logits + e, y)[0] - cross_entropy(logits - e, y)[0]) / (2 * h)
            assert abs(fd - grad[i, j]) <= 1e-8


# --- gradients by central differences ---


def rel_err(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale < 1e-9 else abs(a - b) / scale


def check_network_gradients(net, x, y, probes, seed, tol=1e-4, h=1e-6):
    logits, _, caches = net.forward(x)
    _, dlogits = cross_entropy(logits, y)
    grads = net.backward(caches, dlogits)
    rng = np.random.default_rng(seed)
    worst = {}
    for name, p in net.named_params(trainable_only=True).items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(probes, flat.size), replace=False)
        errs = []
        for k in picks:
            old = flat[k]
            flat[k] = old + h
            lp = cross_entropy(net.forward(x, keep_cache=False)[0], y)[0]
            flat[k] = old - h
            lm = cross_entropy(net.forward(x, keep_cache=False)[0], y)[0]
            flat[k] = old
            errs.append(rel_err((lp - lm) / (2 * h), g[k]))
        worst[name] = max(errs)
    assert all(v <= tol for v in worst.values()), worst
    return worst


def test_small_conv_stack_gradients():
    rng = np.random.default_rng(6)
    net = Network([Conv3D.init(2, 3, 3, 2, rng), Conv3D.init(3, 4, 2, 1, rng), Dense.init(4 * 27, 6, rng), Dense.init(6, 3, rng, relu=False)])
    x = rng.normal(size=(3, 2, 9, 9, 9))
    check_network_gradients(net, x, np.array([0, 1, 2]), probes=100, seed=7)


def test_full_ol_e2e_gradients():
    rng = np.random.default_rng(8)
    net = build_ol_e2e(4, rng)
    x = (rng.random((2, 1, 30, 30, 30)) < 0.3).astype(float)
    check_network_gradients(net, x, np.array([1, 3]), probes=100, seed=9)


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    layer = Conv3D.init(2, 3, 3, 2, rng, relu=False)
    x = rng.normal(size=(1, 2, 7, 7, 7))
    out, cache = layer.forward(x)
    w_out = rng.normal(size=out.shape)
    dx, _ = layer.backward(cache, w_out)
    h = 1e-6
    for idx in rng.integers(0, [1, 2, 7, 7, 7], size=(100, 5)):
        idx = tuple(idx)
        e = np.zeros_like(x)
        e[idx] = h
        fd = (np.sum(layer.forward(x + e)[0] * w_out) - np.sum(layer.forward(x - e)[0] * w_out)) / (2 * h)
        assert rel_err(fd, dx[idx]) <= 1e-4


# --- nearest neighbor ---


def test_nearest_label_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = rng.integers(1, 30)
        feats = rng.normal(size=(n, 8))
        labels = rng.integers(0, 5, n)
        q = rng.normal(size=8)
        best = min(range(n), key=lambda i: sum((feats[i] - q) ** 2))
        assert nearest_label(feats, labels, q) == labels[best]


def test_nearest_label_ties_go_to_lowest_label():
    feats = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert nearest_label(feats, [4, 2, 3], [0.0, 0.0]) == 2
    assert nearest_label(feats[:1], [7], [5.0, 5.0]) == 7
    with pytest.raises(EmptyTrainingSet):
        nearest_label(np.zeros((0, 2)), [], [0.0, 0.0])


def tiny_fg(n_classes=3, seed=0):
    return ClassifierModel(FG, build_fg(n_classes, np.random.default_rng(seed)), [str(i) for i in range(n_classes)])


def test_fg_nearest_neighbor_uses_features():
    fg = tiny_fg()
    rng = np.random.default_rng(12)
    grids = [(rng.random((30, 30, 30)) < 0.2).astype(float) for _ in range(3)]
    pairs = [(forward(fg, g)[1], lab) for g, lab in zip(grids, [2, 0, 1])]
    for g, lab in zip(grids, [2, 0, 1]):
        assert fg_nearest_neighbor(fg, pairs, g) == lab


# --- training ---


def ball(center, r):
    idx = np.indices((30, 30, 30)).transpose(1, 2, 3, 0) + 0.5
    return (np.sum((idx - center) ** 2, axis=-1) <= r * r).astype(float)


def cube(center, r):
    idx = np.indices((30, 30, 30)).transpose(1, 2, 3, 0) + 0.5
    return np.all(np.abs(idx - center) <= r, axis=-1).astype(float)


def cube_sphere_set(rng, n):
    out = []
    for i in range(n):
        c = rng.uniform(12, 18, 3)
        r = rng.uniform(5, 9)
        out.append(LabeledGrid(cube(c, r), 0))
        out.append(LabeledGrid(ball(c, r), 1))
    return out


@pytest.mark.slow
def test_ol_e2e_separates_cubes_from_spheres():
    rng = np.random.default_rng(13)
    data = cube_sphere_set(rng, 10)
    # separability oracle: each cube differs from its sphere in well over 30% of their voxels
    for c, s in zip(data[::2], data[1::2]):
        assert np.sum(c.grid != s.grid) > 0.3 * np.sum((c.grid + s.grid) > 0)
    model, report = train(OL_E2E, data, TrainConfig(epochs=50, rng_seed=1), labels=["cube", "sphere"])
    assert report.loss_curve[-1] < report.loss_curve[0]
    assert report.train_accuracy == 1.0
    assert all(predict(model, d.grid)[0] == d.label for d in data)


def params_of(model):
    return {k: v.copy() for k, v in model.network.named_params().items()}


def small_set(seed=14):
    return cube_sphere_set(np.random.default_rng(seed), 3)


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=2, rng_seed=5)
    a, ra = train(OL_E2E, small_set(), cfg)
    b, rb = train(OL_E2E, small_set(), cfg)
    assert ra.loss_curve == rb.loss_curve
    for k, v in params_of(a).items():
        np.testing.assert_array_equal(v, params_of(b)[k])


def test_zero_epochs_leave_initial_weights():
    data = small_set()
    m0, r0 = train(OL_E2E, data, TrainConfig(epochs=0, rng_seed=3))
    fresh = build_ol_e2e(2, np.random.default_rng(np.random.SeedSequence(3).spawn(2)[0]))
    assert r0.loss_curve == []
    for k, v in fresh.named_params().items():
        np.testing.assert_array_equal(m0.network.named_params()[k], v)


def test_fg_ol_keeps_backbone_frozen():
    fg = tiny_fg(4)
    before = {k: v.copy() for k, v in fg.network.named_params().items()}
    model, report = train(FG_OL, small_set(), TrainConfig(epochs=2), fg=fg)
    after = model.network.named_params()
    for k in ("0.weight", "0.bias", "1.weight", "1.bias", "2.weight", "2.bias"):
        np.testing.assert_array_equal(after[k], before[k])
    assert report.feature_time > 0
    assert model.network.layers[-1].weight.shape == (2, 128)


def test_fg_predict_is_one_hot_nearest_neighbor():
    data = small_set()
    model, report = train(FG, data, TrainConfig(), fg=tiny_fg())
    assert report.train_accuracy == 1.0
    label, probs = predict(model, data[1].grid)
    assert label == data[1].label and probs.tolist() == [0.0, 1.0]


def test_training_errors():
    data = small_set()
    with pytest.raises(EmptyClass):
        train(OL_E2E, [d for d in data if d.label == 0], TrainConfig(epochs=1), labels=["a", "b"])
    with pytest.raises(EmptyTrainingSet):
        train(OL_E2E, [], TrainConfig(epochs=1), labels=["a", "b"])
    with pytest.raises(ValueError):
        train(FG_OL, data, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train("svm", data, TrainConfig(epochs=1))
    with pytest.raises(ShapeMismatch):
        train(OL_E2E, [LabeledGrid(np.zeros((20, 20, 20)), 0)], TrainConfig(epochs=1))
    for bad in ({"learning_rate": 0}, {"epochs": -1}, {"batch_size": 0}, {"optimizer": "rmsprop"}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_divergent_learning_rate_is_reported():
    with pytest.raises(DivergedLoss), np.errstate(all="ignore"):
        train(OL_E2E, small_set(), TrainConfig(epochs=20, learning_rate=1e300, optimizer="sgd"))


# --- checkpoints ---


@pytest.fixture(scope="module")
def trained_models():
    data = small_set()
    fg = tiny_fg(4)
    cfg = TrainConfig(epochs=1)
    return data, {kind: train(kind, data, cfg, labels=["cube", "sphere"], fg=fg)[0] for kind in (FG, FG_OL, OL_E2E)}


@pytest.mark.parametrize("kind", [FG, FG_OL, OL_E2E])
def test_checkpoint_round_trip(tmp_path, trained_models, kind):
    data, models = trained_models
    m = models[kind]
    save_model(m, tmp_path / "m.kiipnn")
    back = load_model(tmp_path / "m.kiipnn")
    assert back.kind == kind and back.labels == ["cube", "sphere"]
    for d in data:
        la, pa = predict(m, d.grid)
        lb, pb = predict(back, d.grid)
        assert la == lb
        np.testing.assert_array_equal(pa, pb)


def test_checkpoint_corruption_is_detected(trained_models):
    raw = to_bytes(trained_models[1][OL_E2E])
    for bad in (raw[:-8], raw + b"\0" * 8, raw[:20], b"X" + raw[1:]):
        with pytest.raises(FormatError) as err:
            from_bytes(bad)
        assert err.value.offset is not None
    # descriptor claims a different layer shape
    n = int.from_bytes(raw[8:16], "little")
    doc = raw[16 : 16 + n].replace(b"[32, 1, 5, 5, 5]", b"[32, 1, 4, 5, 5]")
    with pytest.raises(FormatError):
        from_bytes(raw[:8] + len(doc).to_bytes(8, "little") + doc + raw[16 + n :])
