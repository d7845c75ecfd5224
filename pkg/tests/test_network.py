import numpy as np
import pytest

from formgate import (
    Dataset,
    FormulaStructure,
    NetworkSpec,
    TaskNetwork,
    init_layer,
    layer_forward,
    train_network,
)
from formgate.network import layer_backward
from formgate.rng import substream


def naive_layer_forward(layer, Z):
    """Per-neuron, per-term loop evaluation."""
    B = Z.shape[0]
    out = np.zeros((B, layer.out_dim))
    for b in range(B):
        z = Z[b]
        for o in range(layer.out_dim):
            acc = layer.bias[o]
            for k, W in layer.W_poly.items():
                acc += sum(W[o, j] * z[j] ** k for j in range(layer.in_dim))
            for m, A in layer.A_factors.items():
                for r in range(A.shape[0]):
                    prod = 1.0
                    for jj in range(m):
                        prod *= float(A[r, jj] @ z)
                    acc += layer.W_inter[m][o, r] * prod
            if layer.W_sin is not None:
                acc += float(layer.W_sin[o] @ np.sin(z))
            out[b, o] = acc
    if layer.activation == "relu":
        out = np.maximum(out, 0.0)
    elif layer.activation == "sigmoid":
        out = 1.0 / (1.0 + np.exp(-out))
    return out


def test_p1_only_allocation():
    layer = init_layer(4, 3, FormulaStructure((1,), (), False), seed=0)
    assert set(layer.W_poly) == {1}
    assert layer.W_poly[1].shape == (3, 4)
    assert not layer.A_factors and not layer.W_inter and layer.W_sin is None
    assert layer.n_params() == 12 + 3


def test_mixed_structure_parameter_count():
    # {P1, P2, I2, sin}, in=10, out=8, R2=8 -> 80+80+(160+64)+80+8 = 472
    layer = init_layer(10, 8, FormulaStructure((1, 2), (2,), True), seed=1, r2=8)
    assert layer.n_params() == 472


def test_zero_weights_relu_gives_zero():
    layer = init_layer(5, 4, FormulaStructure((1, 3), (2,), True), seed=2,
                       activation="relu")
    for p in layer.params():
        p[...] = 0.0
    out, _ = layer_forward(layer, substream(3, "z").normal(size=(6, 5)))
    assert np.all(out == 0.0)


def test_coordinate_product_unit():
    # structure={I2}, R2=1, W_inter=[[1]], a11=e1, a12=e2, identity -> z0*z1
    layer = init_layer(4, 1, FormulaStructure((), (2,), False), seed=3, r2=1)
    layer.A_factors[2][0, 0] = [1, 0, 0, 0]
    layer.A_factors[2][0, 1] = [0, 1, 0, 0]
    layer.W_inter[2][:] = 1.0
    layer.bias[:] = 0.0
    out, _ = layer_forward(layer, np.array([[2.0, 3.0, 9.0, -1.0]]))
    assert out[0, 0] == pytest.approx(6.0, abs=0)


def test_layer_matches_naive_evaluator():
    rng = substream(4, "naive")
    for structure in [
        FormulaStructure((1, 2), (2, 3), True),
        FormulaStructure((3,), (), False),
        FormulaStructure((), (4,), False),
    ]:
        layer = init_layer(5, 3, structure, seed=7, r2=2, activation="relu")
        # bump the tiny weights so the comparison exercises real magnitudes
        for p in layer.params():
            p += rng.normal(0, 0.3, size=p.shape)
        Z = rng.normal(size=(4, 5))
        fast, _ = layer_forward(layer, Z)
        np.testing.assert_allclose(fast, naive_layer_forward(layer, Z), atol=1e-10)


def test_near_linear_at_init():
    rng = substream(5, "lin")
    for structure in [
        FormulaStructure((1, 2, 4), (2, 3), True),
        FormulaStructure((1,), (2,), False),
        FormulaStructure((1, 5), (), True),
    ]:
        layer = init_layer(10, 8, structure, seed=11, r2=8)
        Z = rng.normal(size=(1000, 10))
        out, _ = layer_forward(layer, Z)
        lin = Z @ layer.W_poly[1].T + layer.bias if 1 in layer.W_poly else layer.bias
        dev = np.sqrt(np.mean((out - lin) ** 2))
        z_scale = np.sqrt(np.mean(Z ** 2))
        assert dev <= 1e-2 * z_scale


@pytest.mark.parametrize(
    "structure",
    [
        FormulaStructure((1, 2), (), False),   # P-only
        FormulaStructure((), (2, 3), False),   # I-only
        FormulaStructure((), (), True),        # sin-only
        FormulaStructure((1, 3), (2,), True),  # mixed
    ],
)
@pytest.mark.parametrize("activation", ["identity", "relu", "sigmoid"])
def test_layer_gradients_match_finite_differences(structure, activation):
    rng = substream(6, "lgrad")
    layer = init_layer(4, 3, structure, seed=13, r2=2, activation=activation)
    for p in layer.params():
        p += rng.normal(0, 0.2, size=p.shape)
    Z = rng.normal(size=(5, 4))
    d_out = rng.normal(size=(5, 3))

    out, cache = layer_forward(layer, Z, want_cache=True)
    grads, dZ = layer_backward(layer, cache, d_out)

    def objective():
        o, _ = layer_forward(layer, Z)
        return float(np.sum(o * d_out))

    eps = 1e-6
    worst = 0.0
    for p, g in zip(layer.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = objective()
            flat[i] = orig - eps
            lo = objective()
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            worst = max(worst, abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), 1e-8))
    # input gradient too
    for b in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            orig = Z[b, j]
            Z[b, j] = orig + eps
            hi = objective()
            Z[b, j] = orig - eps
            lo = objective()
            Z[b, j] = orig
            num = (hi - lo) / (2 * eps)
            worst = max(worst, abs(num - dZ[b, j]) / max(abs(num), abs(dZ[b, j]), 1e-8))
    assert worst < 1e-4


def test_flop_accounting_hand_count():
    spec = NetworkSpec(
        layer_widths=(8, 16, 1), structure=FormulaStructure((1,), (), False),
        task="regression", seed=0,
    )
    net = TaskNetwork(spec)
    assert net.flops_per_sample() == 2 * (8 * 16 + 16 * 1) + 16


def test_param_count_matches_allocation():
    spec = NetworkSpec(
        layer_widths=(6, 5, 1), structure=FormulaStructure((1, 2), (2,), True),
        task="regression", seed=0, r2=3,
    )
    net = TaskNetwork(spec)
    expected = 0
    for in_dim, out_dim in ((6, 5), (5, 1)):
        expected += 2 * out_dim * in_dim          # P1, P2
        expected += 3 * 2 * in_dim + out_dim * 3  # I2 factors + mixing
        expected += out_dim * in_dim              # sin
        expected += out_dim                       # bias
    assert net.n_params() == expected


def linear_dataset(n=400, d=6, seed=0):
    rng = substream(seed, "lin-data")
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = X @ w
    ds = Dataset(X, y)
    from formgate import split_and_standardize

    return split_and_standardize(ds, (0.8, 0.1, 0.1), seed=1)


def test_linear_structure_fits_linear_data():
    train, val, test = linear_dataset()
    spec = NetworkSpec(
        layer_widths=(train.d, 1), structure=FormulaStructure((1,), (), False),
        task="regression", epochs=300, learning_rate=1e-2, batch_size=64, seed=3,
        patience_steps=50,
    )
    _, report = train_network(spec, train, val, test)
    assert report.metric_name == "mse"
    assert report.metric_value < 1e-3


def test_training_is_reproducible():
    train, val, test = linear_dataset()
    spec = NetworkSpec(
        layer_widths=(train.d, 4, 1), structure=FormulaStructure((1, 2), (), False),
        task="regression", epochs=8, seed=42,
    )
    _, r1 = train_network(spec, train, val, test)
    _, r2 = train_network(spec, train, val, test)
    assert r1.metric_value == r2.metric_value


def test_binary_classification_head():
    rng = substream(9, "cls")
    X = rng.normal(size=(400, 4))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    ds = Dataset(X, y, task="binary")
    from formgate import split_and_standardize

    train, val, test = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=2)
    spec = NetworkSpec(
        layer_widths=(4, 8, 1), structure=FormulaStructure((1,), (), False),
        task="binary", epochs=150, learning_rate=3e-3, seed=5,
    )
    _, report = train_network(spec, train, val, test)
    assert report.metric_name == "accuracy"
    assert report.metric_value > 0.85
    assert 0.0 <= report.extra_metrics["f1"] <= 1.0
    assert report.spec.optimizer_kind == "adam"
    assert report.spec.activation_kind == "sigmoid"


def test_multiclass_head():
    rng = substream(10, "mc")
    X = rng.normal(size=(600, 3))
    y = np.argmax(X, axis=1)
    ds = Dataset(X, y, task="multiclass")
    from formgate import split_and_standardize

    train, val, test = split_and_standardize(ds, (0.8, 0.1, 0.1), seed=3)
    spec = NetworkSpec(
        layer_widths=(3, 12, 3), structure=FormulaStructure((1,), (), False),
        task="multiclass", n_classes=3, epochs=80, seed=6,
    )
    _, report = train_network(spec, train, val, test)
    assert report.metric_value > 0.8


def test_head_width_validation():
    with pytest.raises(ValueError):
        NetworkSpec(layer_widths=(4, 2), structure=FormulaStructure((1,), (), False),
                    task="regression")
    with pytest.raises(ValueError):
        NetworkSpec(layer_widths=(4, 3), structure=FormulaStructure((1,), (), False),
                    task="multiclass", n_classes=4)
