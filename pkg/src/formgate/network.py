"""Networks built from a discovered formula structure.

Each layer applies the discovered aggregation formula with fresh trainable
weights: per active polynomial order k a full (out x in) weight matrix on
z**k, per active interaction order m a bank of shared factor vectors
producing an R2-vector of rank-component products mixed per output unit,
an optional sine matrix, and a bias. Hierarchical initialization keeps the
layer near-linear at the start: only the k=1 matrix starts at full scale,
every higher-order mixing weight starts at 1e-3.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DimensionMismatchError, NumericalDivergenceError
from .gates import _sigmoid
from .grad import _leave_one_out, _softplus
from .optim import make_optimizer
from .rng import spawn_seed, substream
from .structure import FormulaStructure

SMALL_INIT_STD = 1e-3


@dataclass
class TaskNeuronLayer:
    in_dim: int
    out_dim: int
    structure: FormulaStructure
    W_poly: dict[int, np.ndarray]        # k -> (out, in)
    A_factors: dict[int, np.ndarray]     # m -> (r2, m, in), shared across outputs
    W_inter: dict[int, np.ndarray]       # m -> (out, r2)
    W_sin: np.ndarray | None             # (out, in)
    bias: np.ndarray                     # (out,)
    r2: int = 8
    activation: str = "identity"         # relu | sigmoid | identity

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = [self.W_poly[k] for k in sorted(self.W_poly)]
        for m in sorted(self.A_factors):
            out.append(self.A_factors[m])
            out.append(self.W_inter[m])
        if self.W_sin is not None:
            out.append(self.W_sin)
        out.append(self.bias)
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def flops_per_sample(self) -> int:
        """Forward cost under the fixed convention: multiply-add = 2, x**k =
        k-1 multiplies, sin = 15, non-identity activation = 1 per element."""
        cost = 0
        for k in self.W_poly:
            cost += (k - 1) * self.in_dim + 2 * self.out_dim * self.in_dim
        for m in self.A_factors:
            cost += 2 * m * self.r2 * self.in_dim    # factor inner products
            cost += self.r2 * (m - 1)                # rank-component products
            cost += 2 * self.out_dim * self.r2       # mixing
        if self.W_sin is not None:
            cost += 15 * self.in_dim + 2 * self.out_dim * self.in_dim
        if self.activation != "identity":
            cost += self.out_dim
        return cost


def init_layer(
    in_dim: int,
    out_dim: int,
    structure: FormulaStructure,
    seed: int,
    r2: int = 8,
    activation: str = "identity",
) -> TaskNeuronLayer:
    """Allocate a layer for the active terms only.

    Linear weights (k=1) start at N(0, 2/in_dim); every higher-order,
    interaction-mixing, and sine weight starts at N(0, 1e-3^2); interaction
    factor vectors start at N(0, 1/in_dim) so their products carry usable
    gradient while the tiny mixing weights keep the layer near-linear.
    """
    from .model import poly_feature_scale

    rng = substream(seed, "layer-init")
    W_poly = {}
    for k in structure.active_poly_orders:
        # higher-order inits are divided by the z^k feature scale so the
        # near-linear start holds for every structure, order 5 included
        std = np.sqrt(2.0 / in_dim) if k == 1 else SMALL_INIT_STD / poly_feature_scale(k)
        W_poly[k] = rng.normal(0.0, std, size=(out_dim, in_dim))
    A_factors, W_inter = {}, {}
    for m in structure.active_interaction_orders:
        A_factors[m] = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(r2, m, in_dim))
        W_inter[m] = rng.normal(0.0, SMALL_INIT_STD, size=(out_dim, r2))
    W_sin = rng.normal(0.0, SMALL_INIT_STD, size=(out_dim, in_dim)) if structure.sin_active else None
    return TaskNeuronLayer(
        in_dim, out_dim, structure, W_poly, A_factors, W_inter, W_sin,
        bias=np.zeros(out_dim), r2=r2, activation=activation,
    )


@dataclass
class _LayerCache:
    Z: np.ndarray
    powers: dict[int, np.ndarray]
    inner: dict[int, np.ndarray]
    H: dict[int, np.ndarray]
    sin_z: np.ndarray | None
    pre: np.ndarray


def layer_forward(
    layer: TaskNeuronLayer, Z: np.ndarray, want_cache: bool = False
) -> tuple[np.ndarray, _LayerCache | None]:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != layer.in_dim:
        raise DimensionMismatchError(
            "layer input", f"expected width {layer.in_dim}, got {Z.shape[1]}"
        )
    max_k = max(layer.W_poly, default=1)
    pows = [Z]
    for _ in range(max_k - 1):
        pows.append(pows[-1] * Z)
    powers = {k: pows[k - 1] for k in layer.W_poly}

    pre = np.broadcast_to(layer.bias, (Z.shape[0], layer.out_dim)).copy()
    for k, W in layer.W_poly.items():
        pre += powers[k] @ W.T
    inner, H = {}, {}
    for m, A in layer.A_factors.items():
        p = np.einsum("bd,rjd->brj", Z, A)
        h = p.prod(axis=2)
        inner[m], H[m] = p, h
        pre += h @ layer.W_inter[m].T
    sin_z = None
    if layer.W_sin is not None:
        sin_z = np.sin(Z)
        pre += sin_z @ layer.W_sin.T

    out = _activate(pre, layer.activation)
    cache = _LayerCache(Z, powers, inner, H, sin_z, pre) if want_cache else None
    return out, cache


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return pre
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "sigmoid":
        return _sigmoid(pre)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_backward(d_out: np.ndarray, pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return d_out
    if kind == "relu":
        return d_out * (pre > 0.0)
    s = _sigmoid(pre)
    return d_out * s * (1.0 - s)


def layer_backward(
    layer: TaskNeuronLayer, cache: _LayerCache, d_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients for every layer parameter (ordered as ``layer.params()``)
    plus the gradient with respect to the layer input."""
    d_pre = _activation_backward(d_out, cache.pre, layer.activation)
    Z = cache.Z
    dZ = np.zeros_like(Z)

    d_poly = {}
    for k, W in layer.W_poly.items():
        d_poly[k] = d_pre.T @ cache.powers[k]
        zkm1 = np.ones_like(Z) if k == 1 else cache.powers.get(k - 1, Z ** (k - 1))
        dZ += (d_pre @ W) * (k * zkm1)

    d_A, d_inter = {}, {}
    for m, A in layer.A_factors.items():
        d_inter[m] = d_pre.T @ cache.H[m]
        dH = d_pre @ layer.W_inter[m]               # (B, r2)
        dP = _leave_one_out(cache.inner[m]) * dH[:, :, None]
        d_A[m] = np.einsum("brj,bd->rjd", dP, Z)
        dZ += np.einsum("brj,rjd->bd", dP, A)

    d_sin = None
    if layer.W_sin is not None:
        d_sin = d_pre.T @ cache.sin_z
        dZ += (d_pre @ layer.W_sin) * np.cos(Z)

    grads: list[np.ndarray] = [d_poly[k] for k in sorted(layer.W_poly)]
    for m in sorted(layer.A_factors):
        grads.append(d_A[m])
        grads.append(d_inter[m])
    if d_sin is not None:
        grads.append(d_sin)
    grads.append(d_pre.sum(axis=0))
    return grads, dZ


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and training recipe for a stage-2 network.

    ``layer_widths`` includes the input width, e.g. (d, 16, 1). The default
    optimizer and hidden activation follow the task: RMSProp + ReLU for
    regression, Adam + Sigmoid for classification. The final layer is
    always identity (the loss head applies MSE, sigmoid cross-entropy, or
    softmax cross-entropy).
    """

    layer_widths: tuple[int, ...]
    structure: FormulaStructure
    task: str = "regression"             # regression | binary | multiclass
    n_classes: int | None = None
    optimizer: str | None = None
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    r2: int = 8
    hidden_activation: str | None = None
    patience_steps: int | None = None

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        head = self.layer_widths[-1]
        if self.task in ("regression", "binary") and head != 1:
            raise ValueError(f"{self.task} head must have width 1, got {head}")
        if self.task == "multiclass":
            if self.n_classes is None or head != self.n_classes:
                raise ValueError("multiclass head width must equal n_classes")

    @property
    def optimizer_kind(self) -> str:
        if self.optimizer is not None:
            return self.optimizer
        return "rmsprop" if self.task == "regression" else "adam"

    @property
    def activation_kind(self) -> str:
        if self.hidden_activation is not None:
            return self.hidden_activation
        return "relu" if self.task == "regression" else "sigmoid"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_widths"] = list(self.layer_widths)
        d["structure"] = self.structure.to_dict()
        return d


class TaskNetwork:
    """A stack of formula layers; hidden layers activated, final identity."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        widths = spec.layer_widths
        self.layers = []
        for i in range(len(widths) - 1):
            act = spec.activation_kind if i < len(widths) - 2 else "identity"
            self.layers.append(
                init_layer(
                    widths[i], widths[i + 1], spec.structure,
                    seed=spawn_seed(spec.seed, f"layer{i}"), r2=spec.r2, activation=act,
                )
            )

    def forward(self, Z: np.ndarray, want_cache: bool = False):
        caches = []
        out = Z
        for layer in self.layers:
            out, cache = layer_forward(layer, out, want_cache)
            caches.append(cache)
        return out, caches

    def backward(self, caches, d_out: np.ndarray) -> list[list[np.ndarray]]:
        grads_per_layer: list[list[np.ndarray]] = [None] * len(self.layers)  # type: ignore
        for i in range(len(self.layers) - 1, -1, -1):
            grads, d_out = layer_backward(self.layers[i], caches[i], d_out)
            grads_per_layer[i] = grads
        return grads_per_layer

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def flops_per_sample(self) -> int:
        return sum(layer.flops_per_sample() for layer in self.layers)

    def predict(self, Z: np.ndarray) -> np.ndarray:
        out, _ = self.forward(Z)
        return out


def _head_loss_and_grad(out: np.ndarray, y: np.ndarray, task: str) -> tuple[float, np.ndarray]:
    n = out.shape[0]
    if task == "regression":
        resid = out[:, 0] - y
        d = np.zeros_like(out)
        d[:, 0] = 2.0 * resid / n
        return float(np.mean(resid * resid)), d
    if task == "binary":
        f = out[:, 0]
        loss = float(np.mean(_softplus(f) - y * f))
        d = np.zeros_like(out)
        d[:, 0] = (_sigmoid(f) - y) / n
        return loss, d
    # multiclass softmax cross-entropy
    shifted = out - out.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    idx = np.arange(n)
    loss = float(np.mean(logz - shifted[idx, y.astype(int)]))
    soft = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    soft[idx, y.astype(int)] -= 1.0
    return loss, soft / n


def _mean_loss(net: TaskNetwork, X: np.ndarray, y: np.ndarray) -> float:
    out, _ = net.forward(X)
    loss, _ = _head_loss_and_grad(out, y, net.spec.task)
    return loss


def _f1_scores(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    scores = []
    for c in range(n_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class EvalReport:
    spec: NetworkSpec
    metric_name: str
    metric_value: float
    extra_metrics: dict[str, float]
    params: int
    flops_per_sample: int
    epochs_run: int
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "metric_name": self.metric_name,
            "metric_value": self.metric_value,
            "extra_metrics": self.extra_metrics,
            "params": self.params,
            "flops_per_sample": self.flops_per_sample,
            "epochs_run": self.epochs_run,
            "wall_time_s": self.wall_time_s,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def train_network(
    spec: NetworkSpec, train: Dataset, val: Dataset | None, test: Dataset
) -> tuple[TaskNetwork, EvalReport]:
    """Train per the spec's recipe and evaluate on the test split.

    With ``patience_steps`` set and a non-empty validation split, training
    stops once the validation loss has not improved for that many steps and
    the best-validation parameters are restored. Deterministic under the
    spec seed.
    """
    t0 = time.perf_counter()
    net = TaskNetwork(spec)
    if train.d != spec.layer_widths[0]:
        raise DimensionMismatchError(
            "network input", f"data width {train.d} != spec width {spec.layer_widths[0]}"
        )
    y_train = train.y.astype(np.float64)
    opt = make_optimizer(spec.optimizer_kind, [{"params": net.params(), "lr": spec.learning_rate}])
    shuffle_rng = substream(spec.seed, "net-batches")
    steps_per_epoch = max(1, int(np.ceil(train.n / spec.batch_size)))

    use_patience = spec.patience_steps is not None and val is not None and val.n > 0
    best_val = np.inf
    since_best = 0
    best_params: list[np.ndarray] | None = None

    step = 0
    epochs_run = 0
    stop = False
    for epoch in range(spec.epochs):
        order = shuffle_rng.permutation(train.n)
        for s in range(steps_per_epoch):
            idx = order[s * spec.batch_size : (s + 1) * spec.batch_size]
            out, caches = net.forward(train.X[idx], want_cache=True)
            loss, d_out = _head_loss_and_grad(out, y_train[idx], spec.task)
            if not np.isfinite(loss):
                raise NumericalDivergenceError(step, "loss", "stage-2 training")
            grads = net.backward(caches, d_out)
            opt.step([[g for layer in grads for g in layer]])
            step += 1
            if use_patience:
                v = _mean_loss(net, val.X, val.y.astype(np.float64))
                if v < best_val - 1e-12:
                    best_val = v
                    since_best = 0
                    best_params = [p.copy() for p in net.params()]
                else:
                    since_best += 1
                    if since_best >= spec.patience_steps:
                        stop = True
                        break
        epochs_run = epoch + 1
        if stop:
            break
    if best_params is not None:
        for p, b in zip(net.params(), best_params):
            p[...] = b

    out, _ = net.forward(test.X)
    extra: dict[str, float] = {}
    if spec.task == "regression":
        mse = float(np.mean((out[:, 0] - test.y) ** 2))
        metric_name, metric_value = "mse", mse
    else:
        if spec.task == "binary":
            pred = (out[:, 0] > 0.0).astype(int)
            n_classes = 2
        else:
            pred = out.argmax(axis=1)
            n_classes = spec.n_classes or int(test.y.max()) + 1
        acc = float(np.mean(pred == test.y))
        metric_name, metric_value = "accuracy", acc
        extra["f1"] = _f1_scores(test.y.astype(int), pred, n_classes)

    report = EvalReport(
        spec=spec,
        metric_name=metric_name,
        metric_value=metric_value,
        extra_metrics=extra,
        params=net.n_params(),
        flops_per_sample=net.flops_per_sample(),
        epochs_run=epochs_run,
        wall_time_s=time.perf_counter() - t0,
    )
    return net, report


def network_to_dict(net: TaskNetwork) -> dict:
    layers = []
    for layer in net.layers:
        layers.append(
            {
                "W_poly": {str(k): W.tolist() for k, W in layer.W_poly.items()},
                "A_factors": {str(m): A.tolist() for m, A in layer.A_factors.items()},
                "W_inter": {str(m): W.tolist() for m, W in layer.W_inter.items()},
                "W_sin": None if layer.W_sin is None else layer.W_sin.tolist(),
                "bias": layer.bias.tolist(),
            }
        )
    return {"spec": net.spec.to_dict(), "layers": layers}


def save_network(net: TaskNetwork, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net)))
