"""Small classifiers over flat parameter vectors.

Two model kinds are supported: multinomial logistic (softmax) regression and
a one-hidden-layer ReLU network. Both use mean cross-entropy over the batch
and analytic gradients.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from robustfed.errors import StructuralError, UsageError

MODEL_KINDS = ("softmax_regression", "mlp_1hidden")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "softmax_regression"
    input_dim: int = 64
    num_classes: int = 10
    hidden_dim: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    local_epochs: int = 1
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise UsageError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        for name in ("input_dim", "num_classes", "hidden_dim", "local_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise UsageError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError("momentum must lie in [0, 1)")


def layout(spec: ModelSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """Ordered (name, shape) pairs describing how the flat vector is laid out."""
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind == "softmax_regression":
        return [("W", (c, d)), ("b", (c,))]
    return [("W1", (h, d)), ("b1", (h,)), ("W2", (c, h)), ("b2", (c,))]


def num_params(spec: ModelSpec) -> int:
    return sum(int(np.prod(shape)) for _, shape in layout(spec))


def unflatten(w: np.ndarray, spec: ModelSpec) -> Dict[str, np.ndarray]:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (num_params(spec),):
        raise StructuralError(f"weight vector has {w.size} entries, {spec.kind} layout needs {num_params(spec)}")
    out, i = {}, 0
    for name, shape in layout(spec):
        n = int(np.prod(shape))
        out[name] = w[i : i + n].reshape(shape)
        i += n
    return out


def flatten(params: Dict[str, np.ndarray], spec: ModelSpec) -> np.ndarray:
    return np.concatenate([np.asarray(params[name], dtype=np.float64).reshape(-1) for name, _ in layout(spec)])


def init_weights(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Zeros for softmax regression; Glorot-uniform weights and zero biases for the MLP."""
    if spec.kind == "softmax_regression":
        return np.zeros(num_params(spec))
    d, h, c = spec.input_dim, spec.hidden_dim, spec.num_classes
    s1, s2 = np.sqrt(6.0 / (d + h)), np.sqrt(6.0 / (h + c))
    params = {
        "W1": rng.uniform(-s1, s1, size=(h, d)),
        "b1": np.zeros(h),
        "W2": rng.uniform(-s2, s2, size=(c, h)),
        "b2": np.zeros(c),
    }
    return flatten(params, spec)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def logits(w: np.ndarray, x: np.ndarray, spec: ModelSpec) -> np.ndarray:
    p = unflatten(w, spec)
    if spec.kind == "softmax_regression":
        return x @ p["W"].T + p["b"]
    hidden = np.maximum(x @ p["W1"].T + p["b1"], 0.0)
    return hidden @ p["W2"].T + p["b2"]


def loss(w: np.ndarray, x: np.ndarray, y: np.ndarray, spec: ModelSpec) -> float:
    logp = _log_softmax(logits(w, x, spec))
    return float(-logp[np.arange(len(y)), y].mean())


def loss_and_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray, spec: ModelSpec) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the flat weights."""
    p = unflatten(w, spec)
    m = x.shape[0]
    if spec.kind == "softmax_regression":
        z = x @ p["W"].T + p["b"]
    else:
        pre = x @ p["W1"].T + p["b1"]
        hidden = np.maximum(pre, 0.0)
        z = hidden @ p["W2"].T + p["b2"]
    logp = _log_softmax(z)
    value = float(-logp[np.arange(m), y].mean())
    dz = np.exp(logp)
    dz[np.arange(m), y] -= 1.0
    dz /= m
    if spec.kind == "softmax_regression":
        grads = {"W": dz.T @ x, "b": dz.sum(axis=0)}
    else:
        dh = (dz @ p["W2"]) * (pre > 0)
        grads = {"W1": dh.T @ x, "b1": dh.sum(axis=0), "W2": dz.T @ hidden, "b2": dz.sum(axis=0)}
    return value, flatten(grads, spec)
