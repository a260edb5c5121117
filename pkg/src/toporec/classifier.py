"""Fully connected softmax classifier trained with Adam.

The production architecture is five layers (512, 256, 128, 64, n_classes)
with rectifier hidden activations and categorical cross-entropy, trained
for 100 epochs at learning rate 1e-2 dropping to 1e-3 halfway. Everything
is seeded and single-threaded over batches, so a (seed, data, config)
triple reproduces its model bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_HIDDEN = (512, 256, 128, 64)
_MAGIC = b"TMLP"
_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 100
    lr_initial: float = 1e-2
    lr_late: float = 1e-3
    lr_switch_epoch: int = 50  # epochs after this one use lr_late
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.lr_initial <= 0 or self.lr_late <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size <= 0:
            raise ValueError(f"batch size must be positive, got {self.batch_size}")

    def learning_rate(self, epoch: int) -> float:
        """Epoch is 1-based; the first ``lr_switch_epoch`` epochs use the
        initial rate."""
        return self.lr_initial if epoch <= self.lr_switch_epoch else self.lr_late


@dataclass
class MlpModel:
    """Weights, biases, and the class-label table of one classifier."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    class_labels: list[str]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]


def mlp_init(input_dim: int, n_classes: int, seed: int,
             hidden: tuple[int, ...] = DEFAULT_HIDDEN,
             class_labels: list[str] | None = None) -> MlpModel:
    """Seeded scaled-uniform (fan-in) initialization."""
    if input_dim < 1 or n_classes < 1:
        raise ValueError("dimensions must be >= 1")
    if class_labels is None:
        class_labels = [str(i) for i in range(n_classes)]
    if len(class_labels) != n_classes:
        raise ValueError("class label table does not match n_classes")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden, n_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(weights=weights, biases=biases, class_labels=list(class_labels))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_trace(model: MlpModel, x: np.ndarray):
    """Forward pass keeping pre- and post-activation values for backprop."""
    activations = [x]
    pre = []
    h = x
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        activations.append(h)
    return pre, activations


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != model dim {model.input_dim}")
    _, activations = _forward_trace(model, x)
    probs = _softmax(activations[-1])
    return probs[0] if single else probs


def _backward(model: MlpModel, x: np.ndarray, y_idx: np.ndarray):
    """Mean cross-entropy loss and gradients for a batch."""
    n = len(x)
    pre, activations = _forward_trace(model, x)
    probs = _softmax(activations[-1])
    eps = np.finfo(np.float64).tiny
    loss = -np.mean(np.log(probs[np.arange(n), y_idx] + eps))

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    delta = probs.copy()
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    for k in range(len(model.weights) - 1, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k]) * (pre[k - 1] > 0)
    return loss, grad_w, grad_b


def train(model: MlpModel, descriptors: np.ndarray, labels,
          cfg: TrainConfig) -> list[float]:
    """Mini-batch Adam over the dataset; returns the per-epoch loss history.

    ``labels`` may be strings (resolved through the model's class table) or
    integer indices. The model is updated in place.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise DataError("training set is empty or not a 2-D array")
    if x.shape[1] != model.input_dim:
        raise DataError(f"descriptor length {x.shape[1]} != model input "
                        f"{model.input_dim}")
    y_idx = _label_indices(model, labels)
    if len(set(y_idx.tolist())) < 2:
        raise DataError("training set covers a single class")

    rng = np.random.default_rng(cfg.seed)
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = cfg.learning_rate(epoch)
        order = rng.permutation(len(x))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(x), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grad_w, grad_b = _backward(model, x[batch], y_idx[batch])
            epoch_loss += loss
            n_batches += 1
            step += 1
            bc1 = 1.0 - cfg.beta1 ** step
            bc2 = 1.0 - cfg.beta2 ** step
            for k in range(len(model.weights)):
                for params, grads, m, v in (
                        (model.weights, grad_w, m_w, v_w),
                        (model.biases, grad_b, m_b, v_b)):
                    g = grads[k]
                    # in-place moment updates keep the per-batch cost bound
                    # by memory traffic rather than temporary allocation
                    m[k] *= cfg.beta1
                    m[k] += (1 - cfg.beta1) * g
                    v[k] *= cfg.beta2
                    v[k] += (1 - cfg.beta2) * np.square(g, out=g)
                    update = np.sqrt(v[k] / bc2)
                    update += cfg.adam_eps
                    np.divide(m[k], update, out=update)
                    update *= lr / bc1
                    params[k] -= update
        history.append(epoch_loss / n_batches)
    return history


def _label_indices(model: MlpModel, labels) -> np.ndarray:
    table = {lab: i for i, lab in enumerate(model.class_labels)}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if isinstance(lab, str):
            if lab not in table:
                raise DataError(f"label {lab!r} not in the model's class table")
            out[i] = table[lab]
        else:
            out[i] = int(lab)
            if not 0 <= out[i] < model.n_classes:
                raise DataError(f"label index {lab} out of range")
    return out


def gradient_check(model: MlpModel, x: np.ndarray, label: int,
                   step: float = 1e-5, samples_per_layer: int = 6,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples a handful of weights per layer; intended for small models.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray([label])

    def loss_only():
        loss, _, _ = _backward(model, x, y)
        return loss

    _, grad_w, grad_b = _backward(model, x, y)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, w in enumerate(model.weights):
        flat = w.ravel()
        idx = rng.choice(flat.size, size=min(samples_per_layer, flat.size),
                         replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_only()
            flat[i] = orig - step
            down = loss_only()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            analytic = grad_w[k].ravel()[i]
            scale = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / scale)
    for k, b in enumerate(model.biases):
        i = int(rng.integers(b.size))
        orig = b[i]
        b[i] = orig + step
        up = loss_only()
        b[i] = orig - step
        down = loss_only()
        b[i] = orig
        numeric = (up - down) / (2 * step)
        analytic = grad_b[k][i]
        scale = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


def fuse_predictions(p1: np.ndarray, p2: np.ndarray,
                     class_labels: list[str]) -> tuple[str, float, str]:
    """Pick the more confident of two probability vectors.

    Returns (label, confidence, source) where source is "m1" or "m2". An
    exact confidence tie goes to the second (shape+color) model.
    """
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    if p1.shape != p2.shape or len(p1) != len(class_labels):
        raise ValueError("probability vectors and class table disagree")
    c1, c2 = float(p1.max()), float(p2.max())
    if c1 > c2:
        return class_labels[int(np.argmax(p1))], c1, "m1"
    return class_labels[int(np.argmax(p2))], c2, "m2"


def save_model(model: MlpModel, path) -> None:
    """Versioned binary: header with sizes and class table, float64 payload."""
    sizes = model.layer_sizes
    labels_blob = "\n".join(model.class_labels).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHBI", _MAGIC, _VERSION, 1, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(struct.pack("<I", len(labels_blob)))
        fh.write(labels_blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(w.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        magic, version, _activation, n_sizes = struct.unpack_from("<4sHBI", data, 0)
        if magic != _MAGIC:
            raise DataError(f"{path}: not a model file")
        if version != _VERSION:
            raise DataError(f"{path}: unsupported model version {version}")
        offset = struct.calcsize("<4sHBI")
        sizes = list(struct.unpack_from(f"<{n_sizes}I", data, offset))
        offset += struct.calcsize(f"<{n_sizes}I")
        (blob_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        labels = data[offset:offset + blob_len].decode("utf-8").split("\n")
        offset += blob_len
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out,
                              offset=offset).reshape(fan_out, fan_in).copy()
            offset += w.nbytes
            b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset).copy()
            offset += b.nbytes
            weights.append(w)
            biases.append(b)
        if offset != len(data):
            raise DataError(f"{path}: trailing bytes in model file")
    except struct.error as exc:
        raise DataError(f"{path}: corrupt model file ({exc})") from exc
    except ValueError as exc:
        raise DataError(f"{path}: corrupt model file ({exc})") from exc
    if len(labels) != sizes[-1]:
        raise DataError(f"{path}: class table does not match output layer")
    return MlpModel(weights=weights, biases=biases, class_labels=labels)
