"""Linear probe: softmax cross-entropy classifier trained with SGD + momentum.

Training recipe: zero-initialized W and b, seeded per-epoch shuffling, plain
momentum with weight decay added to the gradient (decay on W only, never b),
no learning-rate schedule. Zero init makes runs a pure function of data order,
so the seed only has to cover shuffling. The two stock configs:

* large datasets: lr 0.01, momentum 0.9, weight decay 5e-4, 100 epochs, batch 128
* small datasets: same optimizer, 300 epochs, batch 64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, TrainingDivergedError, UnsupportedVersionError, ValidationError
from .rng import STREAM_PROBE_EPOCH_BASE, CounterRng
from .store import matrix_values


@dataclass(frozen=True)
class LinearProbe:
    weights: np.ndarray  # (num_classes, dim)
    bias: np.ndarray  # (num_classes,)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValidationError(f"inconsistent probe shapes: W {w.shape}, b {b.shape}")
        if w.shape[0] < 2:
            raise ValidationError("probe needs at least 2 classes")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("probe parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")


def default_config(dataset_class: str) -> TrainConfig:
    if dataset_class == "large":
        return TrainConfig(epochs=100, batch_size=128)
    if dataset_class == "small":
        return TrainConfig(epochs=300, batch_size=64)
    raise ValidationError(f"dataset_class must be 'large' or 'small', got {dataset_class!r}")


def _loss_grad(w, b, batch, labels):
    n = batch.shape[1]
    # Divergence shows up as non-finite loss, which train() turns into a
    # TrainingDivergedError; silence the intermediate overflow warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        logits = w @ batch + b[:, None]
        peak = logits.max(axis=0)
        shifted = logits - peak[None, :]
        log_norm = np.log(np.exp(shifted).sum(axis=0))
        loss = float(np.mean(log_norm - shifted[labels, np.arange(n)]))
        grad = np.exp(shifted - log_norm[None, :])
        grad[labels, np.arange(n)] -= 1.0
        grad /= n
        return loss, grad @ batch.T, grad.sum(axis=1)


def loss_and_grad(probe: LinearProbe, batch, labels):
    """Mean softmax cross-entropy and its exact gradients for one batch.

    Weight decay is not included here; the optimizer step adds it.
    """
    values = matrix_values(batch)
    labels = np.asarray(labels, dtype=np.int64)
    if values.shape[1] == 0 or labels.shape != (values.shape[1],):
        raise ValidationError("batch must be nonempty with one label per sample")
    if values.shape[0] != probe.dim:
        raise ValidationError(f"batch dim {values.shape[0]} != probe dim {probe.dim}")
    if labels.min() < 0 or labels.max() >= probe.num_classes:
        raise ValidationError("batch labels out of range")
    return _loss_grad(probe.weights, probe.bias, values, labels)


def train(x, labels, cfg: TrainConfig, num_classes: int | None = None,
          loss_history: list | None = None) -> LinearProbe:
    """SGD with momentum over seeded shuffles; deterministic given (data, cfg).

    Update rule per minibatch (final short batch kept):
      vW <- momentum * vW + (grad_W + weight_decay * W);  W <- W - lr * vW
      vb <- momentum * vb + grad_b;                       b <- b - lr * vb

    Pass a list as ``loss_history`` to record the full-train loss after each
    epoch.
    """
    values = matrix_values(x)
    labels = np.asarray(labels, dtype=np.int64)
    d, n = values.shape
    if labels.shape != (n,):
        raise ValidationError(f"need one label per sample: data {n}, labels {labels.shape}")
    c = int(labels.max()) + 1 if num_classes is None else num_classes
    if c < 2 or labels.min() < 0 or labels.max() >= c:
        raise ValidationError(f"labels must lie in [0, {c}) with c >= 2")

    w = np.zeros((c, d))
    b = np.zeros(c)
    vel_w = np.zeros_like(w)
    vel_b = np.zeros_like(b)
    for epoch in range(cfg.epochs):
        order = CounterRng(cfg.seed, stream=STREAM_PROBE_EPOCH_BASE + epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad_w, grad_b = _loss_grad(w, b, values[:, idx], labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            with np.errstate(over="ignore", invalid="ignore"):
                vel_w = cfg.momentum * vel_w + (grad_w + cfg.weight_decay * w)
                w = w - cfg.learning_rate * vel_w
                vel_b = cfg.momentum * vel_b + grad_b
                b = b - cfg.learning_rate * vel_b
        if loss_history is not None:
            loss_history.append(_loss_grad(w, b, values, labels)[0])
    return LinearProbe(weights=w, bias=b)


def evaluate(probe: LinearProbe, x, labels) -> float:
    """Fraction of samples whose argmax logit matches the label.

    Ties are broken by lowest class index.
    """
    values = matrix_values(x)
    labels = np.asarray(labels, dtype=np.int64)
    if values.shape[0] != probe.dim:
        raise ValidationError(f"data dim {values.shape[0]} != probe dim {probe.dim}")
    if labels.shape != (values.shape[1],):
        raise ValidationError("need one label per sample")
    predicted = np.argmax(probe.weights @ values + probe.bias[:, None], axis=0)
    return float(np.mean(predicted == labels))


def save_probe(probe: LinearProbe, dest) -> None:
    with open(dest, "wb") as f:
        f.write(b"PRB1")
        f.write(struct.pack("<IQQ", 1, probe.num_classes, probe.dim))
        f.write(np.ascontiguousarray(probe.weights, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(probe.bias, dtype="<f8").tobytes())


def load_probe(src) -> LinearProbe:
    with open(src, "rb") as f:
        magic = f.read(4)
        if magic != b"PRB1":
            raise BadMagicError(f"{src}: expected magic b'PRB1', found {magic!r}")
        version, c, d = struct.unpack("<IQQ", f.read(20))
        if version != 1:
            raise UnsupportedVersionError(f"{src}: PRB1 version {version} not supported")
        w = np.frombuffer(f.read(8 * c * d), dtype="<f8").reshape(c, d).copy()
        b = np.frombuffer(f.read(8 * c), dtype="<f8").copy()
    return LinearProbe(weights=w, bias=b)
