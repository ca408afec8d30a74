"""Multilayer perceptron with optional categorical embeddings.

Architecture: learned embedding tables (one per categorical feature) are
concatenated with the dense input, followed by ReLU hidden layers (three
by default) and a single sigmoid output unit. Training is mini-batch
gradient descent on binary cross-entropy with Adam-style adaptive moments;
the shuffled batch order of every epoch derives from the seed, so training
is fully reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .learners import sigmoid
from .util import spawn_rng

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(0.0, np.asarray(x, dtype=np.float64))


def embedding_widths(cardinalities) -> list[int]:
    """Default embedding width per table: min(8, ceil(cardinality / 2))."""
    return [min(8, math.ceil(c / 2)) for c in cardinalities]


@dataclass(frozen=True)
class MlpSpec:
    hidden_sizes: tuple = (64, 32, 16)
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    # (cardinality, width) per categorical feature; empty means dense-only
    embeddings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(
            self, "embeddings", tuple((int(c), int(w)) for c, w in self.embeddings)
        )
        if any(h < 1 for h in self.hidden_sizes) or not self.hidden_sizes:
            raise ValueError("hidden sizes must all be >= 1")
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("MLP hyperparameters out of range")
        if any(c < 1 or w < 1 for c, w in self.embeddings):
            raise ValueError("embedding cardinalities and widths must be >= 1")


@dataclass
class MlpModel:
    spec: MlpSpec
    n_dense: int
    weights: list[np.ndarray]  # per layer, input-to-output order
    biases: list[np.ndarray]
    emb_tables: list[np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    def parameters(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        out.extend(self.emb_tables)
        return out


def init_model(spec: MlpSpec, n_dense: int) -> MlpModel:
    """Symmetric-uniform initialization with scale 1/sqrt(fan_in)."""
    rng = spawn_rng(spec.seed, "init")
    total_in = n_dense + sum(w for _, w in spec.embeddings)
    sizes = [total_in, *spec.hidden_sizes, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = 1.0 / math.sqrt(max(fan_in, 1))
        weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    emb_tables = []
    for card, width in spec.embeddings:
        scale = 1.0 / math.sqrt(width)
        emb_tables.append(rng.uniform(-scale, scale, size=(card, width)))
    return MlpModel(
        spec=spec, n_dense=n_dense, weights=weights, biases=biases, emb_tables=emb_tables
    )


def _check_inputs(model: MlpModel, dense, cat_ids):
    dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
    if dense.shape[1] != model.n_dense:
        raise ValueError(
            f"dense width {dense.shape[1]} does not match model width {model.n_dense}"
        )
    n_emb = len(model.emb_tables)
    if n_emb == 0:
        if cat_ids is not None and np.size(cat_ids):
            raise ValueError("model has no embedding tables but got category ids")
        return dense, np.zeros((dense.shape[0], 0), dtype=np.int64)
    ids = np.atleast_2d(np.asarray(cat_ids, dtype=np.int64))
    if ids.shape != (dense.shape[0], n_emb):
        raise ValueError(
            f"category ids shaped {ids.shape}, expected {(dense.shape[0], n_emb)}"
        )
    for j, table in enumerate(model.emb_tables):
        col = ids[:, j]
        if col.min(initial=0) < 0 or col.max(initial=0) >= table.shape[0]:
            raise ValueError(f"category id out of range for embedding table {j}")
    return dense, ids


def _assemble_input(model: MlpModel, dense: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if not model.emb_tables:
        return dense
    parts = [dense] + [t[ids[:, j]] for j, t in enumerate(model.emb_tables)]
    return np.hstack(parts)


def _forward_pass(model: MlpModel, x: np.ndarray):
    """Returns (logits, activations per layer, pre-activations)."""
    acts = [x]
    pres = []
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ w + b
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    logits = (h @ model.weights[-1] + model.biases[-1]).ravel()
    return logits, acts, pres


def forward(model: MlpModel, dense, cat_ids=None) -> np.ndarray:
    """Probability of the positive class for each row."""
    dense, ids = _check_inputs(model, dense, cat_ids)
    x = _assemble_input(model, dense, ids)
    logits, _, _ = _forward_pass(model, x)
    return sigmoid(logits)


def _loss_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def _gradients(model: MlpModel, dense, ids, y):
    """Mean-BCE gradients for every parameter, in parameters() order."""
    x = _assemble_input(model, dense, ids)
    logits, acts, pres = _forward_pass(model, x)
    n = dense.shape[0]
    delta = ((sigmoid(logits) - y) / n)[:, None]

    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    grads_w[-1] = acts[-1].T @ delta
    grads_b[-1] = delta.sum(axis=0)
    back = delta @ model.weights[-1].T
    for layer in range(len(model.weights) - 2, -1, -1):
        back = back * (pres[layer] > 0.0)
        grads_w[layer] = acts[layer].T @ back
        grads_b[layer] = back.sum(axis=0)
        back = back @ model.weights[layer].T

    # `back` now holds the gradient w.r.t. the assembled input
    grads_emb = []
    offset = model.n_dense
    for j, table in enumerate(model.emb_tables):
        width = table.shape[1]
        g = np.zeros_like(table)
        np.add.at(g, ids[:, j], back[:, offset : offset + width])
        grads_emb.append(g)
        offset += width

    loss = _loss_from_logits(logits, y)
    return loss, _interleave(grads_w, grads_b) + grads_emb


def _interleave(grads_w, grads_b) -> list[np.ndarray]:
    out = []
    for w, b in zip(grads_w, grads_b):
        out.extend((w, b))
    return out


def train(spec: MlpSpec, dense, cat_ids, y) -> MlpModel:
    """Mini-batch Adam training on binary cross-entropy.

    The per-epoch shuffled batch order derives from the seed; the returned
    model records one mean-loss entry per epoch.
    """
    dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != dense.shape[0]:
        raise ValueError("label and row counts differ")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    model = init_model(spec, n_dense=dense.shape[1])
    dense, ids = _check_inputs(model, dense, cat_ids)

    params = model.parameters()
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    step = 0
    n = dense.shape[0]
    # divergence is detected explicitly, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(spec.epochs):
            order = spawn_rng(spec.seed, "shuffle", epoch).permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, spec.batch_size):
                batch = order[lo : lo + spec.batch_size]
                loss, grads = _gradients(model, dense[batch], ids[batch], y[batch])
                if not math.isfinite(loss):
                    raise TrainingError(f"training diverged at epoch {epoch}")
                epoch_loss += loss * batch.size
                step += 1
                bias1 = 1.0 - ADAM_BETA1**step
                bias2 = 1.0 - ADAM_BETA2**step
                for p, g, ms, vs in zip(params, grads, m_state, v_state):
                    ms += (1.0 - ADAM_BETA1) * (g - ms)
                    vs += (1.0 - ADAM_BETA2) * (g * g - vs)
                    p -= (
                        spec.learning_rate
                        * (ms / bias1)
                        / (np.sqrt(vs / bias2) + ADAM_EPS)
                    )
            model.loss_history.append(epoch_loss / n)
    return model


def gradient_check(model: MlpModel, dense, cat_ids, y, step: float = 1e-5,
                   corrupt_scale: float = 0.0) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    ``corrupt_scale`` deliberately inflates the analytic gradients, for
    verifying that the check itself catches broken backpropagation.
    """
    dense, ids = _check_inputs(model, dense, cat_ids)
    y = np.asarray(y, dtype=np.float64).ravel()
    _, grads = _gradients(model, dense, ids, y)
    if corrupt_scale:
        grads = [g * (1.0 + corrupt_scale) for g in grads]

    def loss_now() -> float:
        x = _assemble_input(model, dense, ids)
        logits, _, _ = _forward_pass(model, x)
        return _loss_from_logits(logits, y)

    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        flat = p.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_now()
            flat[i] = keep - step
            down = loss_now()
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
