"""From-scratch feed-forward classifier with exact input gradients.

The model is a per-coordinate input standardizer followed by fully connected
ReLU layers and a single sigmoid output giving P(label = 1 = normal).
Training is mini-batch gradient descent with momentum on binary
cross-entropy; forward, backward, and input gradients are hand-written
matrix arithmetic, checked against finite differences in the test suite.

Input coordinates that are constant over the training set get a scale of
zero and their first-layer weight rows are zeroed at initialization: they
cannot influence the output, would never receive weight updates anyway, and
therefore carry exactly zero input gradient instead of initialization noise.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, DataValidationError, NumericFailure

PROB_EPS = 1e-12
_DEAD_SIGMA = 1e-12

CHECKPOINT_FORMAT = "ffnet-checkpoint-v1"


@dataclass(frozen=True)
class ModelArchitecture:
    """Layer widths of the classifier; the output layer is always one unit."""

    input_dim: int
    hidden_layers: tuple[int, ...] = (64, 32)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        if self.input_dim < 1:
            raise DataValidationError("input_dim must be positive")
        if any(w < 1 for w in self.hidden_layers):
            raise DataValidationError("hidden widths must be at least 1")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, 1)

    @property
    def parameter_count(self) -> int:
        dims = self.layer_dims
        return sum((a + 1) * b for a, b in zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise DataValidationError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise DataValidationError("momentum must be in [0, 1)")
        if self.epochs < 1:
            raise DataValidationError("epochs must be at least 1")
        if self.batch_size < 1:
            raise DataValidationError("batch_size must be at least 1")


@dataclass(frozen=True)
class InputScaler:
    """Affine per-coordinate transform x -> (x - mean) * scale.

    Coordinates with (near-)zero variance get scale 0, so the transformed
    input is identically zero there.
    """

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if mean.shape != scale.shape or mean.ndim != 1:
            raise DataValidationError("scaler mean/scale must be matching vectors")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, dim: int) -> "InputScaler":
        return cls(mean=np.zeros(dim), scale=np.ones(dim))

    @classmethod
    def fit(cls, X: np.ndarray) -> "InputScaler":
        mean = X.mean(axis=0)
        sigma = X.std(axis=0)
        live = sigma > _DEAD_SIGMA
        scale = np.where(live, 1.0 / np.where(live, sigma, 1.0), 0.0)
        return cls(mean=mean, scale=scale)

    @property
    def live_mask(self) -> np.ndarray:
        return self.scale > 0

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) * self.scale


@dataclass
class TrainedModel:
    """Architecture, fitted scaler, per-layer weights, and run metadata."""

    architecture: ModelArchitecture
    scaler: InputScaler
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        dims = self.architecture.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DataValidationError("layer count mismatch")
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            if self.weights[i].shape != (a, b) or self.biases[i].shape != (b,):
                raise DataValidationError(
                    f"layer {i}: weight shape {self.weights[i].shape} does not "
                    f"match architecture ({a}, {b})"
                )
            if not (np.isfinite(self.weights[i]).all()
                    and np.isfinite(self.biases[i]).all()):
                raise DataValidationError(f"layer {i}: non-finite parameters")
        if self.scaler.mean.shape != (self.architecture.input_dim,):
            raise DataValidationError("scaler dimension mismatch")


def init_model(
    architecture: ModelArchitecture,
    rng: np.random.Generator,
    scaler: InputScaler | None = None,
) -> TrainedModel:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    if scaler is None:
        scaler = InputScaler.identity(architecture.input_dim)
    weights, biases = [], []
    dims = architecture.layer_dims
    for a, b in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-limit, limit, size=(a, b)))
        biases.append(np.zeros(b))
    # constant inputs never receive weight updates; zero their rows so they
    # contribute no initialization noise to input gradients
    weights[0][~scaler.live_mask, :] = 0.0
    return TrainedModel(architecture, scaler, weights, biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_batch(model: TrainedModel, X: np.ndarray):
    """Probabilities plus cached pre-activations and activations per layer."""
    h = model.scaler.transform(X)
    pre, post = [], [h]
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = h @ W + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        post.append(h)
    logits = (h @ model.weights[-1] + model.biases[-1])[:, 0]
    probs = _sigmoid(logits)
    return probs, pre, post


def forward(model: TrainedModel, x: np.ndarray):
    """Probability of the normal class for one flattened feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.architecture.input_dim,):
        raise ContractError(
            f"input shape {x.shape} does not match input_dim "
            f"{model.architecture.input_dim}"
        )
    if not np.isfinite(x).all():
        raise ContractError("input contains non-finite values")
    probs, pre, post = _forward_batch(model, x[None, :])
    return float(probs[0]), (pre, post)


def bce_loss(probability: float, y: int) -> float:
    """Binary cross-entropy in nats, probability clamped away from {0, 1}."""
    p = min(max(float(probability), PROB_EPS), 1.0 - PROB_EPS)
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))


def _backward_batch(model, X, y, probs, pre, post):
    """Mean-over-batch gradients for every weight and bias."""
    n = len(X)
    delta = (probs - y)[:, None] / n
    grads_w = [post[-1].T @ delta]
    grads_b = [delta.sum(axis=0)]
    d = delta
    for li in range(len(model.weights) - 2, -1, -1):
        d = (d @ model.weights[li + 1].T) * (pre[li] > 0)
        grads_w.insert(0, post[li].T @ d)
        grads_b.insert(0, d.sum(axis=0))
    return grads_w, grads_b


def loss_gradients(model: TrainedModel, X: np.ndarray, y: np.ndarray):
    """Gradients of the mean BCE over (X, y) w.r.t. weights and biases."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    probs, pre, post = _forward_batch(model, X)
    return _backward_batch(model, X, y, probs, pre, post)


def input_gradient(model: TrainedModel, x: np.ndarray, y: int) -> np.ndarray:
    """Exact gradient of the loss w.r.t. the model's standardized input.

    Constant (zero-scale) coordinates have zero first-layer weights and
    therefore exactly zero gradient.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.architecture.input_dim,):
        raise ContractError(
            f"input shape {x.shape} does not match input_dim "
            f"{model.architecture.input_dim}"
        )
    probs, pre, _ = _forward_batch(model, x[None, :])
    p = min(max(float(probs[0]), PROB_EPS), 1.0 - PROB_EPS)
    d = np.array([[p - y]])
    for li in range(len(model.weights) - 1, 0, -1):
        d = (d @ model.weights[li].T) * (pre[li - 1] > 0)
    return (d @ model.weights[0].T)[0]


def _shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


def _init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def train(
    X: np.ndarray,
    y: np.ndarray,
    architecture: ModelArchitecture,
    config: TrainConfig,
) -> TrainedModel:
    """Mini-batch SGD with momentum; deterministic for a fixed seed.

    X holds one flattened feature trial per row; y holds trial labels with
    1 = normal. The fitted input scaler, per-epoch loss trace, and final
    training accuracy are stored on the returned model.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise DataValidationError("training set is empty")
    if X.ndim != 2 or X.shape[1] != architecture.input_dim:
        raise DataValidationError(
            f"training matrix shape {X.shape} does not match input_dim "
            f"{architecture.input_dim}"
        )
    if config.batch_size > n:
        raise DataValidationError(
            f"batch_size {config.batch_size} exceeds training-set size {n}"
        )

    scaler = InputScaler.fit(X)
    model = init_model(architecture, _init_rng(config.seed), scaler)
    vel_w = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    shuffle = _shuffle_rng(config.seed)

    trace = []
    for epoch in range(config.epochs):
        order = shuffle.permutation(n)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            probs, pre, post = _forward_batch(model, Xb)
            clamped = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
            batch_loss = float(
                -(yb * np.log(clamped) + (1 - yb) * np.log(1 - clamped)).mean()
            )
            if not np.isfinite(batch_loss):
                raise NumericFailure(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            epoch_loss += batch_loss * len(idx)
            grads_w, grads_b = _backward_batch(model, Xb, yb, probs, pre, post)
            for i in range(len(model.weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * grads_w[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * grads_b[i]
                model.weights[i] += vel_w[i]
                model.biases[i] += vel_b[i]
        trace.append(epoch_loss / n)

    model.metadata = {
        "seed": config.seed,
        "config": {
            "learning_rate": config.learning_rate,
            "momentum": config.momentum,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
        },
        "train_accuracy": evaluate_accuracy(model, X, y),
        "loss_trace": trace,
    }
    return model


def predict_proba(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    probs, _, _ = _forward_batch(model, np.asarray(X, dtype=np.float64))
    return probs


def evaluate_accuracy(model: TrainedModel, X: np.ndarray, y: np.ndarray) -> float:
    """Fraction of trials classified correctly at probability threshold 0.5."""
    probs = predict_proba(model, X)
    predicted = (probs >= 0.5).astype(np.int64)
    return float((predicted == np.asarray(y).astype(np.int64)).mean())


DEFAULT_GRID_HIDDEN = ((32,), (64,), (64, 32), (128, 64))
DEFAULT_GRID_LEARNING_RATES = (1e-3, 1e-4)


def build_grid(
    input_dim: int,
    hidden_options=DEFAULT_GRID_HIDDEN,
    learning_rates=DEFAULT_GRID_LEARNING_RATES,
    base_config: TrainConfig = TrainConfig(),
) -> list[tuple[ModelArchitecture, TrainConfig]]:
    """Cross product of architectures and learning rates."""
    grid = []
    for hidden in hidden_options:
        for lr in learning_rates:
            grid.append(
                (
                    ModelArchitecture(input_dim, tuple(hidden)),
                    replace(base_config, learning_rate=lr),
                )
            )
    return grid


@dataclass(frozen=True)
class GridCell:
    architecture: ModelArchitecture
    config: TrainConfig
    mean_val_accuracy: float
    fold_accuracies: tuple[float, ...]


@dataclass(frozen=True)
class GridSearchResult:
    cells: tuple[GridCell, ...]
    best_index: int
    warnings: tuple[str, ...]

    @property
    def best(self) -> GridCell:
        return self.cells[self.best_index]


def grid_search(
    X: np.ndarray,
    y: np.ndarray,
    grid: list[tuple[ModelArchitecture, TrainConfig]],
    folds: int = 3,
    seed: int = 0,
) -> GridSearchResult:
    """K-fold cross-validated selection over (architecture, config) cells.

    The best cell maximizes mean validation accuracy; ties prefer fewer
    parameters, then a lower learning rate, then earlier grid position.
    """
    if not grid:
        raise ContractError("grid must not be empty")
    if folds < 2:
        raise ContractError("folds must be at least 2")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(X)
    if n < folds:
        raise ContractError(f"{n} samples cannot form {folds} folds")

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    fold_indices = np.array_split(rng.permutation(n), folds)

    notes: list[str] = []
    for fi, val_idx in enumerate(fold_indices):
        if len(np.unique(y[val_idx])) < 2:
            msg = f"fold {fi}: validation split contains a single class"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)

    cells = []
    for arch, config in grid:
        accs = []
        for val_idx in fold_indices:
            mask = np.ones(n, dtype=bool)
            mask[val_idx] = False
            fold_config = config
            if config.batch_size > mask.sum():
                fold_config = replace(config, batch_size=int(mask.sum()))
            fold_model = train(X[mask], y[mask], arch, fold_config)
            accs.append(evaluate_accuracy(fold_model, X[val_idx], y[val_idx]))
        cells.append(
            GridCell(arch, config, float(np.mean(accs)), tuple(accs))
        )

    best_index = min(
        range(len(cells)),
        key=lambda i: (
            -cells[i].mean_val_accuracy,
            cells[i].architecture.parameter_count,
            cells[i].config.learning_rate,
            i,
        ),
    )
    return GridSearchResult(tuple(cells), best_index, tuple(notes))


def save_model(model: TrainedModel, path) -> None:
    """Checkpoint as JSON; float values round-trip exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "architecture": {
            "input_dim": model.architecture.input_dim,
            "hidden_layers": list(model.architecture.hidden_layers),
        },
        "scaler": {
            "mean": model.scaler.mean.tolist(),
            "scale": model.scaler.scale.tolist(),
        },
        "weights": [W.ravel().tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: invalid checkpoint JSON: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataValidationError(
            f"{path}: unsupported checkpoint format {payload.get('format')!r}"
        )
    arch = ModelArchitecture(
        input_dim=int(payload["architecture"]["input_dim"]),
        hidden_layers=tuple(payload["architecture"]["hidden_layers"]),
    )
    scaler = InputScaler(
        mean=np.asarray(payload["scaler"]["mean"], dtype=np.float64),
        scale=np.asarray(payload["scaler"]["scale"], dtype=np.float64),
    )
    dims = arch.layer_dims
    weights = [
        np.asarray(flat, dtype=np.float64).reshape(a, b)
        for flat, a, b in zip(payload["weights"], dims[:-1], dims[1:])
    ]
    biases = [np.asarray(b, dtype=np.float64) for b in payload["biases"]]
    return TrainedModel(arch, scaler, weights, biases, payload.get("metadata", {}))
