"""Network assembly, the training loop, and checkpoint persistence.

Topology: the (history x 2) input sequence runs through a stack of LSTM
layers with additive shortcut connections, the last time step of the top
layer feeds a chain of [dense -> tanh -> dropout] blocks, and a final
dense readout emits the m-step motion forecast.  Dropout masks are drawn
once per sequence per layer; disabling them (the deterministic mode) is
exact because the masks are inverted.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import (
    FoldLayout,
    NormalizationConstants,
    WindowSpec,
    compute_norm,
    inject_noise,
    samples_to_arrays,
    window_case,
)
from .errors import ConfigError, DataError, NumericError, StructuralError
from .nn import Adam, DenseLayer, LstmLayer, dropout_mask, lr_schedule, mse_loss, tanh_backward, tanh_forward
from .waves import RNG_ALGORITHM

CHECKPOINT_MAGIC = b"WMCK1"
CHECKPOINT_VERSION = 1
INPUT_CHANNELS = 2


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer sizes and dropout probability for the forecast network."""

    num_lstm_layers: int = 2
    lstm_hidden: int = 200
    num_fc_blocks: int = 5
    fc_width: int = 80
    dropout_p: float = 0.315
    m: int = 20
    lstm_shortcuts: bool = True

    def __post_init__(self):
        for name in ("num_lstm_layers", "lstm_hidden", "fc_width", "m"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_fc_blocks < 0:
            raise ConfigError(f"num_fc_blocks must be >= 0, got {self.num_fc_blocks}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")


@dataclass(frozen=True)
class TrainSpec:
    """Optimization budget and early-stopping policy."""

    max_epochs: int = 200
    batch_size: int = 2048
    early_stopping_patience: int = 20
    early_stopping_min_delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stopping_patience < 1:
            raise ConfigError(f"early_stopping_patience must be >= 1, got {self.early_stopping_patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")


class ForecastNetwork:
    """The composed model; owns its layers and exposes forward/backward."""

    def __init__(self, arch: ArchitectureSpec, rng: np.random.Generator):
        self.arch = arch
        self.lstm_layers = []
        in_size = INPUT_CHANNELS
        for k in range(arch.num_lstm_layers):
            self.lstm_layers.append(LstmLayer(in_size, arch.lstm_hidden, rng, name=f"lstm{k}"))
            in_size = arch.lstm_hidden
        self.fc_layers = []
        width_in = arch.lstm_hidden
        for j in range(arch.num_fc_blocks):
            self.fc_layers.append(DenseLayer(width_in, arch.fc_width, rng, name=f"fc{j}"))
            width_in = arch.fc_width
        self.readout = DenseLayer(width_in, arch.m, rng, name="readout")

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for layer in [*self.lstm_layers, *self.fc_layers, self.readout]:
            params.update(layer.parameters())
        return params

    def param_count(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def load_parameters(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(tensors)
        extra = set(tensors) - set(params)
        if missing or extra:
            raise StructuralError(f"parameter table mismatch; missing={sorted(missing)}, extra={sorted(extra)}")
        for name, value in tensors.items():
            if params[name].shape != value.shape:
                raise StructuralError(f"{name}: checkpoint shape {value.shape} vs model shape {params[name].shape}")
            params[name][...] = value

    # -- dropout plans ------------------------------------------------------

    def sample_masks(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Draw one inverted-dropout mask per layer for a batch.

        Each row is an independent thinned-network choice, constant across
        the time dimension for the LSTM outputs.
        """
        p = self.arch.dropout_p
        masks = {}
        for layer in self.lstm_layers:
            masks[layer.name] = dropout_mask(rng, (batch, layer.hidden_size), p)
        for layer in self.fc_layers:
            masks[layer.name] = dropout_mask(rng, (batch, layer.output_size), p)
        return masks

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, masks: dict[str, np.ndarray] | None = None, keep_cache: bool = False):
        """Map (batch, n, 2) inputs to (batch, m) forecasts.

        With ``masks=None`` every dropout site is the identity (the exact
        expectation of the inverted masks).  Pass ``keep_cache=True`` to get
        a workspace for :meth:`backward`.
        """
        if x.ndim != 3 or x.shape[2] != INPUT_CHANNELS:
            raise StructuralError(f"expected input (batch, steps, {INPUT_CHANNELS}), got {x.shape}")
        seq = np.ascontiguousarray(x.transpose(1, 0, 2))  # layers run time-major
        lstm_caches = []
        for k, layer in enumerate(self.lstm_layers):
            mask = None if masks is None else masks.get(layer.name)
            out, cache = layer.forward(seq, mask)
            shortcut = self.arch.lstm_shortcuts and k > 0
            if shortcut:
                out = out + seq
            lstm_caches.append((cache, shortcut))
            seq = out
        a = seq[-1]
        fc_caches = []
        for layer in self.fc_layers:
            z, dense_cache = layer.forward(a)
            a, tanh_cache = tanh_forward(z)
            mask = None if masks is None else masks.get(layer.name)
            if mask is not None:
                a = a * mask
            fc_caches.append((dense_cache, tanh_cache, mask))
        y, readout_cache = self.readout.forward(a)
        if not keep_cache:
            return y
        cache = {
            "steps": x.shape[1],
            "lstm": lstm_caches,
            "fc": fc_caches,
            "readout": readout_cache,
        }
        return y, cache

    def backward(self, d_y: np.ndarray, cache) -> dict[str, np.ndarray]:
        """Exact reverse-mode gradients for every parameter tensor."""
        grads: dict[str, np.ndarray] = {}
        d_a, g = self.readout.backward(d_y, cache["readout"])
        grads.update(g)
        for layer, (dense_cache, tanh_cache, mask) in zip(reversed(self.fc_layers), reversed(cache["fc"])):
            if mask is not None:
                d_a = d_a * mask
            d_z = tanh_backward(d_a, tanh_cache)
            d_a, g = layer.backward(d_z, dense_cache)
            grads.update(g)
        batch = d_a.shape[0]
        d_seq = np.zeros((cache["steps"], batch, self.arch.lstm_hidden))
        d_seq[-1] = d_a
        for layer, (lstm_cache, shortcut) in zip(reversed(self.lstm_layers), reversed(cache["lstm"])):
            d_in, g = layer.backward(d_seq, lstm_cache)
            grads.update(g)
            if shortcut:
                d_in = d_in + d_seq
            d_seq = d_in
        return grads


def build_model(arch: ArchitectureSpec, seed: int = 0) -> ForecastNetwork:
    """Fresh network with seeded initialization."""
    return ForecastNetwork(arch, np.random.default_rng([seed, 0x6D6F64]))


# --- checkpoints -------------------------------------------------------------


@dataclass
class ModelCheckpoint:
    """Versioned container of weights, geometry, constants, and metadata."""

    arch: ArchitectureSpec
    window: WindowSpec
    norm: NormalizationConstants
    tensors: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def build_network(self) -> ForecastNetwork:
        net = build_model(self.arch, seed=0)
        net.load_parameters(self.tensors)
        return net


def checkpoint_from_network(
    net: ForecastNetwork,
    window: WindowSpec,
    norm: NormalizationConstants,
    metadata: dict | None = None,
) -> ModelCheckpoint:
    tensors = {name: value.copy() for name, value in net.parameters().items()}
    meta = {"rng_algorithm": RNG_ALGORITHM}
    if metadata:
        meta.update(metadata)
    return ModelCheckpoint(arch=net.arch, window=window, norm=norm, tensors=tensors, metadata=meta)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    """Write magic, version, a length-prefixed JSON header, then the raw
    little-endian float64 tensors in the header's declared order."""
    names = sorted(ckpt.tensors)
    header = {
        "arch": asdict(ckpt.arch),
        "window": asdict(ckpt.window),
        "norm": asdict(ckpt.norm),
        "tensors": [[name, list(ckpt.tensors[name].shape)] for name in names],
        "metadata": ckpt.metadata,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", ckpt.version, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(ckpt.tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        version, header_len = struct.unpack("<IQ", fh.read(12))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version} (supported: {CHECKPOINT_VERSION})")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise DataError(f"{path}: truncated payload for tensor {name}")
            tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    arch = ArchitectureSpec(**header["arch"])
    window = WindowSpec(**header["window"])
    norm = NormalizationConstants(**header["norm"])
    ckpt = ModelCheckpoint(arch=arch, window=window, norm=norm, tensors=tensors, metadata=header["metadata"])
    expected = build_model(arch, seed=0).parameters()
    for name, value in expected.items():
        if name not in tensors or tensors[name].shape != value.shape:
            raise DataError(f"{path}: tensor table does not match the declared architecture at {name}")
    return ckpt


# --- training ----------------------------------------------------------------


def pooled_ev(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Explained variance over the flattened prediction tensor."""
    resid = np.asarray(y_true) - np.asarray(y_pred)
    var_true = float(np.var(y_true))
    if var_true == 0.0:
        raise DataError("pooled EV undefined: zero-variance truth")
    return 1.0 - float(np.var(resid)) / var_true


def _forward_in_chunks(net: ForecastNetwork, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    outs = [net.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)]
    return np.concatenate(outs, axis=0)


@dataclass
class TrainingCurve:
    """Per-epoch optimization trace."""

    epochs: list[int] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    val_ev: list[float] = field(default_factory=list)

    def append(self, epoch, lr, train_mse, val_mse, val_ev):
        self.epochs.append(epoch)
        self.lrs.append(lr)
        self.train_mse.append(train_mse)
        self.val_mse.append(val_mse)
        self.val_ev.append(val_ev)

    def write_csv(self, path) -> None:
        from .tables import write_table

        rows = [
            (e, float(lr), float(tm), float(vm), float(ve))
            for e, lr, tm, vm, ve in zip(self.epochs, self.lrs, self.train_mse, self.val_mse, self.val_ev)
        ]
        write_table(path, ["epoch", "lr", "train_mse", "val_mse", "val_ev"], rows)


def train_arrays(
    net: ForecastNetwork,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    train_spec: TrainSpec,
    lr_kwargs: dict | None = None,
) -> tuple[dict[str, np.ndarray], TrainingCurve, dict]:
    """Mini-batch Adam with step-decayed learning rate and early stopping.

    Validation runs with dropout disabled.  Returns the best-validation
    parameter snapshot (not the last), the per-epoch curve, and summary
    metadata.
    """
    rng = np.random.default_rng([train_spec.seed, 0x747261])
    mask_rng = np.random.default_rng([train_spec.seed, 0x647270])
    params = net.parameters()
    adam = Adam(params)
    n_train = len(x_train)
    use_dropout = net.arch.dropout_p > 0.0
    best_val = np.inf
    best_epoch = -1
    best_params: dict[str, np.ndarray] = {name: value.copy() for name, value in params.items()}
    curve = TrainingCurve()
    lr_kwargs = lr_kwargs or {}
    for epoch in range(train_spec.max_epochs):
        lr = lr_schedule(epoch, **lr_kwargs)
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, train_spec.batch_size):
            idx = order[start : start + train_spec.batch_size]
            xb = x_train[idx]
            yb = y_train[idx]
            masks = net.sample_masks(len(idx), mask_rng) if use_dropout else None
            pred, cache = net.forward(xb, masks=masks, keep_cache=True)
            loss, d_pred = mse_loss(pred, yb)
            if not np.isfinite(loss):
                raise NumericError("training loss is not finite", where=f"epoch {epoch}, batch at {start}")
            grads = net.backward(d_pred, cache)
            adam.step(params, grads, lr)
            total += loss * len(idx)
        train_mse = total / n_train
        val_pred = _forward_in_chunks(net, x_val)
        val_mse, _ = mse_loss(val_pred, y_val)
        val_ev = pooled_ev(y_val, val_pred)
        curve.append(epoch, lr, train_mse, val_mse, val_ev)
        if val_mse < best_val - train_spec.early_stopping_min_delta:
            best_val = val_mse
            best_epoch = epoch
            for name, value in params.items():
                best_params[name][...] = value
        elif epoch - best_epoch >= train_spec.early_stopping_patience:
            break
    info = {
        "epochs_run": len(curve.epochs),
        "best_epoch": best_epoch,
        "best_val_mse": float(best_val),
        "best_val_ev": float(curve.val_ev[best_epoch]),
        "seed": train_spec.seed,
    }
    return best_params, curve, info


def train_fold(
    arch: ArchitectureSpec,
    window_spec: WindowSpec,
    train_spec: TrainSpec,
    folds: FoldLayout,
    fold_index: int,
    records_by_id: dict,
    noise_level: float = 0.0,
) -> tuple[ModelCheckpoint, TrainingCurve]:
    """Train one cross-validation fold end to end.

    Normalization constants come from the pooled fold cases (test cases
    never enter).  Training inputs optionally carry injected noise; the
    validation fold and all targets stay clean.
    """
    val_ids = folds.validation_cases(fold_index)
    train_ids = folds.training_cases(fold_index)
    if not train_ids:
        raise ConfigError("training split is empty; need at least 2 folds")
    fold_records = [records_by_id[c] for c in folds.all_fold_cases()]
    norm = compute_norm(fold_records)
    train_samples = [s for c in train_ids for s in window_case(records_by_id[c], window_spec, norm)]
    val_samples = [s for c in val_ids for s in window_case(records_by_id[c], window_spec, norm)]
    if not train_samples or not val_samples:
        raise DataError("windowing produced an empty training or validation set")
    if noise_level > 0.0:
        train_samples = inject_noise(train_samples, noise_level, seed=train_spec.seed + 7919)
    x_train, y_train = samples_to_arrays(train_samples)
    x_val, y_val = samples_to_arrays(val_samples)
    net = build_model(arch, seed=train_spec.seed)
    best_params, curve, info = train_arrays(net, x_train, y_train, x_val, y_val, train_spec)
    net.load_parameters(best_params)
    metadata = {
        "fold_id": fold_index,
        "train_noise_level": noise_level,
        **info,
    }
    return checkpoint_from_network(net, window_spec, norm, metadata), curve


def predict_deterministic(ckpt: ModelCheckpoint, x: np.ndarray, denormalize: bool = False) -> np.ndarray:
    """Single forward pass with every dropout site acting as identity.

    ``x`` is one normalized (n, 2) window or a batch of them; the output is
    the m-vector (or batch) in normalized units unless ``denormalize``.
    """
    single = x.ndim == 2
    batch = x[None] if single else x
    net = ckpt.build_network()
    y = net.forward(batch)
    if denormalize:
        y = ckpt.norm.denormalize_motion(y)
    return y[0] if single else y
