"""Small convolutional classifier built on numpy: forward/backward passes,
online training with replay buffers, oracle pretraining and checkpoints.

One model per path combination; each maps an observation (traffic pattern
columns plus a remaining-buffer column) to a two-way choose / don't-choose
softmax. Everything runs in double precision so gradients can be checked
against finite differences.
"""

from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHOOSE = (1, 0)
REJECT = (0, 1)

_MAGIC = b"SGCNN01\n"


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss or gradient."""


@dataclass(frozen=True)
class CnnArch:
    input_rows: int = 8
    input_cols: int = 17
    conv_channels: tuple[int, ...] = (8, 16, 16)
    kernel_size: int = 3
    fc_widths: tuple[int, ...] = (64, 32)
    n_outputs: int = 2

    @classmethod
    def from_dict(cls, d: dict) -> "CnnArch":
        return cls(input_rows=d["input_rows"], input_cols=d["input_cols"],
                   conv_channels=tuple(d["conv_channels"]),
                   kernel_size=d["kernel_size"],
                   fc_widths=tuple(d["fc_widths"]), n_outputs=d["n_outputs"])


@dataclass(frozen=True)
class LabelThresholds:
    max_loss_rate: float = 0.001
    min_buffer_frac: float = 0.1


@dataclass
class TrainSample:
    input: np.ndarray          # (rows, cols) in [0, 1]
    label: np.ndarray          # one-hot 2-vector
    combo_id: int = -1


class Conv2d:
    """Cross-correlation with fan-in-scaled uniform init; pad keeps odd-kernel
    outputs the same size."""

    def __init__(self, in_ch: int, out_ch: int, k: int, rng: np.random.Generator,
                 pad: int | None = None):
        self.k = k
        self.pad = (k - 1) // 2 if pad is None else pad
        bound = 1.0 / np.sqrt(in_ch * k * k)
        self.w = rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k))
        self.b = np.zeros(out_ch)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        p, k = self.pad, self.k
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * k * k)
        out = cols @ self.w.reshape(self.w.shape[0], -1).T + self.b
        self._cache = (cols, x.shape, ho, wo)
        return out.transpose(0, 2, 1).reshape(n, -1, ho, wo)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        cols, xshape, ho, wo = self._cache
        n, c, h, w = xshape
        p, k = self.pad, self.k
        co = self.w.shape[0]
        d2 = dout.reshape(n, co, ho * wo).transpose(0, 2, 1)
        self.db = d2.sum(axis=(0, 1))
        self.dw = np.einsum("nio,nik->ok", d2, cols).reshape(self.w.shape)
        dcols = d2 @ self.w.reshape(co, -1)
        dc = dcols.reshape(n, ho, wo, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + ho, j:j + wo] += dc[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w] if p else dxp

    def params(self):
        return [(self.w, self.dw), (self.b, self.db)]


class Relu:
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)

    def params(self):
        return []


class Flatten:
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def params(self):
        return []


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(in_dim)
        self.w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dout):
        self.dw = dout.T @ self._x
        self.db = dout.sum(axis=0)
        return dout @ self.w

    def params(self):
        return [(self.w, self.dw), (self.b, self.db)]


class CnnModel:
    """Fixed stack: conv/relu blocks, flatten, dense/relu blocks, linear head."""

    def __init__(self, arch: CnnArch, seed: int):
        self.arch = arch
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers: list = []
        in_ch = 1
        for ch in arch.conv_channels:
            layers.append(Conv2d(in_ch, ch, arch.kernel_size, rng))
            layers.append(Relu())
            in_ch = ch
        layers.append(Flatten())
        pad = (arch.kernel_size - 1) // 2
        rows = arch.input_rows
        cols = arch.input_cols
        for _ in arch.conv_channels:
            rows = rows + 2 * pad - arch.kernel_size + 1
            cols = cols + 2 * pad - arch.kernel_size + 1
        dim = in_ch * rows * cols
        for width in arch.fc_widths:
            layers.append(Dense(dim, width, rng))
            layers.append(Relu())
            dim = width
        layers.append(Dense(dim, arch.n_outputs, rng))
        self.layers = layers

    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_arrays(self) -> list[np.ndarray]:
        return [p for p, _ in self.params()]


def build_model(arch: CnnArch | None = None, seed: int = 0) -> CnnModel:
    return CnnModel(arch or CnnArch(), seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: CnnModel, input2d: np.ndarray) -> np.ndarray:
    """Class probabilities for one observation matrix; pure, no side effects."""
    x = np.asarray(input2d, dtype=np.float64)
    expected = (model.arch.input_rows, model.arch.input_cols)
    if x.shape != expected:
        raise ValueError(f"input shape {x.shape} does not match model {expected}")
    logits = model.forward_logits(x[None, None, :, :])
    return softmax(logits)[0]


def _cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    p = softmax(logits)
    loss = float(-np.mean(np.sum(labels * np.log(np.maximum(p, 1e-300)), axis=1)))
    dlogits = (p - labels) / logits.shape[0]
    return loss, dlogits


def train_step(model: CnnModel, batch: list[TrainSample], lr: float) -> float:
    """One gradient-descent step on mean cross-entropy; returns pre-update loss."""
    if not batch:
        raise ValueError("batch must be non-empty")
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    x = np.stack([np.asarray(s.input, dtype=np.float64) for s in batch])[:, None, :, :]
    y = np.stack([np.asarray(s.label, dtype=np.float64) for s in batch])
    logits = model.forward_logits(x)
    loss, dlogits = _cross_entropy(logits, y)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss}")
    model.backward(dlogits)
    for p, g in model.params():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(
                f"non-finite gradient in array of shape {g.shape}")
        p -= lr * g
    return loss


def label_from_outcome(report, min_buffer_frac: float,
                       thresholds: LabelThresholds | None = None) -> tuple[int, int]:
    """Choose-label iff the interval stayed essentially lossless with headroom."""
    th = thresholds or LabelThresholds()
    loss_rate = getattr(report, "loss_rate", report)
    if loss_rate < th.max_loss_rate and min_buffer_frac > th.min_buffer_frac:
        return CHOOSE
    return REJECT


class OnlineTrainer:
    """Per-combination FIFO replay buffers plus one-step updates per interval."""

    def __init__(self, models: list[CnnModel], lr: float = 0.01,
                 batch_size: int = 32, capacity: int = 512, seed: int = 0,
                 enabled: bool = True):
        self.models = models
        self.lr = lr
        self.batch_size = batch_size
        self.enabled = enabled
        self.buffers = [deque(maxlen=capacity) for _ in models]
        self.rng = np.random.default_rng(seed)

    def observe(self, combo_id: int, input2d: np.ndarray,
                label: tuple[int, int]) -> float | None:
        if not self.enabled:
            return None
        buf = self.buffers[combo_id]
        buf.append(TrainSample(np.asarray(input2d, dtype=np.float64),
                               np.asarray(label, dtype=np.float64), combo_id))
        n = min(self.batch_size, len(buf))
        idx = self.rng.choice(len(buf), size=n, replace=False)
        batch = [buf[i] for i in idx]
        return train_step(self.models[combo_id], batch, self.lr)


def pretrain_offline(models: list[CnnModel], demand_samples: list[dict],
                     oracle, epochs: int, seed: int, *,
                     input_builder, margin: float = 0.01,
                     lr: float = 0.01, batch_size: int = 32) -> dict:
    """Label every combination against the fluid oracle and fit each model.

    oracle(demands, combo_id) -> loss_rate; input_builder(demands, rng) -> the
    observation matrix a live run would have seen. Per sample, models tied
    with the best loss are labeled choose, models worse than best + margin
    are labeled reject, the rest are skipped.
    """
    if not demand_samples:
        raise ValueError("at least one demand sample is required")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    rng = np.random.default_rng(seed)
    datasets: list[list[TrainSample]] = [[] for _ in models]
    n_pos = n_neg = 0
    for demands in demand_samples:
        x = input_builder(demands, rng)
        losses = np.array([oracle(demands, ci) for ci in range(len(models))])
        best = losses.min()
        for ci, lv in enumerate(losses):
            if lv <= best + 1e-12:
                datasets[ci].append(TrainSample(x, np.array(CHOOSE, dtype=float), ci))
                n_pos += 1
            elif lv > best + margin:
                datasets[ci].append(TrainSample(x, np.array(REJECT, dtype=float), ci))
                n_neg += 1
    final_losses = []
    for ci, model in enumerate(models):
        data = datasets[ci]
        last = float("nan")
        for _ in range(epochs):
            order = rng.permutation(len(data))
            for lo in range(0, len(data), batch_size):
                batch = [data[i] for i in order[lo:lo + batch_size]]
                last = train_step(model, batch, lr)
        final_losses.append(last)
    return {
        "samples": len(demand_samples),
        "positive_labels": n_pos,
        "negative_labels": n_neg,
        "final_losses": final_losses,
    }


# -- checkpoints --------------------------------------------------------------


def save_model(model: CnnModel, path) -> None:
    """Versioned binary checkpoint: header with dims and seed, then raw
    row-major float64 parameter arrays."""
    arrays = model.param_arrays()
    header = {
        "format": "saginsim-cnn",
        "version": 1,
        "seed": model.seed,
        "arch": asdict(model.arch),
        "arrays": [list(a.shape) for a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a saginsim checkpoint")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version")
        model = CnnModel(CnnArch.from_dict(header["arch"]), header["seed"])
        for p, shape in zip(model.param_arrays(), header["arrays"]):
            if list(p.shape) != shape:
                raise ValueError(f"{path}: shape mismatch {p.shape} vs {shape}")
            raw = fh.read(p.size * 8)
            p[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
    return model


def save_model_set(directory, models: list[CnnModel]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, m in enumerate(models):
        name = f"combo_{i:03d}.ckpt"
        save_model(m, d / name)
        files.append(name)
    (d / "manifest.json").write_text(
        json.dumps({"count": len(models), "files": files}, indent=1) + "\n")


def load_model_set(directory) -> list[CnnModel]:
    d = Path(directory)
    manifest = d / "manifest.json"
    if not manifest.exists():
        raise FileNotFoundError(f"no checkpoint manifest in {d}")
    meta = json.loads(manifest.read_text())
    return [load_model(d / name) for name in meta["files"]]
