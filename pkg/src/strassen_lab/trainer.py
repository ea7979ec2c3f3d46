"""Desk-scale training of one-layer transformers on the generated datasets.

Each token's features are a sum of learned embeddings: its symbol and its
position. Grid tasks embed the row and column instead of a flat position,
and the quotient task also embeds the two colors. Padding gets its own
symbol id, is excluded from attention as a key and carries target ``-100``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import TaskInstance
from .nn import Model, ModelShape, model_logits
from .oracles import MASK

GRID_TASKS = ("binrel", "quotient")

# Full-scale per-task settings (d, heads, batch, lr, epochs, dropout); the desk defaults are far smaller.
FULL_SCALE_SETTINGS = {
    "funccomp": dict(d=16, heads=1, batch_size=2500, lr=1e-3, epochs=1000, dropout=0.3),
    "binrel": dict(d=16, heads=1, batch_size=2500, lr=1e-3, epochs=200, dropout=0.3),
    "match3": dict(d=128, heads=2, batch_size=2500, lr=1e-3, epochs=500, dropout=0.4),
    "quotient": dict(d=16, heads=1, batch_size=2000, lr=1e-3, epochs=3000, dropout=0.3),
}


@dataclass
class TrainConfig:
    task: str = "funccomp"
    mechanism: str = "strassen"
    d: int = 16
    heads: int = 1
    batch_size: int = 100
    lr: float = 1e-3
    epochs: int = 50
    dropout: float = 0.3
    seed: int = 0
    weight_decay: float = 0.01
    val_fraction: float = 0.1
    stop_at_accuracy: float | None = None
    metrics_path: str | None = None
    checkpoint_path: str | None = None

    @classmethod
    def full_scale(cls, task: str, mechanism: str = "strassen", **overrides) -> "TrainConfig":
        """Full-scale settings for ``task``."""
        return cls(task=task, mechanism=mechanism, **{**FULL_SCALE_SETTINGS[task], **overrides})

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string or typed values, e.g. a parsed ``key=value`` file."""
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            out[key] = _coerce(kinds[key], raw)
        return cls(**out)


def _coerce(kind: str, raw):
    if raw is None or not isinstance(raw, str):
        return raw
    if raw.lower() in ("none", ""):
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def load_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    seconds: float


# ---------------------------------------------------------------- features

@dataclass
class Vocab:
    task: str
    sizes: dict[str, int]
    pad: int             # padding symbol id
    bot: int | None = None

    @classmethod
    def for_dataset(cls, task: str, data: Sequence[TaskInstance]) -> "Vocab":
        if task == "funccomp":
            top = max(i.meta["n"] for i in data)
            length = top + 1
            return cls(task, {"sym": top + 2, "pos": length}, pad=top + 1, bot=top)
        if task == "match3":
            modulus = max(i.meta["M"] for i in data)
            length = max(len(i.x) for i in data)
            return cls(task, {"sym": modulus + 1, "pos": length}, pad=modulus)
        if task in GRID_TASKS:
            m = max(i.meta["m"] for i in data)
            sizes = {"sym": 3, "row": m, "col": m}
            if task == "quotient":
                sizes.update({"rowcolor": m + 1, "colcolor": m + 1})
            return cls(task, sizes, pad=2)
        raise ValueError(f"cannot train on task {task!r}")


def _instance_grid(inst: TaskInstance):
    m = inst.meta["m"]
    r = np.asarray(inst.x[:m * m]).reshape(m, m)
    col = np.asarray(inst.x[m * m:]) if inst.task == "quotient" else None
    return m, r, col, np.asarray(inst.y).reshape(m, m)


def collate(batch: Sequence[TaskInstance], vocab: Vocab):
    """Pad a batch; returns ``(fields, targets, key_mask)``, all ``(B, N)``."""
    b = len(batch)
    if vocab.task in GRID_TASKS:
        side = max(i.meta["m"] for i in batch)
        n = side * side
        fields = {k: np.zeros((b, n), dtype=np.intp) for k in vocab.sizes}
        fields["sym"][:] = vocab.pad
        targets = np.full((b, n), MASK, dtype=np.int64)
        mask = np.zeros((b, n), dtype=bool)
        rows, cols = np.divmod(np.arange(n), side)
        pad_color = vocab.sizes.get("rowcolor", 1) - 1
        for t, inst in enumerate(batch):
            m, r, col, y = _instance_grid(inst)
            fields["row"][t] = np.minimum(rows, vocab.sizes["row"] - 1)
            fields["col"][t] = np.minimum(cols, vocab.sizes["col"] - 1)
            valid = (rows < m) & (cols < m)
            cell = rows[valid] * m + cols[valid]
            fields["sym"][t, valid] = r.reshape(-1)[cell]
            targets[t, valid] = y.reshape(-1)[cell]
            mask[t] = valid
            if col is not None:
                fields["rowcolor"][t] = pad_color
                fields["colcolor"][t] = pad_color
                fields["rowcolor"][t, valid] = col[rows[valid]]
                fields["colcolor"][t, valid] = col[cols[valid]]
        return fields, targets, mask
    n = max(len(i.x) for i in batch)
    sym = np.full((b, n), vocab.pad, dtype=np.intp)
    pos = np.tile(np.arange(n, dtype=np.intp), (b, 1))
    targets = np.full((b, n), MASK, dtype=np.int64)
    mask = np.zeros((b, n), dtype=bool)
    for t, inst in enumerate(batch):
        x = np.asarray(inst.x)
        sym[t, :len(x)] = x
        mask[t, :len(x)] = True
        if vocab.task == "funccomp":
            sym[t, 0] = vocab.bot        # the stored sentinel n becomes the shared BOT id
            targets[t, 0] = inst.y[0]
        else:
            targets[t, :len(x)] = inst.y
    return {"sym": sym, "pos": pos}, targets, mask


# ---------------------------------------------------------------- loss and accuracy

def bce_masked_loss(logits, targets):
    """Mean binary cross-entropy over positions whose target is 0 or 1."""
    t = np.asarray(targets)
    if np.shape(ad._val(logits)) != t.shape:
        raise ValueError("logits and targets differ in shape")
    keep = (t == 0) | (t == 1)
    if not keep.any():
        raise ValueError("no unmasked positions")
    idx = np.nonzero(keep)
    z = ad.select(logits, idx)
    y = t[idx].astype(np.float64)
    # softplus(z) - y z  ==  -[y log s(z) + (1-y) log(1-s(z))]
    return ad.mean(ad.softplus(z) - z * y)


def batch_accuracy(logits: np.ndarray, targets: np.ndarray) -> float | None:
    keep = (targets == 0) | (targets == 1)
    if not keep.any():
        return None
    pred = (np.asarray(logits) > 0).astype(np.int64)
    return float((pred[keep] == targets[keep]).mean())


def _batches(items: Sequence, size: int):
    for lo in range(0, len(items), size):
        yield items[lo:lo + size]


def evaluate(model: Model, data: Sequence[TaskInstance], batch_size: int, vocab: Vocab | None = None) -> float:
    """Unweighted mean of per-batch accuracies; batches with no labels are skipped."""
    return _evaluate(model, data, batch_size, vocab)[1]


def _evaluate(model, data, batch_size, vocab):
    if not data:
        raise ValueError("empty dataset")
    vocab = vocab or Vocab.for_dataset(data[0].task, data)
    accs, losses = [], []
    for batch in _batches(list(data), batch_size):
        fields, targets, mask = collate(batch, vocab)
        logits = model_logits(model.shape, model.params, fields, mask)
        acc = batch_accuracy(logits, targets)
        if acc is None:
            continue
        accs.append(acc)
        losses.append(float(bce_masked_loss(logits, targets)))
    if not accs:
        return math.nan, math.nan
    return float(np.mean(losses)), float(np.mean(accs))


def mean_of_batch_accuracies(per_batch: Sequence[float | None]) -> float:
    vals = [a for a in per_batch if a is not None]
    return float(np.mean(vals)) if vals else math.nan


def majority_baseline(data: Sequence[TaskInstance]) -> float:
    labels = np.array([v for i in data for v in i.y if v in (0, 1)])
    if labels.size == 0:
        return math.nan
    p = labels.mean()
    return float(max(p, 1 - p))


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamW:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """In-place decoupled-weight-decay Adam update. ``lr = 0`` leaves params untouched."""
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if self.lr == 0.0:
                continue
            p = params[name]
            p -= self.lr * ((m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p)


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: Model
    metrics: list[EpochMetrics]
    vocab: Vocab
    baseline: float


def split_dataset(data: Sequence[TaskInstance], val_fraction: float, seed: int):
    perm = np.random.default_rng(seed).permutation(len(data))
    n_val = int(round(len(data) * val_fraction))
    val = [data[i] for i in perm[:n_val]]
    train = [data[i] for i in perm[n_val:]]
    return train, val


def _check_task(config: TrainConfig, data: Sequence[TaskInstance]):
    if not data:
        raise ValueError("empty dataset")
    tasks = {i.task for i in data}
    if tasks != {config.task}:
        raise ValueError(f"dataset holds tasks {sorted(tasks)}, config expects {config.task!r}")
    if config.mechanism == "triangular" and config.task not in GRID_TASKS:
        raise ValueError("triangular attention needs a grid task (binrel or quotient)")


def train_model(config: TrainConfig, data: Sequence[TaskInstance]) -> TrainResult:
    _check_task(config, data)
    rng = np.random.default_rng(config.seed)
    train_set, val_set = split_dataset(data, config.val_fraction, config.seed)
    vocab = Vocab.for_dataset(config.task, data)
    shape = ModelShape(config.mechanism, config.d, config.heads, dict(vocab.sizes))
    model = Model.init(shape, rng)
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    names = model.names()
    metrics: list[EpochMetrics] = []
    writer = _MetricsWriter(config.metrics_path)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_set))
        for lo in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            fields, targets, mask = collate(batch, vocab)
            if not ((targets == 0) | (targets == 1)).any():
                continue

            def loss_fn(*leaves):
                params = dict(zip(names, leaves))
                logits = model_logits(shape, params, fields, mask, config.dropout, rng)
                return bce_masked_loss(logits, targets)

            _, grads = ad.value_and_grad(loss_fn, [model.params[k] for k in names])
            opt.step(model.params, dict(zip(names, grads)))
        train_loss, train_acc = _evaluate(model, train_set, config.batch_size, vocab)
        if val_set:
            val_loss, val_acc = _evaluate(model, val_set, config.batch_size, vocab)
        else:
            val_loss, val_acc = math.nan, math.nan
        row = EpochMetrics(epoch, train_loss, train_acc, val_loss, val_acc, time.perf_counter() - t0)
        metrics.append(row)
        writer.write(row)
        if config.stop_at_accuracy is not None and train_acc >= config.stop_at_accuracy:
            break
    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, model, config)
    return TrainResult(model, metrics, vocab, majority_baseline(train_set))


def train(config: TrainConfig, data: Sequence[TaskInstance]) -> list[EpochMetrics]:
    return train_model(config, data).metrics


def initial_loss(config: TrainConfig, data: Sequence[TaskInstance]) -> float:
    """Training-split loss of the freshly initialized model (same seed as ``train``)."""
    _check_task(config, data)
    rng = np.random.default_rng(config.seed)
    train_set, _ = split_dataset(data, config.val_fraction, config.seed)
    vocab = Vocab.for_dataset(config.task, data)
    model = Model.init(ModelShape(config.mechanism, config.d, config.heads, dict(vocab.sizes)), rng)
    return _evaluate(model, train_set, config.batch_size, vocab)[0]


# ---------------------------------------------------------------- persistence

METRIC_COLUMNS = ("epoch", "split", "loss", "accuracy", "seconds")


class _MetricsWriter:
    def __init__(self, path):
        self.path = Path(path) if path else None
        if self.path is not None:
            new = not self.path.exists() or self.path.stat().st_size == 0
            if new:
                with open(self.path, "w", newline="") as fh:
                    csv.writer(fh).writerow(METRIC_COLUMNS)

    def write(self, m: EpochMetrics):
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([m.epoch, "train", f"{m.train_loss:.8g}", f"{m.train_accuracy:.8g}", f"{m.seconds:.6f}"])
            w.writerow([m.epoch, "val", f"{m.val_loss:.8g}", f"{m.val_accuracy:.8g}", f"{m.seconds:.6f}"])


def save_checkpoint(path, model: Model, config: TrainConfig | None = None):
    """One JSON header line, then every parameter as little-endian float64, in header order."""
    header = {
        "format": "strassen-lab-checkpoint/1",
        "shape": dataclasses.asdict(model.shape),
        "config": dataclasses.asdict(config) if config else None,
        "params": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Model, TrainConfig | None]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("checkpoint is truncated")
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        if fh.read(1):
            raise ValueError("checkpoint has trailing bytes")
    config = TrainConfig(**header["config"]) if header.get("config") else None
    return Model(ModelShape(**header["shape"]), params), config
