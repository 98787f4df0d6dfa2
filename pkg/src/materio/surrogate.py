"""Multilayer perceptron surrogate of a substrate, trained with plain minibatch SGD.

Inputs are the per-pin frequency ranks of a stimulus (0 for grounded or
output pins); the network has one logistic output per pin and only the
output pin's prediction is trained.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from .signals import _middle_bits, lzw_code_count, lzw_reference_count, norm_peak_rows
from .stimulus import is_frequency
from .sweep import RecordLog

ACTIVATIONS = ("tanh", "relu", "logistic")
UNIT_CHOICES = (50, 100, 200, 500)
LAYER_CHOICES = tuple(range(1, 9))
LR_RANGE = (1e-3, 1e-1)
CHECKPOINT_FORMAT = "materio-mlp/1"


class TargetKind(str, Enum):
    RATIO = "Ratio"
    PEAK_FREQUENCY = "PeakFrequency"
    COMPRESSIBILITY = "Compressibility"


# --------------------------------------------------------------------------
# dataset

class EncodedSample(NamedTuple):
    x: np.ndarray
    target: float
    active_output: int


@dataclass
class Dataset:
    """Columnar training set: ``x`` (n, pins), ``target`` (n,), ``active`` (n,)."""

    x: np.ndarray
    target: np.ndarray
    active: np.ndarray
    frequency_set: Sequence[float] = ()
    target_kind: Optional[TargetKind] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        self.active = np.asarray(self.active, dtype=np.int64)
        if self.x.ndim != 2 or len(self.target) != len(self.x) or len(self.active) != len(self.x):
            raise ValueError("x, target and active must agree on the sample count")

    def __len__(self):
        return len(self.target)

    def __getitem__(self, i) -> EncodedSample:
        return EncodedSample(self.x[i], float(self.target[i]), int(self.active[i]))

    def __iter__(self) -> Iterator[EncodedSample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.target[idx], self.active[idx],
                       self.frequency_set, self.target_kind)

    @classmethod
    def from_samples(cls, samples: Sequence[EncodedSample]) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        return cls(np.stack([s.x for s in samples]), [s.target for s in samples],
                   [s.active_output for s in samples])


def encode_drives(drives, pin_count: int, frequency_set: Sequence[float]) -> np.ndarray:
    """1-based rank of each pin's frequency; 0 for grounded, floating and output pins."""
    rank = {float(f): i + 1 for i, f in enumerate(frequency_set)}
    x = np.zeros(pin_count)
    for p, d in drives.items():
        if is_frequency(d):
            try:
                x[p] = rank[float(d)]
            except KeyError:
                raise ValueError(f"drive {d} Hz on pin {p} is not in the frequency set") from None
    return x


def target_values(bits: np.ndarray, kind) -> np.ndarray:
    """Row-wise signal target of equal-length bit buffers."""
    kind = TargetKind(kind)
    bits = np.atleast_2d(bits)
    mid = _middle_bits(bits)
    if kind is TargetKind.RATIO:
        return mid.mean(axis=1)
    if kind is TargetKind.PEAK_FREQUENCY:
        if mid.shape[1] < 8:
            raise ValueError("middle section too short for a peak frequency target (need 8)")
        return norm_peak_rows(bits)
    ref = lzw_reference_count(mid.shape[1])
    return np.clip(np.array([lzw_code_count(r) for r in mid]) / ref, 0.0, 1.0)


def build_dataset(log: RecordLog, target_kind=TargetKind.RATIO) -> Dataset:
    if not log.records:
        raise ValueError("cannot build a dataset from an empty log")
    kind = TargetKind(target_kind)
    n, P = len(log.records), log.pin_count
    x = np.zeros((n, P))
    active = np.empty(n, dtype=np.int64)
    for i, rec in enumerate(log.records):
        x[i] = encode_drives(rec.config.drives, P, log.frequency_set)
        active[i] = rec.config.output_pin
    target = np.empty(n)
    by_len = {}
    for i, rec in enumerate(log.records):
        by_len.setdefault(len(rec.buffer), []).append(i)
    for idx in by_len.values():
        target[idx] = target_values(np.stack([log.records[i].buffer.bits for i in idx]), kind)
    return Dataset(x, target, active, list(log.frequency_set), kind)


# --------------------------------------------------------------------------
# network

def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0)
    if name == "logistic":
        # split form avoids overflow warnings for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1 / (1 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1 + ez)
        return out
    if name == "identity":
        return z.copy()
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, a):
    if name == "tanh":
        return 1 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "logistic":
        return a * (1 - a)
    return np.ones_like(z)


@dataclass
class Layer:
    W: np.ndarray   # (fan_in, fan_out)
    b: np.ndarray
    activation: str


class Mlp:
    """Stack of ``h = act(x W + b)`` layers; the last layer is the output."""

    def __init__(self, layers: List[Layer]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.W.shape[1] != nxt.W.shape[0]:
                raise ValueError("adjacent layer sizes do not compose")
        for l in layers:
            if l.b.shape != (l.W.shape[1],):
                raise ValueError("bias size must match the layer width")
            _act(l.activation, np.zeros(1))
        self.layers = layers

    @classmethod
    def create(cls, n_inputs=9, hidden=(100,), n_outputs=9, activation="tanh",
               output_activation="logistic", seed=0, dtype=np.float64) -> "Mlp":
        """Glorot-uniform weights, zero biases, drawn from ``default_rng(seed)``."""
        rng = np.random.default_rng(seed)
        sizes = [n_inputs, *hidden, n_outputs]
        layers = []
        for k, (fi, fo) in enumerate(zip(sizes, sizes[1:])):
            lim = math.sqrt(6.0 / (fi + fo))
            act = output_activation if k == len(sizes) - 2 else activation
            layers.append(Layer(rng.uniform(-lim, lim, (fi, fo)).astype(dtype),
                                np.zeros(fo, dtype=dtype), act))
        return cls(layers)

    @property
    def n_inputs(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def dtype(self):
        return self.layers[0].W.dtype

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])

    def parameters(self):
        for l in self.layers:
            yield l.W
            yield l.b

    def forward(self, x) -> np.ndarray:
        return self._forward(x)[0]

    def _forward(self, x):
        a = np.asarray(x, dtype=self.dtype)
        single = a.ndim == 1
        a = np.atleast_2d(a)
        if a.shape[1] != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {a.shape[1]}")
        cache = [(a, None)]
        for l in self.layers:
            z = a @ l.W + l.b
            a = _act(l.activation, z)
            cache.append((a, z))
        return (a[0] if single else a), cache

    def backward(self, cache, d_out):
        """Gradients of ``sum(d_out * output)`` w.r.t. every parameter and the inputs."""
        grads = []
        delta = np.asarray(d_out, dtype=self.dtype)
        for k in range(len(self.layers) - 1, -1, -1):
            l = self.layers[k]
            a, z = cache[k + 1]
            delta = delta * _act_grad(l.activation, z, a)
            a_prev = cache[k][0]
            grads.append((a_prev.T @ delta, delta.sum(axis=0)))
            delta = delta @ l.W.T
        grads.reverse()
        return grads, delta

    def input_jacobian(self, x, output_index: int) -> np.ndarray:
        """d output[output_index] / d x, row-wise."""
        y, cache = self._forward(np.atleast_2d(x))
        d = np.zeros_like(y)
        d[:, output_index] = 1.0
        return self.backward(cache, d)[1]

    def to_dict(self) -> dict:
        return {"format": CHECKPOINT_FORMAT,
                "layers": [{"activation": l.activation, "W": l.W.tolist(), "b": l.b.tolist()}
                           for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a {CHECKPOINT_FORMAT} checkpoint")
        return cls([Layer(np.array(l["W"], dtype=float).reshape(len(l["W"]), -1),
                          np.array(l["b"], dtype=float), l["activation"]) for l in d["layers"]])

    def __eq__(self, other):
        if not isinstance(other, Mlp) or len(self.layers) != len(other.layers):
            return False
        return all(a.activation == b.activation and np.array_equal(a.W, b.W)
                   and np.array_equal(a.b, b.b) for a, b in zip(self.layers, other.layers))


def forward(model: Mlp, x) -> np.ndarray:
    return model.forward(x)


def loss_and_grads(model: Mlp, x, target, active):
    """Half mean squared error on the active outputs, and its parameter gradients."""
    y, cache = model._forward(np.atleast_2d(x))
    n = y.shape[0]
    rows = np.arange(n)
    err = y[rows, active] - target
    d = np.zeros_like(y)
    d[rows, active] = err / n
    grads, _ = model.backward(cache, d)
    return 0.5 * float(np.mean(err * err)), grads


def active_mse(model: Mlp, data: Dataset, chunk: int = 4096) -> float:
    if len(data) == 0:
        return float("nan")
    sse = 0.0
    for lo in range(0, len(data), chunk):
        sl = slice(lo, lo + chunk)
        y = model.forward(data.x[sl])
        err = y[np.arange(y.shape[0]), data.active[sl]] - data.target[sl]
        sse += float(np.sum(err.astype(float) ** 2))
    return sse / len(data)


# --------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    minibatch: int = 100
    max_epochs: int = 100
    patience_epochs: int = 5
    validation_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.minibatch < 1 or self.max_epochs < 1 or self.patience_epochs < 1:
            raise ValueError("minibatch, max_epochs and patience_epochs must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


class HistoryRow(NamedTuple):
    epoch: int
    train_mse: float
    val_mse: float


class TrainingDiverged(FloatingPointError):
    pass


class EarlyStopping:
    """Tracks the best validation error; ``step`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def step(self, epoch: int, val: float) -> bool:
        if val < self.best:
            self.best, self.best_epoch, self.stale = val, epoch, 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class TrainResult:
    model: Mlp
    history: List[HistoryRow]
    best_epoch: int
    best_val_mse: float
    timed_out: bool = False

    def __iter__(self):
        return iter((self.model, self.history))


def split_indices(n: int, validation_fraction: float, seed: int):
    n_val = int(round(n * validation_fraction))
    n_val = min(max(n_val, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(model: Mlp, data, cfg: TrainConfig, split_seed: Optional[int] = None,
          deadline: Optional[float] = None) -> TrainResult:
    """Minibatch SGD with early stopping; returns a copy holding the best-validation weights.

    ``split_seed`` (default ``cfg.seed``) fixes the train/validation split;
    ``cfg.seed`` drives the per-epoch minibatch shuffles. ``deadline`` is a
    ``time.monotonic()`` value; once passed, training ends after the current
    epoch and the result is flagged ``timed_out``.
    """
    if not isinstance(data, Dataset):
        data = Dataset.from_samples(data)
    n = len(data)
    if n == 0:
        raise ValueError("empty training data")
    need = math.ceil(10 / cfg.validation_fraction - 1e-9)
    if n < need:
        raise ValueError(f"need at least {need} samples for a {cfg.validation_fraction:g} "
                         f"validation split, got {n}")
    if data.x.shape[1] != model.n_inputs or data.active.max() >= model.n_outputs:
        raise ValueError("dataset does not fit the model's input/output size")
    tr_idx, va_idx = split_indices(n, cfg.validation_fraction,
                                   cfg.seed if split_seed is None else split_seed)
    tr, va = data.subset(tr_idx), data.subset(va_idx)
    xt = tr.x.astype(model.dtype)
    tt = tr.target.astype(model.dtype)
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    best = model.copy()
    stopper = EarlyStopping(cfg.patience_epochs)
    history: List[HistoryRow] = []
    lr = cfg.learning_rate
    timed_out = False
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(tr))
        for lo in range(0, len(order), cfg.minibatch):
            b = order[lo:lo + cfg.minibatch]
            loss, grads = loss_and_grads(model, xt[b], tt[b], tr.active[b])
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {lo // cfg.minibatch} "
                    f"(learning rate {lr:g}, {len(model.layers)} layers)")
            for layer, (gW, gb) in zip(model.layers, grads):
                layer.W -= lr * gW
                layer.b -= lr * gb
        train_mse, val_mse = active_mse(model, tr), active_mse(model, va)
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise TrainingDiverged(f"non-finite error after epoch {epoch} (learning rate {lr:g})")
        history.append(HistoryRow(epoch, train_mse, val_mse))
        improved = val_mse < stopper.best
        stop = stopper.step(epoch, val_mse)
        if improved:
            best = model.copy()
        if stop:
            break
        if deadline is not None and time.monotonic() > deadline and epoch < cfg.max_epochs:
            timed_out = True
            break
    return TrainResult(best, history, stopper.best_epoch, stopper.best, timed_out)


# --------------------------------------------------------------------------
# hyperparameter search

@dataclass(frozen=True)
class HyperDraw:
    learning_rate: float
    n_layers: int
    units_per_layer: int
    activation: str

    def __post_init__(self):
        lo, hi = LR_RANGE
        if not lo <= self.learning_rate <= hi:
            raise ValueError(f"learning rate {self.learning_rate} outside [{lo}, {hi}]")
        if self.n_layers not in LAYER_CHOICES:
            raise ValueError(f"n_layers must be in 1..8, got {self.n_layers}")
        if self.units_per_layer not in UNIT_CHOICES:
            raise ValueError(f"units_per_layer must be one of {UNIT_CHOICES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    def build(self, n_inputs=9, n_outputs=9, seed=0, dtype=np.float64) -> Mlp:
        return Mlp.create(n_inputs, (self.units_per_layer,) * self.n_layers, n_outputs,
                          self.activation, "logistic", seed, dtype)


def draw_hyperparameters(n: int, seed: int) -> List[HyperDraw]:
    rng = np.random.default_rng(seed)
    lo, hi = np.log10(LR_RANGE)
    draws = []
    for _ in range(n):
        lr = float(10 ** rng.uniform(lo, hi))
        draws.append(HyperDraw(min(max(lr, LR_RANGE[0]), LR_RANGE[1]),
                               int(rng.choice(LAYER_CHOICES)), int(rng.choice(UNIT_CHOICES)),
                               str(rng.choice(ACTIVATIONS))))
    return draws


@dataclass
class HyperRun:
    index: int
    draw: HyperDraw
    val_mse: float
    history: List[HistoryRow]
    model: Optional[Mlp] = field(default=None, repr=False)
    error: str = ""
    timed_out: bool = False


@dataclass
class HyperSearchResult:
    best: HyperDraw
    best_val_mse: float
    best_index: int
    model: Mlp
    runs: List[HyperRun]

    @property
    def complete(self) -> bool:
        """False when a time budget cut some run short or skipped it."""
        return not any(r.timed_out for r in self.runs)


def hyper_search(data, n_runs: int, seed: int, max_epochs: int = 100,
                 split_seed: Optional[int] = None, dtype=np.float64,
                 validation_fraction: float = 0.10,
                 time_budget_s: Optional[float] = None) -> HyperSearchResult:
    """Random search; the winner has the lowest best-epoch validation MSE (ties: lowest index).

    Each draw ``k`` initialises from ``SeedSequence([seed, k])``; all draws share the
    same train/validation split. Diverged runs score ``inf``. With
    ``time_budget_s`` the search stops training once the budget is spent:
    the interrupted run keeps its best epoch so far, later runs are skipped
    (scored ``inf``), and all of them are flagged ``timed_out``. The first
    draw always trains for at least one epoch.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    if not isinstance(data, Dataset):
        data = Dataset.from_samples(data)
    split_seed = seed if split_seed is None else split_seed
    deadline = None if time_budget_s is None else time.monotonic() + time_budget_s
    runs = []
    for k, draw in enumerate(draw_hyperparameters(n_runs, seed)):
        if k > 0 and deadline is not None and time.monotonic() > deadline:
            runs.append(HyperRun(k, draw, math.inf, [], None, "skipped: time budget spent", True))
            continue
        run_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        model = draw.build(data.x.shape[1], data.x.shape[1], run_seed, dtype)
        cfg = TrainConfig(draw.learning_rate, max_epochs=max_epochs,
                          validation_fraction=validation_fraction, seed=run_seed)
        try:
            res = train(model, data, cfg, split_seed=split_seed, deadline=deadline)
            runs.append(HyperRun(k, draw, res.best_val_mse, res.history, res.model,
                                 timed_out=res.timed_out))
        except TrainingDiverged as exc:
            runs.append(HyperRun(k, draw, math.inf, [], None, str(exc)))
    best = min(runs, key=lambda r: (r.val_mse, r.index))
    if best.model is None:
        raise TrainingDiverged("every hyperparameter draw diverged")
    return HyperSearchResult(best.draw, best.val_mse, best.index, best.model, runs)


# --------------------------------------------------------------------------
# persistence

def save_model(model: Mlp, path, meta: Optional[dict] = None) -> None:
    d = model.to_dict()
    if meta:
        d["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        return Mlp.from_dict(json.load(fh))


def load_checkpoint_meta(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh).get("meta", {})


def write_history_csv(runs: Sequence[HyperRun], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "learning_rate", "n_layers", "units", "activation",
                    "epoch", "train_mse", "val_mse"])
        for r in runs:
            d = r.draw
            for h in r.history:
                w.writerow([r.index, repr(d.learning_rate), d.n_layers, d.units_per_layer,
                            d.activation, h.epoch, repr(h.train_mse), repr(h.val_mse)])
