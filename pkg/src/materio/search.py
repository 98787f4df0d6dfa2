"""Gradient search over a surrogate's configuration inputs for Boolean gates.

Inputs A and B carry the gate inputs (True as rank 4, False as rank 1); the
remaining non-output pins are continuous configuration values theta that
gradient descent moves until the surrogate's output at the four truth-table
corners approaches the encoded gate outputs (True 0.5, False 0.0).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .gates import CORNERS, SEARCH_GATES, GateType, gate_by_name
from .stimulus import StimulusConfig
from .surrogate import Mlp

INPUT_TRUE, INPUT_FALSE = 4.0, 1.0
OUTPUT_TRUE, OUTPUT_FALSE = 0.5, 0.0
THETA_LOW, THETA_HIGH = 1, 4
DEFAULT_STEP = 0.1
MAX_HALVINGS = 10


class SearchAborted(FloatingPointError):
    pass


@dataclass(frozen=True)
class Allocation:
    input_a: int
    input_b: int
    output: int

    def __post_init__(self):
        if len({self.input_a, self.input_b, self.output}) != 3:
            raise ValueError(f"allocation pins must be distinct: {self}")
        if min(self.input_a, self.input_b, self.output) < 0:
            raise ValueError(f"negative pin in allocation {self}")

    def config_pins(self, pin_count: int) -> List[int]:
        if max(self.input_a, self.input_b, self.output) >= pin_count:
            raise ValueError(f"allocation {self} out of range for {pin_count} pins")
        used = {self.input_a, self.input_b, self.output}
        return [p for p in range(pin_count) if p not in used]

    def swapped(self) -> "Allocation":
        return Allocation(self.input_b, self.input_a, self.output)


@dataclass(frozen=True)
class GateTask:
    gate: GateType

    def __post_init__(self):
        g = gate_by_name(self.gate)
        if g not in SEARCH_GATES:
            names = ", ".join(x.short_name for x in SEARCH_GATES)
            raise ValueError(f"gate {g.name!r} is not searchable; choose one of {names}")
        object.__setattr__(self, "gate", g)

    @property
    def targets(self) -> np.ndarray:
        return np.where(self.gate.truth_row, OUTPUT_TRUE, OUTPUT_FALSE)

    @property
    def corner_inputs(self) -> np.ndarray:
        """(4, 2) encoded (A, B) values in FF, FT, TF, TT order."""
        return np.array([[INPUT_TRUE if a else INPUT_FALSE, INPUT_TRUE if b else INPUT_FALSE]
                         for a, b in CORNERS])


def _corner_batch(model: Mlp, alloc: Allocation, thetas: np.ndarray, task: GateTask):
    """(S, 4, pins) network inputs for S theta rows."""
    P = model.n_inputs
    cfg = alloc.config_pins(P)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != len(cfg):
        raise ValueError(f"theta needs {len(cfg)} values, got {thetas.shape[1]}")
    if alloc.output >= model.n_outputs:
        raise ValueError(f"output pin {alloc.output} out of range")
    S = thetas.shape[0]
    X = np.zeros((S, 4, P))
    X[:, :, cfg] = thetas[:, None, :]
    ab = task.corner_inputs
    X[:, :, alloc.input_a] = ab[:, 0]
    X[:, :, alloc.input_b] = ab[:, 1]
    return X, cfg


def corner_outputs(model: Mlp, alloc: Allocation, theta, task: GateTask) -> np.ndarray:
    X, _ = _corner_batch(model, alloc, theta, task)
    y = model.forward(X.reshape(-1, X.shape[2]))
    return y[:, alloc.output].reshape(X.shape[0], 4).astype(float)


def batch_error_and_gradient(model: Mlp, alloc: Allocation, thetas, task: GateTask,
                             need_grad: bool = True):
    """Gate error (S,) and its theta gradient (S, n_config) for S theta rows."""
    X, cfg = _corner_batch(model, alloc, thetas, task)
    S = X.shape[0]
    y, cache = model._forward(X.reshape(-1, X.shape[2]))
    f = y[:, alloc.output].reshape(S, 4).astype(float)
    resid = f - task.targets
    err = 0.5 * np.sum(resid * resid, axis=1)
    if not need_grad:
        return err, None
    d = np.zeros_like(y)
    d[:, alloc.output] = resid.reshape(-1)
    _, dx = model.backward(cache, d)
    grad = dx.reshape(S, 4, -1)[:, :, cfg].sum(axis=1).astype(float)
    return err, grad


def gate_error(model: Mlp, alloc: Allocation, theta, task: GateTask) -> float:
    """Sum over the four corners of half the squared distance to the encoded gate output."""
    err, _ = batch_error_and_gradient(model, alloc, theta, task, need_grad=False)
    return float(err[0])


def config_gradient(model: Mlp, alloc: Allocation, theta, task: GateTask) -> np.ndarray:
    _, grad = batch_error_and_gradient(model, alloc, theta, task)
    return grad[0]


def _descend(model, alloc, thetas, task, iters, step, max_halvings):
    """Row-wise gradient descent with step halving; rows that go non-finite are frozen.

    Returns (thetas, errors, alive).
    """
    th = np.array(thetas, dtype=float, copy=True)
    err, grad = batch_error_and_gradient(model, alloc, th, task)
    alive = np.isfinite(err) & np.all(np.isfinite(grad), axis=1)
    for _ in range(iters):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        s = np.full(rows.size, float(step))
        pending = np.ones(rows.size, dtype=bool)
        new_th = th[rows].copy()
        new_err = err[rows].copy()
        for h in range(max_halvings + 1):
            idx = np.flatnonzero(pending)
            cand = th[rows[idx]] - s[idx, None] * grad[rows[idx]]
            e, _ = batch_error_and_gradient(model, alloc, cand, task, need_grad=False)
            bad = ~np.isfinite(e)
            if bad.any():
                alive[rows[idx[bad]]] = False
                pending[idx[bad]] = False
            ok = np.isfinite(e) & (e <= err[rows[idx]])
            new_th[idx[ok]] = cand[ok]
            new_err[idx[ok]] = e[ok]
            pending[idx[ok]] = False
            if not pending.any():
                break
            s[pending] *= 0.5
        # rows still pending after every halving keep their position
        moved = alive[rows]
        th[rows[moved]] = new_th[moved]
        if moved.any():
            e2, g2 = batch_error_and_gradient(model, alloc, th[rows[moved]], task)
            err[rows[moved]] = e2
            grad[rows[moved]] = g2
            fin = np.isfinite(e2) & np.all(np.isfinite(g2), axis=1)
            alive[rows[moved][~fin]] = False
    return th, err, alive


def local_search(model: Mlp, alloc: Allocation, theta0, task: GateTask, iters: int,
                 step: float = DEFAULT_STEP, max_halvings: int = MAX_HALVINGS) -> np.ndarray:
    """``iters`` descent steps ``theta -= step * grad``; a step that would raise the
    error is halved up to ``max_halvings`` times and otherwise skipped."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    th, err, alive = _descend(model, alloc, np.atleast_2d(theta0), task, iters, step, max_halvings)
    if not alive[0]:
        raise SearchAborted(f"non-finite gate error during local search from {theta0}")
    return th[0]


def discretize(theta) -> np.ndarray:
    """Round half away from zero, then clip to the drive ranks 1..4."""
    t = np.asarray(theta, dtype=float)
    r = np.sign(t) * np.floor(np.abs(t) + 0.5)
    return np.clip(r, THETA_LOW, THETA_HIGH).astype(np.int64)


@dataclass
class SearchResult:
    allocation: Allocation
    gate: GateType
    theta_continuous: np.ndarray
    theta_discrete: np.ndarray
    error_continuous: float
    error_discrete: float
    truth_outputs: np.ndarray        # surrogate output at FF, FT, TF, TT for theta_discrete
    start_index: int = -1
    ok: bool = True

    @property
    def theta(self) -> np.ndarray:
        return self.theta_discrete


def multistart_search(model: Mlp, alloc: Allocation, task: GateTask, n_starts: int = 1000,
                      probe_iters: int = 10, refine_iters: int = 500, seed: int = 0,
                      step: float = DEFAULT_STEP) -> SearchResult:
    """Probe ``n_starts`` uniform draws from [1, 4]^6 briefly, refine the best one."""
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    task = task if isinstance(task, GateTask) else GateTask(task)
    n_cfg = len(alloc.config_pins(model.n_inputs))
    rng = np.random.default_rng(seed)
    starts = rng.uniform(THETA_LOW, THETA_HIGH, size=(n_starts, n_cfg))
    probed, err, alive = _descend(model, alloc, starts, task, probe_iters, step, MAX_HALVINGS)
    if not alive.any():
        nan = np.full(n_cfg, np.nan)
        return SearchResult(alloc, task.gate, nan, np.full(n_cfg, THETA_LOW), math.inf,
                            math.inf, np.full(4, np.nan), -1, False)
    masked = np.where(alive, err, np.inf)
    best = int(np.argmin(masked))      # argmin returns the lowest index on ties
    th, e, ok = _descend(model, alloc, probed[best:best + 1], task, refine_iters, step,
                         MAX_HALVINGS)
    if not ok[0]:
        th, e = probed[best:best + 1], err[best:best + 1]
    theta_c = th[0]
    theta_d = discretize(theta_c)
    return SearchResult(alloc, task.gate, theta_c, theta_d, float(e[0]),
                        gate_error(model, alloc, theta_d, task),
                        corner_outputs(model, alloc, theta_d, task)[0], best, True)


def corner_stimuli(alloc: Allocation, theta_discrete, frequency_set: Sequence[float],
                   pin_count: int = 9) -> List[StimulusConfig]:
    """The four physical stimuli (FF, FT, TF, TT) for a discrete configuration.

    Rank ``r`` drives at ``frequency_set[r - 1]``; inputs use the lowest
    frequency for False and the highest for True, so classify the responses
    against that pair. Config pins may use any rank, so ``freq_pair`` is unset.
    """
    freqs = sorted(float(f) for f in frequency_set)
    ranks = np.asarray(theta_discrete)
    pins = alloc.config_pins(pin_count)
    if ranks.shape != (len(pins),) or ranks.min() < 1 or ranks.max() > len(freqs):
        raise ValueError(f"theta must hold {len(pins)} ranks in 1..{len(freqs)}")
    base = {p: freqs[int(r) - 1] for p, r in zip(pins, ranks)}
    out = []
    for a, b in CORNERS:
        drives = dict(base)
        drives[alloc.input_a] = freqs[-1] if a else freqs[0]
        drives[alloc.input_b] = freqs[-1] if b else freqs[0]
        out.append(StimulusConfig(drives, alloc.output))
    return out


def default_allocations(pin_count: int = 9, output_pins: Optional[Sequence[int]] = None
                        ) -> List[Allocation]:
    """Every output pin with every unordered input pair from the other pins.

    ``output_pins`` restricts which pins may serve as the output.
    """
    outs = range(pin_count) if output_pins is None else sorted(set(output_pins))
    allocs = []
    for out in outs:
        others = [p for p in range(pin_count) if p != out]
        for a, b in itertools.combinations(others, 2):
            allocs.append(Allocation(a, b, out))
    return allocs


@dataclass
class AllocationSearch:
    best: SearchResult
    results: List[SearchResult] = field(default_factory=list)


def search_all_allocations(model: Mlp, task, alloc_set: Optional[Sequence[Allocation]] = None,
                           n_starts: int = 1000, probe_iters: int = 10, refine_iters: int = 500,
                           seed: int = 0, step: float = DEFAULT_STEP) -> AllocationSearch:
    """Multistart search on every allocation; best = lowest discrete error (ties: first)."""
    task = task if isinstance(task, GateTask) else GateTask(task)
    allocs = default_allocations(model.n_inputs) if alloc_set is None else list(alloc_set)
    if not allocs:
        raise ValueError("alloc_set must not be empty")
    results = []
    for k, alloc in enumerate(allocs):
        sub = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        results.append(multistart_search(model, alloc, task, n_starts, probe_iters,
                                         refine_iters, sub, step))
    best = min(range(len(results)), key=lambda i: (results[i].error_discrete, i))
    return AllocationSearch(results[best], results)
