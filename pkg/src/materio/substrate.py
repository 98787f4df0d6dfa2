"""Seeded electrical model of an electrode dish and its digital response.

The dish is a resistive network between electrode pins. Every driven pin
(square wave or grounded) sits behind a series resistor; the output pin sees
a load resistance to ground. Optional two-terminal nonlinear elements
(diode, threshold switch, memristive diode) sit on pin pairs, and the linear
conductances can decay over schedule time (drift).

Node voltages are found by nodal analysis, one solve per sample instant.
Nonlinear elements are piecewise linear; their on/off states are settled by
fixed-point iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .stimulus import SampleBuffer, StimulusConfig, is_frequency

MAX_FIXED_POINT_ITERS = 100
GMIN = 1e-12  # siemens from every node to ground; keeps floating nodes solvable
CHUNK = 16384

AGAR_SIEMENS = 1 / 22e3
MINIMAL_AGAR_SCALE = 0.02


class SubstrateKind(str, Enum):
    AGAR_ONLY = "AgarOnly"
    PHYSARUM_AGAR = "PhysarumAgar"
    PHYSARUM_MINIMAL_AGAR = "PhysarumMinimalAgar"
    CUSTOM = "Custom"


class ElementMode(str, Enum):
    DIODE = "Diode"            # I = g (V - Vth) for V > Vth
    THRESHOLD = "Threshold"    # I = g V for V > Vth
    MEMRISTIVE = "Memristive"  # I = x g (V - Vth) for V > Vth, x in [0, 1] evolves in time


@dataclass(frozen=True)
class NonlinearElement:
    """Forward-conducting element from ``edge[0]`` to ``edge[1]``.

    For memristive elements the state ``x`` starts each buffer at 1, falls at
    rate ``1/tau_off_s`` while the branch voltage exceeds ``cutoff_voltage``
    and recovers at rate ``1/tau_on_s`` otherwise (clipped to [0, 1]).
    """

    edge: Tuple[int, int]
    threshold_voltage: float
    mode: ElementMode
    conductance: float
    cutoff_voltage: Optional[float] = None
    tau_off_s: float = 1e-3
    tau_on_s: float = 2e-3

    def __post_init__(self):
        a, b = self.edge
        object.__setattr__(self, "edge", (int(a), int(b)))
        object.__setattr__(self, "mode", ElementMode(self.mode))
        if a == b:
            raise ValueError("element edge must join two different pins")
        if self.conductance < 0:
            raise ValueError("element conductance must be non-negative")
        if self.mode is ElementMode.MEMRISTIVE:
            if self.tau_off_s <= 0 or self.tau_on_s <= 0:
                raise ValueError("memristive time constants must be positive")

    @property
    def overdrive_voltage(self) -> float:
        return self.threshold_voltage if self.cutoff_voltage is None else self.cutoff_voltage

    def to_dict(self) -> dict:
        d = {"edge": list(self.edge), "threshold_voltage": self.threshold_voltage,
             "mode": self.mode.value, "conductance": self.conductance}
        if self.mode is ElementMode.MEMRISTIVE:
            d.update(cutoff_voltage=self.cutoff_voltage, tau_off_s=self.tau_off_s,
                     tau_on_s=self.tau_on_s)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearElement":
        d = dict(d)
        d["edge"] = tuple(d["edge"])
        return cls(**d)


@dataclass(frozen=True)
class Drift:
    half_life_s: float
    floor_fraction: float

    def __post_init__(self):
        if not self.half_life_s > 0:
            raise ValueError("drift half-life must be positive")
        if not 0 < self.floor_fraction <= 1:
            raise ValueError("drift floor must lie in (0, 1]")

    def factor(self, t_s) -> np.ndarray:
        return np.maximum(self.floor_fraction, np.exp2(-np.asarray(t_s, dtype=float) / self.half_life_s))


@dataclass(frozen=True, eq=False)
class SubstrateModel:
    kind: SubstrateKind
    pin_count: int
    conductance: np.ndarray
    nonlinear_elements: Tuple[NonlinearElement, ...] = ()
    drift: Optional[Drift] = None
    series_resistance_ohm: float = 4700.0
    high_level_v: float = 3.3
    low_level_v: float = 0.0
    digital_threshold_v: float = 0.75
    output_load_ohm: float = 1e6
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", SubstrateKind(self.kind))
        c = np.array(self.conductance, dtype=float)
        n = self.pin_count
        if n < 3:
            raise ValueError(f"pin_count must be at least 3, got {n}")
        if c.shape != (n, n):
            raise ValueError(f"conductance must be {n}x{n}, got {c.shape}")
        if not np.array_equal(c, c.T):
            raise ValueError("conductance matrix must be symmetric")
        if np.any(np.diag(c) != 0):
            raise ValueError("conductance matrix must have a zero diagonal")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("conductances must be finite and non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "conductance", c)
        elems = tuple(e if isinstance(e, NonlinearElement) else NonlinearElement.from_dict(e)
                      for e in self.nonlinear_elements)
        for e in elems:
            if max(e.edge) >= n:
                raise ValueError(f"element edge {e.edge} outside {n} pins")
        if self.kind is SubstrateKind.AGAR_ONLY and elems:
            raise ValueError("an AgarOnly substrate has no nonlinear elements")
        object.__setattr__(self, "nonlinear_elements", elems)
        if self.series_resistance_ohm <= 0 or self.output_load_ohm <= 0:
            raise ValueError("resistances must be positive")

    @property
    def has_memory(self) -> bool:
        return any(e.mode is ElementMode.MEMRISTIVE for e in self.nonlinear_elements)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "pin_count": self.pin_count,
            "conductance": self.conductance.tolist(),
            "nonlinear_elements": [e.to_dict() for e in self.nonlinear_elements],
            "drift": None if self.drift is None else {
                "half_life_s": self.drift.half_life_s, "floor_fraction": self.drift.floor_fraction},
            "series_resistance_ohm": self.series_resistance_ohm,
            "high_level_v": self.high_level_v,
            "low_level_v": self.low_level_v,
            "digital_threshold_v": self.digital_threshold_v,
            "output_load_ohm": self.output_load_ohm,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubstrateModel":
        d = dict(d)
        d["nonlinear_elements"] = tuple(NonlinearElement.from_dict(e)
                                        for e in d.get("nonlinear_elements", ()))
        if d.get("drift") is not None:
            d["drift"] = Drift(**d["drift"])
        return cls(**d)

    def replace(self, **changes) -> "SubstrateModel":
        kw = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "_cache"}
        kw.update(changes)
        return SubstrateModel(**kw)

    def __eq__(self, other):
        if not isinstance(other, SubstrateModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def _prepared(self):
        prep = self._cache.get("prep")
        if prep is None:
            prep = _Prepared(self)
            self._cache["prep"] = prep
        return prep


def save_substrate(model: SubstrateModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_substrate(path) -> SubstrateModel:
    return SubstrateModel.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# construction

def _grid_positions(n: int) -> np.ndarray:
    cols = int(np.ceil(np.sqrt(n)))
    return np.array([(i % cols, i // cols) for i in range(n)], dtype=float)


def _agar_network(n: int, rng: np.random.Generator) -> np.ndarray:
    pos = _grid_positions(n)
    c = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.hypot(*(pos[i] - pos[j])))
            jitter = float(rng.lognormal(0.0, 0.25))
            if d <= 1.5:
                c[i, j] = c[j, i] = AGAR_SIEMENS * jitter / d
    return c


def _physarum_elements(n: int, rng: np.random.Generator):
    k = int(rng.integers(3, n + 1))
    pins = [int(p) for p in rng.permutation(n)[:k]]
    edges = []
    for i in range(1, k):
        edges.append((pins[i], pins[int(rng.integers(0, i))]))
    for _ in range(int(rng.integers(0, k))):
        a, b = (int(p) for p in rng.choice(pins, size=2, replace=False))
        if (a, b) not in edges and (b, a) not in edges:
            edges.append((a, b))
    elements = []
    for a, b in edges:
        if rng.random() < 0.5:
            a, b = b, a
        mode = ElementMode.DIODE if rng.random() < 0.5 else ElementMode.THRESHOLD
        elements.append(NonlinearElement(
            edge=(a, b),
            threshold_voltage=float(rng.uniform(0.2, 1.2)),
            mode=mode,
            conductance=float(1 / rng.uniform(3.3e3, 15e3)),
        ))
    return tuple(elements)


def make_substrate(kind, pin_count: int = 9, seed: int = 0) -> SubstrateModel:
    """Build a seeded substrate of the given kind.

    AgarOnly is a purely linear resistive dish. PhysarumAgar adds diode and
    threshold elements along a random connected subgraph (the plasmodium's
    tubes) and drift. PhysarumMinimalAgar is the same with the agar
    background scaled down so that many pin pairs are effectively open.
    """
    kind = SubstrateKind(kind)
    if pin_count < 3:
        raise ValueError(f"pin_count must be at least 3, got {pin_count}")
    if kind is SubstrateKind.CUSTOM:
        raise ValueError("Custom substrates are built from a definition file, see load_substrate")
    rng = np.random.default_rng([int(seed), int(pin_count), list(SubstrateKind).index(kind)])
    c = _agar_network(pin_count, rng)
    if kind is SubstrateKind.AGAR_ONLY:
        return SubstrateModel(kind, pin_count, c, seed=int(seed))
    elements = _physarum_elements(pin_count, rng)
    if kind is SubstrateKind.PHYSARUM_MINIMAL_AGAR:
        c = c * MINIMAL_AGAR_SCALE
    return SubstrateModel(kind, pin_count, c, elements,
                          drift=Drift(half_life_s=3600.0, floor_fraction=0.1), seed=int(seed))


def crafted_substrate(name: str, pin_count: int = 9, half_life_s: float = 400.0) -> SubstrateModel:
    """Hand-built dishes with a known gate mechanism.

    ``"threshold"``: pins 0 and 1 reach output pin 2 through threshold
    switches, so the output only rises when enough current flows.

    ``"xor"``: pins 0 and 1 reach output pin 2 through drying linear
    tubes in parallel with weak threshold switches. While fresh, one high
    input lifts the output over the digital threshold (OR); once the tubes
    have dried past ``floor`` nothing does. A truth group whose mixed corners
    run early and whose TT corner runs late therefore reads as XOR.
    ``half_life_s`` should be a small fraction of the sweep span.

    ``"and"``: pins 1 and 2 reach output pin 4 through fatiguing memristive
    diodes that only pass short high phases; the output load is sized so
    both paths must conduct to cross the digital threshold.
    """
    n = pin_count
    weak = np.full((n, n), 1e-7)
    np.fill_diagonal(weak, 0.0)
    if name == "threshold":
        if n < 3:
            raise ValueError("needs at least 3 pins")
        c = weak.copy()
        elems = (
            NonlinearElement((0, 2), 0.6, ElementMode.THRESHOLD, 1 / 4.7e3),
            NonlinearElement((1, 2), 0.6, ElementMode.THRESHOLD, 1 / 4.7e3),
        )
        return SubstrateModel(SubstrateKind.PHYSARUM_AGAR, n, c, elems,
                              output_load_ohm=2.2e3, seed=0)
    if name == "xor":
        if n < 3:
            raise ValueError("needs at least 3 pins")
        c = weak.copy()
        c[0, 2] = c[2, 0] = c[1, 2] = c[2, 1] = 1 / 1e3
        elems = tuple(NonlinearElement((p, 2), 1.0, ElementMode.THRESHOLD, 1 / 220e3)
                      for p in (0, 1))
        return SubstrateModel(SubstrateKind.PHYSARUM_AGAR, n, c, elems,
                              drift=Drift(half_life_s, 0.005),
                              output_load_ohm=10e3, seed=0)
    if name == "and":
        if n < 5:
            raise ValueError("needs at least 5 pins")
        c = weak.copy()
        elems = tuple(
            NonlinearElement((p, 4), 0.3, ElementMode.MEMRISTIVE, 1 / 4.7e3,
                             cutoff_voltage=0.3, tau_off_s=1e-4, tau_on_s=2e-4)
            for p in (1, 2))
        return SubstrateModel(SubstrateKind.PHYSARUM_AGAR, n, c, elems,
                              output_load_ohm=2.2e3, seed=0)
    raise ValueError(f"unknown crafted substrate {name!r}; choose threshold, xor or and")


# --------------------------------------------------------------------------
# simulation

class _Prepared:
    def __init__(self, model: SubstrateModel):
        c = model.conductance
        lap = -c.copy()
        np.fill_diagonal(lap, c.sum(axis=1))
        self.laplacian = lap
        elems = model.nonlinear_elements
        self.ea = np.array([e.edge[0] for e in elems], dtype=int)
        self.eb = np.array([e.edge[1] for e in elems], dtype=int)
        self.g = np.array([e.conductance for e in elems], dtype=float)
        self.vth = np.array([e.threshold_voltage for e in elems], dtype=float)
        self.offset = np.array([e.mode is not ElementMode.THRESHOLD for e in elems], dtype=bool)
        self.memristive = np.array([e.mode is ElementMode.MEMRISTIVE for e in elems], dtype=bool)
        self.vcut = np.array([e.overdrive_voltage for e in elems], dtype=float)
        self.tau_off = np.array([e.tau_off_s for e in elems], dtype=float)
        self.tau_on = np.array([e.tau_on_s for e in elems], dtype=float)


def _validate(model: SubstrateModel, config: StimulusConfig, sample_rate_hz: float):
    n = model.pin_count
    if config.output_pin is None or not 0 <= config.output_pin < n:
        raise ValueError(f"config needs an output pin in 0..{n - 1}")
    for pin in config.drives:
        if pin >= n:
            raise ValueError(f"pin {pin} outside the {n}-pin substrate")
    fmax = config.max_frequency
    if sample_rate_hz < 2 * fmax:
        raise ValueError(f"sample rate {sample_rate_hz} Hz is below twice the highest drive ({fmax} Hz)")


def sample_count(duration_s: float, sample_rate_hz: float) -> int:
    n = int(round(duration_s * sample_rate_hz))
    if n <= 0:
        raise ValueError("duration and sample rate give an empty buffer")
    return n


def _levels(freqs: np.ndarray, fs: float, n_samples: int) -> np.ndarray:
    """(B, N, pins) bool: square wave high in the first half of each period, phase 0 at k = 0."""
    k = np.arange(n_samples, dtype=float)[None, :, None]
    f = freqs[:, None, :]
    return (f > 0) & (np.mod(k * f, fs) < fs / 2)


def _settle(prep: _Prepared, G0: np.ndarray, rhs0: np.ndarray, x: Optional[np.ndarray]):
    """Solve each system with nonlinear elements settled by fixed-point iteration.

    Returns node voltages (B, pins) and branch voltages (B, elements).
    """
    B = G0.shape[0]
    m = prep.g.size
    if m == 0:
        V = np.linalg.solve(G0, rhs0[..., None])[..., 0]
        return V, np.zeros((B, 0))
    if x is None:
        x = np.ones((B, m))
    V = np.empty_like(rhs0)
    vb_out = np.empty((B, m))
    on = np.zeros((B, m), dtype=bool)
    active = np.arange(B)
    for _ in range(MAX_FIXED_POINT_ITERS):
        w = on[active] * prep.g * x[active]
        G = G0[active].copy()
        rhs = rhs0[active].copy()
        for e in range(m):
            a, b, we = prep.ea[e], prep.eb[e], w[:, e]
            G[:, a, a] += we
            G[:, b, b] += we
            G[:, a, b] -= we
            G[:, b, a] -= we
            if prep.offset[e]:
                rhs[:, a] -= we * prep.vth[e]
                rhs[:, b] += we * prep.vth[e]
        Va = np.linalg.solve(G, rhs[..., None])[..., 0]
        vb = Va[:, prep.ea] - Va[:, prep.eb]
        old = on[active]
        new = np.where(vb > prep.vth, True, np.where(vb < prep.vth, False, old))
        changed = np.any(new != old, axis=1)
        done = active[~changed]
        V[done] = Va[~changed]
        vb_out[done] = vb[~changed]
        if not changed.any():
            active = active[:0]
            break
        on[active] = new
        V[active] = Va
        vb_out[active] = vb
        active = active[changed]
    return V, vb_out


def _base_systems(model, prep, src, out, scale):
    """Conductance matrices (B, n, n) without nonlinear elements."""
    n = model.pin_count
    B = src.shape[0]
    G = scale[:, None, None] * prep.laplacian[None, :, :]
    diag = src + GMIN
    diag[np.arange(B), out] += 1.0 / model.output_load_ohm
    G[:, np.arange(n), np.arange(n)] += diag
    return G


def _analog_group(model: SubstrateModel, configs: Sequence[StimulusConfig], fs: float,
                  n_samples: int) -> np.ndarray:
    """Output-pin voltage (B, N) for configs sharing a sample rate and length."""
    prep = model._prepared()
    n = model.pin_count
    B = len(configs)
    freqs = np.zeros((B, n))
    src = np.zeros((B, n))
    grounded = np.zeros((B, n), dtype=bool)
    out = np.array([c.output_pin for c in configs], dtype=int)
    for i, c in enumerate(configs):
        for pin, drive in c.drives.items():
            src[i, pin] = 1.0 / model.series_resistance_ohm
            if is_frequency(drive):
                freqs[i, pin] = drive
            else:
                grounded[i, pin] = True
    t0 = np.array([c.scheduled_time_s for c in configs], dtype=float)
    scale = model.drift.factor(t0) if model.drift is not None else np.ones(B)
    high, low = model.high_level_v, model.low_level_v
    driven_freq = freqs > 0
    analog = np.empty((B, n_samples))

    def source_rhs(bits, rows):
        u = np.where(driven_freq[rows], np.where(bits, high, low), 0.0)
        return src[rows] * u

    if not model.has_memory:
        # At most 2**n distinct level patterns per config: solve each once.
        for lo in range(0, B, max(1, CHUNK // 4)):
            rows = np.arange(lo, min(B, lo + max(1, CHUNK // 4)))
            lv = _levels(freqs[rows], fs, n_samples)
            codes = (lv * (1 << np.arange(n))).sum(axis=-1)
            keys = rows[:, None].astype(np.int64) * (1 << n) + codes
            uniq, inv = np.unique(keys, return_inverse=True)
            ub = uniq >> n
            ucode = uniq & ((1 << n) - 1)
            ubits = ((ucode[:, None] >> np.arange(n)) & 1).astype(bool)
            vout = np.empty(uniq.size)
            for s in range(0, uniq.size, CHUNK):
                sl = slice(s, s + CHUNK)
                b = ub[sl]
                G0 = _base_systems(model, prep, src[b], out[b], scale[b])
                V, _ = _settle(prep, G0, source_rhs(ubits[sl], b), None)
                vout[sl] = V[np.arange(b.size), out[b]]
            analog[rows] = vout[inv.reshape(rows.size, n_samples)]
        return analog

    dt = 1.0 / fs
    for lo in range(0, B, CHUNK):
        rows = np.arange(lo, min(B, lo + CHUNK))
        lv = _levels(freqs[rows], fs, n_samples)
        G0 = _base_systems(model, prep, src[rows], out[rows], scale[rows])
        x = np.ones((rows.size, prep.g.size))
        mem = prep.memristive
        for k in range(n_samples):
            V, vb = _settle(prep, G0, source_rhs(lv[:, k, :], rows), x)
            analog[rows, k] = V[np.arange(rows.size), out[rows]]
            over = vb > prep.vcut
            xm = np.where(over, x - dt / prep.tau_off, x + dt / prep.tau_on)
            x = np.where(mem, np.clip(xm, 0.0, 1.0), x)
    return analog


def simulate_many(model: SubstrateModel, configs: Sequence[StimulusConfig], duration_s: float,
                  sample_rates: Sequence[float]) -> list:
    """Simulate many configs at once; element ``i`` equals ``simulate(model, configs[i], ...)``."""
    if len(configs) != len(sample_rates):
        raise ValueError("one sample rate per config is required")
    for c, fs in zip(configs, sample_rates):
        _validate(model, c, fs)
    groups = {}
    for i, fs in enumerate(sample_rates):
        groups.setdefault(float(fs), []).append(i)
    result = [None] * len(configs)
    for fs, idx in groups.items():
        n_samples = sample_count(duration_s, fs)
        analog = _analog_group(model, [configs[i] for i in idx], fs, n_samples)
        bits = (analog >= model.digital_threshold_v).astype(np.uint8)
        for row, i in enumerate(idx):
            result[i] = SampleBuffer(bits[row], fs, configs[i].scheduled_time_s)
    return result


def simulate(model: SubstrateModel, config: StimulusConfig, duration_s: float,
             sample_rate_hz: float) -> SampleBuffer:
    """Thresholded output-pin response of ``model`` to ``config``."""
    return simulate_many(model, [config], duration_s, [sample_rate_hz])[0]


def analog_response(model: SubstrateModel, config: StimulusConfig, duration_s: float,
                    sample_rate_hz: float) -> np.ndarray:
    """Output-pin voltage before the digital threshold (diagnostics and tests)."""
    _validate(model, config, sample_rate_hz)
    return _analog_group(model, [config], float(sample_rate_hz),
                         sample_count(duration_s, sample_rate_hz))[0]
