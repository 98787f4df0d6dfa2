"""Exhaustive stimulus sweeps in the style of a pin scheduler.

A sweep enumerates every (output pin, ordered frequency pair, binary input
word) combination, shuffles the order, stamps each configuration with a
schedule time and records the substrate's digital response.

The JSON-lines log format (one object per line) is::

    {"format": "materio-recordlog/1", "pin_count": 9, "frequency_set": [...],
     "seed": 1, "formula_count": 27648, "record_count": 27648,
     "buffer_duration_s": 0.032, "seconds_per_config": 0.15, "label": "..."}
    {"i": 0, "t": 0.0, "wall": 0.032, "out": 4, "pair": [250.0, 2500.0],
     "drives": [250.0, 2500.0, ..., null, ...], "rate": 5000.0, "n": 160,
     "rle": "00..."}

``drives`` has one entry per pin: a frequency in hertz, ``"G"`` for a
grounded pin, or ``null`` for the output pin and floating pins. ``rle`` is the
bit buffer run-length encoded as hex: the first byte is the value of the
first bit, followed by each run length as an unsigned LEB128 varint.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .stimulus import GROUNDED, SampleBuffer, StimulusConfig, is_frequency
from .substrate import SubstrateModel, simulate_many

LOG_FORMAT = "materio-recordlog/1"
DEFAULT_FREQUENCIES = (250.0, 500.0, 1000.0, 2500.0)
DEFAULT_DURATION_S = 0.032
DEFAULT_SECONDS_PER_CONFIG = 0.15


class LogFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ResponseRecord:
    config: StimulusConfig
    buffer: SampleBuffer
    wall_time_s: float

    def __post_init__(self):
        if self.buffer.start_time_s != self.config.scheduled_time_s:
            raise ValueError("buffer start time must equal the config's scheduled time")


@dataclass
class RecordLog:
    records: List[ResponseRecord]
    frequency_set: Sequence[float]
    pin_count: int
    seed: Optional[int] = None
    buffer_duration_s: float = DEFAULT_DURATION_S
    seconds_per_config: float = DEFAULT_SECONDS_PER_CONFIG
    label: str = ""

    def __post_init__(self):
        fs = [float(f) for f in self.frequency_set]
        if any(f <= 0 for f in fs) or any(b <= a for a, b in zip(fs, fs[1:])):
            raise ValueError("frequency_set must be strictly ascending and positive")
        self.frequency_set = fs

    def __len__(self):
        return len(self.records)

    @property
    def formula_count(self) -> int:
        return config_count(self.pin_count, len(self.frequency_set))

    def header(self) -> dict:
        return {
            "format": LOG_FORMAT,
            "pin_count": self.pin_count,
            "frequency_set": list(self.frequency_set),
            "seed": self.seed,
            "formula_count": self.formula_count,
            "record_count": len(self.records),
            "buffer_duration_s": self.buffer_duration_s,
            "seconds_per_config": self.seconds_per_config,
            "label": self.label,
        }


def config_count(pin_count: int, n_frequencies: int) -> int:
    """Closed-form sweep size: outputs x ordered pairs x input words."""
    return pin_count * n_frequencies * (n_frequencies - 1) * 2 ** (pin_count - 1)


def enumerate_configs(pin_count: int, frequency_set: Sequence[float],
                      buffer_duration_s: float = DEFAULT_DURATION_S,
                      seconds_per_config: float = DEFAULT_SECONDS_PER_CONFIG,
                      seed: Optional[int] = None) -> List[StimulusConfig]:
    """Every output pin x ordered (f_false, f_true) pair x binary word over the input pins.

    Bit ``j`` of the word drives the ``j``-th input pin (ascending pin order) at
    ``f_true`` when set, else at ``f_false``. With ``seed`` the list is shuffled
    first; schedule times are then assigned in list order.
    """
    if pin_count < 3:
        raise ValueError(f"pin_count must be at least 3, got {pin_count}")
    freqs = [float(f) for f in frequency_set]
    if len(freqs) < 2 or len(set(freqs)) != len(freqs):
        raise ValueError("need at least two distinct frequencies")
    if seconds_per_config < buffer_duration_s:
        raise ValueError("seconds_per_config must cover the buffer duration")
    configs = []
    for out in range(pin_count):
        inputs = [p for p in range(pin_count) if p != out]
        for f_false, f_true in itertools.permutations(freqs, 2):
            for word in range(2 ** len(inputs)):
                drives = {p: (f_true if (word >> j) & 1 else f_false)
                          for j, p in enumerate(inputs)}
                configs.append(StimulusConfig(drives, out, (f_false, f_true)))
    if seed is not None:
        configs = shuffle_order(configs, seed)
    return assign_schedule(configs, seconds_per_config)


def shuffle_order(configs: Sequence, seed: int) -> list:
    """Seeded uniform permutation."""
    perm = np.random.default_rng(seed).permutation(len(configs))
    return [configs[i] for i in perm]


def assign_schedule(configs: Iterable[StimulusConfig], seconds_per_config: float,
                    start_s: float = 0.0) -> List[StimulusConfig]:
    return [c.with_time(start_s + i * seconds_per_config) for i, c in enumerate(configs)]


def sample_rate_for(config: StimulusConfig) -> float:
    """Twice the highest drive frequency in the config."""
    fmax = config.max_frequency
    if fmax <= 0:
        raise ValueError("config has no frequency drive to set a sample rate from")
    return 2.0 * fmax


def run_sweep(model: SubstrateModel, configs: Sequence[StimulusConfig],
              buffer_duration_s: float = DEFAULT_DURATION_S,
              frequency_set: Optional[Sequence[float]] = None,
              seed: Optional[int] = None,
              seconds_per_config: float = DEFAULT_SECONDS_PER_CONFIG,
              label: str = "") -> RecordLog:
    """Simulate every config at its scheduled time and collect the log in schedule order."""
    if not configs:
        raise ValueError("run_sweep needs at least one config")
    rates = []
    for i, c in enumerate(configs):
        try:
            rates.append(sample_rate_for(c))
        except ValueError as exc:
            raise ValueError(f"config {i}: {exc}") from exc
    try:
        buffers = simulate_many(model, configs, buffer_duration_s, rates)
    except ValueError:
        for i, (c, fs) in enumerate(zip(configs, rates)):
            try:
                simulate_many(model, [c], buffer_duration_s, [fs])
            except ValueError as exc:
                raise ValueError(f"config {i}: {exc}") from exc
        raise
    if frequency_set is None:
        frequency_set = sorted({d for c in configs for d in c.drives.values() if is_frequency(d)})
    records = [ResponseRecord(c, b, c.scheduled_time_s + buffer_duration_s)
               for c, b in zip(configs, buffers)]
    return RecordLog(records, frequency_set, model.pin_count, seed, buffer_duration_s,
                     seconds_per_config, label)


# --------------------------------------------------------------------------
# persistence

def rle_encode(bits) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    out = bytearray([int(bits[0])])
    edges = np.flatnonzero(np.diff(bits)) + 1
    bounds = np.concatenate(([0], edges, [bits.size]))
    for run in np.diff(bounds):
        run = int(run)
        while True:
            byte = run & 0x7F
            run >>= 7
            if run:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return out.hex()


def rle_decode(text: str, n: int) -> np.ndarray:
    data = bytes.fromhex(text)
    if not data or data[0] > 1:
        raise ValueError("bad run-length header")
    bit = data[0]
    runs, value, shift = [], 0, 0
    for byte in data[1:]:
        value |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
        else:
            runs.append(value)
            value, shift = 0, 0
    if shift:
        raise ValueError("truncated run length")
    if sum(runs) != n or any(r == 0 for r in runs):
        raise ValueError(f"run lengths do not add up to {n} bits")
    bits = np.empty(n, dtype=np.uint8)
    pos = 0
    for r in runs:
        bits[pos:pos + r] = bit
        pos += r
        bit ^= 1
    return bits


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _record_line(i: int, rec: ResponseRecord, pin_count: int) -> str:
    c = rec.config
    drives = [c.drives.get(p) for p in range(pin_count)]
    return _dumps({
        "i": i,
        "t": c.scheduled_time_s,
        "wall": rec.wall_time_s,
        "out": c.output_pin,
        "pair": None if c.freq_pair is None else list(c.freq_pair),
        "drives": drives,
        "rate": rec.buffer.sample_rate_hz,
        "n": len(rec.buffer),
        "rle": rle_encode(rec.buffer.bits),
    })


def write_log(log: RecordLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(log.header()) + "\n")
        for i, rec in enumerate(log.records):
            fh.write(_record_line(i, rec, log.pin_count) + "\n")


def _parse_record(obj: dict, pin_count: int) -> ResponseRecord:
    drives = {}
    for p, d in enumerate(obj["drives"]):
        if d is None:
            continue
        drives[p] = GROUNDED if d == GROUNDED else float(d)
    pair = obj.get("pair")
    config = StimulusConfig(drives, int(obj["out"]),
                            None if pair is None else (float(pair[0]), float(pair[1])),
                            float(obj["t"]))
    bits = rle_decode(obj["rle"], int(obj["n"]))
    buf = SampleBuffer(bits, float(obj["rate"]), config.scheduled_time_s)
    return ResponseRecord(config, buf, float(obj["wall"]))


def read_log(path) -> RecordLog:
    """Parse a JSON-lines record log; malformed lines raise :class:`LogFormatError`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LogFormatError(1, "missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LogFormatError(1, f"header is not JSON ({exc.msg})") from None
    if not isinstance(header, dict) or header.get("format") != LOG_FORMAT:
        raise LogFormatError(1, f"expected a {LOG_FORMAT} header")
    try:
        pin_count = int(header["pin_count"])
        freqs = header["frequency_set"]
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(1, f"bad header field {exc}") from None
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(_parse_record(obj, pin_count))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(lineno, f"malformed record ({exc})") from None
    return RecordLog(records, freqs, pin_count, header.get("seed"),
                     float(header.get("buffer_duration_s", DEFAULT_DURATION_S)),
                     float(header.get("seconds_per_config", DEFAULT_SECONDS_PER_CONFIG)),
                     header.get("label", ""))
