"""Stimulus configurations and sampled responses shared by the simulator and the harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

import numpy as np

GROUNDED = "G"

Drive = Union[float, str]


def is_frequency(drive: Drive) -> bool:
    return not isinstance(drive, str)


@dataclass(frozen=True)
class StimulusConfig:
    """Per-pin drive assignment for one measurement.

    ``drives`` maps pin index to either a square-wave frequency in hertz or
    :data:`GROUNDED`. Pins absent from ``drives`` (other than the output pin)
    are left floating. ``freq_pair`` is ``(f_false, f_true)`` for sweep
    configurations; ad-hoc stimuli may leave it ``None``.
    """

    drives: Mapping[int, Drive]
    output_pin: int
    freq_pair: Optional[Tuple[float, float]] = None
    scheduled_time_s: float = 0.0

    def __post_init__(self):
        if self.output_pin in self.drives:
            raise ValueError(f"output pin {self.output_pin} must not be driven")
        for pin, drive in self.drives.items():
            if pin < 0:
                raise ValueError(f"negative pin index {pin}")
            if isinstance(drive, str):
                if drive != GROUNDED:
                    raise ValueError(f"unknown drive {drive!r} on pin {pin}")
            elif not drive > 0:
                raise ValueError(f"drive frequency on pin {pin} must be positive, got {drive}")
        if self.freq_pair is not None:
            f_false, f_true = self.freq_pair
            if f_false == f_true:
                raise ValueError("f_false and f_true must differ")
            for pin, drive in self.drives.items():
                if is_frequency(drive) and drive not in (f_false, f_true):
                    raise ValueError(
                        f"pin {pin} driven at {drive} Hz, outside freq_pair {self.freq_pair}")

    @property
    def max_frequency(self) -> float:
        freqs = [d for d in self.drives.values() if is_frequency(d)]
        return max(freqs) if freqs else 0.0

    def with_time(self, t: float) -> "StimulusConfig":
        return StimulusConfig(dict(self.drives), self.output_pin, self.freq_pair, float(t))

    def sort_key(self):
        drives = tuple(sorted((p, str(d)) for p, d in self.drives.items()))
        return (self.output_pin, self.freq_pair or (), drives)


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    """Digitally thresholded response: one bit per sample instant."""

    bits: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("a sample buffer needs at least one bit")
        if np.any(bits > 1):
            raise ValueError("bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")

    def __len__(self):
        return int(self.bits.size)

    @property
    def duration_s(self) -> float:
        return self.bits.size / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, SampleBuffer):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and self.start_time_s == other.start_time_s
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.tobytes(), self.sample_rate_hz, self.start_time_s))

    def __repr__(self):
        return (f"SampleBuffer(n={self.bits.size}, rate={self.sample_rate_hz:g} Hz, "
                f"start={self.start_time_s:g} s, ones={int(self.bits.sum())})")
