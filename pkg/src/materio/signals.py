"""Buffer-to-scalar transforms.

Gate mining classifies a response by the frequency of its strongest
spectral line; surrogate training uses three scalar summaries of the middle
half of the buffer (ones ratio, normalised peak frequency, LZW
compressibility).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .stimulus import SampleBuffer

# Non-DC magnitudes below this fraction of the DC magnitude count as a constant signal.
CONSTANT_RTOL = 1e-9
# Magnitudes within this relative distance of the maximum are treated as tied.
TIE_RTOL = 1e-9

LZW_REFERENCE_STRINGS = 64
LZW_REFERENCE_SEED = 0x5EED


@dataclass(frozen=True)
class Spectrum:
    magnitudes: np.ndarray
    bin_width_hz: float

    @property
    def frequencies(self) -> np.ndarray:
        return self.bin_width_hz * np.arange(1, self.magnitudes.size + 1)


def _bits(buffer) -> np.ndarray:
    if isinstance(buffer, SampleBuffer):
        return buffer.bits
    return np.asarray(buffer, dtype=np.uint8)


def middle_section(buffer: SampleBuffer) -> SampleBuffer:
    """Samples ``[N//4, 3N//4)``."""
    n = len(buffer)
    if n < 4:
        raise ValueError(f"buffer of {n} samples is too short for a middle section (need 4)")
    lo, hi = n // 4, (3 * n) // 4
    return SampleBuffer(buffer.bits[lo:hi], buffer.sample_rate_hz,
                        buffer.start_time_s + lo / buffer.sample_rate_hz)


def _middle_bits(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[-1]
    return bits[..., n // 4:(3 * n) // 4]


def _half_spectrum(segments: np.ndarray):
    """DC magnitude and the DC-removed half spectrum, row-wise."""
    mags = np.abs(np.fft.rfft(np.asarray(segments, dtype=float), axis=-1))
    m = segments.shape[-1]
    return mags[..., 0], mags[..., 1:m // 2 + 1]


def _peak_index(dc: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Row-wise argmax bin (0-based, DC removed), or -1 for a constant signal.

    Near-ties resolve to the lowest frequency.
    """
    top = half.max(axis=-1)
    constant = (top == 0) | (top < CONSTANT_RTOL * dc)
    tied = half >= (top * (1 - TIE_RTOL))[..., None]
    idx = np.argmax(tied, axis=-1)
    return np.where(constant, -1, idx)


def spectrum(buffer: SampleBuffer) -> Spectrum:
    """Half spectrum (DC removed) of the middle section."""
    mid = middle_section(buffer)
    _, half = _half_spectrum(mid.bits)
    return Spectrum(half, buffer.sample_rate_hz / len(mid))


def fft_peak(buffer: SampleBuffer) -> float:
    """Frequency (Hz) of the strongest non-DC bin of the middle section; 0 for a constant signal."""
    if len(buffer) < 8:
        raise ValueError(f"buffer of {len(buffer)} samples is too short for fft_peak (need 8)")
    return float(peak_frequencies(buffer.bits[None, :], buffer.sample_rate_hz)[0])


def peak_frequencies(bits: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """Vectorised :func:`fft_peak` over equal-length rows of ``bits``."""
    mid = _middle_bits(np.atleast_2d(bits))
    dc, half = _half_spectrum(mid)
    idx = _peak_index(dc, half)
    width = sample_rate_hz / mid.shape[-1]
    return np.where(idx < 0, 0.0, (idx + 1) * width)


def classify_from_peak(peak_hz, f_false, f_true):
    peak_hz = np.asarray(peak_hz, dtype=float)
    return np.abs(peak_hz - f_true) < np.abs(peak_hz - f_false)


def classify_output(buffer: SampleBuffer, f_false: float, f_true: float) -> bool:
    """True iff the peak frequency is strictly nearer ``f_true`` than ``f_false``."""
    if f_false == f_true:
        raise ValueError("f_false and f_true must differ")
    return bool(classify_from_peak(fft_peak(buffer), f_false, f_true))


def ones_ratio(buffer: SampleBuffer) -> float:
    mid = middle_section(buffer)
    return float(mid.bits.sum()) / len(mid)


def norm_peak_freq(buffer: SampleBuffer) -> float:
    """Peak bin of the middle section mapped to [0, 1]: 0 constant, 1 for ``0101...``."""
    mid = middle_section(buffer)
    if len(mid) < 8:
        raise ValueError(f"middle section of {len(mid)} samples is too short (need 8)")
    return float(norm_peak_rows(buffer.bits[None, :])[0])


def norm_peak_rows(bits: np.ndarray) -> np.ndarray:
    mid = _middle_bits(np.atleast_2d(bits))
    dc, half = _half_spectrum(mid)
    idx = _peak_index(dc, half)
    return np.where(idx < 0, 0.0, (idx + 1) / half.shape[-1])


def lzw_code_count(bits) -> int:
    """Number of codes an LZW coder over {0, 1} emits for ``bits``."""
    table = {"0", "1"}
    word = ""
    count = 0
    for ch in "".join("1" if b else "0" for b in bits):
        grown = word + ch
        if grown in table:
            word = grown
        else:
            count += 1
            table.add(grown)
            word = ch
    return count + (1 if word else 0)


_lzw_reference = {}
_lzw_lock = threading.Lock()


def lzw_reference_count(length: int) -> int:
    """Worst-case code count for ``length`` bits: max over seeded random strings (memoised)."""
    with _lzw_lock:
        cached = _lzw_reference.get(length)
        if cached is None:
            rng = np.random.default_rng([LZW_REFERENCE_SEED, length])
            refs = rng.integers(0, 2, size=(LZW_REFERENCE_STRINGS, length))
            cached = max(lzw_code_count(r) for r in refs)
            _lzw_reference[length] = cached
        return cached


def lzw_compressibility(buffer: SampleBuffer) -> float:
    mid = middle_section(buffer)
    ratio = lzw_code_count(mid.bits) / lzw_reference_count(len(mid))
    return float(min(1.0, max(0.0, ratio)))
