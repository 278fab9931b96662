"""Mono audio container, WAV I/O and band-limited resampling."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

PIPELINE_RATE = 24000

# Resampler kernel: 64 taps measured at the lower of the two rates.
RESAMPLE_TAPS = 64
RESAMPLE_KAISER_BETA = 8.6
RESAMPLE_CUTOFF = 0.90
_RESAMPLE_BLOCK = 4096


class WavError(Exception):
    """Base class for WAV reading/writing problems."""


class WavNotFoundError(WavError, FileNotFoundError):
    pass


class UnsupportedWavError(WavError):
    """Valid RIFF/WAVE file in an encoding we do not read."""


class MalformedWavError(WavError):
    pass


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Immutable mono signal.

    ``samples`` is stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample rate must be a positive integer, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def with_samples(self, samples) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)

    @classmethod
    def silence(cls, seconds: float, sample_rate: int = PIPELINE_RATE) -> "AudioBuffer":
        return cls(np.zeros(int(round(seconds * sample_rate))), sample_rate)


def load_wav(path, target_rate: int | None = None) -> AudioBuffer:
    """Read a PCM16 or float32 WAV file as a mono buffer in [-1, 1].

    Stereo files are averaged to mono.  When ``target_rate`` is given the
    result is resampled to it.
    """
    path = Path(path)
    if not path.is_file():
        raise WavNotFoundError(f"{path}: no such file")
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "format" in msg.lower() and "not" in msg.lower() and "support" in msg.lower():
            raise UnsupportedWavError(f"{path}: {msg}") from exc
        raise MalformedWavError(f"{path}: {msg}") from exc
    except (EOFError, struct.error) as exc:
        raise MalformedWavError(f"{path}: truncated file") from exc

    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported sample type {data.dtype} (need PCM 16-bit or float 32-bit)"
        )

    if data.ndim == 2:
        if data.shape[1] > 2:
            raise UnsupportedWavError(f"{path}: {data.shape[1]} channels (need 1 or 2)")
        data = data.mean(axis=1)
    if data.size and not np.all(np.isfinite(data)):
        raise MalformedWavError(f"{path}: non-finite float samples")
    buf = AudioBuffer(np.clip(data, -1.0, 1.0), rate)
    if target_rate is not None and target_rate != rate:
        # resampling can overshoot full scale near steep transients
        buf = resample(buf, target_rate)
        buf = buf.with_samples(np.clip(buf.samples, -1.0, 1.0))
    return buf


def save_wav(buffer: AudioBuffer, path, bit_depth: str | int = 16) -> None:
    """Write ``buffer`` as mono PCM16 (``16``) or IEEE float32 (``"32f"``).

    Samples outside [-1, 1] are clipped; PCM uses round-to-nearest with
    full scale 1.0 mapping to 32767.
    """
    if len(buffer) == 0:
        raise ValueError("refusing to write an empty buffer")
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OSError(f"{path}: directory is not writable")
    x = np.clip(buffer.samples, -1.0, 1.0)
    depth = str(bit_depth).lower()
    if depth == "16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif depth in ("32f", "32", "float"):
        data = x.astype(np.float32)
    else:
        raise ValueError(f"bit depth must be 16 or '32f', got {bit_depth!r}")
    wavfile.write(path, buffer.sample_rate, data)


def _sinc_kernel(offsets: np.ndarray, cutoff: float, half_width: float) -> np.ndarray:
    # offsets in input samples; cutoff in cycles per input sample
    arg = np.clip(offsets / half_width, -1.0, 1.0)
    win = np.i0(RESAMPLE_KAISER_BETA * np.sqrt(1.0 - arg * arg)) / np.i0(RESAMPLE_KAISER_BETA)
    win[np.abs(offsets) >= half_width] = 0.0
    return 2.0 * cutoff * np.sinc(2.0 * cutoff * offsets) * win


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Windowed-sinc (Kaiser) resampling to ``target_rate``.

    The low-pass cutoff sits at 90% of the lower Nyquist frequency; the
    kernel spans 64 periods of the lower rate.
    """
    if target_rate is None or target_rate <= 0 or int(target_rate) != target_rate:
        raise ValueError(f"target rate must be a positive integer, got {target_rate}")
    target_rate = int(target_rate)
    src_rate = buffer.sample_rate
    if target_rate == src_rate:
        return buffer
    x = buffer.samples
    n_in = x.size
    n_out = int(round(n_in * target_rate / src_rate))
    if n_in == 0 or n_out == 0:
        return AudioBuffer(np.zeros(n_out), target_rate)

    step = src_rate / target_rate  # input samples per output sample
    scale = max(1.0, step)  # kernel stretch when decimating
    cutoff = RESAMPLE_CUTOFF * 0.5 / scale
    half_width = RESAMPLE_TAPS / 2 * scale
    reach = int(np.ceil(half_width))
    padded = np.concatenate([np.zeros(reach + 1), x, np.zeros(reach + 2)])

    out = np.empty(n_out)
    taps = np.arange(-reach, reach + 1)
    for lo in range(0, n_out, _RESAMPLE_BLOCK):
        idx = np.arange(lo, min(lo + _RESAMPLE_BLOCK, n_out))
        pos = idx * step
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        src_idx = base[:, None] + taps[None, :]
        offsets = frac[:, None] - taps[None, :]
        kernel = _sinc_kernel(offsets, cutoff, half_width)
        out[idx] = np.sum(padded[src_idx + reach + 1] * kernel, axis=1)
    return AudioBuffer(out, target_rate)
