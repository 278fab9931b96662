"""Time-scale and pitch modification in the time domain.

``wsola_stretch`` changes duration along a piecewise-linear time map while
keeping pitch; ``psola_shift`` changes pitch on top of pitch marks from
``detect_epochs`` while keeping duration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import correlate

from .alignment import Alignment, PhonemeInterval
from .audio import AudioBuffer
from .pitch import F0Contour

WSOLA_FRAME = 0.025
WSOLA_TOLERANCE = 0.010
UNVOICED_MARK_SPACING = 0.010
STRETCH_RATIO_RANGE = (0.3, 3.5)
PITCH_RATIO_RANGE = (0.25, 4.0)


class TSMError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeMap:
    """Piecewise-linear map from source seconds to target seconds."""

    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.float64).reshape(-1)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if src.size != tgt.size or src.size < 2:
            raise TSMError("a time map needs at least two (source, target) anchors")
        if src[0] != 0.0 or tgt[0] != 0.0:
            raise TSMError("a time map must start at (0, 0)")
        if np.any(np.diff(src) <= 0) or np.any(np.diff(tgt) <= 0):
            raise TSMError("time map anchors must be strictly increasing in both coordinates")
        src.setflags(write=False)
        tgt.setflags(write=False)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)

    @classmethod
    def uniform(cls, source_length: float, ratio: float) -> "TimeMap":
        if ratio <= 0:
            raise TSMError(f"stretch ratio must be positive, got {ratio}")
        return cls(np.array([0.0, source_length]), np.array([0.0, source_length * ratio]))

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> "TimeMap":
        arr = np.asarray(pairs, dtype=np.float64)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def source_length(self) -> float:
        return float(self.source[-1])

    @property
    def target_length(self) -> float:
        return float(self.target[-1])

    def forward(self, t):
        return np.interp(t, self.source, self.target)

    def inverse(self, t):
        """Target time to source time; extrapolates with the end slopes."""
        t = np.asarray(t, dtype=np.float64)
        out = np.interp(t, self.target, self.source)
        lo_slope = (self.source[1] - self.source[0]) / (self.target[1] - self.target[0])
        hi_slope = (self.source[-1] - self.source[-2]) / (self.target[-1] - self.target[-2])
        out = np.where(t < 0, t * lo_slope, out)
        out = np.where(t > self.target[-1], self.source[-1] + (t - self.target[-1]) * hi_slope, out)
        return out


def read_time_map_csv(path) -> TimeMap:
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append((float(row["source_s"]), float(row["target_s"])))
    return TimeMap.from_pairs(pairs)


def write_time_map_csv(tmap: TimeMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_s", "target_s"])
        for s, t in zip(tmap.source, tmap.target):
            w.writerow([f"{s:.6f}", f"{t:.6f}"])


def _hann(n: int) -> np.ndarray:
    # periodic Hann: copies spaced n/2 apart sum to exactly 1
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _search_order(tol: int) -> np.ndarray:
    deltas = np.arange(-tol, tol + 1)
    return np.argsort(np.abs(deltas), kind="stable")


def wsola_stretch(
    buffer: AudioBuffer,
    tmap: TimeMap,
    frame_len: float = WSOLA_FRAME,
    tolerance: float = WSOLA_TOLERANCE,
) -> AudioBuffer:
    """Waveform-similarity overlap-add along ``tmap``.

    Output frames are Hann-windowed with 50% overlap.  Each analysis frame
    is taken within ``tolerance`` of the map's nominal source position,
    at the offset whose normalized cross-correlation with the natural
    continuation of the previous frame is highest (ties go to the offset
    closest to nominal).
    """
    fs = buffer.sample_rate
    x = buffer.samples
    n = int(round(frame_len * fs))
    n += n % 2
    hop = n // 2
    tol = int(round(tolerance * fs))
    if tol < 1:
        raise TSMError(f"tolerance {tolerance} s is shorter than one sample")
    if x.size <= n:
        raise TSMError(f"buffer of {x.size} samples is not longer than one frame ({n})")
    if abs(tmap.source_length * fs - x.size) > hop:
        raise TSMError(
            f"time map covers {tmap.source_length:.4f} s but the buffer lasts {buffer.duration:.4f} s"
        )

    out_len = int(round(tmap.target_length * fs))
    pad = n + tol + hop
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad + n)])
    window = _hann(n)
    # frame k covers output samples [(k - 1) * hop, (k - 1) * hop + n)
    n_frames = out_len // hop + 2
    out = np.zeros((n_frames + 1) * hop + n)
    order = _search_order(tol)

    out_starts = (np.arange(n_frames) - 1) * hop
    centres = (out_starts + n / 2) / fs
    nominal = np.round(tmap.inverse(centres) * fs - n / 2).astype(np.int64) + pad
    lo_limit, hi_limit = tol, xp.size - n - tol - hop - 1
    nominal = np.clip(nominal, lo_limit, hi_limit)

    prev = None
    for k in range(n_frames):
        a = int(nominal[k])
        if prev is None:
            start = a
        else:
            template = xp[prev + hop : prev + hop + n]
            seg = xp[a - tol : a + tol + n]
            t_energy = float(np.dot(template, template))
            if t_energy <= 0.0:
                start = a
            else:
                xc = correlate(seg, template, mode="valid")
                sq = np.concatenate([[0.0], np.cumsum(seg * seg)])
                c_energy = sq[n:] - sq[:-n]
                with np.errstate(invalid="ignore", divide="ignore"):
                    ncc = xc / np.sqrt(np.maximum(c_energy, 1e-300) * t_energy)
                ncc = np.where(c_energy > 0, ncc, -np.inf)
                best = order[int(np.argmax(ncc[order]))]
                start = a - tol + int(best)
        frame = xp[start : start + n] * window
        o = out_starts[k] + hop
        out[o : o + n] += frame
        prev = start
    return AudioBuffer(out[hop : hop + out_len], fs)


@dataclass(frozen=True, eq=False)
class EpochTrack:
    """Pitch marks (sample indices) with local periods in samples."""

    marks: np.ndarray
    periods: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=np.int64).reshape(-1)
        periods = np.asarray(self.periods, dtype=np.float64).reshape(-1)
        voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
        if not (marks.size == periods.size == voiced.size):
            raise TSMError("marks, periods and voiced flags differ in length")
        if marks.size and np.any(np.diff(marks) <= 0):
            raise TSMError("pitch marks must be strictly increasing")
        if np.any(periods <= 0):
            raise TSMError("periods must be positive")
        for arr in (marks, periods, voiced):
            arr.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return self.marks.size


def _voiced_runs(contour: F0Contour, n_samples: int, fs: int) -> list[tuple[int, int]]:
    """Sample ranges covered by runs of voiced frames."""
    hop = contour.hop * fs
    runs = []
    v = contour.voiced
    i = 0
    while i < v.size:
        if not v[i]:
            i += 1
            continue
        j = i
        while j < v.size and v[j]:
            j += 1
        lo = max(0, int(round((i - 0.5) * hop)))
        hi = min(n_samples, int(round((j - 0.5) * hop)))
        if hi > lo:
            runs.append((lo, hi))
        i = j
    return runs


def detect_epochs(buffer: AudioBuffer, contour: F0Contour) -> EpochTrack:
    """One pitch mark per period in voiced runs, 10 ms marks elsewhere.

    Voiced marks sit on waveform maxima searched within a quarter period
    of the position predicted from the previous mark and the local f0.
    """
    fs = buffer.sample_rate
    x = buffer.samples
    # f0 per sample, nan in unvoiced frames
    frame_idx = np.minimum(np.round(np.arange(x.size) / (contour.hop * fs)).astype(np.int64), len(contour) - 1)
    f0_at = contour.f0[frame_idx]
    spacing = int(round(UNVOICED_MARK_SPACING * fs))

    marks: list[int] = []
    periods: list[float] = []
    voiced: list[bool] = []

    def fill_unvoiced(lo, hi):
        pos = lo if not marks else max(lo, marks[-1] + spacing)
        while pos < hi:
            marks.append(pos)
            periods.append(float(spacing))
            voiced.append(False)
            pos += spacing

    cursor = 0
    for lo, hi in _voiced_runs(contour, x.size, fs):
        fill_unvoiced(cursor, lo)
        period = fs / f0_at[min(lo, x.size - 1)]
        if not np.isfinite(period):
            period = fs / np.nanmedian(f0_at[lo:hi])
        first_lo = lo if not marks else max(lo, marks[-1] + int(0.5 * period))
        first_hi = min(hi, first_lo + int(np.ceil(period)))
        if first_hi <= first_lo:
            cursor = max(cursor, hi)
            continue
        m = first_lo + int(np.argmax(x[first_lo:first_hi]))
        while m < hi:
            p = fs / f0_at[m] if np.isfinite(f0_at[m]) else period
            period = p
            marks.append(m)
            periods.append(p)
            voiced.append(True)
            pred = m + p
            reach = max(1, int(round(0.25 * p)))
            s_lo = int(round(pred)) - reach
            s_hi = min(int(round(pred)) + reach + 1, hi)
            s_lo = max(s_lo, m + 1)
            if s_lo >= s_hi:
                break
            m = s_lo + int(np.argmax(x[s_lo:s_hi]))
        cursor = hi
    fill_unvoiced(cursor, x.size)

    marks_arr = np.array(marks, dtype=np.int64)
    per = np.array(periods)
    # replace voiced period estimates by measured mark spacing where consistent
    if marks_arr.size > 1:
        gaps = np.diff(marks_arr).astype(np.float64)
        v = np.array(voiced)
        for i in range(marks_arr.size):
            if not v[i]:
                continue
            cand = []
            if i + 1 < marks_arr.size and v[i + 1]:
                cand.append(gaps[i])
            if i > 0 and v[i - 1]:
                cand.append(gaps[i - 1])
            cand = [g for g in cand if 0.7 * per[i] < g < 1.3 * per[i]]
            if cand:
                per[i] = float(np.mean(cand))
    return EpochTrack(marks_arr, per, np.array(voiced, dtype=bool))


def _ratio_array(ratio_curve, n: int) -> np.ndarray:
    r = np.asarray(ratio_curve, dtype=np.float64)
    if r.ndim == 0:
        r = np.full(n, float(r))
    if r.size != n:
        raise TSMError(f"ratio curve has {r.size} samples, buffer has {n}")
    return r


def psola_shift(buffer: AudioBuffer, epochs: EpochTrack, ratio_curve) -> AudioBuffer:
    """TD-PSOLA pitch modification with unchanged duration.

    Synthesis marks advance by the local source period divided by the local
    ratio; each takes the two-period Hann grain of the nearest analysis
    mark.  Where grains pile up (raised pitch) the sum is divided by the
    accumulated window weight.  Unvoiced marks are copied at ratio 1.
    """
    fs = buffer.sample_rate
    x = buffer.samples
    ratio = _ratio_array(ratio_curve, x.size)
    lo, hi = PITCH_RATIO_RANGE
    if np.any(ratio < lo) or np.any(ratio > hi):
        raise TSMError(f"pitch ratio outside [{lo}, {hi}]: {ratio.min():.3f}..{ratio.max():.3f}")
    if len(epochs) == 0:
        raise TSMError("empty epoch track")
    if epochs.marks[-1] >= x.size or epochs.marks[0] < 0:
        raise TSMError("pitch marks fall outside the buffer")
    if np.all(ratio == 1.0):
        return buffer

    marks = epochs.marks
    periods = epochs.periods
    pad = int(np.ceil(2 * periods.max())) + 2
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    out = np.zeros(x.size + 2 * pad)
    wsum = np.zeros_like(out)

    # start one step before the signal and run one past it so both ends
    # get the same window overlap as the interior
    t = float(marks[0])
    while t > 0:
        t -= periods[0]
    while t < x.size + periods[-1]:
        j = int(np.searchsorted(marks, t))
        if j == marks.size or (j > 0 and t - marks[j - 1] <= marks[j] - t):
            j -= 1
        p = periods[j]
        half = int(round(p))
        c = int(round(t))
        if epochs.voiced[j]:
            step = p / ratio[min(max(c, 0), x.size - 1)]
            src = marks[j]
        else:
            # unvoiced: copy in place at ratio 1
            step = p
            src = c
        grain = xp[src + pad - half : src + pad + half]
        w = _hann(2 * half)
        out[c + pad - half : c + pad + half] += grain * w
        wsum[c + pad - half : c + pad + half] += w
        t += step
    out /= np.maximum(wsum, 1.0)
    return AudioBuffer(out[pad : pad + x.size], fs)


def stretch_segments(
    buffer: AudioBuffer,
    alignment: Alignment,
    targets: Sequence[float],
    frame_len: float = WSOLA_FRAME,
    tolerance: float = WSOLA_TOLERANCE,
) -> tuple[AudioBuffer, Alignment]:
    """Stretch every interval of ``alignment`` to its target duration.

    A single WSOLA pass runs over a time map with one anchor per interval
    boundary.  Targets are snapped to whole samples, so the returned
    alignment matches the audio exactly.
    """
    fs = buffer.sample_rate
    ivs = alignment.intervals
    if len(targets) != len(ivs):
        raise TSMError(f"{len(targets)} targets for {len(ivs)} intervals")
    if not ivs:
        raise TSMError("empty alignment")
    lo, hi = STRETCH_RATIO_RANGE
    for iv, tgt in zip(ivs, targets):
        if tgt <= 0:
            raise TSMError(f"phoneme '{iv.label}' at {iv.start:.3f} s: target duration must be positive")
        r = tgt / iv.duration
        if not lo <= r <= hi:
            raise TSMError(
                f"phoneme '{iv.label}' at {iv.start:.3f} s: stretch ratio {r:.2f} outside [{lo}, {hi}]"
            )

    src_b = np.array([0.0] + [iv.end for iv in ivs])
    tgt_samples = np.round(np.cumsum([0.0] + list(targets)) * fs).astype(np.int64)
    if np.any(np.diff(tgt_samples) <= 0):
        raise TSMError("a target duration rounds to zero samples")
    tgt_b = tgt_samples / fs
    tail = buffer.duration - src_b[-1]
    if tail > 1.0 / fs:
        src_b = np.append(src_b, buffer.duration)
        tgt_b = np.append(tgt_b, tgt_b[-1] + round(tail * fs) / fs)
    elif tail < -(WSOLA_FRAME / 2):
        raise TSMError(
            f"alignment ends at {src_b[-1]:.4f} s, past the end of the audio ({buffer.duration:.4f} s)"
        )
    else:
        src_b[-1] = buffer.duration

    out = wsola_stretch(buffer, TimeMap(src_b, tgt_b), frame_len, tolerance)
    new_ivs = tuple(
        PhonemeInterval(iv.label, float(tgt_b[i]), float(tgt_b[i + 1]), iv.is_silence)
        for i, iv in enumerate(ivs)
    )
    return out, Alignment(new_ivs, out.duration)
