"""F0 extraction and contour post-processing.

The tracker follows the classic autocorrelation recipe: each frame is
Hann-windowed, its autocorrelation is divided by the autocorrelation of
the window itself, and the strongest lag between ``1/f_max`` and
``1/f_min`` wins after a small per-octave penalty on long lags.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .audio import AudioBuffer


class PitchError(ValueError):
    pass


@dataclass(frozen=True)
class PitchConfig:
    f_min: float = 60.0
    f_max: float = 600.0
    hop: float = 0.010
    voicing_threshold: float = 0.45
    # frames quieter than this fraction of the global peak are unvoiced
    silence_threshold: float = 0.03
    octave_cost: float = 0.01
    # a peak at lag/k at least this strong relative to the winner replaces it
    subharmonic_ratio: float = 0.9
    periods_per_window: float = 3.0
    # run-edge frames further than this (octaves) from their inner neighbour
    # are dropped; half-empty windows at onsets and offsets mistrack
    max_edge_jump: float = 0.5

    def validate(self, sample_rate: int | None = None) -> None:
        if not 0 < self.f_min < self.f_max:
            raise PitchError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if sample_rate is not None and self.f_max >= sample_rate / 2:
            raise PitchError(f"f_max {self.f_max} Hz is not below Nyquist ({sample_rate / 2} Hz)")
        if self.hop <= 0:
            raise PitchError("hop must be positive")
        if not 0 < self.voicing_threshold < 1:
            raise PitchError("voicing_threshold must lie in (0, 1)")
        if self.max_edge_jump <= 0:
            raise PitchError("max_edge_jump must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "PitchConfig":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class F0Contour:
    """Frame-indexed pitch track; frame ``i`` sits at ``i * hop`` seconds.

    Unvoiced frames hold ``nan`` in ``f0``.
    """

    f0: np.ndarray
    hop: float
    frame_length: float = 0.0
    voiced: np.ndarray = field(default=None)

    def __post_init__(self):
        f0 = np.array(self.f0, dtype=np.float64).reshape(-1)
        if self.voiced is None:
            voiced = np.isfinite(f0) & (f0 > 0)
        else:
            voiced = np.array(self.voiced, dtype=bool).reshape(-1)
            if voiced.shape != f0.shape:
                raise ValueError("voiced mask and f0 differ in length")
        if np.any(~np.isfinite(f0[voiced])) or np.any(f0[voiced] <= 0):
            raise ValueError("voiced frames need a positive finite f0")
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        f0 = np.where(voiced, f0, np.nan)
        f0.setflags(write=False)
        voiced.setflags(write=False)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return self.f0.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.f0.size) * self.hop

    @property
    def duration(self) -> float:
        return self.f0.size * self.hop

    @property
    def fully_voiced(self) -> bool:
        return bool(self.voiced.size) and bool(self.voiced.all())

    def voiced_values(self) -> np.ndarray:
        return self.f0[self.voiced]

    def scaled(self, ratio: float) -> "F0Contour":
        return replace(self, f0=self.f0 * ratio, voiced=self.voiced)

    def at_times(self, times: np.ndarray) -> np.ndarray:
        """Nearest-frame f0 lookup (nan where unvoiced or out of range)."""
        idx = np.round(np.asarray(times) / self.hop).astype(np.int64)
        out = np.full(idx.shape, np.nan)
        ok = (idx >= 0) & (idx < self.f0.size)
        out[ok] = self.f0[idx[ok]]
        return out


def _frame_matrix(x: np.ndarray, centers: np.ndarray, half: int) -> np.ndarray:
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    idx = centers[:, None] + np.arange(2 * half)[None, :]
    return padded[idx]


def extract_f0(buffer: AudioBuffer, config: PitchConfig | None = None) -> F0Contour:
    """Autocorrelation F0 tracker; one frame per ``config.hop``."""
    config = config or PitchConfig()
    fs = buffer.sample_rate
    config.validate(fs)
    x = buffer.samples
    half = int(round(config.periods_per_window / config.f_min * fs / 2))
    win_len = 2 * half
    if x.size == 0:
        raise PitchError("cannot track pitch in an empty buffer")
    hop_samples = config.hop * fs
    n_frames = int(np.floor((x.size - 1) / hop_samples)) + 1
    centers = np.round(np.arange(n_frames) * hop_samples).astype(np.int64)

    frames = _frame_matrix(x, centers, half)
    # frames[i] spans samples [center_i - half, center_i + half)
    local_peak = np.max(np.abs(frames), axis=1)
    global_peak = np.max(np.abs(x))
    frames = frames - frames.mean(axis=1, keepdims=True)
    window = np.hanning(win_len + 2)[1:-1]
    frames *= window

    nfft = 1 << int(np.ceil(np.log2(2 * win_len)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    ac = np.fft.irfft(spec.real**2 + spec.imag**2, nfft, axis=1)[:, :win_len]
    wspec = np.fft.rfft(window, nfft)
    wac = np.fft.irfft(np.abs(wspec) ** 2, nfft)[:win_len]
    wac = wac / wac[0]

    energy = ac[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = ac / energy[:, None]
        r = r / wac[None, :]

    lag_lo = max(2, int(np.floor(fs / config.f_max)))
    lag_hi = min(int(np.ceil(fs / config.f_min)), win_len // 2)
    f0 = np.full(n_frames, np.nan)
    quiet = (energy <= 0) | (local_peak < config.silence_threshold * global_peak) | (global_peak == 0)

    for i in range(n_frames):
        if quiet[i]:
            continue
        ri = r[i]
        seg = ri[lag_lo - 1 : lag_hi + 2]
        # interior local maxima
        interior = seg[1:-1]
        is_peak = (interior >= seg[:-2]) & (interior > seg[2:])
        peaks = np.nonzero(is_peak)[0] + lag_lo
        if peaks.size == 0:
            continue
        cands = []
        for lag in peaks:
            a, b, c = ri[lag - 1], ri[lag], ri[lag + 1]
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
            shift = float(np.clip(shift, -0.5, 0.5))
            cands.append((lag + shift, b - 0.25 * (a - c) * shift))
        lags = np.array([c[0] for c in cands])
        heights = np.array([c[1] for c in cands])
        scores = heights - config.octave_cost * np.log2(config.f_min * lags / fs)
        k = int(np.argmax(scores))
        best_lag, best_height = lags[k], heights[k]
        # prefer a near-equal peak at an integer fraction of the winning lag
        for div in (4, 3, 2):
            near = np.abs(lags - best_lag / div) <= max(2.0, 0.03 * best_lag / div)
            strong = near & (heights >= config.subharmonic_ratio * best_height)
            if strong.any():
                j = int(np.argmax(np.where(strong, heights, -np.inf)))
                best_lag, best_height = lags[j], heights[j]
                break
        freq = fs / best_lag
        if best_height >= config.voicing_threshold and config.f_min <= freq <= config.f_max:
            f0[i] = freq

    _prune_run_edges(f0, config.max_edge_jump)
    return F0Contour(f0, config.hop, win_len / fs)


def _prune_run_edges(f0: np.ndarray, max_jump: float, reach: int = 2) -> None:
    """Unvoice run-edge frames that leap away from their neighbours (in place).

    A run's first or last frame is compared with the frame inside the run; a
    single-frame run with the nearest voiced frame up to ``reach`` hops away.
    """
    changed = True
    while changed:
        changed = False
        v = np.isfinite(f0)
        for i in np.nonzero(v)[0]:
            left = i > 0 and v[i - 1]
            right = i + 1 < f0.size and v[i + 1]
            if left and right:
                continue
            if left or right:
                inner = f0[i - 1] if left else f0[i + 1]
            else:
                near = [j for d in range(2, reach + 1) for j in (i - d, i + d) if 0 <= j < f0.size and v[j]]
                if not near:
                    continue
                inner = f0[near[0]]
            if abs(np.log2(f0[i] / inner)) > max_jump:
                f0[i] = np.nan
                changed = True


def interpolate_unvoiced(contour: F0Contour) -> F0Contour:
    """Fill unvoiced frames by log-frequency linear interpolation.

    Leading and trailing unvoiced runs copy the nearest voiced value.
    """
    voiced = contour.voiced
    if not voiced.any():
        raise PitchError("cannot interpolate a contour with no voiced frames")
    if voiced.all():
        return contour
    idx = np.arange(len(contour))
    logf = np.interp(idx, idx[voiced], np.log(contour.f0[voiced]))
    filled = np.exp(logf)
    filled[voiced] = contour.f0[voiced]
    return F0Contour(filled, contour.hop, contour.frame_length)


def smooth(contour: F0Contour, window_frames: int) -> F0Contour:
    """Log-domain median filter with symmetric windows that shrink at the edges."""
    if window_frames <= 0 or window_frames % 2 == 0 or int(window_frames) != window_frames:
        raise PitchError(f"smoothing window must be a positive odd integer, got {window_frames}")
    if not contour.fully_voiced:
        raise PitchError("smooth expects a fully voiced contour (run interpolate_unvoiced first)")
    if window_frames == 1:
        return contour
    logf = np.log(contour.f0)
    n = logf.size
    half = window_frames // 2
    out = np.empty(n)
    for i in range(n):
        h = min(half, i, n - 1 - i)
        out[i] = np.median(logf[i - h : i + h + 1])
    return F0Contour(np.exp(out), contour.hop, contour.frame_length)


def phoneme_f0(contour: F0Contour, alignment, statistic: str = "mean") -> list[tuple[int, float]]:
    """Per-phoneme F0 over frames whose centres fall in ``[start, end)``.

    Returns ``(interval_index, f0)`` for each non-silence interval.
    ``statistic`` is ``"mean"`` or ``"median"``.
    """
    if statistic not in ("mean", "median"):
        raise PitchError(f"unknown statistic {statistic!r}")
    reduce = np.mean if statistic == "mean" else np.median
    times = contour.times
    # allow the last frame to cover half a hop past its centre
    limit = contour.duration + 1e-9
    out = []
    problems = []
    for i, iv in enumerate(alignment.intervals):
        if iv.is_silence:
            continue
        if iv.start < -1e-9 or iv.end > limit:
            problems.append(
                f"#{i} '{iv.label}' [{iv.start:.3f}, {iv.end:.3f}) lies outside the contour "
                f"(0-{contour.duration:.3f} s)"
            )
            continue
        sel = (times >= iv.start - 1e-9) & (times < iv.end - 1e-9)
        vals = contour.f0[sel & contour.voiced]
        if vals.size == 0:
            problems.append(f"#{i} '{iv.label}' [{iv.start:.3f}, {iv.end:.3f}) covers no voiced frame")
            continue
        out.append((i, float(reduce(vals))))
    if problems:
        raise PitchError("per-phoneme F0 failed: " + "; ".join(problems))
    return out


def speaker_median_f0(contours: Iterable[F0Contour]) -> float:
    """Median of all voiced f0 values pooled over ``contours``."""
    pooled = [c.voiced_values() for c in contours]
    values = np.concatenate(pooled) if pooled else np.empty(0)
    if values.size == 0:
        raise PitchError("no voiced frames to take a median over")
    return float(np.median(values))


def process_contour(contour: F0Contour, smooth_window: int = 5) -> F0Contour:
    """Interpolate unvoiced gaps, then median-smooth."""
    return smooth(interpolate_unvoiced(contour), smooth_window)


def write_contour_csv(contour: F0Contour, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "f0_hz", "voiced"])
        for t, f, v in zip(contour.times, contour.f0, contour.voiced):
            w.writerow([f"{t:.4f}", f"{f:.4f}" if v else "", int(v)])


def read_contour_csv(path) -> F0Contour:
    times, f0 = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            times.append(float(row["time_s"]))
            voiced = row["voiced"].strip() in ("1", "true", "True")
            f0.append(float(row["f0_hz"]) if voiced and row["f0_hz"] else np.nan)
    if len(times) < 2:
        raise PitchError(f"{path}: need at least two frames")
    hop = float(np.median(np.diff(times)))
    return F0Contour(np.array(f0), round(hop, 9))
