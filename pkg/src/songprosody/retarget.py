"""Render a spoken utterance to a score's notes and durations.

``DSPBackend`` is the built-in renderer: it cuts the source's pauses,
stretches every phoneme to its target length with WSOLA and then moves
each voiced phoneme onto its note with TD-PSOLA.  Any other renderer can
be plugged into the pipeline by subclassing ``SynthesisBackend``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .alignment import Alignment, PhonemeInterval
from .audio import AudioBuffer
from .notes import note_to_hz
from .pitch import F0Contour, PitchConfig, PitchError, extract_f0, interpolate_unvoiced
from .score import Score
from .tsm import (
    PITCH_RATIO_RANGE,
    WSOLA_FRAME,
    WSOLA_TOLERANCE,
    TimeMap,
    TSMError,
    detect_epochs,
    psola_shift,
    stretch_segments,
    wsola_stretch,
)

AUGMENT_SEMITONES = (-6, 6)
AUGMENT_RATES = (0.7, 1.3)


class RetargetError(ValueError):
    pass


@dataclass(frozen=True)
class BackendRequest:
    source: AudioBuffer
    source_alignment: Alignment
    score: Score

    def __post_init__(self):
        src = self.source_alignment.phonemes()
        tgt = self.score.phonemes()
        if src != tgt:
            for i, (a, b) in enumerate(zip(src, tgt)):
                if a != b:
                    raise RetargetError(
                        f"phoneme mismatch at position {i}: source '{a}' vs score '{b}'"
                    )
            raise RetargetError(
                f"phoneme mismatch: source has {len(src)} phonemes, score has {len(tgt)}"
            )


class SynthesisBackend(abc.ABC):
    """Produces audio whose phonemes follow ``request.score``.

    Implementations must return a buffer lasting the sum of the score's
    target durations, with each sung phoneme on its note.
    """

    @abc.abstractmethod
    def synthesize(self, request: BackendRequest) -> AudioBuffer:
        ...


def _boxcar_smooth(values: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return values
    kernel = np.ones(width) / width
    padded = np.pad(values, (width // 2, width - 1 - width // 2), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


class DSPBackend(SynthesisBackend):
    """WSOLA + TD-PSOLA renderer.

    ``contour_mode="flat"`` (default) uses a per-frame ratio so each
    phoneme sits flat on its note.  ``"mean"`` scales each phoneme by one
    ratio (target note over the phoneme's mean F0), keeping the speaker's
    intonation shape inside the phoneme.
    """

    def __init__(
        self,
        pitch_config: PitchConfig | None = None,
        contour_mode: str = "flat",
        crossfade: float = 0.020,
        frame_len: float = WSOLA_FRAME,
        tolerance: float = WSOLA_TOLERANCE,
        min_voiced_fraction: float = 0.5,
    ):
        if contour_mode not in ("mean", "flat"):
            raise ValueError(f"contour_mode must be 'mean' or 'flat', got {contour_mode!r}")
        self.pitch_config = pitch_config or PitchConfig()
        self.contour_mode = contour_mode
        self.crossfade = crossfade
        self.frame_len = frame_len
        self.tolerance = tolerance
        self.min_voiced_fraction = min_voiced_fraction

    def synthesize(self, request: BackendRequest) -> AudioBuffer:
        return self.render(request)[0]

    def render(self, request: BackendRequest) -> tuple[AudioBuffer, Alignment]:
        """Synthesize and also return the alignment of the output."""
        src = request.source
        fs = src.sample_rate
        sung = request.score.sung()
        if not sung:
            total = sum(e.target_duration for e in request.score.entries)
            out = AudioBuffer(np.zeros(int(round(total * fs))), fs)
            return out, request.score.target_alignment()

        speech, speech_align = self._cut_pauses(src, request.source_alignment)
        try:
            stretched, st_align = stretch_segments(
                speech, speech_align, [e.target_duration for e in sung], self.frame_len, self.tolerance
            )
        except TSMError as exc:
            raise RetargetError(f"duration matching failed: {exc}") from exc

        try:
            contour = extract_f0(stretched, self.pitch_config)
        except PitchError as exc:
            raise RetargetError(f"pitch analysis of the stretched source failed: {exc}") from exc
        curve = self._ratio_curve(stretched, contour, st_align, sung)
        if curve is not None:
            shifted = psola_shift(stretched, detect_epochs(stretched, contour), curve)
        else:
            shifted = stretched
        return self._insert_silences(shifted, st_align, request.score)

    @staticmethod
    def _cut_pauses(src: AudioBuffer, alignment: Alignment) -> tuple[AudioBuffer, Alignment]:
        fs = src.sample_rate
        pieces, labels, durs = [], [], []
        for iv in alignment.speech_intervals():
            a, b = int(round(iv.start * fs)), min(int(round(iv.end * fs)), len(src))
            if b <= a:
                raise RetargetError(f"phoneme '{iv.label}' at {iv.start:.3f} s lies outside the source audio")
            pieces.append(src.samples[a:b])
            labels.append(iv.label)
            durs.append((b - a) / fs)
        samples = np.concatenate(pieces)
        return AudioBuffer(samples, fs), Alignment.from_durations(labels, durs, silence=())

    def _ratio_curve(
        self, audio: AudioBuffer, contour: F0Contour, alignment: Alignment, sung
    ) -> np.ndarray | None:
        fs = audio.sample_rate
        if not contour.voiced.any():
            return None
        filled = interpolate_unvoiced(contour)
        times = contour.times
        log_ratio = np.zeros(len(audio))
        lo, hi = PITCH_RATIO_RANGE
        any_voiced = False
        for iv, entry in zip(alignment.intervals, sung):
            sel = (times >= iv.start) & (times < iv.end)
            n_frames = int(sel.sum())
            voiced = contour.voiced & sel
            if n_frames == 0 or voiced.sum() < self.min_voiced_fraction * n_frames:
                continue
            any_voiced = True
            target = note_to_hz(entry.note)
            mean_f0 = float(np.mean(contour.f0[voiced]))
            ratio = target / mean_f0
            if not lo <= ratio <= hi:
                raise RetargetError(
                    f"phoneme '{iv.label}' at {iv.start:.3f} s needs pitch ratio {ratio:.2f} "
                    f"({mean_f0:.1f} Hz -> {entry.note.name}), outside [{lo}, {hi}]"
                )
            a, b = int(round(iv.start * fs)), int(round(iv.end * fs))
            if self.contour_mode == "mean":
                log_ratio[a:b] = np.log(ratio)
            else:
                frame_f0 = np.interp(np.arange(a, b) / fs, times, filled.f0)
                log_ratio[a:b] = np.log(np.clip(target / frame_f0, lo, hi))
        if not any_voiced:
            return None
        width = int(round(self.crossfade * fs))
        return np.exp(_boxcar_smooth(log_ratio, width))

    @staticmethod
    def _insert_silences(
        audio: AudioBuffer, sung_align: Alignment, score: Score
    ) -> tuple[AudioBuffer, Alignment]:
        fs = audio.sample_rate
        bounds = [int(round(iv.start * fs)) for iv in sung_align.intervals] + [len(audio)]
        pieces = []
        k = 0
        for e in score.entries:
            if e.is_silence:
                pieces.append(np.zeros(int(round(e.target_duration * fs))))
            else:
                pieces.append(audio.samples[bounds[k] : bounds[k + 1]])
                k += 1
        ivs, t = [], 0
        for p, e in zip(pieces, score.entries):
            ivs.append(PhonemeInterval(e.phoneme, t / fs, (t + p.size) / fs, e.is_silence))
            t += p.size
        return AudioBuffer(np.concatenate(pieces), fs), Alignment(tuple(ivs), t / fs)


def _remap_contour(contour: F0Contour, rate: float, n_frames: int) -> F0Contour:
    src_idx = np.round(np.arange(n_frames) * rate).astype(np.int64)
    src_idx = np.clip(src_idx, 0, len(contour) - 1)
    return F0Contour(contour.f0[src_idx], contour.hop, contour.frame_length, contour.voiced[src_idx])


def augment(buffer: AudioBuffer, contour: F0Contour, semitones: float, rate: float) -> AudioBuffer:
    """Tempo then pitch augmentation.

    Duration is divided by ``rate`` with WSOLA, then F0 is multiplied by
    ``2 ** (semitones / 12)`` with TD-PSOLA.
    """
    lo_s, hi_s = AUGMENT_SEMITONES
    lo_r, hi_r = AUGMENT_RATES
    if not lo_s <= semitones <= hi_s:
        raise RetargetError(f"semitones must lie in [{lo_s}, {hi_s}], got {semitones}")
    if not lo_r <= rate <= hi_r:
        raise RetargetError(f"rate must lie in [{lo_r}, {hi_r}], got {rate}")
    out = buffer
    if rate != 1.0:
        out = wsola_stretch(buffer, TimeMap.uniform(buffer.duration, 1.0 / rate))
    if semitones == 0 or not contour.voiced.any():
        return out
    n_frames = int(np.floor((len(out) - 1) / (contour.hop * out.sample_rate))) + 1
    moved = _remap_contour(contour, rate, n_frames)
    return psola_shift(out, detect_epochs(out, moved), 2.0 ** (semitones / 12.0))
