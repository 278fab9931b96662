"""Semitone, note/octave and MIDI arithmetic plus median-ratio transposition.

Semitone index ``h`` counts semitones above C0 (A4 = 440 Hz is ``h = 57``);
MIDI numbers are ``h + 12``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .pitch import F0Contour

A4_HZ = 440.0
A4_INDEX = 57
MIDI_OFFSET = 12
NOTE_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


class NoteError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class NoteLabel:
    note: int
    octave: int

    def __post_init__(self):
        if not 0 <= self.note <= 11:
            raise NoteError(f"note must lie in [0, 11], got {self.note}")
        if self.octave < 0:
            raise NoteError(f"octave must be >= 0, got {self.octave}")

    @property
    def semitone(self) -> int:
        return 12 * self.octave + self.note

    @property
    def midi(self) -> int:
        return self.semitone + MIDI_OFFSET

    @property
    def name(self) -> str:
        return f"{NOTE_NAMES[self.note]}{self.octave}"

    @property
    def hz(self) -> float:
        return note_to_hz(self)


def hz_to_semitone_index(f: float) -> int:
    """Nearest semitone above C0; exact halves round to even."""
    if not f > 0 or not math.isfinite(f):
        raise NoteError(f"frequency must be positive and finite, got {f}")
    return int(round(12.0 * math.log2(f / A4_HZ))) + A4_INDEX


def semitone_to_note_octave(h: int) -> NoteLabel:
    if h < 0:
        raise NoteError(
            f"semitone index {h} is below C0; transpose the reference into a higher range"
        )
    return NoteLabel(h % 12, h // 12)


def note_to_hz(label: NoteLabel) -> float:
    return A4_HZ * 2.0 ** ((label.semitone - A4_INDEX) / 12.0)


def hz_to_note(f: float) -> NoteLabel:
    return semitone_to_note_octave(hz_to_semitone_index(f))


def midi_to_note(midi: int) -> NoteLabel:
    return semitone_to_note_octave(midi - MIDI_OFFSET)


def transposition_ratio(ref_median: float, speaker_median: float) -> float:
    if not ref_median > 0 or not speaker_median > 0:
        raise NoteError(
            f"medians must be positive, got ref={ref_median}, speaker={speaker_median}"
        )
    return speaker_median / ref_median


def transpose_contour(contour: F0Contour, ref_median: float, speaker_median: float) -> F0Contour:
    """Scale every f0 by ``speaker_median / ref_median``."""
    ratio = transposition_ratio(ref_median, speaker_median)
    if ratio == 1.0:
        return contour
    return contour.scaled(ratio)


def semitone_distance(f_a: float, f_b: float) -> float:
    """Unsigned distance between two frequencies in semitones."""
    return abs(12.0 * math.log2(f_a / f_b))
