"""Per-phoneme prosody score: note labels plus quantized target durations."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

from .alignment import Alignment, PhonemeInterval
from .notes import NoteLabel, hz_to_note, transposition_ratio
from .pitch import F0Contour, phoneme_f0
from .quantizer import DurationQuantizer, dequantize, quantize_duration


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreEntry:
    phoneme: str
    start: float
    target_duration: float
    note: NoteLabel | None = None
    duration_class: int | None = None

    @property
    def is_silence(self) -> bool:
        return self.note is None

    def to_dict(self) -> dict:
        return {
            "phoneme": self.phoneme,
            "start_s": self.start,
            "duration_s": self.target_duration,
            "note": None if self.note is None else self.note.note,
            "octave": None if self.note is None else self.note.octave,
            "duration_class": self.duration_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreEntry":
        note = None
        if d.get("note") is not None:
            note = NoteLabel(int(d["note"]), int(d["octave"]))
        dc = d.get("duration_class")
        return cls(
            str(d["phoneme"]),
            float(d["start_s"]),
            float(d["duration_s"]),
            note,
            None if dc is None else int(dc),
        )


@dataclass(frozen=True)
class Score:
    entries: tuple[ScoreEntry, ...]
    ref_median_f0: float
    speaker_median_f0: float

    def __post_init__(self):
        ents = tuple(self.entries)
        object.__setattr__(self, "entries", ents)
        for i, e in enumerate(ents):
            if e.target_duration <= 0:
                raise ScoreError(f"entry #{i} '{e.phoneme}' has non-positive target duration")
            if i and e.start < ents[i - 1].start:
                raise ScoreError(f"entry #{i} '{e.phoneme}' starts before its predecessor")

    def __len__(self) -> int:
        return len(self.entries)

    def phonemes(self) -> list[str]:
        return [e.phoneme for e in self.entries if not e.is_silence]

    def sung(self) -> list[ScoreEntry]:
        return [e for e in self.entries if not e.is_silence]

    @property
    def total_target_duration(self) -> float:
        return sum(e.target_duration for e in self.entries)

    def subscore(self, entries: Sequence[ScoreEntry]) -> "Score":
        return Score(tuple(entries), self.ref_median_f0, self.speaker_median_f0)

    def utterances(self) -> list["Score"]:
        """Maximal runs of sung entries between silence entries."""
        runs, cur = [], []
        for e in self.entries:
            if e.is_silence:
                if cur:
                    runs.append(cur)
                cur = []
            else:
                cur.append(e)
        if cur:
            runs.append(cur)
        return [self.subscore(r) for r in runs]

    def target_alignment(self, offset: float | None = None) -> Alignment:
        """Alignment of a rendering that honours every target duration.

        Intervals are laid end to end from 0, or from ``offset`` with a
        leading silence.
        """
        t = 0.0 if offset is None else offset
        ivs = []
        if t > 0:
            ivs.append(PhonemeInterval("sil", 0.0, t, True))
        for e in self.entries:
            ivs.append(PhonemeInterval(e.phoneme, t, t + e.target_duration, e.is_silence))
            t += e.target_duration
        return Alignment(tuple(ivs), t)

    def to_dict(self) -> dict:
        return {
            "ref_median_f0": self.ref_median_f0,
            "speaker_median_f0": self.speaker_median_f0,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Score":
        return cls(
            tuple(ScoreEntry.from_dict(e) for e in d["entries"]),
            float(d["ref_median_f0"]),
            float(d["speaker_median_f0"]),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Score":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_score(
    alignment: Alignment,
    contour: F0Contour,
    ref_median: float,
    speaker_median: float,
    quantizer: DurationQuantizer,
    statistic: str = "mean",
) -> Score:
    """Turn a reference alignment and processed contour into a Score.

    Each sung phoneme gets its average F0 transposed into the speaker's
    range and rounded to a note; its duration is replaced by the
    representative of its duration class.  Silences keep their raw length.
    """
    if len(alignment) == 0:
        raise ScoreError("cannot build a score from an empty alignment")
    ratio = transposition_ratio(ref_median, speaker_median)
    means = dict(phoneme_f0(contour, alignment, statistic)) if alignment.phonemes() else {}
    entries = []
    for i, iv in enumerate(alignment.intervals):
        if iv.is_silence:
            entries.append(ScoreEntry(iv.label, iv.start, iv.duration))
            continue
        try:
            note = hz_to_note(means[i] * ratio)
        except ValueError as exc:
            raise ScoreError(f"phoneme #{i} '{iv.label}': {exc}") from exc
        k = quantize_duration(quantizer, iv.duration)
        entries.append(ScoreEntry(iv.label, iv.start, dequantize(quantizer, k), note, k))
    return Score(tuple(entries), float(ref_median), float(speaker_median))


def export_midi_csv(score: Score, path) -> None:
    """Write ``start_s,end_s,phoneme,midi`` rows, blank midi for silences.

    Rows are laid end to end with the target durations, starting at the
    first entry's reference start.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_s", "end_s", "phoneme", "midi"])
        t = score.entries[0].start if score.entries else 0.0
        for e in score.entries:
            end = t + e.target_duration
            midi = "" if e.note is None else e.note.midi
            w.writerow([f"{t:.4f}", f"{end:.4f}", e.phoneme, midi])
            t = end


def read_midi_csv(path) -> list[tuple[float, float, str, int | None]]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            midi = int(r["midi"]) if r["midi"].strip() else None
            rows.append((float(r["start_s"]), float(r["end_s"]), r["phoneme"], midi))
    return rows
