"""Objective per-phoneme pitch and duration errors, plus plot data exports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import Alignment
from .notes import MIDI_OFFSET, hz_to_semitone_index, transposition_ratio
from .pitch import F0Contour, interpolate_unvoiced, phoneme_f0


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class PhonemeRow:
    phoneme: str
    ref_f0: float
    syn_f0: float
    err_semitones: float
    ref_dur: float
    syn_dur: float
    err_ms: float


@dataclass(frozen=True)
class EvalReport:
    """Mean and population std over the evaluated (non-silence) phonemes."""

    pitch_error_mean: float
    pitch_error_std: float
    duration_error_mean: float
    duration_error_std: float
    per_phoneme: list[PhonemeRow] = field(default_factory=list)
    spread: str = "population std over phonemes"

    @property
    def n_phonemes(self) -> int:
        return len(self.per_phoneme)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_phonemes"] = self.n_phonemes
        d["units"] = {"pitch": "semitones", "duration": "ms"}
        return d

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _check_sequences(ref_align: Alignment, syn_align: Alignment) -> None:
    a, b = ref_align.phonemes(), syn_align.phonemes()
    if a != b:
        raise EvalError(
            f"reference and synthesized phoneme sequences differ ({len(a)} vs {len(b)} phonemes)"
        )
    if not a:
        raise EvalError("no phonemes to evaluate")


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def _per_phoneme_f0(contour: F0Contour, align: Alignment, statistic: str) -> list[float]:
    if not contour.fully_voiced:
        contour = interpolate_unvoiced(contour)
    return [f for _, f in phoneme_f0(contour, align, statistic)]


def pitch_errors(
    ref_contour: F0Contour,
    ref_align: Alignment,
    syn_contour: F0Contour,
    syn_align: Alignment,
    ref_median: float,
    speaker_median: float,
    statistic: str = "mean",
) -> tuple[list[float], list[float], list[float]]:
    """Per-phoneme (transposed reference F0, synthesized F0, |error| in semitones)."""
    _check_sequences(ref_align, syn_align)
    ratio = transposition_ratio(ref_median, speaker_median)
    ref = [f * ratio for f in _per_phoneme_f0(ref_contour, ref_align, statistic)]
    syn = _per_phoneme_f0(syn_contour, syn_align, statistic)
    if min(ref) <= 0 or min(syn) <= 0:
        raise EvalError("zero F0 in a phoneme")
    errs = [abs(12.0 * math.log2(s / r)) for r, s in zip(ref, syn)]
    return ref, syn, errs


def pitch_error(
    ref_contour: F0Contour,
    ref_align: Alignment,
    syn_contour: F0Contour,
    syn_align: Alignment,
    ref_median: float,
    speaker_median: float,
    statistic: str = "mean",
) -> tuple[float, float]:
    """Mean and population std of per-phoneme semitone distance.

    The reference F0 is first moved into the speaker's range with the
    median ratio.
    """
    *_, errs = pitch_errors(
        ref_contour, ref_align, syn_contour, syn_align, ref_median, speaker_median, statistic
    )
    return _mean_std(errs)


def duration_errors(ref_align: Alignment, syn_align: Alignment) -> list[float]:
    _check_sequences(ref_align, syn_align)
    return [
        abs(s - r) * 1000.0
        for r, s in zip(ref_align.durations(), syn_align.durations())
    ]


def duration_error(ref_align: Alignment, syn_align: Alignment) -> tuple[float, float]:
    """Mean and population std of per-phoneme |duration difference| in ms."""
    return _mean_std(duration_errors(ref_align, syn_align))


def evaluate(
    ref_contour: F0Contour,
    ref_align: Alignment,
    syn_contour: F0Contour,
    syn_align: Alignment,
    ref_median: float,
    speaker_median: float,
    statistic: str = "mean",
) -> EvalReport:
    ref_f0, syn_f0, p_err = pitch_errors(
        ref_contour, ref_align, syn_contour, syn_align, ref_median, speaker_median, statistic
    )
    d_err = duration_errors(ref_align, syn_align)
    rows = [
        PhonemeRow(lab, rf, sf, pe, rd, sd, de)
        for lab, rf, sf, pe, rd, sd, de in zip(
            ref_align.phonemes(),
            ref_f0,
            syn_f0,
            p_err,
            ref_align.durations(),
            syn_align.durations(),
            d_err,
        )
    ]
    pm, ps = _mean_std(p_err)
    dm, ds = _mean_std(d_err)
    return EvalReport(pm, ps, dm, ds, rows)


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else f"{v:.3f}"


def export_plot_data(ref_contour: F0Contour, syn_contour: F0Contour, path) -> None:
    """Frame-aligned ``time_s,ref_f0,syn_f0``; blanks where a track has no value."""
    hop = ref_contour.hop
    if not math.isclose(hop, syn_contour.hop, rel_tol=1e-9):
        raise EvalError(f"contours use different hops ({hop} vs {syn_contour.hop})")
    n = max(len(ref_contour), len(syn_contour))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "ref_f0", "syn_f0"])
        for i in range(n):
            r = ref_contour.f0[i] if i < len(ref_contour) else np.nan
            s = syn_contour.f0[i] if i < len(syn_contour) else np.nan
            w.writerow([f"{i * hop:.3f}", _fmt(r), _fmt(s)])


def read_plot_data(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t, r, s = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            t.append(float(row["time_s"]))
            r.append(float(row["ref_f0"]) if row["ref_f0"] else np.nan)
            s.append(float(row["syn_f0"]) if row["syn_f0"] else np.nan)
    return np.array(t), np.array(r), np.array(s)


def export_phoneme_midi(report: EvalReport, ref_align: Alignment, syn_align: Alignment, path) -> None:
    """Per-phoneme MIDI values of the transposed reference and the synthesis."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phoneme", "ref_start_s", "ref_end_s", "ref_midi", "syn_start_s", "syn_end_s", "syn_midi"])
        for row, r, s in zip(report.per_phoneme, ref_align.speech_intervals(), syn_align.speech_intervals()):
            w.writerow([
                row.phoneme,
                f"{r.start:.4f}",
                f"{r.end:.4f}",
                hz_to_semitone_index(row.ref_f0) + MIDI_OFFSET,
                f"{s.start:.4f}",
                f"{s.end:.4f}",
                hz_to_semitone_index(row.syn_f0) + MIDI_OFFSET,
            ])
