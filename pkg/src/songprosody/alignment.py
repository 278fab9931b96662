"""Phoneme alignments: TSV and Praat TextGrid ingestion."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

DEFAULT_SILENCE = frozenset({"sil", "sp", ""})
# boundary mismatch below this is treated as contiguous
TIME_EPS = 1e-6


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class PhonemeInterval:
    label: str
    start: float
    end: float
    is_silence: bool = False

    @property
    def duration(self) -> float:
        return self.end - self.start

    def shifted(self, offset: float) -> "PhonemeInterval":
        return PhonemeInterval(self.label, self.start + offset, self.end + offset, self.is_silence)


@dataclass(frozen=True)
class Alignment:
    """Contiguous, time-ordered phoneme intervals starting at 0."""

    intervals: tuple[PhonemeInterval, ...]
    total_duration: float

    def __post_init__(self):
        ivs = tuple(self.intervals)
        object.__setattr__(self, "intervals", ivs)
        prev_end = 0.0
        for i, iv in enumerate(ivs):
            if not iv.is_silence and not iv.label:
                raise AlignmentError(f"interval #{i}: empty label on a non-silence interval")
            if iv.end <= iv.start:
                raise AlignmentError(f"interval #{i} '{iv.label}': end {iv.end} <= start {iv.start}")
            if iv.start < prev_end - TIME_EPS:
                raise AlignmentError(f"interval #{i} '{iv.label}' overlaps the previous interval")
            if iv.start > prev_end + TIME_EPS:
                raise AlignmentError(
                    f"interval #{i} '{iv.label}': gap before {iv.start} must be an explicit silence"
                )
            prev_end = iv.end
        if ivs and ivs[-1].end > self.total_duration + TIME_EPS:
            raise AlignmentError(
                f"last interval ends at {ivs[-1].end} beyond total duration {self.total_duration}"
            )

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def end(self) -> float:
        return self.intervals[-1].end if self.intervals else 0.0

    def phonemes(self) -> list[str]:
        """Labels of the non-silence intervals, in order."""
        return [iv.label for iv in self.intervals if not iv.is_silence]

    def speech_intervals(self) -> list[PhonemeInterval]:
        return [iv for iv in self.intervals if not iv.is_silence]

    def durations(self, include_silence: bool = False) -> list[float]:
        return [iv.duration for iv in self.intervals if include_silence or not iv.is_silence]

    @classmethod
    def from_durations(
        cls, labels: Sequence[str], durations: Sequence[float], silence: Iterable[str] = DEFAULT_SILENCE
    ) -> "Alignment":
        silence = set(silence)
        t = 0.0
        ivs = []
        for lab, d in zip(labels, durations):
            ivs.append(PhonemeInterval(lab, t, t + d, lab in silence))
            t += d
        return cls(tuple(ivs), t)


def build_alignment(
    rows: Sequence[tuple[str, float, float]],
    total: float | None = None,
    silence: Iterable[str] = DEFAULT_SILENCE,
    fill_gaps: bool = True,
    gap_label: str = "sil",
    line_numbers: Sequence[int] | None = None,
) -> Alignment:
    """Validate raw ``(label, start, end)`` rows into an Alignment.

    Gaps (including one before the first row) become explicit silence
    intervals when ``fill_gaps`` is set.
    """
    silence = set(silence)
    where = (lambda i: f"line {line_numbers[i]}") if line_numbers else (lambda i: f"row {i + 1}")
    ivs: list[PhonemeInterval] = []
    prev_end = 0.0
    for i, (label, start, end) in enumerate(rows):
        if end <= start:
            raise AlignmentError(f"{where(i)}: end {end} <= start {start} for '{label}'")
        if start < prev_end - TIME_EPS:
            raise AlignmentError(f"{where(i)}: '{label}' starts at {start}, overlapping previous end {prev_end}")
        if start > prev_end + TIME_EPS:
            if not fill_gaps:
                raise AlignmentError(f"{where(i)}: gap {prev_end}-{start} before '{label}'")
            ivs.append(PhonemeInterval(gap_label, prev_end, start, True))
        else:
            start = prev_end
        ivs.append(PhonemeInterval(label, start, end, label in silence))
        prev_end = end
    total = prev_end if total is None else max(total, prev_end)
    return Alignment(tuple(ivs), total)


def _parse_tsv(text: str, silence) -> Alignment:
    rows, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 3:
            raise AlignmentError(f"line {lineno}: expected 'label<TAB>start<TAB>end', got {line!r}")
        label = parts[0].strip()
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError:
            raise AlignmentError(f"line {lineno}: times are not numbers: {line!r}") from None
        rows.append((label, start, end))
        lines.append(lineno)
    return build_alignment(rows, silence=silence, line_numbers=lines)


_TG_TOKEN = re.compile(r'"((?:[^"]|"")*)"|(?<![\w\[])(-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)(?![\w\]])|(<exists>|<absent>)')


def _tg_tokens(text: str) -> list[tuple[str | float, int]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = re.sub(r"\[\s*\d*\s*\]", "", line)
        if line.lstrip().startswith("!"):
            continue
        for m in _TG_TOKEN.finditer(line):
            if m.group(1) is not None:
                out.append((m.group(1).replace('""', '"'), lineno))
            elif m.group(2) is not None:
                out.append((float(m.group(2)), lineno))
            else:
                out.append((m.group(3), lineno))
    return out


def _parse_textgrid(text: str, silence, tier: str | None) -> Alignment:
    toks = _tg_tokens(text)
    pos = 0

    def take(kind):
        nonlocal pos
        if pos >= len(toks):
            raise AlignmentError("TextGrid: unexpected end of file")
        val, lineno = toks[pos]
        if kind is float and not isinstance(val, float):
            raise AlignmentError(f"TextGrid line {lineno}: expected a number, got {val!r}")
        if kind is str and not isinstance(val, str):
            raise AlignmentError(f"TextGrid line {lineno}: expected a string, got {val!r}")
        pos += 1
        return val, lineno

    ftype, _ = take(str)
    oclass, lineno = take(str)
    if ftype != "ooTextFile" or oclass != "TextGrid":
        raise AlignmentError(f"TextGrid line {lineno}: not an ooTextFile TextGrid")
    take(float)
    xmax, _ = take(float)
    exists, lineno = take(str)
    if exists != "<exists>":
        raise AlignmentError("TextGrid has no tiers")
    n_tiers = int(take(float)[0])
    tiers = []
    for _ in range(n_tiers):
        cls, lineno = take(str)
        name, _ = take(str)
        take(float)
        take(float)
        n = int(take(float)[0])
        items = []
        for _ in range(n):
            if cls == "IntervalTier":
                a, ln = take(float)
                b, _ = take(float)
                lab, _ = take(str)
                items.append((lab.strip(), a, b, ln))
            elif cls == "TextTier":
                take(float)
                take(str)
            else:
                raise AlignmentError(f"TextGrid line {lineno}: unknown tier class {cls!r}")
        if cls == "IntervalTier":
            tiers.append((name, items))
    if not tiers:
        raise AlignmentError("TextGrid has no IntervalTier")
    if tier is not None:
        chosen = [t for t in tiers if t[0] == tier]
        if not chosen:
            raise AlignmentError(f"TextGrid has no tier named {tier!r}; found {[t[0] for t in tiers]}")
    else:
        chosen = [t for t in tiers if t[0] in ("phones", "phone", "phonemes")] or tiers
    items = chosen[0][1]
    return build_alignment(
        [(lab, a, b) for lab, a, b, _ in items],
        total=xmax,
        silence=silence,
        line_numbers=[ln for *_, ln in items],
    )


def parse_alignment(path, silence: Iterable[str] = DEFAULT_SILENCE, tier: str | None = None) -> Alignment:
    """Read a phoneme alignment from a TSV file or a Praat TextGrid.

    TSV rows are ``label<TAB>start_s<TAB>end_s``; whitespace-separated rows
    are accepted when no tab is present.  TextGrids may be in long or short
    text format; the tier named ``tier`` (default: ``phones`` or the first
    interval tier) is used.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    if 'ooTextFile' in text[:200]:
        return _parse_textgrid(text, silence, tier)
    return _parse_tsv(text, silence)


def write_alignment_tsv(alignment: Alignment, path) -> None:
    with open(path, "w") as fh:
        for iv in alignment.intervals:
            fh.write(f"{iv.label}\t{iv.start:.6f}\t{iv.end:.6f}\n")
