"""Song timeline assembly and vocal/instrumental mixing."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioBuffer, load_wav

log = logging.getLogger(__name__)

PLACEMENT_SLACK = 0.010


class MixError(ValueError):
    pass


@dataclass(frozen=True)
class TimelinePlacement:
    utterance: AudioBuffer
    onset: float

    def __post_init__(self):
        if self.onset < 0:
            raise MixError(f"placement onset must be >= 0, got {self.onset}")


def _placement_key(p: TimelinePlacement):
    # total order independent of input order, so sums are bit-identical
    return (p.onset, len(p.utterance), p.utterance.samples.tobytes())


def assemble(
    placements: Sequence[TimelinePlacement], total: float, sample_rate: int | None = None
) -> AudioBuffer:
    """Sum utterances onto a silent timeline of ``total`` seconds.

    Overlaps add up.  Material running past ``total`` is cut; a warning is
    logged when the overrun exceeds 10 ms.
    """
    rates = {p.utterance.sample_rate for p in placements}
    if sample_rate is not None:
        rates.add(sample_rate)
    if len(rates) > 1:
        raise MixError(f"placements have different sample rates: {sorted(rates)}")
    if not rates:
        raise MixError("no sample rate: pass sample_rate for an empty timeline")
    fs = rates.pop()
    n = int(round(total * fs))
    out = np.zeros(n)
    for p in sorted(placements, key=_placement_key):
        a = int(round(p.onset * fs))
        seg = p.utterance.samples
        over = (a + seg.size - n) / fs
        if over > PLACEMENT_SLACK:
            log.warning("utterance at %.3f s overruns the %.3f s timeline by %.3f s; clipped", p.onset, total, over)
        stop = min(n, a + seg.size)
        if stop > a:
            out[a:stop] += seg[: stop - a]
    return AudioBuffer(out, fs)


def db_to_gain(db: float) -> float:
    return 0.0 if math.isinf(db) and db < 0 else 10.0 ** (db / 20.0)


def normalize_on_clip(buffer: AudioBuffer) -> AudioBuffer:
    peak = buffer.peak
    if peak <= 1.0:
        return buffer
    log.warning("peak %.3f exceeds full scale; scaling the whole signal by %.4f", peak, 1.0 / peak)
    return buffer.with_samples(buffer.samples / peak)


def mix(
    vocal: AudioBuffer,
    instrumental: AudioBuffer | None,
    vocal_gain_db: float = 0.0,
    inst_gain_db: float = 0.0,
) -> AudioBuffer:
    """``g_v * vocal + g_i * instrumental``, rescaled if it would clip.

    The shorter input is zero-padded.  ``instrumental=None`` or
    ``inst_gain_db=-inf`` drops the accompaniment.
    """
    gv = db_to_gain(vocal_gain_db)
    if instrumental is None or db_to_gain(inst_gain_db) == 0.0:
        out = vocal.samples if gv == 1.0 else gv * vocal.samples
        return normalize_on_clip(vocal.with_samples(out))
    if instrumental.sample_rate != vocal.sample_rate:
        raise MixError(
            f"sample rate mismatch: vocal {vocal.sample_rate} Hz, instrumental {instrumental.sample_rate} Hz"
        )
    gi = db_to_gain(inst_gain_db)
    n = max(len(vocal), len(instrumental))
    out = np.zeros(n)
    out[: len(vocal)] += gv * vocal.samples
    out[: len(instrumental)] += gi * instrumental.samples
    return normalize_on_clip(AudioBuffer(out, vocal.sample_rate))


def read_placements(path, sample_rate: int) -> list[TimelinePlacement]:
    """Load a ``[{"wav": ..., "onset_s": ...}]`` manifest; paths are relative to it."""
    path = Path(path)
    with open(path) as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise MixError(f"{path}: expected a JSON list of placements")
    out = []
    for i, item in enumerate(items):
        try:
            wav = path.parent / item["wav"]
            onset = float(item["onset_s"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MixError(f"{path}: placement #{i} needs 'wav' and 'onset_s'") from exc
        out.append(TimelinePlacement(load_wav(wav, sample_rate), onset))
    return out
