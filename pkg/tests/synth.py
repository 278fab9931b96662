"""Synthetic signals and project fixtures shared by the tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from songprosody.alignment import Alignment, write_alignment_tsv
from songprosody.audio import AudioBuffer, save_wav
from songprosody.quantizer import fit_duration_quantizer

FS = 24000


def sine(freq: float, dur: float, fs: int = FS, amp: float = 0.5) -> AudioBuffer:
    t = np.arange(int(round(dur * fs))) / fs
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), fs)


def sawtooth_track(segments, fs: int = FS, amp: float = 0.4) -> AudioBuffer:
    """Phase-continuous sawtooth; ``segments`` is [(f0 or None, seconds)]."""
    parts, phase = [], 0.0
    for f0, dur in segments:
        n = int(round(dur * fs))
        if f0 is None:
            parts.append(np.zeros(n))
            continue
        ph = phase + np.arange(n) * f0 / fs
        parts.append(amp * (2.0 * (ph % 1.0) - 1.0))
        phase = (phase + n * f0 / fs) % 1.0
    return AudioBuffer(np.concatenate(parts), fs)


def sawtooth(freq: float, dur: float, fs: int = FS, amp: float = 0.4) -> AudioBuffer:
    return sawtooth_track([(freq, dur)], fs, amp)


# A3, C4, E4 with known lengths, framed by pauses
SONG = [("sil", None, 0.20), ("a", 220.0, 0.40), ("e", 261.6256, 0.30), ("o", 329.6276, 0.50), ("sil", None, 0.30)]
# a different voice, median ten semitones below the song's median (C4)
SPEAKER = [("sil", None, 0.15), ("a", 140.0, 0.22), ("e", 146.8324, 0.22), ("o", 155.0, 0.22), ("sil", None, 0.15)]


def _write_utterance(spec, stem: Path) -> tuple[Path, Path]:
    audio = sawtooth_track([(f, d) for _, f, d in spec])
    align = Alignment.from_durations([lab for lab, _, _ in spec], [d for _, _, d in spec])
    wav, tsv = stem.with_suffix(".wav"), stem.with_suffix(".tsv")
    save_wav(audio, wav)
    write_alignment_tsv(align, tsv)
    return wav, tsv


def write_project(root: Path, instrumental: bool = True, **overrides) -> Path:
    """Write a complete synthetic project under ``root``; returns the config path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    _write_utterance(SONG, root / "song")
    _write_utterance(SPEAKER, root / "speaker")
    q = fit_duration_quantizer(np.linspace(0.04, 0.60, 300), 15)
    q.save(root / "quantizer.json")
    cfg = {
        "reference": {"wav": "song.wav", "alignment": "song.tsv"},
        "speaker": [{"wav": "speaker.wav", "alignment": "speaker.tsv"}],
        "quantizer": "quantizer.json",
        "output_dir": "out",
    }
    if instrumental:
        total = sum(d for *_, d in SONG)
        save_wav(sine(110.0, total, amp=0.3), root / "inst.wav")
        cfg["instrumental"] = "inst.wav"
        cfg["instrumental_gain_db"] = -6.0
    cfg.update(overrides)
    path = root / "project.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n")
    return path


def fft_f0(x: np.ndarray, fs: int, lo: float, hi: float) -> float:
    """Strongest spectral peak in [lo, hi] Hz, refined by a parabola on log magnitude.

    Independent of the autocorrelation tracker, so it can cross-check it.
    """
    x = np.asarray(x, dtype=float)
    n = 1 << int(np.ceil(np.log2(len(x) * 8)))
    mag = np.abs(np.fft.rfft(x * np.hanning(len(x)), n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    band = np.where((freqs >= lo) & (freqs <= hi))[0]
    k = band[np.argmax(mag[band])]
    a, b, c = np.log(mag[k - 1 : k + 2] + 1e-300)
    shift = 0.5 * (a - c) / (a - 2 * b + c)
    return float((k + shift) * fs / n)


def tracked_f0(buffer, **cfg) -> float:
    """Median voiced F0 from the library's tracker."""
    from songprosody.pitch import PitchConfig, extract_f0

    c = extract_f0(buffer, PitchConfig(**cfg))
    return float(np.median(c.voiced_values()))


def semitones(a: float, b: float) -> float:
    return 12.0 * np.log2(a / b)
