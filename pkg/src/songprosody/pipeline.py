"""End-to-end run: reference analysis, score, rendering, assembly, mix, evaluation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .alignment import DEFAULT_SILENCE, Alignment, PhonemeInterval, parse_alignment, write_alignment_tsv
from .audio import PIPELINE_RATE, AudioBuffer, load_wav, save_wav
from .metrics import evaluate, export_phoneme_midi, export_plot_data
from .mixdown import TimelinePlacement, assemble, mix, normalize_on_clip
from .notes import hz_to_note, transposition_ratio
from .pitch import (
    F0Contour,
    PitchConfig,
    extract_f0,
    phoneme_f0,
    process_contour,
    speaker_median_f0,
    write_contour_csv,
)
from .quantizer import DurationQuantizer, fit_duration_quantizer
from .retarget import BackendRequest, DSPBackend, SynthesisBackend
from .score import Score, build_score, export_midi_csv
from .tsm import stretch_segments

log = logging.getLogger(__name__)

STAGES = ("config", "extract", "score", "retarget", "assemble", "mix", "eval")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class Utterance:
    wav: Path
    alignment: Path


@dataclass
class ProjectConfig:
    reference: Utterance
    speaker: list[Utterance]
    output_dir: Path
    instrumental: Path | None = None
    pitch: PitchConfig = field(default_factory=PitchConfig)
    smooth_window: int = 5
    n_duration_classes: int = 15
    quantizer: Path | None = None
    duration_corpus: list[Path] | None = None
    quantize_silence: bool = False
    phoneme_statistic: str = "mean"
    median_mode: str = "global"
    contour_mode: str = "flat"
    post_process: bool = True
    vocal_gain_db: float = 0.0
    instrumental_gain_db: float = 0.0
    no_instrumental: bool = False
    rate: int = PIPELINE_RATE
    bit_depth: str = "16"
    figures: bool = True
    silence_labels: tuple[str, ...] = tuple(sorted(DEFAULT_SILENCE))

    def __post_init__(self):
        if self.n_duration_classes < 2:
            raise ValueError("n_duration_classes must be >= 2")
        if self.median_mode not in ("global", "per_utterance"):
            raise ValueError(f"median_mode must be 'global' or 'per_utterance', got {self.median_mode!r}")
        if not self.speaker:
            raise ValueError("the speaker manifest lists no utterances")

    def missing_files(self) -> list[Path]:
        paths = [self.reference.wav, self.reference.alignment]
        for u in self.speaker:
            paths += [u.wav, u.alignment]
        paths += [p for p in (self.instrumental, self.quantizer) if p is not None]
        paths += list(self.duration_corpus or [])
        return [p for p in paths if not Path(p).is_file()]

    @classmethod
    def from_dict(cls, d: dict, base: Path) -> "ProjectConfig":
        """Build from parsed JSON; relative paths resolve against ``base``."""

        def p(v):
            return None if v is None else (base / v).resolve()

        def utt(u):
            return Utterance(p(u["wav"]), p(u["alignment"]))

        d = dict(d)
        known = {
            "reference", "speaker", "output_dir", "instrumental", "pitch", "smooth_window",
            "n_duration_classes", "quantizer", "duration_corpus", "quantize_silence",
            "phoneme_statistic", "median_mode", "contour_mode", "post_process", "vocal_gain_db",
            "instrumental_gain_db", "no_instrumental", "rate", "bit_depth", "figures", "silence_labels",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        speaker = d.pop("speaker")
        if isinstance(speaker, dict):
            speaker = speaker["utterances"]
        kw = dict(
            reference=utt(d.pop("reference")),
            speaker=[utt(u) for u in speaker],
            output_dir=p(d.pop("output_dir", "out")),
            instrumental=p(d.pop("instrumental", None)),
            pitch=PitchConfig.from_dict(d.pop("pitch", None)),
            quantizer=p(d.pop("quantizer", None)),
        )
        corpus = d.pop("duration_corpus", None)
        if corpus is not None:
            kw["duration_corpus"] = [p(c) for c in corpus]
        if "silence_labels" in d:
            kw["silence_labels"] = tuple(d.pop("silence_labels"))
        if "bit_depth" in d:
            kw["bit_depth"] = str(d.pop("bit_depth"))
        kw.update(d)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh), path.parent.resolve())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise PipelineError("config", f"{path}: {exc}") from exc


@dataclass
class PipelineResult:
    score: Score
    acapella: AudioBuffer
    song: AudioBuffer
    syn_alignment: Alignment
    report: object
    artifacts: dict[str, Path]


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError) and isinstance(exc, Exception):
            raise PipelineError(self.name, str(exc)) from exc
        return False


def _median_per_utterance(contour: F0Contour, align: Alignment) -> list[tuple[float, float, float]]:
    """(start, end, median) of voiced reference frames for each sung run."""
    spans, cur = [], None
    for iv in align.intervals:
        if iv.is_silence:
            if cur:
                spans.append(cur)
            cur = None
        else:
            cur = (cur[0], iv.end) if cur else (iv.start, iv.end)
    if cur:
        spans.append(cur)
    out = []
    t = contour.times
    for a, b in spans:
        vals = contour.f0[contour.voiced & (t >= a) & (t < b)]
        out.append((a, b, float(np.median(vals)) if vals.size else math.nan))
    return out


def _match_source(utt_score: Score, sources, used: set[int]):
    want = utt_score.phonemes()
    candidates = [i for i, (_, al) in enumerate(sources) if al.phonemes() == want]
    if not candidates:
        raise ValueError(
            f"no speaker utterance has the phoneme sequence {' '.join(want)} "
            f"(song utterance at {utt_score.entries[0].start:.3f} s)"
        )
    fresh = [i for i in candidates if i not in used]
    pick = fresh[0] if fresh else candidates[0]
    used.add(pick)
    return sources[pick]


def run_pipeline(config: ProjectConfig, backend: SynthesisBackend | None = None) -> PipelineResult:
    """Run every stage, writing each intermediate artifact to ``config.output_dir``."""
    missing = config.missing_files()
    if missing:
        raise PipelineError("config", "missing input files: " + ", ".join(str(p) for p in missing))
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    art: dict[str, Path] = {}
    silence = set(config.silence_labels)
    backend = backend or DSPBackend(config.pitch, contour_mode=config.contour_mode)

    with _Stage("extract"):
        ref_wav = load_wav(config.reference.wav, config.rate)
        ref_align = parse_alignment(config.reference.alignment, silence)
        ref_raw = extract_f0(ref_wav, config.pitch)
        sources, speaker_contours = [], []
        for u in config.speaker:
            wav = load_wav(u.wav, config.rate)
            sources.append((wav, parse_alignment(u.alignment, silence)))
            speaker_contours.append(extract_f0(wav, config.pitch))
        art["ref_f0"] = out / "ref_f0.csv"
        write_contour_csv(ref_raw, art["ref_f0"])

    with _Stage("score"):
        if config.quantizer is not None:
            quantizer = DurationQuantizer.load(config.quantizer)
        else:
            corpus = config.duration_corpus
            aligns = (
                [parse_alignment(c, silence) for c in corpus]
                if corpus is not None
                else [ref_align] + [al for _, al in sources]
            )
            durations = [d for al in aligns for d in al.durations(include_silence=config.quantize_silence)]
            quantizer = fit_duration_quantizer(durations, config.n_duration_classes)
        art["quantizer"] = out / "quantizer.json"
        quantizer.save(art["quantizer"])
        score = score_from_contours(
            ref_align, ref_raw, speaker_contours, quantizer,
            config.smooth_window, config.phoneme_statistic, config.median_mode,
        )
        ref_median, spk_median = score.ref_median_f0, score.speaker_median_f0
        art["score"] = out / "score.json"
        score.save(art["score"])
        art["score_midi"] = out / "score_midi.csv"
        export_midi_csv(score, art["score_midi"])

    with _Stage("retarget"):
        rendered = []
        used: set[int] = set()
        for utt_score in score.utterances():
            wav, al = _match_source(utt_score, sources, used)
            request = BackendRequest(wav, al, utt_score)
            if isinstance(backend, DSPBackend):
                audio, utt_align = backend.render(request)
            else:
                audio = backend.synthesize(request)
                utt_align = utt_score.target_alignment()
            rendered.append((utt_score, audio, utt_align))

    with _Stage("assemble"):
        speech_ivs = ref_align.speech_intervals()
        placements, syn_ivs = [], []
        k = 0
        for utt_score, audio, utt_align in rendered:
            n = len(utt_score.entries)
            ref_ivs = speech_ivs[k : k + n]
            k += n
            onset = utt_score.entries[0].start
            if config.post_process:
                audio, utt_align = stretch_segments(audio, utt_align, [iv.duration for iv in ref_ivs])
            placements.append(TimelinePlacement(audio, onset))
            syn_ivs.extend(iv.shifted(onset) for iv in utt_align.intervals)
        total = max(ref_align.total_duration, ref_wav.duration)
        acapella = normalize_on_clip(assemble(placements, total, config.rate))
        syn_align = _timeline_alignment(syn_ivs, acapella.duration)
        art["acapella"] = out / "acapella.wav"
        save_wav(acapella, art["acapella"], config.bit_depth)
        art["syn_alignment"] = out / "syn_alignment.tsv"
        write_alignment_tsv(syn_align, art["syn_alignment"])

    with _Stage("mix"):
        inst = None
        if config.instrumental is not None and not config.no_instrumental:
            inst = load_wav(config.instrumental, config.rate)
        song = mix(acapella, inst, config.vocal_gain_db, config.instrumental_gain_db)
        art["song"] = out / "song.wav"
        save_wav(song, art["song"], config.bit_depth)

    with _Stage("eval"):
        # score the written artifacts, exactly as the standalone eval command would
        report, eval_art = evaluate_outputs(
            ref_raw, ref_align, load_wav(art["acapella"], config.rate),
            parse_alignment(art["syn_alignment"], silence), ref_median, spk_median, out,
            config.pitch, config.smooth_window, config.phoneme_statistic, config.figures,
        )
        art.update(eval_art)

    return PipelineResult(score, acapella, song, syn_align, report, art)


def score_from_contours(
    ref_align: Alignment,
    ref_raw: F0Contour,
    speaker_contours: list[F0Contour],
    quantizer: DurationQuantizer,
    smooth_window: int = 5,
    statistic: str = "mean",
    median_mode: str = "global",
) -> Score:
    """Score from the raw reference contour and the speaker's contours.

    Medians come from the raw voiced frames; phoneme averages from the
    interpolated and smoothed reference contour.
    """
    ref_median = speaker_median_f0([ref_raw])
    spk_median = speaker_median_f0(speaker_contours)
    ref_proc = process_contour(ref_raw, smooth_window)
    if median_mode == "global":
        return build_score(ref_align, ref_proc, ref_median, spk_median, quantizer, statistic)
    if median_mode == "per_utterance":
        return _build_score_per_utterance(ref_align, ref_proc, ref_raw, ref_median, spk_median, quantizer, statistic)
    raise ValueError(f"median_mode must be 'global' or 'per_utterance', got {median_mode!r}")


def evaluate_outputs(
    ref_raw: F0Contour,
    ref_align: Alignment,
    acapella: AudioBuffer,
    syn_align: Alignment,
    ref_median: float,
    spk_median: float,
    out_dir,
    pitch: PitchConfig | None = None,
    smooth_window: int = 5,
    statistic: str = "mean",
    figures: bool = True,
):
    """Score the a-capella against the reference; writes JSON, CSVs and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    art = {}
    syn_raw = extract_f0(acapella, pitch)
    report = evaluate(
        process_contour(ref_raw, smooth_window), ref_align,
        process_contour(syn_raw, smooth_window), syn_align,
        ref_median, spk_median, statistic,
    )
    art["eval"] = out / "eval.json"
    report.save(art["eval"])
    art["plot"] = out / "contours.csv"
    export_plot_data(ref_raw.scaled(spk_median / ref_median), syn_raw, art["plot"])
    art["phoneme_midi"] = out / "phoneme_midi.csv"
    export_phoneme_midi(report, ref_align, syn_align, art["phoneme_midi"])
    if figures:
        from .plots import plot_contours, plot_midi

        art["contours_png"] = out / "contours.png"
        plot_contours(art["plot"], art["contours_png"])
        art["midi_png"] = out / "phoneme_midi.png"
        plot_midi(art["phoneme_midi"], art["midi_png"])
    return report, art


def _timeline_alignment(ivs: list[PhonemeInterval], total: float) -> Alignment:
    """Fill the gaps between placed utterances with silence."""
    out, t = [], 0.0
    for iv in ivs:
        if iv.start > t + 1e-9:
            out.append(PhonemeInterval("sil", t, iv.start, True))
        elif iv.start < t - 1e-6:
            log.warning("phoneme '%s' at %.3f s overlaps the previous utterance", iv.label, iv.start)
        start = max(iv.start, t)
        if iv.end <= start:
            raise ValueError(f"placed phoneme '{iv.label}' at {iv.start:.4f} s is hidden by the previous utterance")
        out.append(PhonemeInterval(iv.label, start, iv.end, iv.is_silence))
        t = iv.end
    if total > t + 1e-9:
        out.append(PhonemeInterval("sil", t, total, True))
    return Alignment(tuple(out), max(total, t))


def _build_score_per_utterance(ref_align, ref_proc, ref_raw, ref_median, spk_median, quantizer, statistic) -> Score:
    """Like ``build_score`` but each sung run is transposed with its own median."""
    base = build_score(ref_align, ref_proc, ref_median, spk_median, quantizer, statistic)
    means = dict(phoneme_f0(ref_proc, ref_align, statistic))
    spans = _median_per_utterance(ref_raw, ref_align)
    entries = []
    for i, (iv, e) in enumerate(zip(ref_align.intervals, base.entries)):
        if e.is_silence:
            entries.append(e)
            continue
        local = next((m for a, b, m in spans if a - 1e-9 <= iv.start < b), math.nan)
        if not math.isfinite(local):
            local = ref_median
        entries.append(replace(e, note=hz_to_note(means[i] * transposition_ratio(local, spk_median))))
    return Score(tuple(entries), ref_median, spk_median)
