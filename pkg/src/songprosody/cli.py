"""Command-line entry point: one subcommand per stage plus ``run``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .alignment import DEFAULT_SILENCE, parse_alignment, write_alignment_tsv
from .audio import PIPELINE_RATE, WavError, load_wav, save_wav
from .mixdown import assemble, mix, read_placements
from .pitch import PitchConfig, extract_f0, process_contour, write_contour_csv
from .pipeline import PipelineError, ProjectConfig, evaluate_outputs, run_pipeline, score_from_contours
from .quantizer import DurationQuantizer, fit_duration_quantizer
from .retarget import BackendRequest, DSPBackend, augment
from .score import Score, export_midi_csv
from .tsm import TimeMap, detect_epochs, psola_shift, read_time_map_csv, wsola_stretch

log = logging.getLogger("songprosody")


def _pitch_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pitch tracker")
    d = PitchConfig()
    g.add_argument("--f-min", type=float, default=d.f_min, help="lowest F0 in Hz (default %(default)s)")
    g.add_argument("--f-max", type=float, default=d.f_max, help="highest F0 in Hz (default %(default)s)")
    g.add_argument("--hop", type=float, default=d.hop, help="frame hop in seconds (default %(default)s)")
    g.add_argument("--voicing-threshold", type=float, default=d.voicing_threshold)


def _pitch_config(args) -> PitchConfig:
    return PitchConfig(
        f_min=args.f_min, f_max=args.f_max, hop=args.hop, voicing_threshold=args.voicing_threshold
    )


def _silence(args) -> set[str]:
    return set(args.silence) if args.silence else set(DEFAULT_SILENCE)


# subcommands


def cmd_extract_f0(args) -> None:
    audio = load_wav(args.wav, args.rate)
    contour = extract_f0(audio, _pitch_config(args))
    if args.smooth is not None:
        contour = process_contour(contour, args.smooth)
    write_contour_csv(contour, args.out)
    n = int(contour.voiced.sum())
    print(f"{len(contour)} frames, {n} voiced -> {args.out}")


def cmd_align_check(args) -> None:
    al = parse_alignment(args.align, _silence(args), args.tier)
    print(f"{len(al)} intervals, {len(al.phonemes())} phonemes, {al.total_duration:.3f} s")
    if args.wav:
        dur = load_wav(args.wav).duration
        if al.end > dur + 0.010:
            raise ValueError(f"alignment ends at {al.end:.3f} s but the audio lasts {dur:.3f} s")
        print(f"audio {dur:.3f} s: alignment fits")


def cmd_fit_quantizer(args) -> None:
    durs = []
    for path in args.align:
        durs.extend(parse_alignment(path, _silence(args)).durations(include_silence=args.include_silence))
    q = fit_duration_quantizer(durs, args.n_classes)
    q.save(args.out)
    print(f"{q.n_classes} classes from {len(durs)} durations -> {args.out}")


def cmd_build_score(args) -> None:
    pitch = _pitch_config(args)
    ref_align = parse_alignment(args.align, _silence(args))
    ref_raw = extract_f0(load_wav(args.wav, args.rate), pitch)
    speaker = [extract_f0(load_wav(w, args.rate), pitch) for w in args.speaker_wav]
    score = score_from_contours(
        ref_align, ref_raw, speaker, DurationQuantizer.load(args.quantizer),
        args.smooth, args.statistic, args.median_mode,
    )
    score.save(args.out)
    if args.midi_out:
        export_midi_csv(score, args.midi_out)
    print(f"{len(score.sung())} sung phonemes, medians {score.ref_median_f0:.1f} -> "
          f"{score.speaker_median_f0:.1f} Hz -> {args.out}")


def cmd_retarget(args) -> None:
    src = load_wav(args.source, args.rate)
    request = BackendRequest(src, parse_alignment(args.align, _silence(args)), Score.load(args.score))
    out, al = DSPBackend(_pitch_config(args), contour_mode=args.contour_mode).render(request)
    save_wav(out, args.out, args.bit_depth)
    if args.align_out:
        write_alignment_tsv(al, args.align_out)
    print(f"{out.duration:.3f} s -> {args.out}")


def cmd_augment(args) -> None:
    audio = load_wav(args.wav, args.rate)
    out = augment(audio, extract_f0(audio, _pitch_config(args)), args.semitones, args.tempo)
    save_wav(out, args.out, args.bit_depth)
    print(f"{audio.duration:.3f} s -> {out.duration:.3f} s -> {args.out}")


def cmd_stretch(args) -> None:
    audio = load_wav(args.wav, args.rate)
    tmap = read_time_map_csv(args.map) if args.map else TimeMap.uniform(audio.duration, args.ratio)
    out = wsola_stretch(audio, tmap)
    save_wav(out, args.out, args.bit_depth)
    print(f"{audio.duration:.3f} s -> {out.duration:.3f} s -> {args.out}")


def cmd_pitchshift(args) -> None:
    audio = load_wav(args.wav, args.rate)
    ratio = args.ratio if args.ratio is not None else 2.0 ** (args.semitones / 12.0)
    contour = extract_f0(audio, _pitch_config(args))
    out = psola_shift(audio, detect_epochs(audio, contour), ratio)
    save_wav(out, args.out, args.bit_depth)
    print(f"ratio {ratio:.4f} -> {args.out}")


def cmd_assemble(args) -> None:
    placements = read_placements(args.manifest, args.rate)
    total = args.total
    if total is None:
        total = max((p.onset + p.utterance.duration for p in placements), default=0.0)
    out = assemble(placements, total, args.rate)
    save_wav(out, args.out, args.bit_depth)
    print(f"{len(placements)} utterances, {out.duration:.3f} s -> {args.out}")


def cmd_mix(args) -> None:
    vocal = load_wav(args.vocal, args.rate)
    inst = None
    if args.instrumental and not args.no_instrumental:
        inst = load_wav(args.instrumental, args.rate)
    out = mix(vocal, inst, args.vocal_gain_db, args.inst_gain_db)
    save_wav(out, args.out, args.bit_depth)
    print(f"peak {out.peak:.3f} -> {args.out}")


def cmd_eval(args) -> None:
    pitch = _pitch_config(args)
    ref_raw = extract_f0(load_wav(args.ref_wav, args.rate), pitch)
    score = Score.load(args.score) if args.score else None
    ref_median = args.ref_median if args.ref_median is not None else score and score.ref_median_f0
    spk_median = args.speaker_median if args.speaker_median is not None else score and score.speaker_median_f0
    if not ref_median or not spk_median:
        raise ValueError("pass --score or both --ref-median and --speaker-median")
    report, art = evaluate_outputs(
        ref_raw,
        parse_alignment(args.ref_align, _silence(args)),
        load_wav(args.syn_wav, args.rate),
        parse_alignment(args.syn_align, _silence(args)),
        ref_median, spk_median, args.out_dir, pitch, args.smooth, args.statistic,
        figures=not args.no_figures,
    )
    print(f"pitch error {report.pitch_error_mean:.3f} +/- {report.pitch_error_std:.3f} st, "
          f"duration error {report.duration_error_mean:.1f} +/- {report.duration_error_std:.1f} ms")
    for p in art.values():
        print(f"  {p}")


def cmd_run(args) -> None:
    config = ProjectConfig.load(args.config)
    if args.out_dir:
        config.output_dir = Path(args.out_dir).resolve()
    if args.no_instrumental:
        config.no_instrumental = True
    if args.no_figures:
        config.figures = False
    result = run_pipeline(config)
    r = result.report
    print(f"pitch error {r.pitch_error_mean:.3f} st, duration error {r.duration_error_mean:.1f} ms")
    for p in result.artifacts.values():
        print(f"  {p}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="songprosody", description="Retarget spoken utterances onto a reference song's notes and rhythm."
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rate", type=int, default=PIPELINE_RATE, help="processing sample rate (default %(default)s)")
    common.add_argument("--bit-depth", choices=["16", "32f"], default="16", help="output WAV format")
    common.add_argument("--silence", action="append", help="silence label (repeatable; default sil, sp and empty)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func, stage=name)
        return p

    p = add("extract-f0", cmd_extract_f0, "write an F0 contour CSV")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smooth", type=int, help="interpolate gaps and median-smooth over N frames")
    _pitch_args(p)

    p = add("align-check", cmd_align_check, "validate a TSV or TextGrid alignment")
    p.add_argument("--align", required=True)
    p.add_argument("--tier", help="TextGrid tier name")
    p.add_argument("--wav", help="also check the alignment fits this audio")

    p = add("fit-quantizer", cmd_fit_quantizer, "fit an equal-frequency duration quantizer")
    p.add_argument("--align", nargs="+", required=True, help="alignment files to pool")
    p.add_argument("--n-classes", type=int, default=15)
    p.add_argument("--include-silence", action="store_true")
    p.add_argument("--out", required=True)

    p = add("build-score", cmd_build_score, "turn a reference song into a note/duration score")
    p.add_argument("--wav", required=True, help="reference a-capella")
    p.add_argument("--align", required=True, help="reference alignment")
    p.add_argument("--speaker-wav", action="append", required=True, help="target speaker utterance (repeatable)")
    p.add_argument("--quantizer", required=True)
    p.add_argument("--smooth", type=int, default=5)
    p.add_argument("--statistic", choices=["mean", "median"], default="mean")
    p.add_argument("--median-mode", choices=["global", "per_utterance"], default="global")
    p.add_argument("--out", required=True)
    p.add_argument("--midi-out", help="also write the score as a MIDI-number CSV")
    _pitch_args(p)

    p = add("retarget", cmd_retarget, "render a spoken utterance onto a score")
    p.add_argument("--source", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--score", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--align-out", help="write the rendered alignment as TSV")
    p.add_argument("--contour-mode", choices=["flat", "mean"], default="flat")
    _pitch_args(p)

    p = add("augment", cmd_augment, "tempo and pitch augmentation")
    p.add_argument("--wav", required=True)
    p.add_argument("--semitones", type=float, default=0.0)
    p.add_argument("--tempo", type=float, default=1.0, help="speaking-rate factor; duration is divided by it")
    p.add_argument("--out", required=True)
    _pitch_args(p)

    p = add("stretch", cmd_stretch, "WSOLA time stretch")
    p.add_argument("--wav", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ratio", type=float, help="output/input duration")
    g.add_argument("--map", help="time map CSV with source_s,target_s")
    p.add_argument("--out", required=True)

    p = add("pitchshift", cmd_pitchshift, "TD-PSOLA pitch shift")
    p.add_argument("--wav", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--semitones", type=float)
    g.add_argument("--ratio", type=float)
    p.add_argument("--out", required=True)
    _pitch_args(p)

    p = add("assemble", cmd_assemble, "place utterances on a song timeline")
    p.add_argument("--manifest", required=True, help='JSON list of {"wav", "onset_s"}')
    p.add_argument("--total", type=float, help="timeline length in seconds (default: last utterance end)")
    p.add_argument("--out", required=True)

    p = add("mix", cmd_mix, "mix vocal and instrumental")
    p.add_argument("--vocal", required=True)
    p.add_argument("--instrumental")
    p.add_argument("--no-instrumental", action="store_true")
    p.add_argument("--vocal-gain-db", type=float, default=0.0)
    p.add_argument("--inst-gain-db", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = add("eval", cmd_eval, "pitch and duration errors, plot CSVs and figures")
    p.add_argument("--ref-wav", required=True)
    p.add_argument("--ref-align", required=True)
    p.add_argument("--syn-wav", required=True)
    p.add_argument("--syn-align", required=True)
    p.add_argument("--score", help="take both medians from this score")
    p.add_argument("--ref-median", type=float)
    p.add_argument("--speaker-median", type=float)
    p.add_argument("--smooth", type=int, default=5)
    p.add_argument("--statistic", choices=["mean", "median"], default="mean")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    _pitch_args(p)

    p = add("run", cmd_run, "run the whole pipeline from a project config")
    p.add_argument("--config", required=True, help="project JSON")
    p.add_argument("--out-dir", help="override the config's output_dir")
    p.add_argument("--no-instrumental", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (WavError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: [{args.stage}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
