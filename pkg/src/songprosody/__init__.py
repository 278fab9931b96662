"""Song prosody retargeting: move spoken utterances onto a song's notes and rhythm."""

__version__ = "0.1.0"

from .alignment import Alignment, AlignmentError, PhonemeInterval, parse_alignment, write_alignment_tsv
from .audio import PIPELINE_RATE, AudioBuffer, WavError, load_wav, resample, save_wav
from .metrics import EvalReport, duration_error, evaluate, pitch_error
from .mixdown import TimelinePlacement, assemble, mix
from .notes import NoteLabel, hz_to_note, hz_to_semitone_index, note_to_hz, semitone_to_note_octave, transpose_contour
from .pipeline import PipelineError, ProjectConfig, run_pipeline
from .pitch import F0Contour, PitchConfig, extract_f0, process_contour
from .quantizer import DurationQuantizer, fit_duration_quantizer
from .retarget import BackendRequest, DSPBackend, SynthesisBackend, augment
from .score import Score, ScoreEntry, build_score
from .tsm import TimeMap, detect_epochs, psola_shift, stretch_segments, wsola_stretch

__all__ = [
    "Alignment", "AlignmentError", "AudioBuffer", "BackendRequest", "DSPBackend", "DurationQuantizer",
    "EvalReport", "F0Contour", "NoteLabel", "PIPELINE_RATE", "PhonemeInterval", "PipelineError",
    "PitchConfig", "ProjectConfig", "Score", "ScoreEntry", "SynthesisBackend", "TimeMap",
    "TimelinePlacement", "WavError", "assemble", "augment", "build_score", "detect_epochs",
    "duration_error", "evaluate", "extract_f0", "fit_duration_quantizer", "hz_to_note",
    "hz_to_semitone_index", "load_wav", "mix", "note_to_hz", "parse_alignment", "pitch_error",
    "process_contour", "psola_shift", "resample", "run_pipeline", "save_wav",
    "semitone_to_note_octave", "stretch_segments", "transpose_contour", "write_alignment_tsv",
    "wsola_stretch",
]
