import hashlib
import json
import shutil

import numpy as np
import pytest

from songprosody.audio import load_wav
from songprosody.pipeline import PipelineError, ProjectConfig, run_pipeline
from synth import write_project


def digests(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


@pytest.fixture(scope="module")
def project(tmp_path_factory):
    root = tmp_path_factory.mktemp("proj")
    cfg = write_project(root)
    result = run_pipeline(ProjectConfig.load(cfg))
    return root, cfg, result


def test_artifacts_written(project):
    root, _, result = project
    names = {p.name for p in (root / "out").iterdir()}
    for n in ["score.json", "quantizer.json", "acapella.wav", "song.wav", "eval.json", "contours.csv",
              "phoneme_midi.csv", "syn_alignment.tsv", "ref_f0.csv", "score_midi.csv",
              "contours.png", "phoneme_midi.png"]:
        assert n in names
    assert all(p.exists() for p in result.artifacts.values())


def test_synthetic_fixture_accuracy(project):
    root, _, _ = project
    report = json.loads((root / "out" / "eval.json").read_text())
    assert report["pitch_error_mean"] <= 0.5
    assert report["duration_error_mean"] <= 10.0
    assert report["n_phonemes"] == 3


def test_song_timeline_matches_reference(project):
    root, _, result = project
    ref = load_wav(root / "song.wav")
    assert len(result.acapella) == len(ref)
    assert result.syn_alignment.phonemes() == ["a", "e", "o"]


def test_rerun_bit_identical(project):
    root, cfg, _ = project
    before = digests(root / "out")
    run_pipeline(ProjectConfig.load(cfg))
    assert digests(root / "out") == before


def test_no_instrumental(tmp_path):
    cfg = write_project(tmp_path, no_instrumental=True, figures=False)
    res = run_pipeline(ProjectConfig.load(cfg))
    assert np.array_equal(res.song.samples, res.acapella.samples)
    out = tmp_path / "out"
    assert (out / "song.wav").read_bytes() == (out / "acapella.wav").read_bytes()


def test_without_post_processing_and_per_utterance_medians(tmp_path):
    cfg = write_project(tmp_path, post_process=False, median_mode="per_utterance", figures=False)
    res = run_pipeline(ProjectConfig.load(cfg))
    assert res.report.pitch_error_mean <= 0.5
    # durations now come from the quantizer, so they differ from the reference
    assert res.report.duration_error_mean > 0


def test_quantizer_fitted_from_corpus(tmp_path):
    cfg = write_project(tmp_path, figures=False)
    d = json.loads(cfg.read_text())
    del d["quantizer"]
    d["n_duration_classes"] = 2
    cfg.write_text(json.dumps(d))
    res = run_pipeline(ProjectConfig.load(cfg))
    q = json.loads((tmp_path / "out" / "quantizer.json").read_text())
    assert q["n_classes"] == 2 and res.score.sung()


def test_too_few_durations_is_a_score_stage_error(tmp_path):
    cfg = write_project(tmp_path, figures=False)
    d = json.loads(cfg.read_text())
    del d["quantizer"]
    cfg.write_text(json.dumps(d))
    with pytest.raises(PipelineError) as exc:
        run_pipeline(ProjectConfig.load(cfg))
    assert exc.value.stage == "score" and str(exc.value).startswith("[score]")
    # earlier artifacts survive
    assert (tmp_path / "out" / "ref_f0.csv").exists()


def test_missing_input_named(tmp_path):
    cfg = write_project(tmp_path)
    (tmp_path / "speaker.wav").unlink()
    with pytest.raises(PipelineError, match=r"\[config\].*speaker.wav"):
        run_pipeline(ProjectConfig.load(cfg))


def test_unmatched_speaker_phonemes(tmp_path):
    cfg = write_project(tmp_path, figures=False)
    (tmp_path / "speaker.tsv").write_text("sil\t0\t0.15\na\t0.15\t0.37\nx\t0.37\t0.59\no\t0.59\t0.81\nsil\t0.81\t0.96\n")
    with pytest.raises(PipelineError, match=r"\[retarget\].*no speaker utterance"):
        run_pipeline(ProjectConfig.load(cfg))
    assert (tmp_path / "out" / "score.json").exists()


def test_config_paths_relative_to_file(tmp_path):
    cfg = write_project(tmp_path / "a")
    shutil.move(str(tmp_path / "a"), str(tmp_path / "b"))
    c = ProjectConfig.load(tmp_path / "b" / cfg.name)
    assert c.reference.wav == (tmp_path / "b" / "song.wav").resolve()
    assert not c.missing_files()


@pytest.mark.parametrize("patch,msg", [({"bogus": 1}, "unknown"), ({"n_duration_classes": 1}, ">= 2"),
                                       ({"median_mode": "verse"}, "median_mode")])
def test_config_validation(tmp_path, patch, msg):
    cfg = write_project(tmp_path, **patch)
    with pytest.raises(PipelineError, match=msg):
        ProjectConfig.load(cfg)
