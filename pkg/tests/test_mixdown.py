import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from songprosody.audio import AudioBuffer, save_wav
from songprosody.mixdown import (
    MixError,
    TimelinePlacement,
    assemble,
    db_to_gain,
    mix,
    normalize_on_clip,
    read_placements,
)
from synth import FS, sine


def test_single_placement():
    out = assemble([TimelinePlacement(sine(300, 1.0), 2.0)], 4.0)
    assert len(out) == 4 * FS
    nz = np.nonzero(out.samples)[0]
    assert nz.min() >= 2 * FS and nz.max() < 3 * FS


def test_empty_timeline():
    out = assemble([], 1.5, FS)
    assert len(out) == int(1.5 * FS) and not out.samples.any()


def test_empty_timeline_needs_rate():
    with pytest.raises(MixError):
        assemble([], 1.0)


def test_overlap_adds():
    u = sine(300, 0.5, amp=0.3)
    out = assemble([TimelinePlacement(u, 0.1), TimelinePlacement(u, 0.1)], 1.0)
    a = int(round(0.1 * FS))
    assert np.array_equal(out.samples[a : a + len(u)], 2 * u.samples)


def test_overrun_warns(caplog):
    out = assemble([TimelinePlacement(sine(300, 1.0), 0.5)], 1.0)
    assert len(out) == FS
    assert "overruns" in caplog.text


def test_rate_mismatch():
    with pytest.raises(MixError, match="sample rates"):
        assemble([TimelinePlacement(sine(300, 0.1), 0), TimelinePlacement(sine(300, 0.1, fs=16000), 0)], 1.0)


@given(st.permutations(list(range(5))))
def test_order_invariant(perm):
    rng = np.random.default_rng(0)
    ps = [TimelinePlacement(AudioBuffer(rng.uniform(-0.3, 0.3, 500 + 37 * i), FS), 0.01 * (i % 3)) for i in range(5)]
    ref = assemble(ps, 0.1).samples
    out = assemble([ps[i] for i in perm], 0.1).samples
    assert np.array_equal(ref, out)


def test_db_to_gain():
    assert db_to_gain(0.0) == 1.0
    assert db_to_gain(-math.inf) == 0.0
    assert db_to_gain(-6.0) == pytest.approx(0.501187, rel=1e-5)


def test_no_instrumental_is_scaled_vocal():
    v = sine(300, 0.5, amp=0.5)
    assert np.array_equal(mix(v, None).samples, v.samples)
    assert np.array_equal(mix(v, sine(100, 0.5), 0.0, -math.inf).samples, v.samples)
    assert np.allclose(mix(v, None, -6.0).samples, db_to_gain(-6.0) * v.samples)


def test_silent_vocal_gives_instrumental():
    inst = sine(100, 0.5, amp=0.4)
    out = mix(AudioBuffer.silence(0.5, FS), inst)
    assert np.array_equal(out.samples, inst.samples)


def test_in_phase_full_scale_normalizes_to_one(caplog):
    s = sine(250, 0.5, amp=1.0)
    out = mix(s, s)
    assert out.peak == pytest.approx(1.0, abs=1e-12) and out.peak <= 1.0
    assert "exceeds full scale" in caplog.text


def test_mix_length_is_max():
    out = mix(sine(300, 0.5), sine(100, 0.8))
    assert len(out) == int(0.8 * FS)


def test_mix_rate_mismatch():
    with pytest.raises(MixError, match="sample rate"):
        mix(sine(300, 0.5), sine(300, 0.5, fs=16000))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-20, 12), st.floats(-20, 12))
def test_peak_never_exceeds_one(a, b, gv, gi):
    n = 64
    v = AudioBuffer(np.full(n, a), FS)
    i = AudioBuffer(np.sign(np.arange(n) % 2 - 0.5) * b, FS)
    assert mix(v, i, gv, gi).peak <= 1.0


def test_normalize_leaves_quiet_signals_alone():
    x = sine(300, 0.1, amp=0.9)
    assert normalize_on_clip(x) is x


def test_placements_manifest(tmp_path):
    save_wav(sine(300, 0.2), tmp_path / "u1.wav")
    (tmp_path / "m.json").write_text(json.dumps([{"wav": "u1.wav", "onset_s": 0.3}]))
    ps = read_placements(tmp_path / "m.json", FS)
    assert ps[0].onset == 0.3 and len(ps[0].utterance) == int(0.2 * FS)
    (tmp_path / "bad.json").write_text(json.dumps([{"wav": "u1.wav"}]))
    with pytest.raises(MixError, match="#0"):
        read_placements(tmp_path / "bad.json", FS)


def test_negative_onset():
    with pytest.raises(MixError):
        TimelinePlacement(sine(300, 0.1), -0.1)
