import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from songprosody.notes import (
    NoteError,
    NoteLabel,
    hz_to_note,
    hz_to_semitone_index,
    midi_to_note,
    note_to_hz,
    semitone_distance,
    semitone_to_note_octave,
    transpose_contour,
)
from songprosody.pitch import F0Contour


@pytest.mark.parametrize("f,h", [(440, 57), (220, 45), (261.626, 48), (16.3516, 0)])
def test_hz_to_semitone_index(f, h):
    assert hz_to_semitone_index(f) == h


@pytest.mark.parametrize("h,note,octave", [(57, 9, 4), (0, 0, 0), (48, 0, 4), (59, 11, 4)])
def test_semitone_to_note_octave(h, note, octave):
    assert semitone_to_note_octave(h) == NoteLabel(note, octave)


@pytest.mark.parametrize("label,hz", [((9, 4), 440.0), ((9, 3), 220.0), ((0, 4), 261.6256)])
def test_note_to_hz(label, hz):
    assert note_to_hz(NoteLabel(*label)) == pytest.approx(hz, abs=1e-4)


def test_midi_numbers():
    assert NoteLabel(9, 4).midi == 69
    assert NoteLabel(0, 0).midi == 12
    assert midi_to_note(69) == NoteLabel(9, 4)
    assert NoteLabel(9, 4).name == "A4"


def test_below_c0_is_an_error():
    with pytest.raises(NoteError, match="below C0"):
        hz_to_note(10.0)


@pytest.mark.parametrize("f", [0.0, -5.0, math.nan, math.inf])
def test_bad_frequency(f):
    with pytest.raises(NoteError):
        hz_to_semitone_index(f)


@pytest.mark.parametrize("note,octave", [(12, 4), (-1, 4), (0, -1)])
def test_label_validation(note, octave):
    with pytest.raises(NoteError):
        NoteLabel(note, octave)


@given(st.integers(0, 120))
def test_round_trip(h):
    assert hz_to_semitone_index(note_to_hz(semitone_to_note_octave(h))) == h


@given(st.floats(20, 5000))
def test_note_is_nearest(f):
    lab = hz_to_note(f)
    assert semitone_distance(f, lab.hz) <= 0.5 + 1e-9


def test_transpose_equal_medians_is_bit_identical():
    c = F0Contour(np.array([np.nan, 151.3, 222.7]), 0.01)
    out = transpose_contour(c, 180.0, 180.0)
    assert np.array_equal(out.f0, c.f0, equal_nan=True)
    assert np.array_equal(out.voiced, c.voiced)


def test_transpose_arithmetic():
    out = transpose_contour(F0Contour(np.array([150.0]), 0.01), 200.0, 100.0)
    assert out.f0[0] == 75.0


def test_transpose_octave_shifts_notes_by_12():
    c = F0Contour(np.array([220.0, 440.0]), 0.01)
    out = transpose_contour(c, 220.0, 110.0)
    assert out.f0.tolist() == [110.0, 220.0]
    for a, b in zip(c.f0, out.f0):
        assert hz_to_semitone_index(a) - hz_to_semitone_index(b) == 12


@given(st.floats(40, 2000), st.integers(-24, 24))
def test_transposition_shifts_index_by_k(f, k):
    x = 12 * math.log2(f / 440)
    assume(abs(x - math.floor(x) - 0.5) > 1e-6)
    g = transpose_contour(F0Contour(np.array([f]), 0.01), 1.0, 2 ** (k / 12)).f0[0]
    assert hz_to_semitone_index(g) - hz_to_semitone_index(f) == k


def test_transpose_rejects_bad_median():
    with pytest.raises(NoteError):
        transpose_contour(F0Contour(np.array([100.0]), 0.01), 0.0, 100.0)
