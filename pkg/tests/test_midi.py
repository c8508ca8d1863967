"""MIDI parse/write round trips and melody extraction oracles."""

import itertools
import math
import struct

import numpy as np
import pytest

from tapcompose.midi import (
    REST,
    FrameGrid,
    MidiParseError,
    TimedNote,
    TimedNoteSequence,
    infer_melody,
    parse_midi,
    quantize_frames,
    viterbi_event_path,
    write_midi,
)


def smf(track_bodies, fmt=1, division=480):
    """Assemble raw SMF bytes from track event payloads."""
    out = struct.pack(">4sIHHH", b"MThd", 6, fmt, len(track_bodies), division)
    for body in track_bodies:
        out += struct.pack(">4sI", b"MTrk", len(body)) + body
    return out


# one note C4, one beat at 120 BPM, division 480
SINGLE_NOTE_TRACK = bytes.fromhex(
    "00 ff 51 03 07 a1 20"  # tempo 500000
    "00 90 3c 50"          # note on C4 vel 80
    "83 60 80 3c 00"       # delta 480, note off
    "00 ff 2f 00".replace(" ", "")
)


class TestParse:
    def test_minimal_single_note(self):
        seq = parse_midi(smf([SINGLE_NOTE_TRACK], fmt=0))
        assert len(seq) == 1
        n = seq.notes[0]
        # 480 ticks * 500000 us / 480 / 1e6 = 0.5 s
        assert n.onset == 0.0
        assert n.offset == pytest.approx(0.5, abs=1e-12)
        assert n.pitch == 60
        assert n.velocity == 80
        assert seq.ticks_per_quarter == 480
        assert seq.tempo_us_per_quarter == 500000

    def test_track_with_only_end_of_track(self):
        seq = parse_midi(smf([b"\x00\xff\x2f\x00"]))
        assert seq.notes == []

    def test_bad_header_magic(self):
        with pytest.raises(MidiParseError, match="bad header magic"):
            parse_midi(b"XXXX" + b"\x00" * 20)

    def test_truncated_vlq(self):
        body = b"\x00\xff\x51\x03\x07\xa1\x20" + b"\x81"  # continuation bit, then EOF
        with pytest.raises(MidiParseError, match="byte offset"):
            parse_midi(smf([body]))

    def test_unmatched_note_on(self):
        body = b"\x00\x90\x3c\x50" + b"\x00\xff\x2f\x00"
        with pytest.raises(MidiParseError, match="unmatched note-on"):
            parse_midi(smf([body]))

    def test_velocity_zero_is_note_off(self):
        body = bytes.fromhex("00903c50") + bytes.fromhex("8360903c00") + b"\x00\xff\x2f\x00"
        seq = parse_midi(smf([body], division=480))
        assert len(seq) == 1
        assert seq.notes[0].offset == pytest.approx(0.5)

    def test_running_status(self):
        # second note-on omits the status byte
        body = (
            b"\x00\x90\x3c\x50"
            + b"\x00\x40\x50"      # running status: note on 64
            + b"\x82\x68\x3c\x00"  # delta 360: off 60 via running status
            + b"\x00\x40\x00"      # off 64
            + b"\x00\xff\x2f\x00"
        )
        seq = parse_midi(smf([body], division=480))
        assert sorted(n.pitch for n in seq.notes) == [60, 64]

    def test_tempo_change_applied_piecewise(self):
        # 480 ticks at 500000, then 480 ticks at 250000: second note is 0.25 s long
        body = (
            bytes.fromhex("00ff510307a120")
            + b"\x00\x90\x3c\x50"
            + b"\x83\x60\x80\x3c\x00"
            + bytes.fromhex("00ff510303d090")
            + b"\x00\x90\x40\x50"
            + b"\x83\x60\x80\x40\x00"
            + b"\x00\xff\x2f\x00"
        )
        seq = parse_midi(smf([body], division=480))
        assert seq.tempo_us_per_quarter == 500000  # first tempo kept as nominal
        n2 = [n for n in seq.notes if n.pitch == 64][0]
        assert n2.onset == pytest.approx(0.5)
        assert n2.offset == pytest.approx(0.75)

    def test_unsupported_format(self):
        with pytest.raises(MidiParseError, match="unsupported format"):
            parse_midi(smf([b"\x00\xff\x2f\x00"], fmt=2))


class TestWrite:
    def test_empty_sequence(self):
        data = write_midi(TimedNoteSequence([]))
        seq = parse_midi(data)
        assert seq.notes == []
        assert data[:4] == b"MThd"

    def test_single_note_round_trip(self):
        seq = TimedNoteSequence(
            [TimedNote(0.25, 0.75, 72, 90)], ticks_per_quarter=480, tempo_us_per_quarter=500000
        )
        back = parse_midi(write_midi(seq))
        tick = 500000 / 480 / 1e6
        assert back.notes[0].onset == pytest.approx(0.25, abs=tick)
        assert back.notes[0].offset == pytest.approx(0.75, abs=tick)
        assert back.notes[0].pitch == 72
        assert back.notes[0].velocity == 90

    def test_out_of_range_pitch_rejected(self):
        with pytest.raises(ValueError, match="pitch"):
            TimedNote(0.0, 1.0, 200, 80)
        bad = object.__new__(TimedNote)
        object.__setattr__(bad, "onset", 0.0)
        object.__setattr__(bad, "offset", 1.0)
        object.__setattr__(bad, "pitch", 200)
        object.__setattr__(bad, "velocity", 80)
        seq = TimedNoteSequence([])
        seq.notes = [bad]
        with pytest.raises(ValueError, match="pitch"):
            write_midi(seq)

    def test_round_trip_random_melodies(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            t = 0.0
            notes = []
            for _ in range(rng.integers(1, 40)):
                t += float(rng.uniform(0, 0.5))
                dur = float(rng.uniform(0.05, 1.0))
                notes.append(
                    TimedNote(t, t + dur, int(rng.integers(21, 109)), int(rng.integers(1, 128)))
                )
                t += dur
            seq = TimedNoteSequence(notes, ticks_per_quarter=960)
            back = parse_midi(write_midi(seq))
            tick = seq.tempo_us_per_quarter / 960 / 1e6
            assert len(back) == len(seq)
            for a, b in zip(seq.notes, back.notes):
                assert b.onset == pytest.approx(a.onset, abs=tick)
                assert b.offset == pytest.approx(a.offset, abs=tick)
                assert (a.pitch, a.velocity) == (b.pitch, b.velocity)


class TestQuantize:
    def test_full_coverage(self):
        grid = quantize_frames(TimedNoteSequence([TimedNote(0.0, 0.10, 60, 80)]), 0.05)
        assert grid.frames == [{60}, {60}]

    def test_majority_overlap(self):
        grid = quantize_frames(TimedNoteSequence([TimedNote(0.0, 0.026, 60, 80)]), 0.05)
        assert grid.frames == [{60}]

    def test_minority_overlap_dropped(self):
        grid = quantize_frames(TimedNoteSequence([TimedNote(0.0, 0.024, 60, 80)]), 0.05)
        assert grid.frames == [set()]

    def test_chord(self):
        seq = TimedNoteSequence([TimedNote(0.0, 0.05, 60, 80), TimedNote(0.0, 0.05, 64, 80)])
        assert quantize_frames(seq, 0.05).frames == [{60, 64}]

    def test_empty_input(self):
        assert quantize_frames(TimedNoteSequence([]), 0.05).frames == []

    def test_grid_length(self):
        grid = quantize_frames(TimedNoteSequence([TimedNote(0.0, 0.26, 60, 80)]), 0.05)
        assert len(grid) == math.ceil(0.26 / 0.05)


def emission_score(frame, event):
    if event == REST:
        return 0.0 if not frame else -2.0
    return -0.5 * sorted(frame, reverse=True).index(event)


def brute_force_path(grid):
    """Enumerate every event sequence; maximize (score, reversed path)."""
    spaces = [[REST] + sorted(f) for f in grid.frames]
    best_key = None
    best_path = None
    for path in itertools.product(*spaces):
        score = sum(emission_score(f, e) for f, e in zip(grid.frames, path))
        score += sum(0.0 if a == b else -0.75 for a, b in zip(path, path[1:]))
        key = (score, tuple(reversed(path)))
        if best_key is None or key > best_key:
            best_key = key
            best_path = list(path)
    return best_path


class TestInferMelody:
    def test_sustained_note(self):
        grid = FrameGrid(0.05, [{60}, {60}, {60}])
        seq = infer_melody(grid)
        assert len(seq) == 1
        n = seq.notes[0]
        assert (n.onset, n.offset, n.pitch) == (0.0, pytest.approx(0.15), 60)

    def test_chord_takes_highest(self):
        seq = infer_melody(FrameGrid(0.05, [{60, 64}]))
        assert [n.pitch for n in seq.notes] == [64]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            frames = []
            for _ in range(rng.integers(1, 7)):
                k = int(rng.integers(0, 5))
                frames.append(set(int(p) for p in rng.choice(128, size=k, replace=False)))
            grid = FrameGrid(0.05, frames)
            assert viterbi_event_path(grid) == brute_force_path(grid)

    def test_output_disjoint_sorted_and_from_frames(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            frames = [
                set(int(p) for p in rng.choice(60, size=int(rng.integers(0, 4)), replace=False))
                for _ in range(int(rng.integers(1, 12)))
            ]
            grid = FrameGrid(0.05, frames)
            seq = infer_melody(grid)
            assert seq.is_disjoint()
            assert [n.onset for n in seq.notes] == sorted(n.onset for n in seq.notes)
            active = set().union(*frames) if frames else set()
            assert all(n.pitch in active for n in seq.notes)

    def test_event_cap(self):
        with pytest.raises(ValueError, match="active pitches"):
            viterbi_event_path(FrameGrid(0.05, [set(range(17))]))
