"""Standard MIDI File I/O and monophonic melody extraction.

Reading side: ``parse_midi`` understands format 0/1 files (chunked
"MThd"/"MTrk" layout, big-endian lengths, variable-length-quantity delta
times) and returns note intervals in absolute seconds.  Tempo meta events
(0x51) are applied piecewise when converting ticks, so files with tempo
changes come out with correct timing even though only the first tempo is
kept as the sequence's nominal tempo.

Reduction side: piano performances are polyphonic, so ``quantize_frames``
rasterizes the note intervals onto a fixed frame grid and ``infer_melody``
runs a Viterbi search over per-frame events (one pitch or a rest) to pick
the single most plausible melody line.  The scoring favors the highest
active pitch in a chord and penalizes switching events between frames.

Writing side: ``write_midi`` emits a format-0 file that round-trips through
``parse_midi`` to within half a tick per timestamp.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

__all__ = [
    "TimedNote",
    "TimedNoteSequence",
    "FrameGrid",
    "MidiParseError",
    "parse_midi",
    "write_midi",
    "quantize_frames",
    "infer_melody",
    "viterbi_event_path",
    "REST",
    "DEFAULT_VELOCITY",
]

DEFAULT_TICKS_PER_QUARTER = 960
DEFAULT_TEMPO_US = 500_000  # 120 BPM
DEFAULT_VELOCITY = 80
DEFAULT_FRAME_LENGTH = 0.05  # resolves 16th notes at 120 BPM

# Melody-path scoring constants.  All are multiples of 0.25 so partial path
# scores are exact in binary floating point and score ties are well defined.
REST = -1
REST_SCORE_NONEMPTY = -2.0
PITCH_RANK_SCORE = -0.5
SWITCH_SCORE = -0.75
MAX_EVENTS_PER_FRAME = 16


@dataclass(frozen=True)
class TimedNote:
    """One note with absolute onset/offset in seconds."""

    onset: float
    offset: float
    pitch: int
    velocity: int = DEFAULT_VELOCITY

    def __post_init__(self):
        if not self.offset > self.onset:
            raise ValueError(f"note offset must exceed onset, got [{self.onset}, {self.offset}]")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside [1, 127]")


@dataclass
class TimedNoteSequence:
    """Notes sorted by onset (ties broken by descending pitch) plus timing context."""

    notes: list[TimedNote] = field(default_factory=list)
    ticks_per_quarter: int = DEFAULT_TICKS_PER_QUARTER
    tempo_us_per_quarter: int = DEFAULT_TEMPO_US

    def __post_init__(self):
        if self.ticks_per_quarter <= 0:
            raise ValueError("ticks_per_quarter must be positive")
        if self.tempo_us_per_quarter <= 0:
            raise ValueError("tempo_us_per_quarter must be positive")
        self.notes = sorted(self.notes, key=lambda n: (n.onset, -n.pitch))

    def __len__(self):
        return len(self.notes)

    def is_disjoint(self, tol: float = 1e-9) -> bool:
        return all(
            self.notes[i].offset <= self.notes[i + 1].onset + tol
            for i in range(len(self.notes) - 1)
        )


@dataclass
class FrameGrid:
    """Fixed-length time frames; frame i covers [i*frame_length, (i+1)*frame_length)."""

    frame_length: float
    frames: list[set[int]] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_length <= 0:
            raise ValueError("frame_length must be positive")
        for i, frame in enumerate(self.frames):
            for p in frame:
                if not 0 <= p <= 127:
                    raise ValueError(f"frame {i} holds pitch {p} outside [0, 127]")

    def __len__(self):
        return len(self.frames)


class MidiParseError(ValueError):
    """Malformed MIDI input; message names the offending byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class _Reader:
    """Cursor over the raw file bytes; all reads bounds-checked."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated file, wanted {n} more bytes", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def vlq(self) -> int:
        """Variable-length quantity: 7 bits per byte, high bit marks continuation."""
        value = 0
        for i in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity longer than 4 bytes", self.pos)


def parse_midi(data: bytes) -> TimedNoteSequence:
    """Parse a format 0/1 Standard MIDI File into absolute-time notes.

    Note-on with velocity 0 counts as note-off.  Note pairing is FIFO per
    (track, channel, pitch).  A note-on left open at end of track is an
    error; a stray note-off is ignored.  Zero-length notes (off at the same
    tick as on) are dropped since they cannot satisfy offset > onset.
    """
    r = _Reader(data)
    if len(data) < 4 or data[:4] != b"MThd":
        raise MidiParseError("bad header magic", 0)
    r.pos = 4
    header_len = r.u32()
    if header_len < 6:
        raise MidiParseError(f"header chunk too short ({header_len} bytes)", r.pos - 4)
    fmt = r.u16()
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported format {fmt}, expected 0 or 1", r.pos - 2)
    num_tracks = r.u16()
    division = r.u16()
    if division & 0x8000:
        raise MidiParseError("SMPTE division not supported", r.pos - 2)
    if division == 0:
        raise MidiParseError("division must be positive", r.pos - 2)
    r.take(header_len - 6)  # spec allows a longer header; skip the extra

    tempo_events: list[tuple[int, int]] = []  # (tick, us per quarter)
    raw_notes: list[tuple[int, int, int, int]] = []  # (on tick, off tick, pitch, velocity)

    for _ in range(num_tracks):
        magic = r.take(4)
        if magic != b"MTrk":
            raise MidiParseError(f"bad track magic {magic!r}", r.pos - 4)
        track_len = r.u32()
        track_end = r.pos + track_len
        if track_end > len(data):
            raise MidiParseError("track length runs past end of file", r.pos - 4)

        tick = 0
        running_status = None
        # FIFO of (onset tick, velocity, byte offset of the note-on)
        open_notes: dict[tuple[int, int], list[tuple[int, int, int]]] = {}

        while r.pos < track_end:
            tick += r.vlq()
            event_offset = r.pos
            status = r.u8()
            if status < 0x80:
                if running_status is None:
                    raise MidiParseError("data byte with no running status", event_offset)
                status, first_data = running_status, status
            else:
                first_data = None

            if status == 0xFF:
                meta_type = r.u8()
                length = r.vlq()
                payload = r.take(length)
                if meta_type == 0x51 and length == 3:
                    tempo_events.append((tick, int.from_bytes(payload, "big")))
                if meta_type == 0x2F:
                    r.pos = track_end
                    break
                running_status = None
            elif status in (0xF0, 0xF7):
                length = r.vlq()
                r.take(length)
                running_status = None
            elif status >= 0xF0:
                raise MidiParseError(f"unsupported system event 0x{status:02x}", event_offset)
            else:
                kind = status & 0xF0
                channel = status & 0x0F
                d1 = first_data if first_data is not None else r.u8()
                d2 = r.u8() if kind not in (0xC0, 0xD0) else 0
                running_status = status
                if kind == 0x90 and d2 > 0:
                    open_notes.setdefault((channel, d1), []).append((tick, d2, event_offset))
                elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                    pending = open_notes.get((channel, d1))
                    if pending:
                        on_tick, vel, _ = pending.pop(0)
                        if tick > on_tick:
                            raw_notes.append((on_tick, tick, d1, vel))
                    # note-off without a matching note-on is ignored

        for (channel, pitch), pending in open_notes.items():
            if pending:
                raise MidiParseError(
                    f"unmatched note-on for pitch {pitch} on channel {channel}",
                    pending[0][2],
                )

    tempo_events.sort(key=lambda e: e[0])
    first_tempo = tempo_events[0][1] if tempo_events else DEFAULT_TEMPO_US
    to_seconds = _tick_converter(tempo_events, division)

    notes = [
        TimedNote(to_seconds(on), to_seconds(off), pitch, min(max(vel, 1), 127))
        for on, off, pitch, vel in raw_notes
    ]
    return TimedNoteSequence(notes, ticks_per_quarter=division, tempo_us_per_quarter=first_tempo)


def _tick_converter(tempo_events: list[tuple[int, int]], division: int):
    """Piecewise tick-to-seconds map; default 500000 us/quarter before the first event."""
    segments: list[tuple[int, float, int]] = [(0, 0.0, DEFAULT_TEMPO_US)]  # (tick, seconds, tempo)
    for tick, tempo in tempo_events:
        last_tick, last_sec, last_tempo = segments[-1]
        sec = last_sec + (tick - last_tick) * last_tempo / (division * 1e6)
        if tick == last_tick:
            segments[-1] = (tick, sec, tempo)
        else:
            segments.append((tick, sec, tempo))

    def to_seconds(tick: int) -> float:
        seg_tick, seg_sec, seg_tempo = segments[0]
        for t, s, tempo in segments:
            if t > tick:
                break
            seg_tick, seg_sec, seg_tempo = t, s, tempo
        return seg_sec + (tick - seg_tick) * seg_tempo / (division * 1e6)

    return to_seconds


def _encode_vlq(value: int) -> bytes:
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(
    seq: TimedNoteSequence,
    tempo_us_per_quarter: int | None = None,
    ticks_per_quarter: int | None = None,
) -> bytes:
    """Emit a format-0 SMF: header, tempo meta, note events, end-of-track.

    Timestamps are rounded to the nearest tick; a note that would round to
    zero length keeps one tick so it survives a parse round trip.
    """
    tempo = tempo_us_per_quarter if tempo_us_per_quarter is not None else seq.tempo_us_per_quarter
    tpq = ticks_per_quarter if ticks_per_quarter is not None else seq.ticks_per_quarter
    if tempo <= 0 or tpq <= 0 or tpq > 0x7FFF:
        raise ValueError(f"invalid tempo {tempo} or division {tpq}")
    for n in seq.notes:
        if not 0 <= n.pitch <= 127:
            raise ValueError(f"pitch {n.pitch} outside [0, 127]")
        if not 1 <= n.velocity <= 127:
            raise ValueError(f"velocity {n.velocity} outside [1, 127]")
        if n.onset < 0 or n.offset <= n.onset:
            raise ValueError(f"bad note interval [{n.onset}, {n.offset}]")

    ticks_per_second = tpq * 1e6 / tempo
    # kind orders same-tick events: tempo, then note-offs, then note-ons
    events: list[tuple[int, int, int, bytes]] = []
    events.append((0, 0, 0, bytes([0xFF, 0x51, 0x03]) + tempo.to_bytes(3, "big")))
    for n in seq.notes:
        on_tick = round(n.onset * ticks_per_second)
        off_tick = round(n.offset * ticks_per_second)
        if off_tick <= on_tick:
            off_tick = on_tick + 1
        events.append((on_tick, 2, n.pitch, bytes([0x90, n.pitch, n.velocity])))
        events.append((off_tick, 1, n.pitch, bytes([0x80, n.pitch, 0x40])))
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    body = bytearray()
    last_tick = 0
    for tick, _, _, payload in events:
        body += _encode_vlq(tick - last_tick)
        body += payload
        last_tick = tick
    body += b"\x00\xff\x2f\x00"

    header = struct.pack(">4sIHHH", b"MThd", 6, 0, 1, tpq)
    track = struct.pack(">4sI", b"MTrk", len(body)) + bytes(body)
    return header + track


def quantize_frames(seq: TimedNoteSequence, frame_length: float = DEFAULT_FRAME_LENGTH) -> FrameGrid:
    """Rasterize note intervals onto frames of ``frame_length`` seconds.

    A pitch is active in a frame when the note covers at least half the
    frame or contains it entirely.  Grid length is ceil(max offset / frame).
    """
    if frame_length <= 0:
        raise ValueError("frame_length must be positive")
    if not seq.notes:
        return FrameGrid(frame_length, [])
    max_offset = max(n.offset for n in seq.notes)
    num_frames = math.ceil(max_offset / frame_length)
    frames: list[set[int]] = [set() for _ in range(num_frames)]
    for n in seq.notes:
        first = max(0, math.floor(n.onset / frame_length))
        last = min(num_frames - 1, math.ceil(n.offset / frame_length))
        for i in range(first, last + 1):
            lo = i * frame_length
            hi = lo + frame_length
            overlap = min(n.offset, hi) - max(n.onset, lo)
            if overlap >= 0.5 * frame_length or (n.onset <= lo and n.offset >= hi):
                frames[i].add(n.pitch)
    return FrameGrid(frame_length, frames)


def _frame_events_and_scores(frame: set[int]) -> list[tuple[int, float]]:
    """Candidate events for one frame with their emission log-scores.

    REST scores 0 on an empty frame and -2 otherwise; active pitches score
    -0.5 per rank below the highest pitch, so the top of a chord scores 0.
    """
    candidates = [(REST, 0.0 if not frame else REST_SCORE_NONEMPTY)]
    for rank, pitch in enumerate(sorted(frame, reverse=True)):
        candidates.append((pitch, PITCH_RANK_SCORE * rank))
    return candidates


def viterbi_event_path(grid: FrameGrid) -> list[int]:
    """Most likely per-frame event sequence (REST = -1, otherwise a pitch).

    Transitions score 0 when the event is unchanged and -0.75 otherwise.
    Score ties prefer the higher event at the latest frame where the paths
    differ; REST loses every tie.  All scores are multiples of 0.25, so tie
    comparisons are exact.
    """
    if not grid.frames:
        return []
    for i, frame in enumerate(grid.frames):
        if len(frame) > MAX_EVENTS_PER_FRAME:
            raise ValueError(f"frame {i} has {len(frame)} active pitches, limit {MAX_EVENTS_PER_FRAME}")

    prev = _frame_events_and_scores(grid.frames[0])
    scores = [s for _, s in prev]
    backptrs: list[list[int]] = []
    for frame in grid.frames[1:]:
        cur = _frame_events_and_scores(frame)
        cur_scores = []
        cur_back = []
        for event, emit in cur:
            best_idx = -1
            best = (-math.inf, REST - 1)
            for j, (prev_event, _) in enumerate(prev):
                cand = scores[j] + (0.0 if prev_event == event else SWITCH_SCORE)
                if (cand, prev_event) > best:
                    best = (cand, prev_event)
                    best_idx = j
            cur_scores.append(best[0] + emit)
            cur_back.append(best_idx)
        prev = cur
        scores = cur_scores
        backptrs.append(cur_back)

    idx = max(range(len(prev)), key=lambda j: (scores[j], prev[j][0]))
    path = [prev[idx][0]]
    for frame_i in range(len(grid.frames) - 1, 0, -1):
        idx = backptrs[frame_i - 1][idx]
        path.append(_frame_events_and_scores(grid.frames[frame_i - 1])[idx][0])
    path.reverse()
    return path


def infer_melody(grid: FrameGrid, velocity: int = DEFAULT_VELOCITY) -> TimedNoteSequence:
    """Reduce a frame grid to a monophonic, disjoint melody.

    Runs the event-path search and merges runs of equal pitch into single
    notes with onsets/offsets on frame boundaries.
    """
    path = viterbi_event_path(grid)
    notes: list[TimedNote] = []
    L = grid.frame_length
    i = 0
    while i < len(path):
        if path[i] == REST:
            i += 1
            continue
        j = i
        while j + 1 < len(path) and path[j + 1] == path[i]:
            j += 1
        notes.append(TimedNote(i * L, (j + 1) * L, path[i], velocity))
        i = j + 1
    return TimedNoteSequence(notes)
