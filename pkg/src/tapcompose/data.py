"""Training-data plumbing: beats/pitches encoding, cache format, remote fetch.

A melody becomes two parallel sequences.  The beats array has one
(rest, duration) row per note, where rest is the silence since the previous
note's release (zero for the first note) and duration is how long the note
sounds.  The pitch array holds the MIDI pitches; value 0 is reserved as the
decoder start token and never appears as a label.

Preprocessed corpora are stored in a small binary cache ("DBC1") so training
can start without re-parsing MIDI, and ``fetch_remote`` pulls a hosted copy
once and reuses it after a checksum match.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from tapcompose.midi import DEFAULT_VELOCITY, TimedNote, TimedNoteSequence

__all__ = [
    "encode_beats_labels",
    "decode_to_notes",
    "random_slice",
    "validate_beats",
    "validate_pitches",
    "CacheRecord",
    "DatasetCache",
    "save_cache",
    "load_cache",
    "CacheFormatError",
    "fetch_remote",
    "IntegrityError",
    "TransportError",
]

CACHE_MAGIC = b"DBC1"
CACHE_VERSION = 1
START_TOKEN = 0


class CacheFormatError(ValueError):
    """Cache file does not match the DBC1 layout."""


class IntegrityError(RuntimeError):
    """Downloaded payload failed its checksum."""


class TransportError(RuntimeError):
    """Download failed at the HTTP level."""


def validate_beats(beats: np.ndarray) -> np.ndarray:
    beats = np.asarray(beats, dtype=np.float64)
    if beats.ndim != 2 or beats.shape[1] != 2:
        raise ValueError(f"beats must have shape (T, 2), got {beats.shape}")
    if not np.all(np.isfinite(beats)):
        raise ValueError("beats must be finite")
    if np.any(beats[:, 0] < 0):
        raise ValueError("rests must be non-negative")
    if np.any(beats[:, 1] <= 0):
        raise ValueError("durations must be positive")
    return beats


def validate_pitches(pitches: np.ndarray, allow_start_token: bool = False) -> np.ndarray:
    pitches = np.asarray(pitches, dtype=np.int64)
    if pitches.ndim != 1:
        raise ValueError(f"pitches must be 1-D, got shape {pitches.shape}")
    low = 0 if allow_start_token else 1
    if pitches.size and (pitches.min() < low or pitches.max() > 127):
        raise ValueError(f"pitches must lie in [{low}, 127]")
    return pitches


def encode_beats_labels(melody: TimedNoteSequence) -> tuple[np.ndarray, np.ndarray]:
    """Monophonic melody -> (beats (T,2) float64, pitches (T,) int64).

    rest_t = onset_t - offset_{t-1} with offset_{-1} taken as 0, so the
    first note's rest is just its onset.
    """
    beats = np.zeros((len(melody.notes), 2), dtype=np.float64)
    pitches = np.zeros(len(melody.notes), dtype=np.int64)
    prev_offset = 0.0
    for t, note in enumerate(melody.notes):
        rest = note.onset - prev_offset
        if rest < -1e-9:
            raise ValueError(
                f"overlapping notes at index {t}: onset {note.onset} before previous offset {prev_offset}"
            )
        beats[t, 0] = max(rest, 0.0)
        beats[t, 1] = note.offset - note.onset
        pitches[t] = note.pitch
        prev_offset = note.offset
    validate_pitches(pitches)
    return beats, pitches


def decode_to_notes(
    beats: np.ndarray, pitches: np.ndarray, velocity: int = DEFAULT_VELOCITY
) -> TimedNoteSequence:
    """Exact inverse of ``encode_beats_labels`` on valid inputs."""
    beats = validate_beats(beats)
    pitches = validate_pitches(pitches)
    if len(beats) != len(pitches):
        raise ValueError(f"length mismatch: {len(beats)} beats vs {len(pitches)} pitches")
    notes = []
    t = 0.0
    for (rest, dur), pitch in zip(beats, pitches):
        onset = t + rest
        offset = onset + dur
        notes.append(TimedNote(onset, offset, int(pitch), velocity))
        t = offset
    return TimedNoteSequence(notes)


def random_slice(
    beats: np.ndarray, pitches: np.ndarray, length: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray] | None:
    """Contiguous slice of ``length`` entries at a uniform random offset.

    Returns None when the record is shorter than ``length``; callers drop
    such records from the epoch instead of padding them.
    """
    if length < 2:
        raise ValueError("slice length must be at least 2")
    if len(beats) != len(pitches):
        raise ValueError("beats/pitches length mismatch")
    n = len(beats)
    if n < length:
        return None
    start = int(rng.integers(0, n - length + 1))
    return beats[start : start + length].copy(), pitches[start : start + length].copy()


@dataclass
class CacheRecord:
    id: str
    beats: np.ndarray  # (n, 2) float32
    pitches: np.ndarray  # (n,) uint8

    def __post_init__(self):
        self.beats = np.ascontiguousarray(self.beats, dtype=np.float32)
        self.pitches = np.ascontiguousarray(self.pitches, dtype=np.uint8)
        if self.beats.ndim != 2 or self.beats.shape[1] != 2:
            raise ValueError(f"record {self.id!r}: beats must have shape (n, 2)")
        if len(self.beats) != len(self.pitches):
            raise ValueError(f"record {self.id!r}: beats/pitches length mismatch")

    def __len__(self):
        return len(self.pitches)


@dataclass
class DatasetCache:
    records: list[CacheRecord]

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique")

    def __len__(self):
        return len(self.records)

    def get(self, record_id: str) -> CacheRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


def save_cache(cache: DatasetCache, path: str | Path) -> None:
    """Write the DBC1 layout: magic, u32 version, u32 count, then records.

    Per record: u32 id byte length, UTF-8 id, u32 n, n x (f32 rest, f32
    duration), n x u8 pitch.  All integers little-endian.
    """
    out = bytearray()
    out += CACHE_MAGIC
    out += struct.pack("<II", CACHE_VERSION, len(cache.records))
    for rec in cache.records:
        ident = rec.id.encode("utf-8")
        out += struct.pack("<I", len(ident))
        out += ident
        out += struct.pack("<I", len(rec))
        out += rec.beats.astype("<f4").tobytes()
        out += rec.pitches.astype(np.uint8).tobytes()
    Path(path).write_bytes(bytes(out))


def load_cache(path: str | Path) -> DatasetCache:
    data = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CacheFormatError(f"truncated cache: wanted {n} bytes at offset {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != CACHE_MAGIC:
        raise CacheFormatError("bad magic, not a DBC1 cache")
    version, count = struct.unpack("<II", take(8))
    if version != CACHE_VERSION:
        raise CacheFormatError(f"unsupported version {version}, expected {CACHE_VERSION}")
    records = []
    for _ in range(count):
        (id_len,) = struct.unpack("<I", take(4))
        ident = take(id_len).decode("utf-8")
        (n,) = struct.unpack("<I", take(4))
        beats = np.frombuffer(take(8 * n), dtype="<f4").reshape(n, 2).copy()
        pitches = np.frombuffer(take(n), dtype=np.uint8).copy()
        records.append(CacheRecord(ident, beats, pitches))
    if pos != len(data):
        raise CacheFormatError(f"{len(data) - pos} trailing bytes after last record")
    return DatasetCache(records)


def fetch_remote(url: str, cache_dir: str | Path, expected_sha256: str) -> Path:
    """Download once, verify the SHA-256, and reuse the local copy afterwards."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    name = os.path.basename(url.rstrip("/")) or "download"
    target = cache_dir / f"{expected_sha256[:16]}_{name}"
    if target.exists() and _sha256(target) == expected_sha256.lower():
        return target

    try:
        resp = requests.get(url, stream=True, timeout=60)
    except requests.RequestException as exc:
        raise TransportError(f"download failed: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(f"download failed with HTTP status {resp.status_code}")

    partial = target.with_suffix(target.suffix + ".part")
    digest = hashlib.sha256()
    with open(partial, "wb") as fh:
        for chunk in resp.iter_content(chunk_size=1 << 16):
            fh.write(chunk)
            digest.update(chunk)
    if digest.hexdigest() != expected_sha256.lower():
        partial.unlink()
        raise IntegrityError(
            f"checksum mismatch for {url}: got {digest.hexdigest()}, expected {expected_sha256}"
        )
    partial.replace(target)
    return target


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
