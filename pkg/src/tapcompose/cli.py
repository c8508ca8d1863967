"""Command-line entry points: preprocess, train, generate, serve.

Preprocessing and training run locally against files.  Generation runs
either locally from a checkpoint or as a thin client of a running server
(--server), which is also how the browser UI talks to the models.  Every
default comes from AppConfig, so TAPCOMPOSE_* environment variables
override any flag's default.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
import tarfile
import zipfile
from pathlib import Path

import numpy as np
import requests

from tapcompose.config import AppConfig
from tapcompose.data import (
    CacheRecord,
    DatasetCache,
    decode_to_notes,
    encode_beats_labels,
    fetch_remote,
    load_cache,
    save_cache,
    validate_beats,
)
from tapcompose.midi import MidiParseError, infer_melody, parse_midi, quantize_frames, write_midi
from tapcompose.models import MODEL_KINDS, ModelConfig
from tapcompose.sampler import SamplerConfig
from tapcompose.service import create_app, pick_search
from tapcompose.training import TrainConfig, fit, load_checkpoint, restore_model

__all__ = ["main", "build_parser"]


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


# ------------------------------------------------------------- preprocess


def _midi_paths_from_source(source: Path) -> list[Path]:
    return sorted(p for p in source.rglob("*") if p.suffix.lower() in (".mid", ".midi"))


def _extract_archive(archive: Path, destination: Path) -> Path:
    destination.mkdir(parents=True, exist_ok=True)
    if zipfile.is_zipfile(archive):
        with zipfile.ZipFile(archive) as zf:
            zf.extractall(destination)
    elif tarfile.is_tarfile(archive):
        with tarfile.open(archive) as tf:
            tf.extractall(destination)
    else:
        raise ValueError(f"{archive.name} is neither a zip nor a tar archive")
    return destination


def cmd_preprocess(args: argparse.Namespace) -> int:
    if args.source is not None:
        root = Path(args.source)
        if not root.is_dir():
            return _fail(f"source directory {root} does not exist")
        paths = _midi_paths_from_source(root)
    else:
        try:
            archive = fetch_remote(args.url, args.cache_dir, args.sha256)
            root = _extract_archive(archive, Path(args.cache_dir) / f"{archive.stem}.extracted")
        except (RuntimeError, ValueError) as exc:
            return _fail(str(exc))
        paths = _midi_paths_from_source(root)

    records = []
    for path in paths:
        try:
            sequence = parse_midi(path.read_bytes())
            melody = infer_melody(quantize_frames(sequence, args.frame_length))
            beats, pitches = encode_beats_labels(melody)
        except (MidiParseError, ValueError, OSError) as exc:
            _warn(f"skipping {path.name}: {exc}")
            continue
        if len(pitches) == 0:
            _warn(f"skipping {path.name}: no melody notes found")
            continue
        records.append(CacheRecord(path.relative_to(root).as_posix(), beats, pitches))

    if not records:
        return _fail("no usable MIDI files; cache not written")

    save_cache(DatasetCache(records), args.out)
    all_pitches = np.concatenate([r.pitches for r in records])
    print(f"wrote {len(records)} records ({len(all_pitches)} notes) to {args.out}")
    print(f"mean pitch {all_pitches.mean():.1f}")
    return 0


# ------------------------------------------------------------------ train


def cmd_train(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    try:
        cache = load_cache(args.cache)
    except (OSError, ValueError) as exc:
        return _fail(f"cannot read cache {args.cache}: {exc}")

    try:
        model_config = ModelConfig(
            kind=args.kind,
            embed_dim=args.embed_dim,
            hidden_dim=args.hidden_dim,
            num_layers=args.num_layers,
            num_heads=args.num_heads,
            dropout_rate=args.dropout_rate,
            max_rel_distance=args.max_rel_distance,
        )
        train_config = TrainConfig(
            model=model_config,
            slice_length=args.slice_length,
            batch_size=args.batch_size,
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            validation_fraction=args.validation_fraction,
            seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))

    try:
        fit(
            cache.records,
            train_config,
            checkpoint_dir=args.checkpoint_dir,
            log=print,
            resume_from=args.resume,
            eval_max_length=args.eval_max_length,
        )
    except ValueError as exc:
        return _fail(str(exc))
    best = Path(args.checkpoint_dir) / f"{model_config.kind}.dbck"
    print(f"best checkpoint: {best}")
    return 0


# --------------------------------------------------------------- generate


def _beats_from_args(args: argparse.Namespace) -> np.ndarray:
    if args.recolor is not None:
        cache = load_cache(args.cache)
        try:
            record = cache.get(args.recolor)
        except KeyError:
            raise ValueError(f"record {args.recolor!r} not found in {args.cache}")
        return np.asarray(record.beats, dtype=np.float64)
    with open(args.beats, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    beats = np.asarray(raw, dtype=np.float64)
    if beats.ndim != 2 or beats.shape[1] != 2:
        raise ValueError("beats file must hold a JSON list of [rest, duration] pairs")
    # served and cached beats are f32; round local input the same way
    beats = beats.astype(np.float32).astype(np.float64)
    validate_beats(beats)
    return beats


def _parse_hints(raw: str | None) -> tuple[int, ...]:
    if not raw:
        return ()
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"hints must be a comma-separated list of pitches, got {raw!r}")


def _generate_remote(args, beats: np.ndarray, sampler: SamplerConfig) -> tuple[list[int], bytes]:
    body = {
        "model": args.model,
        "beats": [[float(r), float(d)] for r, d in beats],
        "sampler": {
            "temperature": sampler.temperature,
            "top_k": sampler.top_k,
            "top_p": sampler.top_p,
            "repeat_decay": sampler.repeat_decay,
            "beam_width": sampler.beam_width,
            "beam_prob": sampler.beam_prob,
            "hints": list(sampler.hints),
            "seed": sampler.seed,
        },
    }
    response = requests.post(f"{args.server.rstrip('/')}/api/generate", json=body, timeout=120)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail")
        except ValueError:
            detail = response.text
        raise ValueError(f"server returned {response.status_code}: {detail}")
    payload = response.json()
    return payload["pitches"], base64.b64decode(payload["midi_base64"])


def _generate_local(args, beats: np.ndarray, sampler: SamplerConfig) -> tuple[list[int], bytes]:
    model, _ = restore_model(load_checkpoint(args.checkpoint))
    search = pick_search(sampler)
    pitches, _ = search(model, beats, sampler)
    notes = decode_to_notes(beats, pitches)
    return [int(p) for p in pitches], write_midi(notes)


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        beats = _beats_from_args(args)
        sampler = SamplerConfig(
            temperature=args.temperature,
            top_k=args.top_k,
            top_p=args.top_p,
            repeat_decay=args.repeat_decay,
            beam_width=args.beam_width,
            beam_prob=args.beam_prob,
            hints=_parse_hints(args.hints),
            seed=args.seed,
        )
        if args.server:
            pitches, midi = _generate_remote(args, beats, sampler)
        else:
            pitches, midi = _generate_local(args, beats, sampler)
    except (ValueError, OSError, requests.RequestException) as exc:
        return _fail(str(exc))

    Path(args.out).write_bytes(midi)
    print("pitches:", " ".join(str(p) for p in pitches))
    print(f"wrote {args.out}")
    return 0


# ------------------------------------------------------------------ serve


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    checkpoint_dir = Path(args.checkpoint_dir)
    if not any(checkpoint_dir.glob("*.dbck")):
        return _fail(f"no checkpoints in {checkpoint_dir}; train a model first")
    config = AppConfig.from_env(
        checkpoint_dir=checkpoint_dir, host=args.host, port=args.port
    )
    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


# ------------------------------------------------------------------ parser


def _add_sampler_flags(parser: argparse.ArgumentParser, defaults: SamplerConfig) -> None:
    parser.add_argument("--temperature", type=float, default=defaults.temperature)
    parser.add_argument("--top-k", type=int, default=defaults.top_k)
    parser.add_argument("--top-p", type=float, default=defaults.top_p)
    parser.add_argument("--repeat-decay", type=float, default=defaults.repeat_decay)
    parser.add_argument("--beam-width", type=int, default=defaults.beam_width)
    parser.add_argument("--beam-prob", type=float, default=defaults.beam_prob)
    parser.add_argument("--hints", default=None, help="comma-separated pitch prefix to force")
    parser.add_argument("--seed", type=int, default=defaults.seed)


def build_parser(config: AppConfig | None = None) -> argparse.ArgumentParser:
    config = config if config is not None else AppConfig.from_env()
    parser = argparse.ArgumentParser(
        prog="tapcompose",
        description="Turn tapped beats into melodies: preprocess MIDI, train, generate, serve.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    pre = commands.add_parser("preprocess", help="build a beats/pitches cache from MIDI files")
    source = pre.add_mutually_exclusive_group(required=True)
    source.add_argument("--source", help="directory of .mid files")
    source.add_argument("--url", help="remote MIDI archive (zip or tar)")
    pre.add_argument("--sha256", default=config.dataset_sha256, help="checksum for --url")
    pre.add_argument("--cache-dir", default=config.cache_dir, help="download directory")
    pre.add_argument("--frame-length", type=float, default=0.05)
    pre.add_argument("--out", required=True, help="cache file to write")

    train = commands.add_parser("train", help="train one model kind on a cache")
    train.add_argument("--cache", required=True)
    train.add_argument("--checkpoint-dir", default=config.checkpoint_dir)
    train.add_argument("--kind", choices=MODEL_KINDS, default="lstm_local_attn")
    train.add_argument("--embed-dim", type=int, default=32)
    train.add_argument("--hidden-dim", type=int, default=64)
    train.add_argument("--num-layers", type=int, default=2)
    train.add_argument("--num-heads", type=int, default=4)
    train.add_argument("--dropout-rate", type=float, default=0.0)
    train.add_argument("--max-rel-distance", type=int, default=64)
    train.add_argument("--slice-length", type=int, default=64)
    train.add_argument("--batch-size", type=int, default=16)
    train.add_argument("--epochs", type=int, default=10)
    train.add_argument("--learning-rate", type=float, default=1e-3)
    train.add_argument("--validation-fraction", type=float, default=0.1)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--resume", default=None, help="checkpoint to continue from")
    train.add_argument("--eval-max-length", type=int, default=None,
                       help="truncate records to this many steps when scoring accuracy")

    gen = commands.add_parser("generate", help="sample a melody for a beat sequence")
    beats_source = gen.add_mutually_exclusive_group(required=True)
    beats_source.add_argument("--recolor", metavar="RECORD_ID",
                              help="reuse the beats of a cached record")
    beats_source.add_argument("--beats", metavar="JSON_FILE",
                              help="JSON list of [rest, duration] pairs in seconds")
    gen.add_argument("--cache", default=None, help="cache file for --recolor")
    gen.add_argument("--checkpoint", default=None, help="local checkpoint to sample from")
    gen.add_argument("--server", default=None, help="base URL of a running tapcompose server")
    gen.add_argument("--model", default=None, help="model name when using --server")
    gen.add_argument("--out", required=True, help="MIDI file to write")
    _add_sampler_flags(gen, config.sampler)

    serve = commands.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--host", default=config.host)
    serve.add_argument("--port", type=int, default=config.port)
    serve.add_argument("--checkpoint-dir", default=config.checkpoint_dir)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "preprocess":
        if args.url and not args.sha256:
            parser.error("--url requires --sha256")
        return cmd_preprocess(args)
    if args.command == "train":
        return cmd_train(args, parser)
    if args.command == "generate":
        if args.recolor and not args.cache:
            parser.error("--recolor requires --cache")
        if args.server and not args.model:
            parser.error("--server requires --model")
        if not args.server and not args.checkpoint:
            parser.error("either --checkpoint or --server is required")
        return cmd_generate(args)
    if args.command == "serve":
        return cmd_serve(args)
    parser.error(f"unknown command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
