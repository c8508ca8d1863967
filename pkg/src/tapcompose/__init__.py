"""tapcompose: beats in, melodies out.

The pipeline runs MIDI files through frame quantization and a most-likely
melody path search to get monophonic (rest, duration) training data, trains
one of five sequence models on it, and decodes new pitch sequences for any
beat pattern a user taps or extracts from an existing piece.
"""

__version__ = "0.1.0"

from tapcompose.midi import (
    TimedNote,
    TimedNoteSequence,
    FrameGrid,
    parse_midi,
    write_midi,
    quantize_frames,
    infer_melody,
)
from tapcompose.data import (
    encode_beats_labels,
    decode_to_notes,
    random_slice,
    CacheRecord,
    DatasetCache,
    save_cache,
    load_cache,
    fetch_remote,
)
from tapcompose.sampler import SamplerConfig, stochastic_search, hybrid_beam_search
from tapcompose.models import MODEL_KINDS, ModelConfig, SequenceModel, build_model
from tapcompose.training import (
    Checkpoint,
    TrainConfig,
    evaluate_accuracy,
    fit,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train_epoch,
)

__all__ = [
    "TimedNote",
    "TimedNoteSequence",
    "FrameGrid",
    "parse_midi",
    "write_midi",
    "quantize_frames",
    "infer_melody",
    "encode_beats_labels",
    "decode_to_notes",
    "random_slice",
    "CacheRecord",
    "DatasetCache",
    "save_cache",
    "load_cache",
    "fetch_remote",
    "SamplerConfig",
    "stochastic_search",
    "hybrid_beam_search",
    "MODEL_KINDS",
    "ModelConfig",
    "SequenceModel",
    "build_model",
    "Checkpoint",
    "TrainConfig",
    "evaluate_accuracy",
    "fit",
    "load_checkpoint",
    "restore_model",
    "save_checkpoint",
    "train_epoch",
]
