"""Zero-shot multi-speaker singing voice synthesis.

A non-autoregressive acoustic model predicts mel spectrograms from
phoneme/duration/pitch inputs, conditioned on two views of unseen
reference singers: a frozen fixed-size embedding and a multi-head
attention summary over variable-length reference encodings. Inference
adds a pitch-shift stage that moves the source contour into the target
register before quantization.

Subpackage map:

- signal: mel/f0 feature extraction, Griffin-Lim inversion, wav I/O
- corpus: manifests, alignments, a deterministic synthetic-singer corpus
- acoustic: the mel-predicting sequence model and pitch quantizer
- speakers: fixed-size and variable-length reference encoders
- pitch: inference-time register matching
- vocoder: conditioning features and waveform backends
- training: batching, optimization, checkpoints, objective metrics
- cli: the `singsynth` command-line surface
"""

from .acoustic import AcousticModel, ModelConfig, length_regulate, quantize_pitch
from .corpus import (
    CorpusManifest,
    corpus_digest,
    generate_toy_corpus,
    load_manifest,
    validate_corpus,
)
from .pitch import PitchShiftConfig, shift_f0, shift_to_references
from .signal import (
    FeatureConfig,
    NoVoicedFramesError,
    extract_f0,
    extract_mel,
    invert_mel,
    normalize_mel,
    read_wav,
    voiced_mean,
    write_wav,
)
from .speakers import (
    MultiRefConfig,
    MultiRefEncoder,
    builtin_stats_embedding,
    fixed_embed,
)
from .training import (
    OptimizerConfig,
    SingingModel,
    evaluate,
    load_checkpoint,
    lr_schedule,
    synthesize_mel,
    train,
)
from .vocoder import VocoderConditioner, build_conditioning, vocode

__version__ = "0.1.0"

__all__ = [
    "AcousticModel",
    "CorpusManifest",
    "FeatureConfig",
    "ModelConfig",
    "MultiRefConfig",
    "MultiRefEncoder",
    "NoVoicedFramesError",
    "OptimizerConfig",
    "PitchShiftConfig",
    "SingingModel",
    "VocoderConditioner",
    "build_conditioning",
    "builtin_stats_embedding",
    "corpus_digest",
    "evaluate",
    "extract_f0",
    "extract_mel",
    "fixed_embed",
    "generate_toy_corpus",
    "invert_mel",
    "length_regulate",
    "load_checkpoint",
    "load_manifest",
    "lr_schedule",
    "normalize_mel",
    "quantize_pitch",
    "read_wav",
    "shift_f0",
    "shift_to_references",
    "synthesize_mel",
    "train",
    "validate_corpus",
    "voiced_mean",
    "vocode",
    "write_wav",
]
