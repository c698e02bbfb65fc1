"""Boundary-aware attention for locating spoofed regions in audio."""

from ._bam import (
    ConfigError,
    SpanError,
    adjacency,
    compute_eer,
    default_config,
    evaluate,
    frame_labels,
    generate_corpus,
    gradcheck,
    synthesize_utterance,
    train,
)

__all__ = [
    "ConfigError",
    "SpanError",
    "adjacency",
    "compute_eer",
    "default_config",
    "evaluate",
    "frame_labels",
    "generate_corpus",
    "gradcheck",
    "synthesize_utterance",
    "train",
]
