"""mova: moving-speaker mixture synthesis, DOA tracking and mask-based extraction."""

from . import acoustics, audio, corpus, dsp, extraction, metrics, motion, scene, tracking

__all__ = [
    "acoustics",
    "audio",
    "corpus",
    "dsp",
    "extraction",
    "metrics",
    "motion",
    "scene",
    "tracking",
]

__version__ = "0.1.0"
