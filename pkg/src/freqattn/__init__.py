"""DCT-based multi-frequency channel attention with a desk-scale
speaker-verification pipeline: features, attention blocks, a tiny
embedding network, trial scoring, and detection metrics."""

__version__ = "0.1.0"
