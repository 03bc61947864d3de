"""Fingerprint representation learning via enhancement-driven pretraining.

The pipeline runs in four stages: synthetic dataset generation, encoder
pretraining (enhancement task or one of four SSL baselines), frozen-encoder
probing with a pair verifier, and verification evaluation in classifier and
cosine-similarity modes.
"""

__version__ = "0.1.0"
