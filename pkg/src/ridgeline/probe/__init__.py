"""Stage-2 probing: pair construction and supervised training of the
projection + siamese classifier on top of a frozen encoder."""

from .pairs import PairSample, PairSet, load_pairs, make_pairs, save_pairs
from .verifier import Embedder, ProbeConfig, embed, loss_bce, train_verifier

__all__ = [
    "Embedder",
    "PairSample",
    "PairSet",
    "ProbeConfig",
    "embed",
    "load_pairs",
    "loss_bce",
    "make_pairs",
    "save_pairs",
    "train_verifier",
]
