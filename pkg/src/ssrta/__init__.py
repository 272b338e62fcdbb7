"""SSR-TA: seq2seq description-to-resolution translation driving a recurrent
attention-based expert recommender, with corpus tooling, a TF-IDF baseline,
and an ablation/evaluation harness."""

from .model import ModelConfig, SSRTA
from .synthetic import SyntheticSpec, generate_synthetic
from .tickets import RawTicket, TokenizedTicket, load_corpus, save_corpus
from .training import TrainConfig, fit
from .vocab import Vocabulary, build_vocab

__all__ = [
    "ModelConfig",
    "SSRTA",
    "SyntheticSpec",
    "generate_synthetic",
    "RawTicket",
    "TokenizedTicket",
    "load_corpus",
    "save_corpus",
    "TrainConfig",
    "fit",
    "Vocabulary",
    "build_vocab",
]
