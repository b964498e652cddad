"""Lexicon-augmented BiLSTM-CRF tagger for Chinese named entity recognition."""

from ._kernels import BACKEND, available_backends
from .config import TrainConfig
from .embeddings import EmbeddingTable, init_random, load_embeddings, save_embeddings
from .encoder import NONE, EncoderConfig, WordSets, bmes_sets, exsoftword, pool, restore_spans
from .errors import (
    ConfigurationError,
    FormatError,
    IntegrityError,
    NumericError,
    PreconditionError,
    SoftlexError,
    TapeError,
)
from .lexicon import FreqTable, Lexicon, Span, build_lexicon, count_frequencies, match_spans
from .model import Tagger
from .train import Dataset, Metrics, evaluate, fit, read_conll, write_conll

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "Dataset",
    "EmbeddingTable",
    "EncoderConfig",
    "FormatError",
    "FreqTable",
    "IntegrityError",
    "Lexicon",
    "Metrics",
    "NONE",
    "NumericError",
    "PreconditionError",
    "SoftlexError",
    "Span",
    "Tagger",
    "TapeError",
    "TrainConfig",
    "WordSets",
    "available_backends",
    "bmes_sets",
    "build_lexicon",
    "count_frequencies",
    "evaluate",
    "exsoftword",
    "fit",
    "init_random",
    "load_embeddings",
    "match_spans",
    "pool",
    "read_conll",
    "restore_spans",
    "save_embeddings",
    "write_conll",
]
