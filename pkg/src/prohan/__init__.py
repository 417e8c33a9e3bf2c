"""Heterogeneous graph attention over profile information for joint intent detection and slot filling."""
from .config import ABLATIONS, ModelConfig, TrainConfig
from .data import Corpus, CorpusError, Sample, load_corpus
from .metrics import EvalReport, slot_f1
from .model import ProHAN
from .synth import synth_corpus
from .train import evaluate, train

__all__ = [
    "ABLATIONS", "ModelConfig", "TrainConfig", "Corpus", "CorpusError", "Sample", "load_corpus",
    "EvalReport", "slot_f1", "ProHAN", "synth_corpus", "evaluate", "train",
]
__version__ = "0.1.0"
