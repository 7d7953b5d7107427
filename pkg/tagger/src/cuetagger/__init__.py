"""Neural justification-cue tagger trained on weakly supervised silver labels."""

from .model import BUILTIN_MODEL, EncoderConfig, SpanPointer, TokenTagger
from .train import export_embeddings, train_span_predictor, train_token_classifier

__version__ = "0.1.0"
