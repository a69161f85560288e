"""Oceanarium: an exhibit service that answers visitor questions in the Ocean's voice.

The package wires together corpus retrieval, a grammar-gated visual selection
agent, a query rewriter, a persona responder, keyword-driven audio-visual
triggers, a proximity-gated session machine, and an HTTP/WebSocket gateway.
"""

__version__ = "0.1.0"

from .chunking import split_paragraphs, split_sentences
from .embedding import HashedNgramEmbedder, HttpEmbeddingProvider
from .vindex import CorpusIndex, RetrievalConfig, RetrievalHit, build_index
from .grammar import Grammar, grammar_from_tokens, parse_gbnf

__all__ = [
    "__version__",
    "split_paragraphs",
    "split_sentences",
    "HashedNgramEmbedder",
    "HttpEmbeddingProvider",
    "CorpusIndex",
    "RetrievalConfig",
    "RetrievalHit",
    "build_index",
    "Grammar",
    "grammar_from_tokens",
    "parse_gbnf",
]
