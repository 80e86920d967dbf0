"""Training-free NER experimentation for historical documents.

Pipeline pieces: corpus ingestion and the IOB codec, in-context example
retrieval (random, token overlap, embedding cosine), prompt rendering,
a cached chat-completion gateway, reply parsing and token alignment,
majority voting, and strict/fuzzy micro-F1 scoring with cross-run stats.
"""

__version__ = "0.1.0"

from .corpus import Dataset, Document, EntitySpan, LabelSet, Token  # noqa: F401
