"""Feature extractors for dialogue screening datasets.

Turns per-dialogue audio and transcripts into the plain-text feature-file
format consumed by the screening pipeline: one 128-d acoustic vector per
utterance from a log-mel CNN, one textual vector per utterance from a
pre-trained language model or static word vectors, an optional normalized
part-of-speech histogram, and an optional 42-d conversation-level vector of
hand-crafted linguistic features.
"""

__version__ = "0.1.0"


class ExtractorError(Exception):
    """Raised when inputs, model assets, or transcripts cannot be used."""


__all__ = ["ExtractorError", "__version__"]
