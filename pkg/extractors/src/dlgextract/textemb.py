"""Textual utterance embedders: static word vectors and transformer models.

A sentence representation is the mean of its token embeddings.  Four named
slots fix the expected width of each backend: gpt and roberta at 768,
txl at 1024, and glove at 300.  Transformer backends load from a local
model directory through the transformers library; glove parses the plain
text vector format.  Empty utterances and all-out-of-vocabulary utterances
fall back to the zero vector, counted and logged rather than failing a
whole dialogue.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import ExtractorError
from .pos import tokenize

log = logging.getLogger(__name__)

# expected embedding width per named slot
SLOT_DIMS = {"gpt": 768, "roberta": 768, "txl": 1024, "glove": 300}


class GloveEmbedder:
    """Mean of static word vectors parsed from 'token v1 ... vd' lines."""

    def __init__(self, path):
        path = Path(path)
        self.vectors: dict[str, np.ndarray] = {}
        self.dim = 0
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise ExtractorError(f"missing word-vector file {path}: {exc}") from None
        with fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                try:
                    vec = np.array([float(v) for v in parts[1:]])
                except ValueError as exc:
                    raise ExtractorError(f"{path}:{lineno}: {exc}") from None
                if self.dim == 0:
                    self.dim = vec.shape[0]
                elif vec.shape[0] != self.dim:
                    raise ExtractorError(
                        f"{path}:{lineno}: vector has {vec.shape[0]} dims, expected {self.dim}"
                    )
                self.vectors[parts[0]] = vec
        if not self.vectors:
            raise ExtractorError(f"{path}: no word vectors found")
        self.empty_utterances = 0
        self.oov_utterances = 0

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            self.empty_utterances += 1
            return np.zeros(self.dim)
        rows = [self.vectors[t] for t in tokens if t in self.vectors]
        if not rows:
            self.oov_utterances += 1
            log.warning("utterance %r has no in-vocabulary words; emitting zeros", text[:40])
            return np.zeros(self.dim)
        return np.mean(rows, axis=0)


class TransformerEmbedder:
    """Mean of last-layer hidden states from a local transformers model dir.

    Special tokens are excluded so a one-word utterance embeds to that
    word's contextual vector.  Architectures dropped from the installed
    transformers release (notably transfo-xl) raise a clear error; any
    surviving architecture with the right hidden width can fill the slot.
    """

    def __init__(self, model_dir, expected_dim: int | None = None):
        model_dir = Path(model_dir)
        if not model_dir.is_dir():
            raise ExtractorError(f"model directory not found: {model_dir}")
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - transformers is installed in CI
            raise ExtractorError(f"transformers backend unavailable: {exc}") from None
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_dir)
            self.model = AutoModel.from_pretrained(model_dir)
        except Exception as exc:
            model_type = _declared_model_type(model_dir)
            if model_type and "transfo" in model_type:
                raise ExtractorError(
                    f"{model_dir}: architecture {model_type!r} was removed from "
                    "recent transformers releases; export its hidden states with "
                    "an older install, or point this slot at any local model "
                    f"with the expected hidden width"
                ) from None
            raise ExtractorError(f"cannot load model from {model_dir}: {exc}") from None
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        if expected_dim is not None and self.dim != expected_dim:
            raise ExtractorError(
                f"{model_dir}: hidden width {self.dim} does not match the "
                f"slot's expected {expected_dim}"
            )
        self._max_len = int(getattr(self.model.config, "max_position_embeddings", 512))
        self.empty_utterances = 0

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            self.empty_utterances += 1
            return np.zeros(self.dim)
        enc = self.tokenizer(
            text,
            return_tensors="pt",
            add_special_tokens=False,
            truncation=True,
            max_length=self._max_len,
        )
        if enc["input_ids"].shape[1] == 0:
            self.empty_utterances += 1
            return np.zeros(self.dim)
        with self._torch.no_grad():
            hidden = self.model(**enc).last_hidden_state[0]
        return hidden.double().mean(dim=0).numpy()


def _declared_model_type(model_dir: Path) -> str | None:
    config = model_dir / "config.json"
    try:
        return json.loads(config.read_text(encoding="utf-8")).get("model_type")
    except (OSError, json.JSONDecodeError, AttributeError):
        return None


def load_text_backend(slot: str, path):
    """Build the embedder for a named slot, enforcing its expected width."""
    if slot not in SLOT_DIMS:
        raise ExtractorError(f"unknown textual slot {slot!r}; choose from {sorted(SLOT_DIMS)}")
    expected = SLOT_DIMS[slot]
    if slot == "glove":
        embedder = GloveEmbedder(path)
        if embedder.dim != expected:
            raise ExtractorError(
                f"{path}: word vectors are {embedder.dim}-dimensional, "
                f"slot glove expects {expected}"
            )
        return embedder
    return TransformerEmbedder(path, expected_dim=expected)
