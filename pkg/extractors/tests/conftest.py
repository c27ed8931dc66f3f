"""Shared fixtures: a tiny corpus of WAVs and transcripts plus small model assets.

Model fixtures are realistic but miniature: the acoustic checkpoint keeps
the real 128-d output behind a narrow conv stack, and the transformer dirs
are one-layer models saved with real tokenizer files, so every loader runs
the same code path it would on full-scale assets.
"""

from __future__ import annotations

import json
import wave
from pathlib import Path

import numpy as np
import pytest
import torch

GLOVE_WORDS = (
    "the cat sat on mat a boy dog cookie jar water sink mother his her "
    "ran away quickly tell me more about picture what do you see dries dishes and"
).split()

LEXICON_WORDS = ("cat", "the", "cookie", "boy", "water", "dog", "mother", "jar", "sink")

LM_WORDS = [
    "[PAD]", "[UNK]", "the", "cat", "sat", "on", "mat", "a", "boy", "dog",
    "cookie", "jar", "water", "sink", "mother", "ran", "away", "quickly",
    "um", "what", "do", "you", "see", "tell", "me", "more", "and", "not",
]


def write_wav(path: Path, waveform: np.ndarray, rate: int, channels: int = 1) -> None:
    pcm = np.clip(waveform * 32767.0, -32768, 32767).astype("<i2")
    if channels > 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def make_tiny_lm(out_dir: Path, hidden: int) -> Path:
    """One-layer causal LM with real tokenizer files in a local dir."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
    from transformers import GPT2Config, GPT2Model, PreTrainedTokenizerFast

    out_dir.mkdir(parents=True, exist_ok=True)
    vocab = {w: i for i, w in enumerate(LM_WORDS)}
    inner = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]"))
    inner.normalizer = normalizers.Lowercase()
    inner.pre_tokenizer = pre_tokenizers.Whitespace()
    PreTrainedTokenizerFast(
        tokenizer_object=inner, unk_token="[UNK]", pad_token="[PAD]"
    ).save_pretrained(out_dir)
    torch.manual_seed(hidden)
    config = GPT2Config(
        vocab_size=64, n_positions=64, n_embd=hidden, n_layer=1, n_head=4,
        bos_token_id=0, eos_token_id=0,
    )
    GPT2Model(config).save_pretrained(out_dir)
    return out_dir


@pytest.fixture(scope="session")
def vggish_ckpt(tmp_path_factory) -> Path:
    from dlgextract.vggish import build_network, save_checkpoint

    torch.manual_seed(7)
    net = build_network((2, 2, 2, 2, 2, 2), (8, 8, 128))
    path = tmp_path_factory.mktemp("ckpt") / "vggish.pt"
    save_checkpoint(net, path)
    return path


@pytest.fixture(scope="session")
def lm_768(tmp_path_factory) -> Path:
    return make_tiny_lm(tmp_path_factory.mktemp("lm768") / "model", hidden=768)


@pytest.fixture(scope="session")
def lm_1024(tmp_path_factory) -> Path:
    return make_tiny_lm(tmp_path_factory.mktemp("lm1024") / "model", hidden=1024)


@pytest.fixture(scope="session")
def glove_file(tmp_path_factory) -> Path:
    rng = np.random.default_rng(5)
    path = tmp_path_factory.mktemp("glove") / "vectors.txt"
    lines = []
    for word in GLOVE_WORDS:
        vec = rng.normal(0.0, 0.3, 300)
        lines.append(word + " " + " ".join(f"{v:.4f}" for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def lexicon_file(tmp_path_factory) -> Path:
    rng = np.random.default_rng(9)
    path = tmp_path_factory.mktemp("lexicon") / "norms.csv"
    rows = ["word,familiarity,imageability,concreteness,aoa,frequency"]
    for word in LEXICON_WORDS:
        vals = rng.uniform(1.0, 7.0, 5)
        rows.append(word + "," + ",".join(f"{v:.3f}" for v in vals))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def _tone_noise(rng, seconds: float, rate: int) -> np.ndarray:
    t = np.arange(int(seconds * rate)) / rate
    tone = 0.2 * np.sin(2 * np.pi * 220.0 * t)
    return tone + rng.normal(0.0, 0.05, t.size)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> dict[str, Path]:
    """Three dialogues: labeled 16 kHz, labeled 22.05 kHz, unlabeled stereo
    with sidecar timestamps."""
    root = tmp_path_factory.mktemp("corpus")
    audio = root / "audio"
    transcripts = root / "transcripts"
    timestamps = root / "timestamps"
    for d in (audio, transcripts, timestamps):
        d.mkdir()
    rng = np.random.default_rng(11)

    write_wav(audio / "d01.wav", _tone_noise(rng, 4.0, 16000), 16000)
    (transcripts / "d01.json").write_text(json.dumps({
        "ad": 1, "mmse": 14,
        "utterances": [
            {"speaker": "PAR", "text": "the cat sat on the mat .",
             "start_ms": 0, "end_ms": 1500},
            {"speaker": "INV", "text": "tell me more about the picture .",
             "start_ms": 1600, "end_ms": 2600},
            {"speaker": "PAR", "text": "the cat sat .", "start_ms": 2700, "end_ms": 3900},
        ],
    }), encoding="utf-8")

    write_wav(audio / "d02.wav", _tone_noise(rng, 3.0, 22050), 22050)
    (transcripts / "d02.json").write_text(json.dumps({
        "ad": 0, "mmse": 29,
        "utterances": [
            {"speaker": "PAR",
             "text": "a boy reaches for the cookie jar while the water overflows in the sink .",
             "start_ms": 0, "end_ms": 1400},
            {"speaker": "PAR", "text": "his mother dries dishes and does not notice .",
             "start_ms": 1500, "end_ms": 2900},
        ],
    }), encoding="utf-8")

    write_wav(audio / "d03.wav", _tone_noise(rng, 3.0, 16000), 16000, channels=2)
    (transcripts / "d03.json").write_text(json.dumps({
        "utterances": [
            {"speaker": "INV", "text": "what do you see ?"},
            {"speaker": "PAR", "text": "um the dog ran away quickly ."},
        ],
    }), encoding="utf-8")
    (timestamps / "d03.json").write_text(json.dumps([
        {"start_ms": 0, "end_ms": 900},
        {"start_ms": 1000, "end_ms": 2400},
    ]), encoding="utf-8")

    return {"root": root, "audio": audio, "transcripts": transcripts, "timestamps": timestamps}
