"""Acoustic utterance embedder: a VGG-style CNN over log-mel examples.

The topology is fixed (six 3x3 conv layers with four 2x2 max-pools, then
three fully connected layers) but every width is read back from the
checkpoint, so converted full-scale weights and tiny test checkpoints load
through the same code path.  An utterance embedding is the mean of the
per-example embeddings, one per 960 ms of audio.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import ExtractorError
from .audio import EXAMPLE_FRAMES, N_MELS, examples_from_log_mel, log_mel_spectrogram

EMBEDDING_DIM = 128

# conv layer names in order; pools follow conv2, conv3, conv5 and conv6
_CONV_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5", "conv6")
_POOL_AFTER = {"conv2", "conv3", "conv5", "conv6"}
_FC_NAMES = ("fc1", "fc2", "fc3")

# four 2x2 pools shrink (96, 64) to (6, 4)
_FEATURE_CELLS = (EXAMPLE_FRAMES // 16) * (N_MELS // 16)


class _Net(nn.Module):
    def __init__(self, conv_widths: tuple[int, ...], fc_widths: tuple[int, ...]):
        super().__init__()
        in_ch = 1
        for name, out_ch in zip(_CONV_NAMES, conv_widths):
            setattr(self, name, nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1))
            in_ch = out_ch
        in_dim = in_ch * _FEATURE_CELLS
        for name, out_dim in zip(_FC_NAMES, fc_widths):
            setattr(self, name, nn.Linear(in_dim, out_dim))
            in_dim = out_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for name in _CONV_NAMES:
            x = torch.relu(getattr(self, name)(x))
            if name in _POOL_AFTER:
                x = torch.max_pool2d(x, kernel_size=2, stride=2)
        x = torch.flatten(x, start_dim=1)
        for name in _FC_NAMES:
            x = torch.relu(getattr(self, name)(x))
        return x


def build_network(conv_widths: tuple[int, ...], fc_widths: tuple[int, ...]) -> nn.Module:
    """Construct the embedder net; checkpoint helpers and tests share this."""
    if len(conv_widths) != len(_CONV_NAMES) or len(fc_widths) != len(_FC_NAMES):
        raise ValueError(
            f"need {len(_CONV_NAMES)} conv widths and {len(_FC_NAMES)} fc widths"
        )
    return _Net(tuple(conv_widths), tuple(fc_widths))


def _widths_from_state(state: dict, path) -> tuple[tuple[int, ...], tuple[int, ...]]:
    expected = {f"{n}.{p}" for n in _CONV_NAMES + _FC_NAMES for p in ("weight", "bias")}
    missing = expected - set(state)
    extra = set(state) - expected
    if missing or extra:
        raise ExtractorError(
            f"{path}: checkpoint keys do not match the embedder topology "
            f"(missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]})"
        )
    conv_widths = tuple(int(state[f"{n}.weight"].shape[0]) for n in _CONV_NAMES)
    fc_widths = tuple(int(state[f"{n}.weight"].shape[0]) for n in _FC_NAMES)
    fc1_in = int(state["fc1.weight"].shape[1])
    if fc1_in != conv_widths[-1] * _FEATURE_CELLS:
        raise ExtractorError(
            f"{path}: fc1 expects {fc1_in} inputs but the conv stack "
            f"produces {conv_widths[-1] * _FEATURE_CELLS}"
        )
    return conv_widths, fc_widths


class VggishEmbedder:
    """Loads a checkpoint and maps waveforms to fixed-size embeddings."""

    def __init__(self, checkpoint_path):
        path = Path(checkpoint_path)
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
        # torch.load failure modes range from OSError to struct.error; any
        # of them just means the checkpoint is unusable
        except Exception as exc:
            raise ExtractorError(f"cannot load embedder checkpoint {path}: {exc}") from None
        if not isinstance(state, dict):
            raise ExtractorError(f"{path}: checkpoint is not a state dict")
        conv_widths, fc_widths = _widths_from_state(state, path)
        self._net = build_network(conv_widths, fc_widths)
        self._net.load_state_dict(state)
        self._net.eval()
        self.dim = fc_widths[-1]
        self.padded_utterances = 0

    def embed_examples(self, examples: np.ndarray) -> np.ndarray:
        """Embed a batch of log-mel examples; (n, dim) float64."""
        if examples.ndim != 3 or examples.shape[1:] != (EXAMPLE_FRAMES, N_MELS):
            raise ExtractorError(
                f"examples must be (n, {EXAMPLE_FRAMES}, {N_MELS}), got {examples.shape}"
            )
        batch = torch.from_numpy(np.ascontiguousarray(examples, dtype=np.float32))
        with torch.no_grad():
            out = self._net(batch.unsqueeze(1))
        return out.double().numpy()

    def embed(self, waveform: np.ndarray, rate: int) -> np.ndarray:
        """Mean embedding over 960 ms examples of one utterance; (dim,)."""
        mel = log_mel_spectrogram(waveform, rate)
        if mel.shape[0] < EXAMPLE_FRAMES:
            self.padded_utterances += 1
        examples = examples_from_log_mel(mel)
        return self.embed_examples(examples).mean(axis=0)


def save_checkpoint(net: nn.Module, path) -> None:
    """Write a checkpoint the embedder can load."""
    torch.save(net.state_dict(), Path(path))
