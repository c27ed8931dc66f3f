"""Dialogue classification/regression network.

Per utterance: each modality vector is dropout-regularized, projected to a
shared width, passed through scaled dot-product self-attention (the projected
vector is treated as a length-d_model sequence of width 1), stacked with a
speaker embedding as input channels to a 1-D CNN (a stem conv then a chain of
squeeze-excitation blocks, every second block stretching channels and cutting
length by 4), and global-max-pooled into one embedding per utterance.

Per dialogue: the utterance embeddings run through stacked bidirectional
LSTMs, the last layer's states are max-pooled over time, concatenated with
the hand-crafted conversation vector, and pushed through a shared two-layer
FC trunk (each layer dividing width by 4, ReLU) feeding two heads: a 2-way
class logit pair and a sigmoid output read as MMSE scaled to [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .datamodel import DataError, Dialogue, NormStats, Speaker, Utterance

__all__ = [
    "CLASS_NON_AD",
    "CLASS_AD",
    "ModelConfig",
    "build_params",
    "project_inputs",
    "encode_utterance",
    "encode_dialogue",
    "forward_dialogue",
    "predict",
    "save_model",
    "load_model",
]

CLASS_NON_AD = 0
CLASS_AD = 1

_SPEAKER_INDEX = {Speaker.INVESTIGATOR: 0, Speaker.PARTICIPANT: 1}
_MODALITY_ORDER = ("acoustic", "textual")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; all tensor shapes derive from this."""

    acoustic_dim: int = 128
    textual_dim: int = 768
    hc_dim: int = 23
    d_model: int = 1024
    kernel: int = 15
    n_se_blocks: int = 6
    channel_schedule: tuple[int, ...] = (32, 128, 512, 1024)
    stride: int = 4
    stride_every: int = 2
    se_reduction: int = 16
    lstm_layers: int = 3
    lstm_hidden: int = 512
    fc_reduction: int = 4
    dropout: float = 0.2
    modalities: tuple[str, ...] = ("acoustic", "textual")
    use_hc: bool = True
    use_pos: bool = False
    use_attention: bool = True

    def __post_init__(self):
        unknown = set(self.modalities) - set(_MODALITY_ORDER)
        if unknown:
            raise ValueError(f"unknown modalities: {sorted(unknown)}")
        object.__setattr__(
            self, "modalities",
            tuple(m for m in _MODALITY_ORDER if m in self.modalities),
        )
        object.__setattr__(self, "channel_schedule", tuple(self.channel_schedule))
        if not self.modalities:
            raise ValueError("at least one of 'acoustic', 'textual' must be enabled")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.d_model < max(self.input_dims().values()):
            raise ValueError(
                f"d_model {self.d_model} smaller than largest input dim "
                f"{max(self.input_dims().values())}"
            )
        if self.n_se_blocks % self.stride_every != 0:
            raise ValueError(
                f"n_se_blocks {self.n_se_blocks} must be a multiple of "
                f"stride_every {self.stride_every}"
            )
        growths = self.n_se_blocks // self.stride_every
        if len(self.channel_schedule) != growths + 1:
            raise ValueError(
                f"channel_schedule needs {growths + 1} entries "
                f"(stem + one per strided block), got {len(self.channel_schedule)}"
            )
        if self.use_hc and self.hc_dim < 1:
            raise ValueError("use_hc requires hc_dim >= 1")
        # every conv in the trace must satisfy L + 2p >= K
        pad = self.padding()
        for length in self.length_trace():
            if length + 2 * pad < self.kernel:
                raise ValueError(
                    f"length trace hits {length}, too short for kernel {self.kernel}"
                )

    def input_dims(self) -> dict[str, int]:
        dims = {}
        if "acoustic" in self.modalities:
            dims["acoustic"] = self.acoustic_dim
        if "textual" in self.modalities:
            dims["textual"] = self.textual_dim
        return dims

    def padding(self) -> int:
        return (self.kernel - 1) // 2

    def input_channels(self) -> int:
        return len(self.modalities) + 1  # modality streams plus the speaker map

    def block_plan(self) -> list[tuple[int, int, int]]:
        """Per SE block: (in_channels, out_channels, stride of its second conv)."""
        plan = []
        c = self.channel_schedule[0]
        growth = 1
        for i in range(1, self.n_se_blocks + 1):
            if i % self.stride_every == 0:
                c_out = self.channel_schedule[growth]
                growth += 1
                plan.append((c, c_out, self.stride))
                c = c_out
            else:
                plan.append((c, c, 1))
        return plan

    def length_trace(self) -> list[int]:
        """Sequence length after the stem and after each SE block."""
        pad = self.padding()
        lengths = [ad.conv1d_out_len(self.d_model, self.kernel, 1, pad)]
        for _, _, stride in self.block_plan():
            lengths.append(ad.conv1d_out_len(lengths[-1], self.kernel, 1, pad))
            lengths[-1] = ad.conv1d_out_len(lengths[-1], self.kernel, stride, pad)
        return lengths

    def utterance_dim(self) -> int:
        return self.channel_schedule[-1]

    def trunk_dims(self) -> tuple[int, int, int]:
        d_in = 2 * self.lstm_hidden + (self.hc_dim if self.use_hc else 0)
        d1 = d_in // self.fc_reduction
        d2 = d1 // self.fc_reduction
        if d2 < 1:
            raise ValueError(f"FC trunk collapses to zero width from input {d_in}")
        return d_in, d1, d2

    def to_json(self) -> dict:
        return {
            "acoustic_dim": self.acoustic_dim,
            "textual_dim": self.textual_dim,
            "hc_dim": self.hc_dim,
            "d_model": self.d_model,
            "kernel": self.kernel,
            "n_se_blocks": self.n_se_blocks,
            "channel_schedule": list(self.channel_schedule),
            "stride": self.stride,
            "stride_every": self.stride_every,
            "se_reduction": self.se_reduction,
            "lstm_layers": self.lstm_layers,
            "lstm_hidden": self.lstm_hidden,
            "fc_reduction": self.fc_reduction,
            "dropout": self.dropout,
            "modalities": list(self.modalities),
            "use_hc": self.use_hc,
            "use_pos": self.use_pos,
            "use_attention": self.use_attention,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        kwargs = dict(obj)
        kwargs["channel_schedule"] = tuple(kwargs["channel_schedule"])
        kwargs["modalities"] = tuple(kwargs["modalities"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# parameter construction
# ---------------------------------------------------------------------------


def build_params(config: ModelConfig, rng: np.random.Generator) -> ParamStore:
    """Fresh parameters, uniform in ±1/√fan_in, in a fixed naming scheme."""
    store = ParamStore()

    def dense(name: str, d_in: int, d_out: int, bias: bool = True):
        store.add(name + "_w", ad.uniform_init(rng, (d_in, d_out), d_in))
        if bias:
            store.add(name + "_b", ad.uniform_init(rng, (d_out,), d_in))

    for m, d_in in config.input_dims().items():
        dense(f"proj_{m}", d_in, config.d_model)
    store.add("speaker_embed", ad.uniform_init(rng, (2, config.d_model), 2))

    def conv(name: str, c_in: int, c_out: int):
        # He-scaled weights: the conv stack is deep enough that smaller
        # init scales attenuate the input signal below float resolution
        fan_in = c_in * config.kernel
        store.add(name + "_w", ad.he_uniform_init(rng, (c_out, c_in, config.kernel), fan_in))
        store.add(name + "_b", ad.uniform_init(rng, (c_out,), fan_in))

    conv("stem", config.input_channels(), config.channel_schedule[0])
    for i, (c_in, c_out, _) in enumerate(config.block_plan(), start=1):
        conv(f"se{i}_conv_a", c_in, c_in)
        bottleneck = ad.se_bottleneck_dim(c_in, config.se_reduction)
        store.add(f"se{i}_w1", ad.he_uniform_init(rng, (c_in, bottleneck), c_in))
        store.add(f"se{i}_w2", ad.uniform_init(rng, (bottleneck, c_in), bottleneck))
        conv(f"se{i}_conv_b", c_in, c_out)

    d_in = config.utterance_dim()
    for layer in range(1, config.lstm_layers + 1):
        for direction in ("fw", "bw"):
            prefix = f"lstm{layer}_{direction}"
            store.add(prefix + "_wx",
                      ad.uniform_init(rng, (d_in, 4 * config.lstm_hidden), d_in))
            store.add(prefix + "_wh",
                      ad.uniform_init(rng, (config.lstm_hidden, 4 * config.lstm_hidden),
                                      config.lstm_hidden))
            store.add(prefix + "_b",
                      ad.uniform_init(rng, (4 * config.lstm_hidden,), config.lstm_hidden))
        d_in = 2 * config.lstm_hidden

    t_in, t1, t2 = config.trunk_dims()
    dense("fc1", t_in, t1)
    dense("fc2", t1, t2)
    dense("cls", t2, 2)
    dense("reg", t2, 1)
    return store


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


def project_inputs(
    utt: Utterance,
    store: ParamStore,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> dict[str, Tensor]:
    """Raw feature dropout, then per-modality projection and speaker lookup."""
    raw = {"acoustic": utt.acoustic, "textual": utt.textual}
    streams: dict[str, Tensor] = {}
    for m, d_in in config.input_dims().items():
        vec = raw[m]
        if vec.shape[0] != d_in:
            raise DataError(
                f"{m} feature dim {vec.shape[0]} does not match configured {d_in}"
            )
        x = ad.constant(vec)
        if train and config.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            x = ad.dropout(x, config.dropout, rng, train=True)
        streams[m] = ad.add(ad.matmul(x, store[f"proj_{m}_w"]), store[f"proj_{m}_b"])
    streams["speaker"] = store["speaker_embed"][_SPEAKER_INDEX[utt.speaker]]
    return streams


def encode_utterance(
    streams: Mapping[str, Tensor],
    store: ParamStore,
    config: ModelConfig,
) -> Tensor:
    """Attention per modality, channel stack, stem + SE chain, global max pool."""
    channels: list[Tensor] = []
    for m in config.modalities:
        s = streams[m]
        if config.use_attention:
            s = ad.reshape(
                ad.sdp_self_attention(ad.reshape(s, (config.d_model, 1))),
                (config.d_model,),
            )
        channels.append(s)
    channels.append(streams["speaker"])
    x = ad.stack(channels, axis=0)  # (C_in, d_model)

    pad = config.padding()
    x = ad.relu(ad.conv1d(x, store["stem_w"], stride=1, padding=pad, bias=store["stem_b"]))
    for i, (_, _, stride) in enumerate(config.block_plan(), start=1):
        x = ad.relu(ad.conv1d(x, store[f"se{i}_conv_a_w"], stride=1, padding=pad,
                              bias=store[f"se{i}_conv_a_b"]))
        x = ad.se_block_gate(x, store[f"se{i}_w1"], store[f"se{i}_w2"])
        x = ad.relu(ad.conv1d(x, store[f"se{i}_conv_b_w"], stride=stride, padding=pad,
                              bias=store[f"se{i}_conv_b_b"]))
    return ad.global_max_pool(x, axis=1)  # (C_last,)


def encode_dialogue(
    utt_embs: Tensor,
    hc: Tensor | None,
    store: ParamStore,
    config: ModelConfig,
) -> tuple[Tensor, Tensor]:
    """Stacked bi-LSTMs, max over time, HC fusion, FC trunk, two heads."""
    if utt_embs.data.ndim != 2 or utt_embs.shape[0] < 1:
        raise ValueError(f"utterance embeddings must be (T, d), got {utt_embs.shape}")
    x = utt_embs
    for layer in range(1, config.lstm_layers + 1):
        params = {k: store[f"lstm{layer}_{k}"]
                  for k in ("fw_wx", "fw_wh", "fw_b", "bw_wx", "bw_wh", "bw_b")}
        x = ad.lstm_layer(x, params, config.lstm_hidden, bidirectional=True)
    pooled = ad.max_(x, axis=0)  # (2H,)

    if config.use_hc:
        if hc is None:
            raise ValueError("config.use_hc is set but no HC vector was given")
        if hc.shape[0] != config.hc_dim:
            raise DataError(
                f"HC dim {hc.shape[0]} does not match configured {config.hc_dim}"
            )
        pooled = ad.concat([pooled, hc], axis=0)

    h = ad.relu(ad.add(ad.matmul(pooled, store["fc1_w"]), store["fc1_b"]))
    h = ad.relu(ad.add(ad.matmul(h, store["fc2_w"]), store["fc2_b"]))
    logits = ad.add(ad.matmul(h, store["cls_w"]), store["cls_b"])
    mmse01 = ad.sigmoid(ad.add(ad.matmul(h, store["reg_w"]), store["reg_b"]))
    return logits, ad.reshape(mmse01, ())


def forward_dialogue(
    dialogue: Dialogue,
    store: ParamStore,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    train: bool = False,
    utterances: Sequence[Utterance] | None = None,
) -> tuple[Tensor, Tensor]:
    """Whole-network forward over a dialogue (or a window of its utterances)."""
    utts = dialogue.utterances if utterances is None else tuple(utterances)
    embs = [
        encode_utterance(project_inputs(u, store, config, rng, train), store, config)
        for u in utts
    ]
    stacked = ad.stack(embs, axis=0)
    hc = ad.constant(dialogue.hc) if config.use_hc else None
    return encode_dialogue(stacked, hc, store, config)


def predict(dialogue: Dialogue, store: ParamStore, config: ModelConfig) -> tuple[float, float]:
    """(p_ad, mmse). Inference runs over all utterances with dropout off."""
    with ad.no_grad():
        logits, mmse01 = forward_dialogue(dialogue, store, config, train=False)
        probs = ad.softmax(logits, axis=-1)
    return float(probs.data[CLASS_AD]), float(mmse01.data) * 30.0


# ---------------------------------------------------------------------------
# persistence: checkpoint plus JSON sidecar
# ---------------------------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_model(
    path,
    store: ParamStore,
    config: ModelConfig,
    norm_stats: NormStats | None = None,
    hc_mask: Sequence[int] | None = None,
) -> None:
    """Write the parameter archive and a sidecar with everything needed to
    reproduce preprocessing at predict time."""
    ad.save_checkpoint(path, store)
    sidecar = {
        "config": config.to_json(),
        "hc_mask": None if hc_mask is None else [int(v) for v in hc_mask],
        "norm_stats": None if norm_stats is None else norm_stats.to_json(),
    }
    _sidecar_path(path).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(path) -> tuple[ParamStore, ModelConfig, NormStats | None, list[int] | None]:
    sidecar_file = _sidecar_path(path)
    if not sidecar_file.is_file():
        raise DataError(f"model sidecar not found: {sidecar_file}")
    sidecar = json.loads(sidecar_file.read_text(encoding="utf-8"))
    config = ModelConfig.from_json(sidecar["config"])
    arrays = ad.load_checkpoint(path)
    rng = np.random.default_rng(0)
    store = build_params(config, rng)
    store.load_state(arrays)
    norm_stats = (
        NormStats.from_json(sidecar["norm_stats"])
        if sidecar.get("norm_stats") is not None else None
    )
    hc_mask = sidecar.get("hc_mask")
    if hc_mask is not None:
        hc_mask = [int(v) for v in hc_mask]
    return store, config, norm_stats, hc_mask
