"""Synthetic dialogue corpus generator for experiments and acceptance runs.

Produces a balanced two-class corpus in the dialogue feature-file format.
Class signal is planted as a mean shift of `separation` standard deviations
on a fixed subset of feature dimensions, and some dimensions additionally
track the (scaled) MMSE target so the regression head has something to
learn. Everything informative is multiplied by `separation`, so separation 0
yields pure-noise features and chance-level learnability while labels keep
their class-conditional MMSE distributions (AD low, non-AD high).

Only participant utterances carry signal; investigator turns are noise, as
in real interviews where the interviewer's speech says little about the
participant. All randomness flows from one seed through named substreams, so
the same seed writes byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import (
    DatasetManifest,
    Dialogue,
    MMSE_MAX,
    Speaker,
    Utterance,
    write_dialogue,
    write_manifest,
)
from .rng import substream
from .training import kfold_split

__all__ = ["SyntheticSpec", "generate_dataset"]


@dataclass(frozen=True)
class SyntheticSpec:
    n_dialogues: int = 108
    acoustic_dim: int = 128
    textual_dim: int = 1024
    pos_dim: int = 12
    hc_dim: int = 42
    separation: float = 3.0
    mmse_noise: float = 1.0
    folds: int = 5
    seed: int = 0
    min_utts: int = 7
    max_utts: int = 25
    investigator_rate: float = 0.3

    def __post_init__(self):
        if self.n_dialogues < 2:
            raise ValueError(f"need at least 2 dialogues, got {self.n_dialogues}")
        if self.separation < 0:
            raise ValueError(f"separation must be non-negative, got {self.separation}")
        for name in ("acoustic_dim", "textual_dim", "hc_dim"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if self.pos_dim < 0:
            raise ValueError("pos_dim must be >= 0")
        if not 1 <= self.min_utts <= self.max_utts:
            raise ValueError(
                f"bad utterance range [{self.min_utts}, {self.max_utts}]"
            )

    def to_json(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "acoustic_dim": self.acoustic_dim,
            "textual_dim": self.textual_dim,
            "pos_dim": self.pos_dim,
            "hc_dim": self.hc_dim,
            "separation": self.separation,
            "mmse_noise": self.mmse_noise,
            "folds": self.folds,
            "seed": self.seed,
            "min_utts": self.min_utts,
            "max_utts": self.max_utts,
            "investigator_rate": self.investigator_rate,
        }


def _informative(dim: int) -> np.ndarray:
    # first quarter of the dimensions carries the class shift
    return np.arange(max(1, dim // 4))


def _mmse_linked(dim: int) -> np.ndarray:
    k = max(1, dim // 8)
    start = max(1, dim // 4)
    return np.arange(start, min(dim, start + k))


def _sample_mmse(rng: np.random.Generator, is_ad: bool, noise: float) -> int:
    mu, sd = (17.0, 4.0) if is_ad else (28.0, 1.5)
    value = rng.normal(mu, sd * noise) if noise > 0 else mu
    return int(np.clip(round(value), 0, MMSE_MAX))


def _feature_vector(rng, dim, is_ad, mmse01, separation) -> np.ndarray:
    x = rng.normal(size=dim)
    info = _informative(dim)
    x[info] += separation * (1.0 if is_ad else -1.0)
    linked = _mmse_linked(dim)
    x[linked] += separation * 2.0 * (mmse01 - 0.5)
    return x


def _pos_histogram(rng, dim, is_ad, separation) -> np.ndarray:
    weights = np.abs(rng.normal(size=dim)) + 0.1
    weights[0] *= 1.0 + separation * (0.8 if is_ad else 0.0)
    return weights / weights.sum()


def _make_dialogue(spec: SyntheticSpec, index: int) -> Dialogue:
    rng = substream(spec.seed, "gen", index)
    is_ad = index % 2 == 0
    mmse = _sample_mmse(rng, is_ad, spec.mmse_noise)
    mmse01 = mmse / MMSE_MAX
    n_utts = int(rng.integers(spec.min_utts, spec.max_utts + 1))
    utterances = []
    for _ in range(n_utts):
        is_inv = rng.random() < spec.investigator_rate
        if is_inv:
            # interviewer turns are uninformative noise
            acoustic = rng.normal(size=spec.acoustic_dim)
            textual = rng.normal(size=spec.textual_dim)
            pos = (_pos_histogram(rng, spec.pos_dim, False, 0.0)
                   if spec.pos_dim else None)
        else:
            acoustic = _feature_vector(rng, spec.acoustic_dim, is_ad, mmse01,
                                       spec.separation)
            textual = _feature_vector(rng, spec.textual_dim, is_ad, mmse01,
                                      spec.separation)
            pos = (_pos_histogram(rng, spec.pos_dim, is_ad, spec.separation)
                   if spec.pos_dim else None)
        utterances.append(
            Utterance(
                speaker=Speaker.INVESTIGATOR if is_inv else Speaker.PARTICIPANT,
                acoustic=acoustic,
                textual=textual,
                pos=pos,
            )
        )
    # half the HC dims split the classes, a couple more track MMSE, the rest
    # is noise so feature screening has something to reject
    hc = substream(spec.seed, "hc", index).normal(size=spec.hc_dim)
    half = spec.hc_dim // 2
    hc[:half] += spec.separation * (1.0 if is_ad else -1.0)
    linked = slice(half, min(spec.hc_dim, half + 2))
    hc[linked] += spec.separation * 2.0 * (mmse01 - 0.5)
    return Dialogue(
        id=f"syn{index:03d}",
        utterances=tuple(utterances),
        hc=hc,
        label_ad=is_ad,
        label_mmse=mmse,
    )


def generate_dataset(spec: SyntheticSpec, out_dir) -> Path:
    """Write feature files plus a manifest with precomputed stratified folds;
    returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dialogues = [_make_dialogue(spec, i) for i in range(spec.n_dialogues)]
    for d in dialogues:
        write_dialogue(d, out_dir / f"{d.id}.dlg")

    folds: dict[str, int] = {}
    for f, (_, val) in enumerate(kfold_split(dialogues, spec.folds, spec.seed)):
        for d in val:
            folds[d.id] = f

    manifest = DatasetManifest(
        acoustic_dim=spec.acoustic_dim,
        textual_dim=spec.textual_dim,
        pos_dim=spec.pos_dim,
        hc_dim=spec.hc_dim,
        dialogues=[Path(f"{d.id}.dlg") for d in dialogues],
        folds=folds,
        root=out_dir,
    )
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path
