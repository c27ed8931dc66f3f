"""Writer for the screening pipeline's feature-file format.

One dialogue per plain-text file:

    DLG v1 id=<id> ad=<0|1|?> mmse=<int|?>
    HC <k> <k floats>
    UTT <INV|PAR> A <n> <floats> T <m> <floats> [P <p> <floats>]

plus a manifest.json with the stream dims and the relative file list.  The
format doubles as the interface between the extractors and the pipeline,
so this module writes it from the published description rather than
importing the consumer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ExtractorError


@dataclass
class FeatureUtterance:
    speaker: str
    acoustic: np.ndarray
    textual: np.ndarray
    pos: np.ndarray | None = None


@dataclass
class FeatureDialogue:
    id: str
    utterances: list[FeatureUtterance] = field(default_factory=list)
    hc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ad: bool | None = None
    mmse: int | None = None


def _fmt_vector(tag: str, vec: np.ndarray) -> str:
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1:
        raise ExtractorError(f"section {tag}: expected a vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ExtractorError(f"section {tag}: non-finite value")
    body = " ".join(repr(float(v)) for v in vec)
    return f"{tag} {vec.shape[0]}{' ' + body if body else ''}"


def write_feature_file(dialogue: FeatureDialogue, path) -> None:
    """Serialize one dialogue; raises ExtractorError on malformed content."""
    if not dialogue.id or any(c.isspace() for c in dialogue.id):
        raise ExtractorError(f"bad dialogue id {dialogue.id!r}")
    if not dialogue.utterances:
        raise ExtractorError(f"dialogue {dialogue.id}: no utterances")
    ad = "?" if dialogue.ad is None else str(int(dialogue.ad))
    mmse = "?" if dialogue.mmse is None else str(int(dialogue.mmse))
    lines = [f"DLG v1 id={dialogue.id} ad={ad} mmse={mmse}"]
    lines.append(_fmt_vector("HC", dialogue.hc))
    for i, utt in enumerate(dialogue.utterances):
        if utt.speaker not in ("INV", "PAR"):
            raise ExtractorError(f"dialogue {dialogue.id}: bad speaker {utt.speaker!r}")
        parts = [
            f"UTT {utt.speaker}",
            _fmt_vector("A", utt.acoustic),
            _fmt_vector("T", utt.textual),
        ]
        if utt.pos is not None:
            parts.append(_fmt_vector("P", utt.pos))
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_manifest(
    out_dir,
    acoustic_dim: int,
    textual_dim: int,
    pos_dim: int,
    hc_dim: int,
    files: list[str],
) -> Path:
    """Write manifest.json next to the feature files; paths stay relative."""
    if acoustic_dim < 1 or textual_dim < 1:
        raise ExtractorError("acoustic_dim and textual_dim must be >= 1")
    if not files:
        raise ExtractorError("no feature files to list in the manifest")
    manifest = {
        "acoustic_dim": int(acoustic_dim),
        "textual_dim": int(textual_dim),
        "pos_dim": int(pos_dim),
        "hc_dim": int(hc_dim),
        "dialogues": list(files),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
