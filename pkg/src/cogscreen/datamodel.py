"""Domain types, dialogue feature files, dataset manifests, normalization.

A dialogue is an ordered list of utterances (each with an acoustic vector, a
textual vector, an optional part-of-speech histogram and a speaker flag) plus
one conversation-level hand-crafted feature vector and optional labels
(dementia flag, MMSE score in [0, 30]).

On disk a dialogue is one UTF-8 line-oriented file:

    DLG v1 id=<id> ad=<0|1|?> mmse=<0..30|?>
    HC <k> <f64 x k>
    UTT <INV|PAR> A <da> <f64 x da> T <dt> <f64 x dt> [P <dp> <f64 x dp>]

and a dataset is a JSON manifest with per-modality dims, file paths, optional
fold assignments and optional normalization statistics. Floats are written
with shortest round-trip formatting, so canonical files survive a
load -> write cycle byte-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MMSE_MAX = 30

__all__ = [
    "DataError",
    "Speaker",
    "Utterance",
    "Dialogue",
    "FeatureMatrix",
    "DatasetManifest",
    "NormStats",
    "MMSE_MAX",
    "load_manifest",
    "write_manifest",
    "load_dialogue",
    "write_dialogue",
    "load_dataset",
    "merge_pos",
    "compute_norm_stats",
    "normalize",
    "feature_matrix_from_dialogues",
]


class DataError(ValueError):
    """Malformed manifest or feature file, or an out-of-contract value."""


class Speaker(Enum):
    INVESTIGATOR = "INV"
    PARTICIPANT = "PAR"


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Utterance:
    """One aligned speech turn; immutable after construction."""

    speaker: Speaker
    acoustic: np.ndarray
    textual: np.ndarray
    pos: np.ndarray | None = None
    duration_ms: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "acoustic", _frozen(self.acoustic))
        object.__setattr__(self, "textual", _frozen(self.textual))
        if self.pos is not None:
            object.__setattr__(self, "pos", _frozen(self.pos))
        if self.duration_ms is not None and self.duration_ms < 0:
            raise DataError(f"negative duration_ms: {self.duration_ms}")


@dataclass(frozen=True)
class Dialogue:
    """An ordered conversation with one hand-crafted vector and labels."""

    id: str
    utterances: tuple[Utterance, ...]
    hc: np.ndarray
    label_ad: bool | None = None
    label_mmse: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "hc", _frozen(self.hc))
        if not self.utterances:
            raise DataError(f"dialogue {self.id!r} has no utterances")
        if self.label_mmse is not None and not 0 <= self.label_mmse <= MMSE_MAX:
            raise DataError(
                f"dialogue {self.id!r}: MMSE {self.label_mmse} outside [0, {MMSE_MAX}]"
            )

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass
class FeatureMatrix:
    """Named columns over samples, with one class label per row."""

    names: list[str]
    rows: np.ndarray  # (n_samples, n_features)
    labels: list

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.rows.shape}")
        if len(self.names) != self.rows.shape[1]:
            raise DataError(
                f"{len(self.names)} names for {self.rows.shape[1]} feature columns"
            )
        if len(self.labels) != self.rows.shape[0]:
            raise DataError(f"{len(self.labels)} labels for {self.rows.shape[0]} rows")


@dataclass
class NormStats:
    """Per-dimension mean/std for each stream, fit on a training split."""

    acoustic_mean: np.ndarray
    acoustic_std: np.ndarray
    textual_mean: np.ndarray
    textual_std: np.ndarray
    hc_mean: np.ndarray
    hc_std: np.ndarray

    def to_json(self) -> dict:
        return {
            "acoustic_mean": self.acoustic_mean.tolist(),
            "acoustic_std": self.acoustic_std.tolist(),
            "textual_mean": self.textual_mean.tolist(),
            "textual_std": self.textual_std.tolist(),
            "hc_mean": self.hc_mean.tolist(),
            "hc_std": self.hc_std.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        try:
            return cls(**{k: np.asarray(obj[k], dtype=np.float64) for k in (
                "acoustic_mean", "acoustic_std", "textual_mean", "textual_std",
                "hc_mean", "hc_std",
            )})
        except KeyError as exc:
            raise DataError(f"norm_stats missing key {exc}") from None


@dataclass
class DatasetManifest:
    acoustic_dim: int
    textual_dim: int
    pos_dim: int
    hc_dim: int
    dialogues: list[Path]
    folds: dict[str, int] | None = None
    norm_stats: NormStats | None = None
    root: Path = field(default_factory=Path)

    def paths(self) -> list[Path]:
        return [self.root / p if not Path(p).is_absolute() else Path(p) for p in self.dialogues]


# ---------------------------------------------------------------------------
# feature-file parsing / writing
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_floats(tokens: list[str], n: int, where: str) -> np.ndarray:
    if len(tokens) < n:
        raise DataError(f"{where}: expected {n} floats, found {len(tokens)}")
    try:
        vals = [float(t) for t in tokens[:n]]
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise DataError(f"{where}: non-finite value")
    return np.array(vals)


def _parse_header(line: str, path) -> tuple[str, bool | None, int | None]:
    parts = line.split()
    if len(parts) != 5 or parts[0] != "DLG" or parts[1] != "v1":
        raise DataError(f"{path}: bad header line {line!r}")
    fields = {}
    for part in parts[2:]:
        key, _, value = part.partition("=")
        fields[key] = value
    if set(fields) != {"id", "ad", "mmse"}:
        raise DataError(f"{path}: header must carry id=, ad=, mmse=")
    did = fields["id"]
    if not did:
        raise DataError(f"{path}: empty dialogue id")
    ad = None if fields["ad"] == "?" else {"0": False, "1": True}.get(fields["ad"])
    if fields["ad"] not in ("0", "1", "?"):
        raise DataError(f"{path}: ad must be 0, 1 or ?, got {fields['ad']!r}")
    if fields["mmse"] == "?":
        mmse = None
    else:
        try:
            mmse = int(fields["mmse"])
        except ValueError:
            raise DataError(f"{path}: mmse must be an integer or ?, got {fields['mmse']!r}") from None
    return did, ad, mmse


def load_dialogue(path, manifest: DatasetManifest | None = None) -> Dialogue:
    """Parse one feature file; dims are validated against `manifest` if given."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    lines = text.splitlines()
    if len(lines) < 3:
        raise DataError(f"{path}: needs a header, an HC line and at least one utterance")

    did, ad, mmse = _parse_header(lines[0], path)

    hc_tokens = lines[1].split()
    if len(hc_tokens) < 2 or hc_tokens[0] != "HC":
        raise DataError(f"{path}: second line must be 'HC <k> <floats>'")
    k = _parse_int(hc_tokens[1], f"{path}: HC count")
    hc = _parse_floats(hc_tokens[2:], k, f"{path}: HC vector")
    if len(hc_tokens) - 2 != k:
        raise DataError(f"{path}: HC declares {k} values but carries {len(hc_tokens) - 2}")

    utterances = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        tokens = line.split()
        where = f"{path}:{lineno}"
        if tokens[0] != "UTT":
            raise DataError(f"{where}: expected UTT record, got {tokens[0]!r}")
        if len(tokens) < 2:
            raise DataError(f"{where}: truncated UTT record")
        try:
            speaker = Speaker(tokens[1])
        except ValueError:
            raise DataError(f"{where}: unknown speaker tag {tokens[1]!r}") from None
        cursor = 2
        sections: dict[str, np.ndarray] = {}
        while cursor < len(tokens):
            tag = tokens[cursor]
            if tag not in ("A", "T", "P") or tag in sections:
                raise DataError(f"{where}: unexpected section {tag!r}")
            if cursor + 1 >= len(tokens):
                raise DataError(f"{where}: section {tag} missing length")
            n = _parse_int(tokens[cursor + 1], f"{where}: section {tag} length")
            vec = _parse_floats(tokens[cursor + 2 :], n, f"{where}: section {tag}")
            sections[tag] = vec
            cursor += 2 + n
        if "A" not in sections or "T" not in sections:
            raise DataError(f"{where}: UTT must carry A and T sections")
        utterances.append(
            Utterance(
                speaker=speaker,
                acoustic=sections["A"],
                textual=sections["T"],
                pos=sections.get("P"),
            )
        )

    if not utterances:
        raise DataError(f"{path}: no utterances")

    if manifest is not None:
        _check_dims(path, utterances, hc, manifest)

    return Dialogue(id=did, utterances=tuple(utterances), hc=hc, label_ad=ad, label_mmse=mmse)


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataError(f"{where}: not an integer: {token!r}") from None


def _check_dims(path, utterances: list[Utterance], hc: np.ndarray, manifest: DatasetManifest):
    if hc.shape[0] != manifest.hc_dim:
        raise DataError(
            f"{path}: HC dim {hc.shape[0]} does not match manifest hc_dim {manifest.hc_dim}"
        )
    for i, utt in enumerate(utterances):
        if utt.acoustic.shape[0] != manifest.acoustic_dim:
            raise DataError(
                f"{path}: utterance {i} acoustic dim {utt.acoustic.shape[0]} does not match "
                f"manifest acoustic_dim {manifest.acoustic_dim}"
            )
        if utt.textual.shape[0] != manifest.textual_dim:
            raise DataError(
                f"{path}: utterance {i} textual dim {utt.textual.shape[0]} does not match "
                f"manifest textual_dim {manifest.textual_dim}"
            )
        pos_dim = 0 if utt.pos is None else utt.pos.shape[0]
        if pos_dim != manifest.pos_dim:
            raise DataError(
                f"{path}: utterance {i} pos dim {pos_dim} does not match "
                f"manifest pos_dim {manifest.pos_dim}"
            )


def write_dialogue(dialogue: Dialogue, path) -> None:
    """Write the canonical file form (round-trips byte-identically)."""
    path = Path(path)
    ad = "?" if dialogue.label_ad is None else str(int(dialogue.label_ad))
    mmse = "?" if dialogue.label_mmse is None else str(dialogue.label_mmse)
    lines = [f"DLG v1 id={dialogue.id} ad={ad} mmse={mmse}"]
    hc_vals = " ".join(_fmt(v) for v in dialogue.hc)
    lines.append(f"HC {dialogue.hc.shape[0]}{' ' + hc_vals if hc_vals else ''}")
    for utt in dialogue.utterances:
        parts = [
            "UTT",
            utt.speaker.value,
            "A",
            str(utt.acoustic.shape[0]),
            *(_fmt(v) for v in utt.acoustic),
            "T",
            str(utt.textual.shape[0]),
            *(_fmt(v) for v in utt.textual),
        ]
        if utt.pos is not None:
            parts += ["P", str(utt.pos.shape[0]), *(_fmt(v) for v in utt.pos)]
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def load_manifest(path, validate_files: bool = True) -> DatasetManifest:
    """Load and validate a dataset manifest.

    With validate_files (the default) every referenced feature file is parsed
    and checked against the manifest dims; duplicate dialogue ids are errors.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from None

    for key in ("acoustic_dim", "textual_dim", "pos_dim", "hc_dim", "dialogues"):
        if key not in obj:
            raise DataError(f"manifest {path} missing key {key!r}")
    dims = {k: obj[k] for k in ("acoustic_dim", "textual_dim", "pos_dim", "hc_dim")}
    for k, v in dims.items():
        if not isinstance(v, int) or v < 0:
            raise DataError(f"manifest {path}: {k} must be a non-negative integer, got {v!r}")
    if dims["acoustic_dim"] < 1 or dims["textual_dim"] < 1:
        raise DataError(f"manifest {path}: acoustic_dim and textual_dim must be >= 1")

    files = [Path(p) for p in obj["dialogues"]]
    if not files:
        raise DataError(f"manifest {path}: empty dataset (no dialogues listed)")

    folds = None
    if obj.get("folds") is not None:
        folds = {str(k): int(v) for k, v in obj["folds"].items()}

    norm_stats = None
    if obj.get("norm_stats") is not None:
        norm_stats = NormStats.from_json(obj["norm_stats"])

    manifest = DatasetManifest(
        acoustic_dim=dims["acoustic_dim"],
        textual_dim=dims["textual_dim"],
        pos_dim=dims["pos_dim"],
        hc_dim=dims["hc_dim"],
        dialogues=files,
        folds=folds,
        norm_stats=norm_stats,
        root=path.parent,
    )

    resolved = manifest.paths()
    for p in resolved:
        if not p.is_file():
            raise DataError(f"manifest {path}: referenced file does not exist: {p}")

    if validate_files:
        seen: set[str] = set()
        for p in resolved:
            d = load_dialogue(p, manifest)
            if d.id in seen:
                raise DataError(f"manifest {path}: duplicate dialogue id {d.id!r} in {p}")
            seen.add(d.id)
        if folds is not None and set(folds) != seen:
            raise DataError(
                f"manifest {path}: fold assignments do not partition the dialogue ids"
            )
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    obj = {
        "acoustic_dim": manifest.acoustic_dim,
        "textual_dim": manifest.textual_dim,
        "pos_dim": manifest.pos_dim,
        "hc_dim": manifest.hc_dim,
        "dialogues": [str(p) for p in manifest.dialogues],
    }
    if manifest.folds is not None:
        obj["folds"] = manifest.folds
    if manifest.norm_stats is not None:
        obj["norm_stats"] = manifest.norm_stats.to_json()
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(manifest: DatasetManifest, use_pos: bool = False) -> list[Dialogue]:
    """Load all dialogues; with use_pos the POS histogram is appended to the
    textual vector (textual first, then POS)."""
    dialogues = [load_dialogue(p, manifest) for p in manifest.paths()]
    if use_pos:
        if manifest.pos_dim == 0:
            raise DataError("use_pos requested but manifest pos_dim is 0")
        dialogues = [merge_pos(d) for d in dialogues]
    return dialogues


def merge_pos(dialogue: Dialogue) -> Dialogue:
    merged = []
    for utt in dialogue.utterances:
        if utt.pos is None:
            raise DataError(f"dialogue {dialogue.id!r}: utterance lacks a POS vector")
        merged.append(
            Utterance(
                speaker=utt.speaker,
                acoustic=utt.acoustic,
                textual=np.concatenate([utt.textual, utt.pos]),
                pos=None,
                duration_ms=utt.duration_ms,
            )
        )
    return replace(dialogue, utterances=tuple(merged))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

_STD_FLOOR = 1e-8


def compute_norm_stats(dialogues: Sequence[Dialogue]) -> NormStats:
    """Fit per-dimension mean/std; call on the training split only."""
    acoustic = np.vstack([u.acoustic for d in dialogues for u in d.utterances])
    textual = np.vstack([u.textual for d in dialogues for u in d.utterances])
    hc = np.vstack([d.hc for d in dialogues]) if dialogues[0].hc.size else np.zeros((1, 0))
    return NormStats(
        acoustic_mean=acoustic.mean(axis=0),
        acoustic_std=acoustic.std(axis=0),
        textual_mean=textual.mean(axis=0),
        textual_std=textual.std(axis=0),
        hc_mean=hc.mean(axis=0),
        hc_std=hc.std(axis=0),
    )


def _transform(x: np.ndarray, mean: np.ndarray, std: np.ndarray, what: str) -> np.ndarray:
    if x.shape != mean.shape:
        raise DataError(f"normalization stats dim mismatch for {what}: {x.shape} vs {mean.shape}")
    return (x - mean) / np.maximum(std, _STD_FLOOR)


def normalize(dialogues: Iterable[Dialogue], stats: NormStats) -> list[Dialogue]:
    """Return z-normalized copies; never produces NaN/Inf for finite input."""
    out = []
    for d in dialogues:
        utts = tuple(
            Utterance(
                speaker=u.speaker,
                acoustic=_transform(u.acoustic, stats.acoustic_mean, stats.acoustic_std, "acoustic"),
                textual=_transform(u.textual, stats.textual_mean, stats.textual_std, "textual"),
                pos=u.pos,
                duration_ms=u.duration_ms,
            )
            for u in d.utterances
        )
        hc = _transform(d.hc, stats.hc_mean, stats.hc_std, "hc")
        out.append(replace(d, utterances=utts, hc=hc))
    return out


def feature_matrix_from_dialogues(dialogues: Sequence[Dialogue], stream: str = "hc") -> FeatureMatrix:
    """One row per dialogue: the HC vector, or the per-dialogue mean of an
    utterance stream. Labels are the dementia flags."""
    rows = []
    labels = []
    for d in dialogues:
        if d.label_ad is None:
            raise DataError(f"dialogue {d.id!r} has no class label")
        if stream == "hc":
            rows.append(d.hc)
        elif stream == "acoustic":
            rows.append(np.mean([u.acoustic for u in d.utterances], axis=0))
        elif stream == "textual":
            rows.append(np.mean([u.textual for u in d.utterances], axis=0))
        else:
            raise DataError(f"unknown feature stream {stream!r}")
        labels.append(int(d.label_ad))
    rows = np.vstack(rows)
    names = [f"{stream}_{j}" for j in range(rows.shape[1])]
    return FeatureMatrix(names=names, rows=rows, labels=labels)
