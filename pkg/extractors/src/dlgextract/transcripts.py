"""Transcript and timestamp inputs.

One dialogue arrives as a JSON file: a list of speaker-tagged utterances
with optional millisecond alignment and optional ground-truth labels.
Alignment may instead live in a sidecar timestamps file with one entry per
utterance, for transcripts produced without timing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from . import ExtractorError

SPEAKERS = ("INV", "PAR")
MMSE_MAX = 30


@dataclass(frozen=True)
class TranscriptUtterance:
    speaker: str
    text: str
    start_ms: int | None = None
    end_ms: int | None = None


@dataclass(frozen=True)
class Transcript:
    id: str
    utterances: tuple[TranscriptUtterance, ...]
    ad: bool | None = None
    mmse: int | None = None


def _load_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExtractorError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ExtractorError(f"{path} is not valid JSON: {exc}") from None


def _parse_utterance(obj, where: str) -> TranscriptUtterance:
    if not isinstance(obj, dict):
        raise ExtractorError(f"{where}: utterance must be an object, got {type(obj).__name__}")
    speaker = obj.get("speaker")
    if speaker not in SPEAKERS:
        raise ExtractorError(f"{where}: speaker must be one of {SPEAKERS}, got {speaker!r}")
    text = obj.get("text")
    if not isinstance(text, str):
        raise ExtractorError(f"{where}: text must be a string")
    start, end = obj.get("start_ms"), obj.get("end_ms")
    for name, val in (("start_ms", start), ("end_ms", end)):
        if val is not None and (isinstance(val, bool) or not isinstance(val, int) or val < 0):
            raise ExtractorError(f"{where}: {name} must be a non-negative integer")
    if start is not None and end is not None and end <= start:
        raise ExtractorError(f"{where}: end_ms {end} not after start_ms {start}")
    return TranscriptUtterance(speaker=speaker, text=text, start_ms=start, end_ms=end)


def load_transcript(path) -> Transcript:
    """Parse and validate one transcript file; the id defaults to the stem."""
    path = Path(path)
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise ExtractorError(f"{path}: transcript must be a JSON object")
    did = obj.get("id", path.stem)
    if not isinstance(did, str) or not did:
        raise ExtractorError(f"{path}: id must be a non-empty string")
    raw = obj.get("utterances")
    if not isinstance(raw, list) or not raw:
        raise ExtractorError(f"{path}: utterances must be a non-empty list")
    utts = tuple(
        _parse_utterance(u, f"{path}: utterance {i}") for i, u in enumerate(raw)
    )
    ad = obj.get("ad")
    if ad is not None:
        if isinstance(ad, bool) or (isinstance(ad, int) and ad in (0, 1)):
            ad = bool(ad)
        else:
            raise ExtractorError(f"{path}: ad must be 0/1/true/false or null, got {ad!r}")
    mmse = obj.get("mmse")
    if mmse is not None:
        if isinstance(mmse, bool) or not isinstance(mmse, int) or not 0 <= mmse <= MMSE_MAX:
            raise ExtractorError(f"{path}: mmse must be an integer in [0, {MMSE_MAX}] or null")
    return Transcript(id=did, utterances=utts, ad=ad, mmse=mmse)


def load_timestamps(path) -> list[tuple[int, int]]:
    """Parse a sidecar alignment file: a JSON list of {start_ms, end_ms}."""
    path = Path(path)
    obj = _load_json(path)
    if not isinstance(obj, list):
        raise ExtractorError(f"{path}: timestamps must be a JSON list")
    spans = []
    for i, entry in enumerate(obj):
        where = f"{path}: entry {i}"
        if not isinstance(entry, dict):
            raise ExtractorError(f"{where}: must be an object")
        start, end = entry.get("start_ms"), entry.get("end_ms")
        if not isinstance(start, int) or not isinstance(end, int) or start < 0 or end <= start:
            raise ExtractorError(f"{where}: needs integer start_ms < end_ms")
        spans.append((start, end))
    return spans


def apply_timestamps(transcript: Transcript, spans: list[tuple[int, int]]) -> Transcript:
    """Attach sidecar spans to a transcript; counts must match."""
    if len(spans) != len(transcript.utterances):
        raise ExtractorError(
            f"transcript {transcript.id}: {len(transcript.utterances)} utterances "
            f"but {len(spans)} timestamp entries"
        )
    utts = tuple(
        replace(u, start_ms=s, end_ms=e)
        for u, (s, e) in zip(transcript.utterances, spans)
    )
    return replace(transcript, utterances=utts)
