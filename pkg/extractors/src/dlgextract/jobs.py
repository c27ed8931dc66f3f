"""Per-dialogue extraction jobs.

An ExtractionJob names one dialogue's inputs (transcript, optional audio
and sidecar alignment) and which feature streams to compute.  Jobs are
independent of each other by construction: run them in separate processes
for parallelism, never in shared-state threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import ExtractorError
from .audio import read_wav
from .filefmt import FeatureDialogue, FeatureUtterance, write_feature_file
from .hc import extract_hc
from .pos import TAGSET, extract_pos
from .transcripts import Transcript, apply_timestamps, load_timestamps, load_transcript


@dataclass(frozen=True)
class ExtractionJob:
    transcript_path: Path
    out_path: Path
    features: tuple[str, ...]
    audio_path: Path | None = None
    timestamps_path: Path | None = None


@dataclass
class Backends:
    """Loaded models shared across jobs; read-only during extraction.

    `acoustic` is a waveform embedder, `textual` a text embedder; both are
    typed loosely so importing this module never drags in torch.
    """

    textual: Any
    acoustic: Any = None
    lexicon: dict | None = None
    hc_mask: tuple[int, ...] | None = None


def _utterance_waveform(
    waveform: np.ndarray, rate: int, utt, transcript_id: str, index: int
) -> np.ndarray:
    if utt.start_ms is None or utt.end_ms is None:
        raise ExtractorError(
            f"dialogue {transcript_id}: utterance {index} has no timestamps; "
            "acoustic extraction needs start_ms/end_ms or a sidecar file"
        )
    start = int(round(utt.start_ms * rate / 1000.0))
    end = int(round(utt.end_ms * rate / 1000.0))
    if start >= waveform.size:
        raise ExtractorError(
            f"dialogue {transcript_id}: utterance {index} starts at "
            f"{utt.start_ms} ms, beyond the end of the recording"
        )
    # spans may overrun the file by a rounding error's worth; clamp the end
    return waveform[start : min(end, waveform.size)]


def load_job_transcript(job: ExtractionJob) -> Transcript:
    transcript = load_transcript(job.transcript_path)
    if job.timestamps_path is not None:
        transcript = apply_timestamps(transcript, load_timestamps(job.timestamps_path))
    return transcript


def run_job(job: ExtractionJob, backends: Backends) -> Path:
    """Extract one dialogue and write its feature file; returns the path."""
    transcript = load_job_transcript(job)

    waveform, rate = None, 0
    if "vggish" in job.features:
        if job.audio_path is None:
            raise ExtractorError(f"dialogue {transcript.id}: no audio file for acoustic extraction")
        if backends.acoustic is None:
            raise ExtractorError("acoustic extraction requested without an acoustic backend")
        waveform, rate = read_wav(job.audio_path)

    utterances = []
    for i, utt in enumerate(transcript.utterances):
        if waveform is not None:
            segment = _utterance_waveform(waveform, rate, utt, transcript.id, i)
            acoustic = backends.acoustic.embed(segment, rate)
        else:
            acoustic = np.zeros(0)
        textual = backends.textual.embed(utt.text)
        pos = extract_pos(utt.text) if "pos" in job.features else None
        utterances.append(
            FeatureUtterance(speaker=utt.speaker, acoustic=acoustic, textual=textual, pos=pos)
        )

    if "hc" in job.features:
        if backends.lexicon is None:
            raise ExtractorError("hand-crafted features requested without a lexicon")
        hc = extract_hc(transcript.utterances, backends.lexicon, mask=backends.hc_mask)
    else:
        hc = np.zeros(0)

    dialogue = FeatureDialogue(
        id=transcript.id,
        utterances=utterances,
        hc=hc,
        ad=transcript.ad,
        mmse=transcript.mmse,
    )
    write_feature_file(dialogue, job.out_path)
    return job.out_path


def pos_dim(features: tuple[str, ...]) -> int:
    return len(TAGSET) if "pos" in features else 0
