"""Command line entry point: transcripts plus audio in, feature files out.

    dlg-extract --audio-dir rec/ --transcripts txt/ \
        --features vggish,txl,pos,hc --out features/ \
        --vggish-ckpt vggish.pt --txl-dir models/txl --lexicon norms.csv

Every transcript <id>.json becomes a feature file <id>.dlg in the output
directory, next to a manifest.json the screening pipeline loads directly.
The feature list must name vggish plus exactly one textual slot (gpt,
roberta, txl or glove); pos and hc are optional extras.

Exit codes: 0 ok, 2 usage, 3 data or model-asset error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ExtractorError
from .filefmt import write_manifest
from .jobs import Backends, ExtractionJob, pos_dim, run_job
from .textemb import SLOT_DIMS, load_text_backend

log = logging.getLogger(__name__)

_TEXT_SLOTS = tuple(sorted(SLOT_DIMS))
_VALID_FEATURES = ("vggish",) + _TEXT_SLOTS + ("pos", "hc")

# which command line flag supplies each backend's assets
_SLOT_FLAGS = {
    "vggish": "--vggish-ckpt",
    "gpt": "--gpt-dir",
    "roberta": "--roberta-dir",
    "txl": "--txl-dir",
    "glove": "--glove",
    "hc": "--lexicon",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlg-extract",
        description="Extract screening feature files from dialogue audio and transcripts.",
    )
    parser.add_argument("--transcripts", required=True, type=Path,
                        help="directory of per-dialogue transcript JSON files")
    parser.add_argument("--audio-dir", type=Path,
                        help="directory of per-dialogue WAV files (<id>.wav)")
    parser.add_argument("--timestamps", type=Path,
                        help="directory of sidecar alignment files (<id>.json)")
    parser.add_argument("--features", required=True,
                        help="comma list: vggish plus one of "
                             f"{'/'.join(_TEXT_SLOTS)}, optionally pos and hc")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--vggish-ckpt", type=Path, help="acoustic embedder checkpoint")
    parser.add_argument("--gpt-dir", type=Path, help="local model dir for the gpt slot")
    parser.add_argument("--roberta-dir", type=Path, help="local model dir for the roberta slot")
    parser.add_argument("--txl-dir", type=Path, help="local model dir for the txl slot")
    parser.add_argument("--glove", type=Path, help="word-vector text file for the glove slot")
    parser.add_argument("--lexicon", type=Path, help="word-norm lexicon CSV for hc features")
    parser.add_argument("--hc-mask", type=Path,
                        help="feature-selection JSON whose kept_indices mask the hc vector")
    return parser


def _parse_features(parser: argparse.ArgumentParser, raw: str) -> tuple[str, ...]:
    features = tuple(dict.fromkeys(f.strip() for f in raw.split(",") if f.strip()))
    unknown = [f for f in features if f not in _VALID_FEATURES]
    if unknown:
        parser.error(f"unknown features {unknown}; valid: {', '.join(_VALID_FEATURES)}")
    text_slots = [f for f in features if f in _TEXT_SLOTS]
    if len(text_slots) != 1:
        parser.error(f"exactly one textual slot required, got {text_slots or 'none'}")
    if "vggish" not in features:
        parser.error("the feature files need an acoustic stream; include vggish")
    return features


def _require_flag(parser, args, feature: str):
    flag = _SLOT_FLAGS[feature]
    value = getattr(args, flag.lstrip("-").replace("-", "_"))
    if value is None:
        parser.error(f"feature {feature!r} needs {flag}")
    return value


def _load_hc_mask(path: Path) -> tuple[int, ...]:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExtractorError(f"cannot read hc mask {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ExtractorError(f"hc mask {path} is not valid JSON: {exc}") from None
    kept = obj.get("kept_indices")
    if not isinstance(kept, list) or not kept or not all(isinstance(i, int) for i in kept):
        raise ExtractorError(f"hc mask {path}: kept_indices must be a non-empty integer list")
    return tuple(kept)


def _discover_jobs(args, features: tuple[str, ...], out_dir: Path) -> list[ExtractionJob]:
    if not args.transcripts.is_dir():
        raise ExtractorError(f"transcript directory not found: {args.transcripts}")
    paths = sorted(args.transcripts.glob("*.json"))
    if not paths:
        raise ExtractorError(f"no transcript files in {args.transcripts}")
    jobs = []
    for path in paths:
        audio = None
        if "vggish" in features:
            audio = args.audio_dir / f"{path.stem}.wav"
            if not audio.is_file():
                raise ExtractorError(f"no audio for {path.stem}: expected {audio}")
        sidecar = None
        if args.timestamps is not None:
            candidate = args.timestamps / f"{path.stem}.json"
            if candidate.is_file():
                sidecar = candidate
        jobs.append(
            ExtractionJob(
                transcript_path=path,
                out_path=out_dir / f"{path.stem}.dlg",
                features=features,
                audio_path=audio,
                timestamps_path=sidecar,
            )
        )
    return jobs


def _load_backends(args, parser, features: tuple[str, ...]) -> tuple[Backends, str]:
    text_slot = next(f for f in features if f in _TEXT_SLOTS)
    textual = load_text_backend(text_slot, _require_flag(parser, args, text_slot))

    acoustic = None
    if "vggish" in features:
        # imported here so text-only runs never need torch
        from .vggish import EMBEDDING_DIM, VggishEmbedder

        acoustic = VggishEmbedder(_require_flag(parser, args, "vggish"))
        if acoustic.dim != EMBEDDING_DIM:
            raise ExtractorError(
                f"{args.vggish_ckpt}: checkpoint embeds {acoustic.dim} dims, "
                f"the vggish slot expects {EMBEDDING_DIM}"
            )

    lexicon = None
    if "hc" in features:
        from .hc import load_lexicon

        lexicon = load_lexicon(_require_flag(parser, args, "hc"))

    hc_mask = _load_hc_mask(args.hc_mask) if args.hc_mask is not None else None
    backends = Backends(textual=textual, acoustic=acoustic, lexicon=lexicon, hc_mask=hc_mask)
    return backends, text_slot


def _summarize(backends: Backends, n_dialogues: int, n_utterances: int) -> str:
    notes = []
    for attr, label in (
        ("empty_utterances", "empty-text fallbacks"),
        ("oov_utterances", "out-of-vocabulary fallbacks"),
    ):
        count = getattr(backends.textual, attr, 0)
        if count:
            notes.append(f"{count} {label}")
    padded = getattr(backends.acoustic, "padded_utterances", 0)
    if padded:
        notes.append(f"{padded} short utterances padded")
    suffix = f" ({', '.join(notes)})" if notes else ""
    return f"extracted {n_dialogues} dialogues, {n_utterances} utterances{suffix}"


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    features = _parse_features(parser, args.features)
    if "vggish" in features and args.audio_dir is None:
        parser.error("feature 'vggish' needs --audio-dir")

    try:
        out_dir = args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        backends, _ = _load_backends(args, parser, features)
        jobs = _discover_jobs(args, features, out_dir)

        files = []
        n_utterances = 0
        for job in jobs:
            path = run_job(job, backends)
            files.append(path.name)
            # one line per utterance after the header and HC lines
            n_utterances += len(path.read_text(encoding="utf-8").splitlines()) - 2

        hc_dim = 0
        if "hc" in features:
            from .hc import N_FEATURES

            hc_dim = len(backends.hc_mask) if backends.hc_mask else N_FEATURES
        write_manifest(
            out_dir,
            acoustic_dim=backends.acoustic.dim,
            textual_dim=backends.textual.dim,
            pos_dim=pos_dim(features),
            hc_dim=hc_dim,
            files=files,
        )
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    print(_summarize(backends, len(files), n_utterances))
    return 0


if __name__ == "__main__":
    sys.exit(main())
