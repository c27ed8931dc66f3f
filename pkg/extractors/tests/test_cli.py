"""End-to-end command line runs on the fixture corpus."""

import hashlib
import json

import numpy as np
import pytest
import torch

from dlgextract.cli import main


def _args(corpus, out_dir, features, **extra):
    argv = [
        "--transcripts", str(corpus["transcripts"]),
        "--audio-dir", str(corpus["audio"]),
        "--timestamps", str(corpus["timestamps"]),
        "--features", features,
        "--out", str(out_dir),
    ]
    for flag, value in extra.items():
        argv += [f"--{flag.replace('_', '-')}", str(value)]
    return argv


def _digest(directory):
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(directory.iterdir())
    }


def test_full_run_with_glove(corpus, tmp_path, vggish_ckpt, glove_file, lexicon_file, capsys):
    out = tmp_path / "out"
    rc = main(_args(corpus, out, "vggish,glove,pos,hc",
                    vggish_ckpt=vggish_ckpt, glove=glove_file, lexicon=lexicon_file))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["acoustic_dim"] == 128
    assert manifest["textual_dim"] == 300
    assert manifest["pos_dim"] == 12
    assert manifest["hc_dim"] == 42
    assert manifest["dialogues"] == ["d01.dlg", "d02.dlg", "d03.dlg"]
    assert "extracted 3 dialogues, 7 utterances" in capsys.readouterr().out
    header = (out / "d01.dlg").read_text(encoding="utf-8").splitlines()[0]
    assert header == "DLG v1 id=d01 ad=1 mmse=14"
    unlabeled = (out / "d03.dlg").read_text(encoding="utf-8").splitlines()[0]
    assert unlabeled == "DLG v1 id=d03 ad=? mmse=?"


def test_transformer_slot_sets_textual_dim(corpus, tmp_path, vggish_ckpt, lm_1024, lexicon_file):
    out = tmp_path / "out"
    rc = main(_args(corpus, out, "vggish,txl",
                    vggish_ckpt=vggish_ckpt, txl_dir=lm_1024))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["textual_dim"] == 1024
    assert manifest["pos_dim"] == 0
    assert manifest["hc_dim"] == 0
    # no pos requested: files carry no P section
    assert " P " not in (out / "d01.dlg").read_text(encoding="utf-8")


def test_runs_are_deterministic(corpus, tmp_path, vggish_ckpt, glove_file, lexicon_file):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = main(_args(corpus, out, "vggish,glove,pos,hc",
                        vggish_ckpt=vggish_ckpt, glove=glove_file, lexicon=lexicon_file))
        assert rc == 0
    assert _digest(a) == _digest(b)


def test_hc_mask_narrows_the_vector(corpus, tmp_path, vggish_ckpt, glove_file, lexicon_file):
    mask = tmp_path / "selection.json"
    kept = sorted(np.random.default_rng(3).choice(42, size=23, replace=False).tolist())
    mask.write_text(json.dumps({"kept_indices": kept}), encoding="utf-8")
    out = tmp_path / "out"
    rc = main(_args(corpus, out, "vggish,glove,hc",
                    vggish_ckpt=vggish_ckpt, glove=glove_file, lexicon=lexicon_file,
                    hc_mask=mask))
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["hc_dim"] == 23
    hc_line = (out / "d01.dlg").read_text(encoding="utf-8").splitlines()[1]
    assert hc_line.startswith("HC 23 ")


@pytest.mark.parametrize(
    "features",
    ["vggish", "vggish,glove,gpt", "vggish,nonsense,glove", "glove,pos"],
)
def test_bad_feature_lists_are_usage_errors(corpus, tmp_path, vggish_ckpt, glove_file, features):
    with pytest.raises(SystemExit) as exc:
        main(_args(corpus, tmp_path / "out", features,
                   vggish_ckpt=vggish_ckpt, glove=glove_file))
    assert exc.value.code == 2


def test_missing_asset_flag_is_a_usage_error(corpus, tmp_path, vggish_ckpt, glove_file):
    with pytest.raises(SystemExit) as exc:
        main(_args(corpus, tmp_path / "out", "vggish,glove,hc",
                   vggish_ckpt=vggish_ckpt, glove=glove_file))
    assert exc.value.code == 2


def test_vggish_needs_audio_dir(corpus, tmp_path, vggish_ckpt, glove_file):
    argv = [
        "--transcripts", str(corpus["transcripts"]),
        "--features", "vggish,glove",
        "--out", str(tmp_path / "out"),
        "--vggish-ckpt", str(vggish_ckpt),
        "--glove", str(glove_file),
    ]
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_missing_transcript_dir_is_a_data_error(corpus, tmp_path, vggish_ckpt, glove_file):
    argv = _args(corpus, tmp_path / "out", "vggish,glove",
                 vggish_ckpt=vggish_ckpt, glove=glove_file)
    argv[argv.index("--transcripts") + 1] = str(tmp_path / "nowhere")
    assert main(argv) == 3


def test_empty_transcript_dir_is_a_data_error(corpus, tmp_path, vggish_ckpt, glove_file):
    empty = tmp_path / "empty"
    empty.mkdir()
    argv = _args(corpus, tmp_path / "out", "vggish,glove",
                 vggish_ckpt=vggish_ckpt, glove=glove_file)
    argv[argv.index("--transcripts") + 1] = str(empty)
    assert main(argv) == 3


def test_missing_audio_file_is_a_data_error(corpus, tmp_path, vggish_ckpt, glove_file):
    argv = _args(corpus, tmp_path / "out", "vggish,glove",
                 vggish_ckpt=vggish_ckpt, glove=glove_file)
    argv[argv.index("--audio-dir") + 1] = str(tmp_path)
    assert main(argv) == 3


def test_missing_timestamps_are_a_data_error(corpus, tmp_path, vggish_ckpt, glove_file):
    # d03 has no inline times; without the sidecar dir, slicing cannot work
    argv = [
        "--transcripts", str(corpus["transcripts"]),
        "--audio-dir", str(corpus["audio"]),
        "--features", "vggish,glove",
        "--out", str(tmp_path / "out"),
        "--vggish-ckpt", str(vggish_ckpt),
        "--glove", str(glove_file),
    ]
    assert main(argv) == 3


def test_missing_model_assets_are_data_errors(corpus, tmp_path, vggish_ckpt, glove_file):
    argv = _args(corpus, tmp_path / "out", "vggish,glove",
                 vggish_ckpt=vggish_ckpt, glove=tmp_path / "missing.txt")
    assert main(argv) == 3
    argv = _args(corpus, tmp_path / "out", "vggish,gpt",
                 vggish_ckpt=vggish_ckpt, gpt_dir=tmp_path / "missing")
    assert main(argv) == 3


def test_wrong_width_checkpoint_is_a_data_error(corpus, tmp_path, glove_file):
    from dlgextract.vggish import build_network, save_checkpoint

    torch.manual_seed(1)
    ckpt = tmp_path / "narrow.pt"
    save_checkpoint(build_network((2, 2, 2, 2, 2, 2), (8, 8, 32)), ckpt)
    argv = _args(corpus, tmp_path / "out", "vggish,glove",
                 vggish_ckpt=ckpt, glove=glove_file)
    assert main(argv) == 3
