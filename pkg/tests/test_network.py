"""Architecture geometry, forward contracts, whole-network gradient check."""

import numpy as np
import pytest

from cogscreen import autodiff as ad
from cogscreen.datamodel import DataError, Dialogue, Speaker, Utterance
from cogscreen.network import (
    CLASS_AD,
    ModelConfig,
    build_params,
    encode_dialogue,
    encode_utterance,
    forward_dialogue,
    load_model,
    predict,
    project_inputs,
    save_model,
)
from helpers import network_fd_check, rand_dialogue, rand_utterance, toy_config


# ---------------------------------------------------------------------------
# configuration geometry
# ---------------------------------------------------------------------------


def test_default_length_trace_is_1024_256_64_16():
    cfg = ModelConfig()
    trace = cfg.length_trace()
    assert trace[0] == 1024
    assert [trace[2], trace[4], trace[6]] == [256, 64, 16]
    assert trace == [1024, 1024, 256, 256, 64, 64, 16]


def test_toy_length_trace_is_32_8_2_1():
    trace = toy_config().length_trace()
    assert trace == [32, 32, 8, 8, 2, 2, 1]


def test_block_plan_strides_and_channel_growth():
    plan = ModelConfig().block_plan()
    assert [s for _, _, s in plan] == [1, 4, 1, 4, 1, 4]
    assert [(a, b) for a, b, _ in plan] == [
        (32, 32), (32, 128), (128, 128), (128, 512), (512, 512), (512, 1024),
    ]


def test_trunk_dims_with_and_without_hc():
    assert ModelConfig(hc_dim=23).trunk_dims() == (1047, 261, 65)
    assert ModelConfig(use_hc=False).trunk_dims() == (1024, 256, 64)


def test_input_channel_count():
    assert ModelConfig().input_channels() == 3
    assert ModelConfig(modalities=("acoustic",)).input_channels() == 2


def test_config_validation_rejects_bad_values():
    with pytest.raises(ValueError, match="dropout"):
        toy_config(dropout=1.0)
    with pytest.raises(ValueError, match="odd"):
        toy_config(kernel=14)
    with pytest.raises(ValueError, match="smaller than largest input dim"):
        toy_config(acoustic_dim=64)
    with pytest.raises(ValueError, match="channel_schedule"):
        toy_config(channel_schedule=(4, 8))
    with pytest.raises(ValueError, match="at least one"):
        toy_config(modalities=())
    with pytest.raises(ValueError, match="unknown modalities"):
        ModelConfig(modalities=("acoustic", "visual"))


def test_modalities_are_canonicalized():
    cfg = toy_config(modalities=("textual", "acoustic"))
    assert cfg.modalities == ("acoustic", "textual")


def test_config_json_round_trip():
    cfg = toy_config(use_pos=True, use_attention=False, modalities=("textual",))
    assert ModelConfig.from_json(cfg.to_json()) == cfg


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def test_full_size_parameter_shapes():
    cfg = ModelConfig()
    store = build_params(cfg, np.random.default_rng(0))
    assert store["proj_acoustic_w"].shape == (128, 1024)
    assert store["proj_textual_w"].shape == (768, 1024)
    assert store["speaker_embed"].shape == (2, 1024)
    assert store["stem_w"].shape == (32, 3, 15)
    assert store["se2_conv_b_w"].shape == (128, 32, 15)
    assert store["se6_conv_b_w"].shape == (1024, 512, 15)
    assert store["se5_w1"].shape == (512, 32)
    assert store["lstm1_fw_wx"].shape == (1024, 2048)
    assert store["lstm2_fw_wx"].shape == (1024, 2048)
    assert store["lstm1_fw_wh"].shape == (512, 2048)
    assert store["fc1_w"].shape == (1047, 261)
    assert store["fc2_w"].shape == (261, 65)
    assert store["cls_w"].shape == (65, 2)
    assert store["reg_w"].shape == (65, 1)


def test_unimodal_param_count_differs_only_in_projection_and_stem():
    rng = np.random.default_rng(1)
    bi = build_params(toy_config(), rng)
    uni = build_params(toy_config(modalities=("acoustic",)), rng)
    cfg = toy_config()
    proj = cfg.textual_dim * cfg.d_model + cfg.d_model
    stem_extra = cfg.channel_schedule[0] * cfg.kernel
    assert bi.n_params() - uni.n_params() == proj + stem_extra


def test_build_params_is_deterministic():
    a = build_params(toy_config(), np.random.default_rng(7))
    b = build_params(toy_config(), np.random.default_rng(7))
    assert a.names() == b.names()
    for name in a.names():
        np.testing.assert_array_equal(a[name].data, b[name].data)


def test_all_parameters_finite():
    store = build_params(toy_config(), np.random.default_rng(2))
    for t in store.tensors():
        assert np.isfinite(t.data).all()


# ---------------------------------------------------------------------------
# project_inputs
# ---------------------------------------------------------------------------


def test_projection_applied_even_when_dim_already_matches():
    cfg = toy_config(textual_dim=32)
    store = build_params(cfg, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    utt = rand_utterance(rng, cfg)
    streams = project_inputs(utt, store, cfg)
    assert streams["textual"].shape == (32,)
    assert not np.allclose(streams["textual"].data, utt.textual)


def test_inference_projection_is_exact_affine_map():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(5))
    rng = np.random.default_rng(6)
    utt = rand_utterance(rng, cfg)
    streams = project_inputs(utt, store, cfg, train=False)
    want = utt.acoustic @ store["proj_acoustic_w"].data + store["proj_acoustic_b"].data
    np.testing.assert_allclose(streams["acoustic"].data, want, rtol=0, atol=0)


def test_zero_input_projects_to_bias():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(7))
    utt = Utterance(Speaker.PARTICIPANT, np.zeros(cfg.acoustic_dim), np.zeros(cfg.textual_dim))
    streams = project_inputs(utt, store, cfg)
    np.testing.assert_array_equal(streams["acoustic"].data, store["proj_acoustic_b"].data)


def test_speaker_rows_differ_by_speaker():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(8))
    rng = np.random.default_rng(9)
    inv = project_inputs(rand_utterance(rng, cfg, Speaker.INVESTIGATOR), store, cfg)
    par = project_inputs(rand_utterance(rng, cfg, Speaker.PARTICIPANT), store, cfg)
    np.testing.assert_array_equal(inv["speaker"].data, store["speaker_embed"].data[0])
    np.testing.assert_array_equal(par["speaker"].data, store["speaker_embed"].data[1])


def test_dim_mismatch_raises():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(10))
    utt = Utterance(Speaker.PARTICIPANT, np.zeros(cfg.acoustic_dim + 1), np.zeros(cfg.textual_dim))
    with pytest.raises(DataError, match="acoustic feature dim"):
        project_inputs(utt, store, cfg)


def test_training_dropout_needs_rng():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(11))
    utt = rand_utterance(np.random.default_rng(12), cfg)
    with pytest.raises(ValueError, match="rng"):
        project_inputs(utt, store, cfg, rng=None, train=True)


# ---------------------------------------------------------------------------
# encode_utterance / encode_dialogue
# ---------------------------------------------------------------------------


def test_utterance_embedding_dim_equals_last_channel_count():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(13))
    rng = np.random.default_rng(14)
    emb = encode_utterance(project_inputs(rand_utterance(rng, cfg), store, cfg), store, cfg)
    assert emb.shape == (32,)
    assert np.isfinite(emb.data).all()


def test_attention_bypass_changes_output_but_keeps_shape():
    cfg_on = toy_config()
    cfg_off = toy_config(use_attention=False)
    store = build_params(cfg_on, np.random.default_rng(15))
    rng = np.random.default_rng(16)
    utt = rand_utterance(rng, cfg_on)
    on = encode_utterance(project_inputs(utt, store, cfg_on), store, cfg_on)
    off = encode_utterance(project_inputs(utt, store, cfg_off), store, cfg_off)
    assert on.shape == off.shape == (32,)
    assert not np.allclose(on.data, off.data)


def test_variable_dialogue_lengths_forward_and_backward():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(17))
    rng = np.random.default_rng(18)
    for t in (1, 2, 7, 200):
        d = rand_dialogue(rng, cfg, n_utts=t)
        store.zero_grad()
        logits, mmse01 = forward_dialogue(d, store, cfg, train=False)
        assert logits.shape == (2,)
        assert mmse01.shape == ()
        loss = ad.add(ad.sum_(logits), mmse01)
        loss.backward()
        assert np.isfinite(store["fc1_w"].grad).all()


def test_mmse01_strictly_inside_unit_interval():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(19))
    rng = np.random.default_rng(20)
    for _ in range(5):
        d = rand_dialogue(rng, cfg, n_utts=3)
        _, mmse01 = forward_dialogue(d, store, cfg)
        assert 0.0 < float(mmse01.data) < 1.0


def test_reversed_utterance_order_changes_logits():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(21))
    rng = np.random.default_rng(22)
    d = rand_dialogue(rng, cfg, n_utts=5)
    fwd, _ = forward_dialogue(d, store, cfg)
    rev, _ = forward_dialogue(d, store, cfg, utterances=tuple(reversed(d.utterances)))
    assert not np.array_equal(fwd.data, rev.data)

    single = rand_dialogue(rng, cfg, n_utts=1)
    a, _ = forward_dialogue(single, store, cfg)
    b, _ = forward_dialogue(single, store, cfg,
                            utterances=tuple(reversed(single.utterances)))
    np.testing.assert_array_equal(a.data, b.data)


def test_hc_required_when_configured():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(23))
    embs = ad.constant(np.zeros((2, 32)))
    with pytest.raises(ValueError, match="HC"):
        encode_dialogue(embs, None, store, cfg)
    with pytest.raises(DataError, match="HC dim"):
        encode_dialogue(embs, ad.constant(np.zeros(cfg.hc_dim + 2)), store, cfg)


def test_no_hc_configuration_runs():
    cfg = toy_config(use_hc=False)
    store = build_params(cfg, np.random.default_rng(24))
    rng = np.random.default_rng(25)
    d = rand_dialogue(rng, cfg, n_utts=2)
    logits, mmse01 = forward_dialogue(d, store, cfg)
    assert logits.shape == (2,)


def test_unimodal_and_bimodal_share_code_path():
    rng = np.random.default_rng(26)
    for mods in (("acoustic",), ("textual",), ("acoustic", "textual")):
        cfg = toy_config(modalities=mods)
        store = build_params(cfg, np.random.default_rng(27))
        d = rand_dialogue(rng, cfg, n_utts=2)
        logits, _ = forward_dialogue(d, store, cfg)
        assert logits.shape == (2,)


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def test_zeroed_heads_give_chance_prediction():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(28))
    for name in ("cls_w", "cls_b", "reg_w", "reg_b"):
        store[name].data[...] = 0.0
    d = rand_dialogue(np.random.default_rng(29), cfg, n_utts=3)
    p_ad, mmse = predict(d, store, cfg)
    assert p_ad == pytest.approx(0.5, abs=1e-12)
    assert mmse == pytest.approx(15.0, abs=1e-9)


def test_class_probabilities_sum_to_one():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(30))
    rng = np.random.default_rng(31)
    d = rand_dialogue(rng, cfg, n_utts=4)
    logits, _ = forward_dialogue(d, store, cfg)
    probs = ad.softmax(logits, axis=-1).data
    assert abs(probs.sum() - 1.0) < 1e-12
    p_ad, _ = predict(d, store, cfg)
    assert p_ad == pytest.approx(probs[CLASS_AD], abs=1e-12)


def test_single_utterance_dialogue_predicts():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(32))
    d = rand_dialogue(np.random.default_rng(33), cfg, n_utts=1)
    p_ad, mmse = predict(d, store, cfg)
    assert 0.0 < p_ad < 1.0
    assert 0.0 < mmse < 30.0


def test_prediction_is_deterministic():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(34))
    d = rand_dialogue(np.random.default_rng(35), cfg, n_utts=3)
    assert predict(d, store, cfg) == predict(d, store, cfg)


# ---------------------------------------------------------------------------
# whole-network gradient check
# ---------------------------------------------------------------------------


def test_end_to_end_gradients_match_finite_differences():
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(36))
    d = rand_dialogue(np.random.default_rng(37), cfg, n_utts=3)
    worst, checked = network_fd_check(cfg, store, d, np.random.default_rng(38),
                                      n_coords=130, tol=1e-4)
    assert worst < 1e-4
    assert checked >= 130


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def test_save_load_round_trip_preserves_predictions(tmp_path):
    from cogscreen.datamodel import NormStats

    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(39))
    d = rand_dialogue(np.random.default_rng(40), cfg, n_utts=3)
    before = predict(d, store, cfg)
    stats = NormStats(
        acoustic_mean=np.zeros(6), acoustic_std=np.ones(6),
        textual_mean=np.zeros(5), textual_std=np.ones(5),
        hc_mean=np.zeros(3), hc_std=np.ones(3),
    )
    path = tmp_path / "model.ckpt"
    save_model(path, store, cfg, norm_stats=stats, hc_mask=[0, 2, 4])
    store2, cfg2, stats2, mask2 = load_model(path)
    assert cfg2 == cfg
    assert mask2 == [0, 2, 4]
    np.testing.assert_array_equal(stats2.acoustic_std, np.ones(6))
    assert predict(d, store2, cfg2) == before


def test_load_model_requires_sidecar(tmp_path):
    cfg = toy_config()
    store = build_params(cfg, np.random.default_rng(41))
    path = tmp_path / "model.ckpt"
    ad.save_checkpoint(path, store)
    with pytest.raises(DataError, match="sidecar"):
        load_model(path)
