"""Shared fixtures: toy model configs, random dialogues, a whole-network
finite-difference gradient checker."""

import numpy as np

from cogscreen import autodiff as ad
from cogscreen.datamodel import Dialogue, Speaker, Utterance
from cogscreen.network import ModelConfig, build_params, forward_dialogue


def toy_config(**overrides) -> ModelConfig:
    """Small architecture that keeps every structural feature of the full one."""
    base = dict(
        acoustic_dim=6,
        textual_dim=5,
        hc_dim=3,
        d_model=32,
        kernel=15,
        n_se_blocks=6,
        channel_schedule=(4, 8, 16, 32),
        stride=4,
        stride_every=2,
        se_reduction=4,
        lstm_layers=3,
        lstm_hidden=8,
        fc_reduction=4,
        dropout=0.2,
        modalities=("acoustic", "textual"),
        use_hc=True,
    )
    base.update(overrides)
    return ModelConfig(**base)


def micro_config(**overrides) -> ModelConfig:
    """Smallest config that still exercises every layer; for loop-heavy tests."""
    base = dict(
        acoustic_dim=4,
        textual_dim=3,
        hc_dim=2,
        d_model=16,
        kernel=15,
        n_se_blocks=6,
        channel_schedule=(2, 4, 8, 16),
        stride=4,
        stride_every=2,
        se_reduction=4,
        lstm_layers=2,
        lstm_hidden=4,
        fc_reduction=2,
        dropout=0.2,
        modalities=("acoustic", "textual"),
        use_hc=True,
    )
    base.update(overrides)
    return ModelConfig(**base)


def rand_utterance(rng, config: ModelConfig, speaker=None) -> Utterance:
    if speaker is None:
        speaker = Speaker.PARTICIPANT if rng.random() < 0.7 else Speaker.INVESTIGATOR
    return Utterance(
        speaker=speaker,
        acoustic=rng.normal(size=config.acoustic_dim),
        textual=rng.normal(size=config.textual_dim),
    )


def rand_dialogue(rng, config: ModelConfig, n_utts=3, did="d0", ad_label=True, mmse=20):
    utts = tuple(rand_utterance(rng, config) for _ in range(n_utts))
    return Dialogue(
        id=did,
        utterances=utts,
        hc=rng.normal(size=config.hc_dim),
        label_ad=ad_label,
        label_mmse=mmse,
    )


def network_fd_check(config, store, dialogue, rng, n_coords=130, h=1e-5, tol=1e-4):
    """Compare tape gradients of a mixed head loss against central differences
    on coordinates sampled from every parameter tensor. Returns the worst
    relative error seen."""
    mix = ad.constant(np.array([0.7, -0.3]))

    def loss_value() -> float:
        logits, mmse01 = forward_dialogue(dialogue, store, config, train=False)
        loss = ad.add(ad.sum_(ad.mul(logits, mix)), ad.scale(mmse01, 1.3))
        return loss

    store.zero_grad()
    loss = loss_value()
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in store.items()}

    names = store.names()
    per_tensor = max(1, -(-n_coords // len(names)))  # ceil division
    worst = 0.0
    checked = 0
    with ad.no_grad():
        for name in names:
            t = store[name]
            flat = t.data.reshape(-1)
            k = min(per_tensor, flat.size)
            for idx in rng.choice(flat.size, size=k, replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = float(loss_value().data)
                flat[idx] = orig - h
                down = float(loss_value().data)
                flat[idx] = orig
                numeric = (up - down) / (2 * h)
                got = analytic[name].reshape(-1)[idx]
                scale = max(abs(numeric), abs(got))
                # both near zero: difference is FD roundoff, compare absolutely
                err = abs(numeric - got) if scale < 1e-7 else abs(numeric - got) / scale
                worst = max(worst, err)
                checked += 1
                assert err < tol, (
                    f"gradient mismatch at {name}[{idx}]: "
                    f"analytic={got}, numeric={numeric}, rel_err={err}"
                )
    total = sum(t.data.size for t in store.tensors())
    assert checked >= min(n_coords, total)
    return worst, checked
