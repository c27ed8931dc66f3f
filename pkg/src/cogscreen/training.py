"""Joint-loss training with windowed batching and cross-validation.

Each optimization step draws a batch of dialogues, samples one window length
U uniformly from [min(5, m), m] (m being the shortest dialogue in the batch),
takes a contiguous random-offset window of U utterances from every dialogue,
and minimizes the batch mean of

    -log softmax(logits)[true class]  +  (mmse01_pred - mmse01_true)^2

with bias-corrected Adam (lr 0.0002, beta1 0.5, beta2 0.9 by default).
Validation runs on whole dialogues; the parameters of the epoch with the
lowest validation total loss are returned. A NaN loss aborts the run and
hands back the best checkpoint seen so far.

Cross-validation splits n dialogues into folds of size ceil(n/k) with the
remainder in the last fold (stratified by class label when every dialogue is
labeled), fits hand-crafted feature selection and normalization statistics on
each training split, and trains one model per fold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .datamodel import (
    DataError,
    Dialogue,
    MMSE_MAX,
    NormStats,
    compute_norm_stats,
    feature_matrix_from_dialogues,
    normalize,
)
from .feature_select import SelectionResult, select_features
from .network import CLASS_AD, CLASS_NON_AD, ModelConfig, build_params, forward_dialogue
from .rng import substream

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingDiverged",
    "EpochLog",
    "TrainResult",
    "FoldOutcome",
    "joint_loss",
    "sample_window",
    "take_window",
    "adam_step",
    "kfold_split",
    "fold_sizes",
    "train",
    "prepare_fold",
    "cross_validate",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8
    batch_size: int = 4
    epochs: int = 300
    min_window: int = 5
    seed: int = 0
    folds: int = 5
    select_alpha: float = 0.05

    def __post_init__(self):
        # lr = 0 is allowed so a no-op optimizer stays testable
        if self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")
        if self.min_window < 1:
            raise ValueError(f"min_window must be >= 1, got {self.min_window}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.folds < 2:
            raise ValueError("batch_size >= 1, epochs >= 0, folds >= 2 required")

    def to_json(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "epsilon": self.epsilon, "batch_size": self.batch_size,
            "epochs": self.epochs, "min_window": self.min_window,
            "seed": self.seed, "folds": self.folds,
            "select_alpha": self.select_alpha,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite."""


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def joint_loss(logits: Tensor, label_ad: bool, mmse01_pred: Tensor, mmse01_true: float) -> Tensor:
    """Cross-entropy on the true class plus squared MMSE error, unweighted."""
    if not 0.0 <= mmse01_true <= 1.0:
        raise ValueError(f"mmse01_true must be in [0, 1], got {mmse01_true}")
    probs = ad.softmax(logits, axis=-1)
    true_class = CLASS_AD if label_ad else CLASS_NON_AD
    bce = ad.scale(ad.log(probs[true_class], floor=1e-12), -1.0)
    diff = ad.sub(mmse01_pred, ad.constant(np.float64(mmse01_true)))
    return ad.add(bce, ad.mul(diff, diff))


# ---------------------------------------------------------------------------
# windowed batching
# ---------------------------------------------------------------------------


def sample_window(batch: Sequence[Dialogue], rng: np.random.Generator,
                  min_window: int = 5) -> int:
    """Window length U, uniform over [min(min_window, m), m] where m is the
    shortest dialogue in the batch."""
    if not batch:
        raise ValueError("empty batch")
    m = min(len(d) for d in batch)
    lo = min(min_window, m)
    return int(rng.integers(lo, m + 1))


def take_window(dialogue: Dialogue, u_len: int, rng: np.random.Generator):
    """Contiguous window of u_len utterances at a uniformly random offset."""
    n = len(dialogue)
    if not 1 <= u_len <= n:
        raise ValueError(f"window {u_len} invalid for dialogue of length {n}")
    start = int(rng.integers(0, n - u_len + 1))
    return dialogue.utterances[start : start + u_len]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_store(cls, store: ParamStore) -> "AdamState":
        return cls(
            m={name: np.zeros_like(t.data) for name, t in store.items()},
            v={name: np.zeros_like(t.data) for name, t in store.items()},
        )


def adam_step(store: ParamStore, state: AdamState, cfg: TrainConfig) -> None:
    """In-place bias-corrected Adam update; missing grads are treated as zero."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name, tensor in store.items():
        g = tensor.grad
        if g is None:
            g = np.zeros_like(tensor.data)
        elif not np.isfinite(g).all():
            raise TrainingDiverged(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        tensor.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


# ---------------------------------------------------------------------------
# cross-validation splitting
# ---------------------------------------------------------------------------


def fold_sizes(n: int, k: int) -> list[int]:
    """First k-1 folds take ceil(n/k) items and the last takes the rest;
    when that starves the last fold, fall back to floor sizes with the
    remainder appended to the last fold."""
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} items")
    q = -(-n // k)
    last = n - (k - 1) * q
    if last >= 1:
        return [q] * (k - 1) + [last]
    base = n // k
    return [base] * (k - 1) + [base + n % k]


def kfold_split(dialogues: Sequence[Dialogue], folds: int = 5, seed: int = 0):
    """Disjoint covering (train, val) splits; stratified by the dementia
    label when every dialogue carries one."""
    n = len(dialogues)
    sizes = fold_sizes(n, folds)
    rng = substream(seed, "kfold")
    if all(d.label_ad is not None for d in dialogues):
        order = _stratified_order(dialogues, sizes, rng)
    else:
        order = list(rng.permutation(n))
    splits = []
    used = 0
    for size in sizes:
        val_idx = set(order[used : used + size])
        used += size
        val = [dialogues[i] for i in order if i in val_idx]
        tr = [dialogues[i] for i in order if i not in val_idx]
        splits.append((tr, val))
    return splits


def _stratified_order(dialogues, sizes, rng) -> list[int]:
    """Index order such that consecutive size-chunks hold class counts set by
    largest-remainder quotas."""
    pos = [i for i, d in enumerate(dialogues) if d.label_ad]
    neg = [i for i, d in enumerate(dialogues) if not d.label_ad]
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    n = len(dialogues)
    quotas = [s * len(pos) / n for s in sizes]
    alloc = [math.floor(q) for q in quotas]
    short = len(pos) - sum(alloc)
    by_remainder = sorted(range(len(sizes)), key=lambda i: quotas[i] - alloc[i],
                          reverse=True)
    for i in by_remainder:
        if short == 0:
            break
        if alloc[i] < sizes[i]:
            alloc[i] += 1
            short -= 1
    # guard against folds overfilled with one class
    for i, size in enumerate(sizes):
        alloc[i] = min(alloc[i], size)
    deficit = len(pos) - sum(alloc)
    if deficit:
        for i, size in enumerate(sizes):
            room = size - alloc[i]
            take = min(room, deficit)
            alloc[i] += take
            deficit -= take
    order = []
    p = q = 0
    for i, size in enumerate(sizes):
        take_pos = alloc[i]
        take_neg = size - take_pos
        order.extend(pos[p : p + take_pos])
        order.extend(neg[q : q + take_neg])
        p += take_pos
        q += take_neg
    return order


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_rmse: float

    def line(self) -> str:
        return (
            f"epoch {self.epoch:04d} train_loss {self.train_loss:.6f} "
            f"val_loss {self.val_loss:.6f} val_acc {self.val_accuracy:.4f} "
            f"val_rmse {self.val_rmse:.4f}"
        )

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch, "train_loss": self.train_loss,
            "val_loss": self.val_loss, "val_accuracy": self.val_accuracy,
            "val_rmse": self.val_rmse,
        }


@dataclass
class TrainResult:
    store: ParamStore
    best_epoch: int
    log: list[EpochLog]
    diverged: bool = False


def _require_labels(dialogues: Sequence[Dialogue]) -> None:
    for d in dialogues:
        if d.label_ad is None or d.label_mmse is None:
            raise DataError(f"dialogue {d.id!r} lacks training labels")


def _evaluate_split(dialogues, store, config) -> tuple[float, float, float]:
    """(mean joint loss, accuracy, rmse) over whole dialogues, dropout off."""
    losses = []
    correct = 0
    sq = 0.0
    with ad.no_grad():
        for d in dialogues:
            logits, mmse01 = forward_dialogue(d, store, config, train=False)
            loss = joint_loss(logits, d.label_ad, mmse01, d.label_mmse / MMSE_MAX)
            losses.append(float(loss.data))
            p = ad.softmax(logits, axis=-1).data[CLASS_AD]
            if (p >= 0.5) == d.label_ad:
                correct += 1
            sq += (float(mmse01.data) * MMSE_MAX - d.label_mmse) ** 2
    n = len(dialogues)
    return float(np.mean(losses)), correct / n, math.sqrt(sq / n)


def train(
    train_dialogues: Sequence[Dialogue],
    val_dialogues: Sequence[Dialogue],
    model_config: ModelConfig,
    train_config: TrainConfig,
    log_fn: Callable[[str], None] | None = None,
) -> TrainResult:
    """Optimize a fresh model; returns the best-validation-loss parameters.

    Inputs are assumed normalized and feature-selected (see prepare_fold).
    """
    _require_labels(train_dialogues)
    _require_labels(val_dialogues)
    if not train_dialogues:
        raise DataError("no training dialogues")

    store = build_params(model_config, substream(train_config.seed, "init"))
    state = AdamState.for_store(store)
    rng_batch = substream(train_config.seed, "batches")
    rng_drop = substream(train_config.seed, "dropout")

    best_state: dict[str, np.ndarray] | None = None
    best_loss = math.inf
    best_epoch = 0
    logs: list[EpochLog] = []
    diverged = False

    n = len(train_dialogues)
    for epoch in range(1, train_config.epochs + 1):
        order = rng_batch.permutation(n)
        batch_losses = []
        for at in range(0, n, train_config.batch_size):
            batch = [train_dialogues[i] for i in order[at : at + train_config.batch_size]]
            u_len = sample_window(batch, rng_batch, train_config.min_window)
            member_losses = []
            for d in batch:
                window = take_window(d, u_len, rng_batch)
                logits, mmse01 = forward_dialogue(
                    d, store, model_config, rng_drop, train=True, utterances=window
                )
                member_losses.append(
                    joint_loss(logits, d.label_ad, mmse01, d.label_mmse / MMSE_MAX)
                )
            batch_loss = ad.mean(ad.stack(member_losses, axis=0))
            if not np.isfinite(batch_loss.data):
                diverged = True
                break
            store.zero_grad()
            batch_loss.backward()
            try:
                adam_step(store, state, train_config)
            except TrainingDiverged:
                diverged = True
                break
            batch_losses.append(float(batch_loss.data))
        if diverged:
            break

        train_loss = float(np.mean(batch_losses)) if batch_losses else math.nan
        if val_dialogues:
            val_loss, val_acc, val_rmse = _evaluate_split(val_dialogues, store, model_config)
        else:
            val_loss = val_acc = val_rmse = math.nan
        entry = EpochLog(epoch, train_loss, val_loss, val_acc, val_rmse)
        logs.append(entry)
        if log_fn is not None:
            log_fn(entry.line())
        if val_dialogues and val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_state = store.state()

    if best_state is not None:
        store.load_state(best_state)
    elif logs:
        best_epoch = logs[-1].epoch
    return TrainResult(store=store, best_epoch=best_epoch, log=logs, diverged=diverged)


# ---------------------------------------------------------------------------
# per-fold preprocessing and cross-validation
# ---------------------------------------------------------------------------


@dataclass
class PreparedFold:
    train: list[Dialogue]
    val: list[Dialogue]
    config: ModelConfig
    norm_stats: NormStats
    hc_mask: list[int] | None
    selection: SelectionResult | None


def _mask_hc(dialogues: Sequence[Dialogue], mask: Sequence[int]) -> list[Dialogue]:
    idx = np.asarray(mask, dtype=int)
    return [replace(d, hc=np.asarray(d.hc)[idx]) for d in dialogues]


def prepare_fold(
    train_split: Sequence[Dialogue],
    val_split: Sequence[Dialogue],
    model_config: ModelConfig,
    alpha: float = 0.05,
    hc_mask: Sequence[int] | None = None,
) -> PreparedFold:
    """Fit hand-crafted feature screening and normalization on the training
    split, apply both everywhere, and adjust the model config."""
    selection = None
    mask: list[int] | None = None
    train_split = list(train_split)
    val_split = list(val_split)
    cfg = model_config
    if model_config.use_hc:
        if hc_mask is not None:
            mask = [int(i) for i in hc_mask]
        else:
            fm = feature_matrix_from_dialogues(train_split, stream="hc")
            selection = select_features(fm, fm.labels, alpha)
            mask = selection.kept_indices
            if not mask:
                # keep the single most discriminative column rather than
                # silently dropping the whole stream
                mask = [int(np.argmin(selection.p_values))]
        train_split = _mask_hc(train_split, mask)
        val_split = _mask_hc(val_split, mask)
        cfg = replace(model_config, hc_dim=len(mask))
    stats = compute_norm_stats(train_split)
    return PreparedFold(
        train=normalize(train_split, stats),
        val=normalize(val_split, stats),
        config=cfg,
        norm_stats=stats,
        hc_mask=mask,
        selection=selection,
    )


@dataclass
class FoldOutcome:
    fold: int
    result: TrainResult
    prepared: PreparedFold
    val_ids: list[str] = field(default_factory=list)


def cross_validate(
    dialogues: Sequence[Dialogue],
    model_config: ModelConfig,
    train_config: TrainConfig,
    fold_assignments: dict[str, int] | None = None,
    hc_mask: Sequence[int] | None = None,
    log_fn: Callable[[str], None] | None = None,
) -> list[FoldOutcome]:
    """Train one model per fold. Folds come from `fold_assignments` (id ->
    fold index) when given, else from a stratified split."""
    _require_labels(dialogues)
    if fold_assignments is not None:
        indices = sorted(set(fold_assignments.values()))
        if indices != list(range(len(indices))) or len(indices) < 2:
            raise DataError(f"fold assignments must cover 0..k-1, got {indices}")
        splits = []
        for f in indices:
            val = [d for d in dialogues if fold_assignments[d.id] == f]
            tr = [d for d in dialogues if fold_assignments[d.id] != f]
            if not val or not tr:
                raise DataError(f"fold {f} leaves an empty train or val split")
            splits.append((tr, val))
    else:
        splits = kfold_split(dialogues, train_config.folds, train_config.seed)

    outcomes = []
    for f, (tr, val) in enumerate(splits):
        prepared = prepare_fold(tr, val, model_config,
                                alpha=train_config.select_alpha, hc_mask=hc_mask)
        fold_tc = replace_seed(train_config, substream_seed(train_config.seed, f))
        if log_fn is not None:
            log_fn(f"fold {f} train {len(tr)} val {len(val)}")
        result = train(prepared.train, prepared.val, prepared.config, fold_tc,
                       log_fn=(lambda line, f=f: log_fn(f"fold {f} {line}"))
                       if log_fn else None)
        outcomes.append(FoldOutcome(fold=f, result=result, prepared=prepared,
                                    val_ids=[d.id for d in val]))
    return outcomes


def substream_seed(seed: int, fold: int) -> int:
    """Fold-local integer seed derived from the master seed."""
    return int(substream(seed, "fold", fold).integers(0, 2**63 - 1))


def replace_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(**{**cfg.to_json(), "seed": seed})
