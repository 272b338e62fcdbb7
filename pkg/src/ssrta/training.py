"""Optimization loop: batching, teacher-forced epochs, early stopping."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .model import (
    ModelConfig,
    ModelError,
    SSRTA,
    disparity_metric,
    disparity_surrogate,
    joint_loss,
    loss_accuracy,
    loss_translation,
)
from .prepare import EncodedTicket
from .tickets import CorpusError
from .vocab import PAD

log = logging.getLogger(__name__)

OPTIMIZER_ADAM = "adam"
OPTIMIZER_SGD_MOMENTUM = "sgd_momentum"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 3e-3
    optimizer: str = OPTIMIZER_ADAM
    grad_clip_norm: float = 5.0
    early_stop_patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in (OPTIMIZER_ADAM, OPTIMIZER_SGD_MOMENTUM):
            raise ValueError(f"unknown optimizer '{self.optimizer}'")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie strictly between 0 and 1")
        if self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class TrainState:
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    history: list[dict] = field(default_factory=list)


@dataclass
class Batch:
    description: torch.Tensor     # (B, L) long, right-padded with PAD
    lengths: torch.Tensor         # (B,) long
    resolution: torch.Tensor      # (B, L') long, right-padded with PAD
    expert: torch.Tensor          # (B,) long


def collate(tickets: list[EncodedTicket]) -> Batch:
    max_d = max(len(t.description) for t in tickets)
    max_r = max(len(t.resolution) for t in tickets)
    desc = torch.full((len(tickets), max_d), PAD, dtype=torch.long)
    res = torch.full((len(tickets), max_r), PAD, dtype=torch.long)
    for i, t in enumerate(tickets):
        desc[i, : len(t.description)] = torch.tensor(t.description, dtype=torch.long)
        res[i, : len(t.resolution)] = torch.tensor(t.resolution, dtype=torch.long)
    return Batch(
        description=desc,
        lengths=torch.tensor([len(t.description) for t in tickets], dtype=torch.long),
        resolution=res,
        expert=torch.tensor([t.expert_index for t in tickets], dtype=torch.long),
    )


def make_batches(
    tickets: list[EncodedTicket], batch_size: int, seed: int, epoch: int
) -> list[Batch]:
    """Length-bucketed batches in an order derived from (seed, epoch)."""
    if not tickets:
        raise CorpusError("cannot batch an empty split")
    ordered = sorted(tickets, key=lambda t: (len(t.description), t.id))
    chunks = [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]
    random.Random(f"batches:{seed}:{epoch}").shuffle(chunks)
    return [collate(chunk) for chunk in chunks]


def split_corpus(
    tickets: list[EncodedTicket], val_fraction: float, seed: int
) -> tuple[list[EncodedTicket], list[EncodedTicket]]:
    shuffled = list(tickets)
    random.Random(f"split:{seed}").shuffle(shuffled)
    n_val = round(len(shuffled) * val_fraction)
    if n_val == 0 or n_val == len(shuffled):
        raise CorpusError(
            f"val_fraction {val_fraction} leaves an empty split for {len(shuffled)} tickets"
        )
    return shuffled[n_val:], shuffled[:n_val]


def batch_losses(model: SSRTA, batch: Batch) -> dict[str, torch.Tensor]:
    """Per-ticket loss terms for one batch (teacher forcing, unmasked traces)."""
    enc = model.encode(batch.description, batch.lengths)
    logits = model.decode_teacher(enc.final, batch.resolution)
    translation = loss_translation(logits, batch.resolution)
    traces = model.recommend(enc, mask_repeats=False)
    step_probs = torch.stack([t.step_probs for t in traces])
    accuracy = loss_accuracy(step_probs, batch.expert)
    surrogate = disparity_surrogate(step_probs)
    disparity = torch.tensor(
        [float(disparity_metric(t.experts)) for t in traces], dtype=torch.float64
    )
    return {
        "translation": translation,
        "accuracy": accuracy,
        "surrogate": surrogate,
        "disparity": disparity,
        "joint": joint_loss(translation, accuracy, surrogate, model.config),
    }


def _check_gradients(model: SSRTA) -> None:
    for name, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise ModelError(f"non-finite gradient in parameter '{name}'")


def train_epoch(
    model: SSRTA, batches: list[Batch], train_config: TrainConfig, optimizer
) -> dict[str, float]:
    """One optimizer pass over the batches; returns ticket-weighted mean stats."""
    totals = {"translation": 0.0, "accuracy": 0.0, "surrogate": 0.0, "disparity": 0.0, "joint": 0.0}
    count = 0
    for batch_idx, batch in enumerate(batches):
        losses = batch_losses(model, batch)
        loss = losses["joint"].mean()
        if not torch.isfinite(loss):
            raise ModelError(f"non-finite loss in batch {batch_idx}")
        optimizer.zero_grad()
        loss.backward()
        _check_gradients(model)
        torch.nn.utils.clip_grad_norm_(model.parameters(), train_config.grad_clip_norm)
        optimizer.step()
        n = batch.expert.shape[0]
        count += n
        for key in totals:
            totals[key] += float(losses[key].detach().sum())
    model.audit_finite()
    return {key: value / count for key, value in totals.items()}


def _validate(model: SSRTA, tickets: list[EncodedTicket], batch_size: int) -> dict[str, float]:
    totals = {"translation": 0.0, "accuracy": 0.0, "surrogate": 0.0, "disparity": 0.0, "joint": 0.0}
    hits_at_1 = 0
    count = 0
    with torch.no_grad():
        for batch in make_batches(tickets, batch_size, seed=0, epoch=0):
            losses = batch_losses(model, batch)
            n = batch.expert.shape[0]
            count += n
            for key in totals:
                totals[key] += float(losses[key].sum())
            enc = model.encode(batch.description, batch.lengths)
            for trace, label in zip(model.recommend(enc, mask_repeats=True), batch.expert):
                hits_at_1 += int(trace.experts[0] == int(label))
    stats = {key: value / count for key, value in totals.items()}
    stats["rr_at_1"] = hits_at_1 / count
    return stats


def _make_optimizer(model: SSRTA, config: TrainConfig):
    if config.optimizer == OPTIMIZER_ADAM:
        return torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    return torch.optim.SGD(model.parameters(), lr=config.learning_rate, momentum=0.9)


def fit(
    tickets: list[EncodedTicket],
    model_config: ModelConfig,
    train_config: TrainConfig,
    metrics_log_path: str | Path | None = None,
) -> tuple[SSRTA, TrainState]:
    """Train with early stopping on validation joint loss; returns the model
    restored to its best-validation parameters."""
    torch.manual_seed(model_config.seed)
    train_split, val_split = split_corpus(tickets, train_config.val_fraction, train_config.seed)
    model = SSRTA(model_config)
    model.audit_shapes()
    optimizer = _make_optimizer(model, train_config)
    state = TrainState()
    best_params = copy.deepcopy(model.state_dict())

    log_fh = None
    if metrics_log_path is not None:
        log_fh = Path(metrics_log_path).open("a", encoding="utf-8")
    try:
        for epoch in range(1, train_config.epochs + 1):
            started = time.perf_counter()
            batches = make_batches(
                train_split, train_config.batch_size, train_config.seed, epoch
            )
            train_stats = train_epoch(model, batches, train_config, optimizer)
            val_stats = _validate(model, val_split, train_config.batch_size)
            elapsed = time.perf_counter() - started
            record = {
                "epoch": epoch,
                "train_translation": train_stats["translation"],
                "train_accuracy": train_stats["accuracy"],
                "train_surrogate": train_stats["surrogate"],
                "train_disparity": train_stats["disparity"],
                "train_joint": train_stats["joint"],
                "val_translation": val_stats["translation"],
                "val_accuracy": val_stats["accuracy"],
                "val_surrogate": val_stats["surrogate"],
                "val_disparity": val_stats["disparity"],
                "val_joint": val_stats["joint"],
                "val_rr_at_1": val_stats["rr_at_1"],
            }
            state.history.append(record)
            log.info(
                "epoch %d: joint %.4f (val %.4f), val RR@1 %.3f, %.1fs",
                epoch, train_stats["joint"], val_stats["joint"], val_stats["rr_at_1"], elapsed,
            )
            if log_fh is not None:
                log_fh.write(json.dumps({**record, "epoch_seconds": elapsed}) + "\n")
                log_fh.flush()

            if val_stats["joint"] < state.best_val_loss:
                state.best_val_loss = val_stats["joint"]
                state.best_epoch = epoch
                best_params = copy.deepcopy(model.state_dict())
            elif epoch - state.best_epoch >= train_config.early_stop_patience:
                log.info("early stop at epoch %d (best was %d)", epoch, state.best_epoch)
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    model.load_state_dict(best_params)
    return model, state


# ---- experiment configuration files ---------------------------------------

MODEL_FILE_KEYS = {
    "d_emb", "d_hid", "rec_len", "alpha_translation", "alpha_accuracy",
    "alpha_disparity", "max_decode_len", "seed", "recurrent_attention",
    "normalize_attention", "attention_one_hot",
}


def load_experiment_config(path: str | Path) -> tuple[dict, TrainConfig]:
    """Read the {"model": ..., "train": ...} experiment file, rejecting
    unknown keys.  Model vocabulary/expert sizes come from the corpus, so the
    model section holds only the remaining fields."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict) or set(payload) - {"model", "train"}:
        raise ValueError("experiment config must contain only 'model' and 'train' sections")
    model_section = payload.get("model", {})
    unknown = set(model_section) - MODEL_FILE_KEYS
    if unknown:
        raise ValueError(f"unknown model config keys: {sorted(unknown)}")
    train_section = payload.get("train", {})
    unknown = set(train_section) - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown train config keys: {sorted(unknown)}")
    return dict(model_section), TrainConfig(**train_section)


def resolve_model_config(
    model_section: dict, vocab_size: int, n_experts: int
) -> ModelConfig:
    section = dict(model_section)
    section.setdefault("d_emb", 64)
    section.setdefault("d_hid", 64)
    section.setdefault("rec_len", min(10, n_experts))
    return ModelConfig(vocab_size=vocab_size, n_experts=n_experts, **section)


def experiment_config_hash(model_config: ModelConfig, train_config: TrainConfig) -> str:
    blob = json.dumps(
        {"model": asdict(model_config), "train": asdict(train_config)},
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
