"""Ranking metrics, model evaluation, and the component-ablation harness.

Reference points from the original private-data experiments (the full model
reached MRR 0.843 / MSTR 1.352 on one dataset and 0.743 / 2.043 on the other;
the encoder-only variant 0.719 / 1.912 and 0.670 / 2.464) are kept here as
documentation constants only — those datasets are not available, so nothing
asserts against them.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import torch

from .model import ModelConfig, SSRTA, disparity_metric
from .prepare import EncodedTicket
from .training import TrainConfig, TrainState, fit, make_batches

REFERENCE_FULL_MODEL = {"mrr": 0.843, "mstr": 1.352}
REFERENCE_ENCODER_ONLY = {"mrr": 0.719, "mstr": 1.912}


class ReportError(ValueError):
    """Raised for inconsistent metric reports."""


@dataclass
class EvalReport:
    rr_curve: list[float]           # RR@n for n = 1..N
    mstr: float | None              # None when no ticket was solved
    mrr: float | None
    solved_count: int
    total: int
    mean_disparity: float
    metadata: dict

    def __post_init__(self):
        if any(b < a - 1e-12 for a, b in zip(self.rr_curve, self.rr_curve[1:])):
            raise ReportError("RR curve must be nondecreasing in n")
        if self.rr_curve and abs(self.rr_curve[-1] - self.solved_count / self.total) > 1e-9:
            raise ReportError("RR at the full sequence length must equal solved/total")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        return cls(**payload)


# ---- ranking metrics ------------------------------------------------------


def _positions(sequences: list[list[int]], labels: list[int]) -> list[int | None]:
    """1-based position of the true resolver in each sequence, None if absent."""
    out = []
    for seq, label in zip(sequences, labels):
        out.append(seq.index(label) + 1 if label in seq else None)
    return out


def rr_at_n(sequences: list[list[int]], labels: list[int], n: int) -> float:
    """Fraction of tickets whose resolver appears within the first n entries."""
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = sum(1 for seq, label in zip(sequences, labels) if label in seq[:n])
    return hits / len(sequences)


def mstr(sequences: list[list[int]], labels: list[int]) -> float | None:
    """Mean 1-based resolver position over solved tickets; None if none solved."""
    positions = [p for p in _positions(sequences, labels) if p is not None]
    return sum(positions) / len(positions) if positions else None


def mrr(sequences: list[list[int]], labels: list[int]) -> float | None:
    """Mean reciprocal resolver rank over solved tickets; None if none solved."""
    positions = [p for p in _positions(sequences, labels) if p is not None]
    return sum(1.0 / p for p in positions) / len(positions) if positions else None


def build_report(
    sequences: list[list[int]],
    labels: list[int],
    disparities: list[int],
    metadata: dict | None = None,
) -> EvalReport:
    n_steps = len(sequences[0])
    solved = sum(1 for p in _positions(sequences, labels) if p is not None)
    return EvalReport(
        rr_curve=[rr_at_n(sequences, labels, n) for n in range(1, n_steps + 1)],
        mstr=mstr(sequences, labels),
        mrr=mrr(sequences, labels),
        solved_count=solved,
        total=len(sequences),
        mean_disparity=sum(disparities) / len(disparities),
        metadata=metadata or {},
    )


# ---- model evaluation -----------------------------------------------------


def evaluate_model(
    model: SSRTA,
    tickets: list[EncodedTicket],
    batch_size: int = 64,
    metadata: dict | None = None,
) -> EvalReport:
    """Rank experts for every ticket (repeat-masked) and score the ranking.

    The disparity statistic is taken from unmasked traces, where repeats are
    possible and the number is informative.
    """
    sequences: list[list[int]] = []
    labels: list[int] = []
    disparities: list[int] = []
    with torch.no_grad():
        for batch in make_batches(tickets, batch_size, seed=0, epoch=0):
            enc = model.encode(batch.description, batch.lengths)
            masked = model.recommend(enc, mask_repeats=True)
            unmasked = model.recommend(enc, mask_repeats=False)
            sequences.extend(t.experts for t in masked)
            disparities.extend(disparity_metric(t.experts) for t in unmasked)
            labels.extend(int(e) for e in batch.expert)
    return build_report(sequences, labels, disparities, metadata)


# ---- ablation harness -----------------------------------------------------


class AblationVariant(Enum):
    ENC = "enc"                    # encoder only: no decoder loss, no recurrence
    ENC_DEC = "enc+dec"            # decoder loss on, recurrence off
    ENC_REC = "enc+rec"            # recurrence on, decoder loss off
    FULL = "enc+dec+rec"

    def apply(self, config: ModelConfig) -> ModelConfig:
        if self is AblationVariant.ENC:
            return replace(config, alpha_translation=0.0, recurrent_attention=False)
        if self is AblationVariant.ENC_DEC:
            return replace(config, recurrent_attention=False)
        if self is AblationVariant.ENC_REC:
            return replace(config, alpha_translation=0.0)
        return config


def run_ablation(
    tickets: list[EncodedTicket],
    base_config: ModelConfig,
    train_config: TrainConfig,
    variants: list[AblationVariant] | None = None,
    metadata: dict | None = None,
) -> dict[AblationVariant, tuple[EvalReport, TrainState]]:
    """Train every variant from the same seed and score it on the same split."""
    from .training import split_corpus

    variants = list(AblationVariant) if variants is None else variants
    _, val_split = split_corpus(tickets, train_config.val_fraction, train_config.seed)
    results = {}
    for variant in variants:
        config = variant.apply(base_config)
        model, state = fit(tickets, config, train_config)
        report = evaluate_model(
            model,
            val_split,
            batch_size=train_config.batch_size,
            metadata={**(metadata or {}), "variant": variant.value},
        )
        results[variant] = (report, state)
    return results


# ---- report emission ------------------------------------------------------


def _csv_rows(reports: dict[str, EvalReport]) -> list[list]:
    rows = [["variant", "n", "rr", "mstr", "mrr", "disparity"]]
    for variant, report in reports.items():
        for n, rr in enumerate(report.rr_curve, start=1):
            rows.append([variant, n, rr, report.mstr, report.mrr, report.mean_disparity])
    return rows


def emit_report(
    reports: EvalReport | dict[str, EvalReport],
    path: str | Path,
    fmt: str = "json",
) -> None:
    """Serialize one report or a named collection as JSON or CSV."""
    if isinstance(reports, EvalReport):
        reports = {"model": reports}
    if fmt == "json":
        payload = {name: report.to_dict() for name, report in reports.items()}
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    elif fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerows(_csv_rows(reports))
        Path(path).write_text(buffer.getvalue(), encoding="utf-8")
    else:
        raise ValueError(f"unsupported report format '{fmt}'")


def load_report(path: str | Path) -> dict[str, EvalReport]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {name: EvalReport.from_dict(entry) for name, entry in payload.items()}
