"""Command-line entry point for reproducible experiment runs."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import torch

from .baseline import tfidf_baseline
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import AblationVariant, emit_report, evaluate_model, run_ablation
from .prepare import PreparedCorpus, prepare_corpus
from .preprocess import preprocess_text
from .synthetic import SyntheticSpec, generate_synthetic
from .tickets import load_corpus, save_corpus
from .training import (
    experiment_config_hash,
    fit,
    load_experiment_config,
    resolve_model_config,
    split_corpus,
)
from .vocab import EOS

log = logging.getLogger(__name__)


def _load_synthetic_spec(path: str) -> SyntheticSpec:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    known = set(SyntheticSpec.__dataclass_fields__)
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
    return SyntheticSpec(**payload)


def _prepare(args) -> PreparedCorpus:
    tickets = load_corpus(args.corpus)
    return prepare_corpus(tickets, min_solved=args.min_solved, min_freq=args.min_freq)


def _add_prepare_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--min-solved", type=int, default=50,
                        help="drop experts who solved fewer tickets than this")
    parser.add_argument("--min-freq", type=int, default=1,
                        help="minimum corpus frequency for a vocabulary token")


def cmd_generate(args) -> int:
    spec = _load_synthetic_spec(args.spec)
    tickets = generate_synthetic(spec)
    save_corpus(tickets, args.out)
    print(f"wrote {len(tickets)} tickets for {spec.n_experts} experts to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    prepared = _prepare(args)
    summary = {
        "tickets": len(prepared.tickets),
        "experts": prepared.n_experts,
        "vocab_size": len(prepared.vocab),
        "dropped_open": prepared.dropped_open,
        "dropped_duplicates": prepared.dropped_duplicates,
        "dropped_empty": prepared.dropped_empty,
        "corpus_hash": prepared.corpus_hash,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train(args) -> int:
    prepared = _prepare(args)
    model_section, train_config = load_experiment_config(args.config)
    model_config = resolve_model_config(
        model_section, len(prepared.vocab), prepared.n_experts
    )
    model, state = fit(
        list(prepared.tickets), model_config, train_config,
        metrics_log_path=args.metrics_log,
    )
    metadata = {
        "config_hash": experiment_config_hash(model_config, train_config),
        "corpus_hash": prepared.corpus_hash,
        "train_config": dataclasses.asdict(train_config),
        "min_solved": args.min_solved,
        "min_freq": args.min_freq,
        "best_epoch": state.best_epoch,
        "best_val_loss": state.best_val_loss,
    }
    save_checkpoint(model, args.out, prepared.vocab, list(prepared.expert_names), metadata)
    final = state.history[-1]
    print(
        f"trained {len(state.history)} epochs (best {state.best_epoch}); "
        f"val joint loss {state.best_val_loss:.4f}, "
        f"final val RR@1 {final['val_rr_at_1']:.3f}"
    )
    return 0


def _encoded_with_checkpoint_vocab(prepared: PreparedCorpus, vocab, expert_names):
    """Re-encode a prepared corpus against a checkpoint's token/expert tables."""
    if tuple(expert_names) != prepared.expert_names:
        raise ValueError(
            "corpus experts do not match the checkpoint "
            f"({list(prepared.expert_names)} vs {list(expert_names)})"
        )
    return [
        dataclasses.replace(
            ticket,
            description=tuple(vocab.encode(prepared.vocab.decode(ticket.description))),
            resolution=tuple(vocab.encode(prepared.vocab.decode(ticket.resolution))),
        )
        for ticket in prepared.tickets
    ]


def cmd_evaluate(args) -> int:
    model, vocab, expert_names, metadata = load_checkpoint(args.ckpt)
    prepared = _prepare(args)
    tickets = _encoded_with_checkpoint_vocab(prepared, vocab, expert_names)
    train_meta = metadata.get("train_config", {})
    if metadata.get("corpus_hash") == prepared.corpus_hash and train_meta:
        _, tickets = split_corpus(
            tickets, train_meta["val_fraction"], train_meta["seed"]
        )
        split = "validation"
    else:
        split = "all"
    report = evaluate_model(
        model, tickets,
        metadata={
            "config_hash": metadata.get("config_hash"),
            "corpus_hash": prepared.corpus_hash,
            "split": split,
            "seed": model.config.seed,
        },
    )
    emit_report(report, args.out, fmt=args.format)
    if args.plot:
        from .plotting import plot_rr_curves
        plot_rr_curves({"model": report}, args.plot)
    print(f"RR@1 {report.rr_curve[0]:.3f}, MSTR {report.mstr}, MRR {report.mrr}")
    return 0


def cmd_ablate(args) -> int:
    prepared = _prepare(args)
    model_section, train_config = load_experiment_config(args.config)
    base_config = resolve_model_config(
        model_section, len(prepared.vocab), prepared.n_experts
    )
    metadata = {
        "config_hash": experiment_config_hash(base_config, train_config),
        "corpus_hash": prepared.corpus_hash,
        "seed": base_config.seed,
    }
    results = run_ablation(
        list(prepared.tickets), base_config, train_config, metadata=metadata
    )
    reports = {variant.value: report for variant, (report, _) in results.items()}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(reports, out_dir / "ablation.json", fmt="json")
    emit_report(reports, out_dir / "ablation.csv", fmt="csv")
    if args.plot:
        from .plotting import plot_rr_curves
        plot_rr_curves(reports, out_dir / "rr_curves.svg")
    for name, report in reports.items():
        print(f"{name}: MRR {report.mrr:.3f}, MSTR {report.mstr:.3f}")
    return 0


def cmd_recommend(args) -> int:
    model, vocab, expert_names, _ = load_checkpoint(args.ckpt)
    n_steps = args.n if args.n is not None else model.config.rec_len
    if n_steps > model.config.n_experts:
        raise ValueError(
            f"cannot recommend {n_steps} distinct experts; only "
            f"{model.config.n_experts} exist"
        )
    tokens = preprocess_text(args.description)
    if not tokens:
        raise ValueError("description is empty after preprocessing")
    indices = vocab.encode(tokens) + [EOS]
    desc = torch.tensor([indices], dtype=torch.long)
    lengths = torch.tensor([len(indices)], dtype=torch.long)
    with torch.no_grad():
        enc = model.encode(desc, lengths)
        trace = model.recommend(enc, n_steps=n_steps, mask_repeats=True)[0]
    for rank, expert in enumerate(trace.experts, start=1):
        probability = float(trace.step_probs[rank - 1, expert])
        print(f"{rank}\t{expert_names[expert]}\t{probability:.6f}")
    return 0


def cmd_baseline(args) -> int:
    prepared = _prepare(args)
    train_split, val_split = split_corpus(
        list(prepared.tickets), args.val_fraction, args.seed
    )

    def documents(split):
        return [
            [t for t in prepared.vocab.decode(ticket.description) if t != "<eos>"]
            for ticket in split
        ]

    n_steps = min(args.n, prepared.n_experts)
    _, report = tfidf_baseline(
        documents(train_split), [t.expert_index for t in train_split],
        documents(val_split), [t.expert_index for t in val_split],
        prepared.n_experts, n_steps,
        metadata={"corpus_hash": prepared.corpus_hash, "seed": args.seed},
    )
    emit_report({"tfidf": report}, args.out, fmt=args.format)
    if args.plot:
        from .plotting import plot_rr_curves
        plot_rr_curves({"tfidf": report}, args.plot)
    print(f"tfidf: RR@1 {report.rr_curve[0]:.3f}, MSTR {report.mstr}, MRR {report.mrr}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrta",
        description="Ticket expert recommendation: corpus tooling, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic ticket corpus")
    p.add_argument("--spec", required=True, help="synthetic spec JSON file")
    p.add_argument("--out", required=True, help="output corpus path (JSON lines)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="run corpus preparation and report counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None, help="optional summary JSON path")
    _add_prepare_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--metrics-log", default=None, help="append per-epoch JSON lines here")
    _add_prepare_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--plot", default=None, help="optional RR curve figure path")
    _add_prepare_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare the component variants")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot", action="store_true", help="also write the RR curve figure")
    _add_prepare_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("recommend", help="rank experts for one description")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--description", required=True)
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("baseline", help="train and score the TF-IDF baseline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--n", type=int, default=10, help="recommendation sequence length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--plot", default=None)
    _add_prepare_flags(p)
    p.set_defaults(func=cmd_baseline)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
