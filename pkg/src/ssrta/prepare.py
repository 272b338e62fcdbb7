"""Turning a raw ticket corpus into model-ready index sequences."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

from .tickets import (
    CorpusError,
    DEFAULT_MAX_DESCRIPTION_LEN,
    DEFAULT_MAX_RESOLUTION_LEN,
    RawTicket,
    STATUS_CLOSED,
    deduplicate,
    filter_experts,
    tokenize_ticket,
)
from .vocab import Vocabulary, build_vocab, encode_ticket

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncodedTicket:
    id: str
    description: tuple[int, ...]
    resolution: tuple[int, ...]
    expert_index: int


@dataclass(frozen=True)
class PreparedCorpus:
    tickets: tuple[EncodedTicket, ...]
    vocab: Vocabulary
    expert_names: tuple[str, ...]
    dropped_empty: int
    dropped_duplicates: int
    dropped_open: int
    corpus_hash: str

    @property
    def n_experts(self) -> int:
        return len(self.expert_names)


def corpus_fingerprint(tickets: list[RawTicket]) -> str:
    digest = hashlib.sha256()
    for ticket in tickets:
        digest.update(json.dumps(ticket.to_dict(), sort_keys=True).encode("utf-8"))
    return digest.hexdigest()


def prepare_corpus(
    tickets: list[RawTicket],
    min_solved: int = 50,
    min_freq: int = 1,
    max_description_len: int = DEFAULT_MAX_DESCRIPTION_LEN,
    max_resolution_len: int = DEFAULT_MAX_RESOLUTION_LEN,
) -> PreparedCorpus:
    """Full pipeline: closed tickets only, dedup on preprocessed description,
    expert threshold, tokenization (empty tickets dropped and counted),
    vocabulary, index encoding."""
    fingerprint = corpus_fingerprint(tickets)
    closed = [t for t in tickets if t.status == STATUS_CLOSED]
    dropped_open = len(tickets) - len(closed)
    if not closed:
        raise CorpusError("corpus contains no CLOSED tickets")

    unique = deduplicate(closed)
    dropped_duplicates = len(closed) - len(unique)

    tokenized_raw = []
    dropped_empty = 0
    for ticket in unique:
        tokenized = tokenize_ticket(ticket, 0, max_description_len, max_resolution_len)
        if tokenized is None:
            dropped_empty += 1
        else:
            tokenized_raw.append((ticket, tokenized))
    if dropped_empty:
        log.info("dropped %d tickets with empty text after preprocessing", dropped_empty)
    if not tokenized_raw:
        raise CorpusError("every ticket came out empty after preprocessing")

    kept_raw, expert_index = filter_experts([t for t, _ in tokenized_raw], min_solved)
    kept_ids = {t.id for t in kept_raw}
    tokenized = [
        tok.__class__(
            id=tok.id,
            description_tokens=tok.description_tokens,
            resolution_tokens=tok.resolution_tokens,
            expert_index=expert_index[raw.expert],
        )
        for raw, tok in tokenized_raw
        if raw.id in kept_ids
    ]

    vocab = build_vocab(tokenized, min_freq)
    encoded = tuple(
        EncodedTicket(
            id=tok.id,
            description=tuple(encode_ticket(tok, vocab)[0]),
            resolution=tuple(encode_ticket(tok, vocab)[1]),
            expert_index=tok.expert_index,
        )
        for tok in tokenized
    )
    names = sorted(expert_index, key=expert_index.get)
    return PreparedCorpus(
        tickets=encoded,
        vocab=vocab,
        expert_names=tuple(names),
        dropped_empty=dropped_empty,
        dropped_duplicates=dropped_duplicates,
        dropped_open=dropped_open,
        corpus_hash=fingerprint,
    )
