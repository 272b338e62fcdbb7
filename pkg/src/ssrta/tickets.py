"""Ticket data model, corpus serialization, and expert filtering."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .preprocess import preprocess_text

EOS_TOKEN = "<eos>"

STATUS_OPEN = "OPEN"
STATUS_CLOSED = "CLOSED"

CORPUS_FIELDS = ("id", "datetime", "type", "status", "expert", "description", "resolution")

DEFAULT_MAX_DESCRIPTION_LEN = 60
DEFAULT_MAX_RESOLUTION_LEN = 60


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid ticket sets."""


@dataclass(frozen=True)
class RawTicket:
    id: str
    datetime: str
    type: str
    status: str
    expert: str
    description: str
    resolution: str

    def to_dict(self) -> dict:
        return {field: getattr(self, field) for field in CORPUS_FIELDS}


@dataclass(frozen=True)
class TokenizedTicket:
    """Preprocessed ticket: token sequences (EOS-terminated) plus the resolver index."""

    id: str
    description_tokens: tuple[str, ...]
    resolution_tokens: tuple[str, ...]
    expert_index: int


def save_corpus(tickets: list[RawTicket], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for ticket in tickets:
            fh.write(json.dumps(ticket.to_dict(), ensure_ascii=False) + "\n")


def load_corpus(path: str | Path) -> list[RawTicket]:
    """Read a JSON-lines corpus, rejecting malformed lines and unknown keys."""
    path = Path(path)
    tickets = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: expected a JSON object")
            unknown = set(record) - set(CORPUS_FIELDS)
            if unknown:
                raise CorpusError(f"line {lineno}: unknown keys {sorted(unknown)}")
            for field in CORPUS_FIELDS:
                if field not in record:
                    raise CorpusError(f"line {lineno}: missing required field '{field}'")
                if not isinstance(record[field], str):
                    raise CorpusError(f"line {lineno}: field '{field}' must be a string")
            if not record["id"]:
                raise CorpusError(f"line {lineno}: empty ticket id")
            if record["id"] in seen_ids:
                raise CorpusError(f"line {lineno}: duplicate ticket id '{record['id']}'")
            seen_ids.add(record["id"])
            tickets.append(RawTicket(**record))
    return tickets


def filter_experts(
    tickets: list[RawTicket], min_solved: int = 50
) -> tuple[list[RawTicket], dict[str, int]]:
    """Keep tickets whose resolver solved at least ``min_solved`` of the input.

    Retained experts get dense indices [0, K): most tickets first, ties broken
    by name.  Raises if nobody survives the threshold.
    """
    if min_solved < 1:
        raise ValueError("min_solved must be >= 1")
    counts = Counter(t.expert for t in tickets)
    kept = sorted(
        (name for name, count in counts.items() if count >= min_solved),
        key=lambda name: (-counts[name], name),
    )
    if not kept:
        raise CorpusError(f"no expert solved >= {min_solved} tickets")
    index = {name: i for i, name in enumerate(kept)}
    return [t for t in tickets if t.expert in index], index


def tokenize_ticket(
    ticket: RawTicket,
    expert_index: int,
    max_description_len: int = DEFAULT_MAX_DESCRIPTION_LEN,
    max_resolution_len: int = DEFAULT_MAX_RESOLUTION_LEN,
) -> TokenizedTicket | None:
    """Preprocess both text fields, truncate, and append EOS.

    Returns None when either field comes out empty; callers drop and count
    those tickets.
    """
    description = preprocess_text(ticket.description)[:max_description_len]
    resolution = preprocess_text(ticket.resolution)[:max_resolution_len]
    if not description or not resolution:
        return None
    return TokenizedTicket(
        id=ticket.id,
        description_tokens=tuple(description) + (EOS_TOKEN,),
        resolution_tokens=tuple(resolution) + (EOS_TOKEN,),
        expert_index=expert_index,
    )


def deduplicate(tickets: list[RawTicket]) -> list[RawTicket]:
    """Drop tickets whose preprocessed description duplicates an earlier one.

    "Earlier" means smallest datetime (then id, for identical stamps); output
    keeps the original corpus order of the survivors.
    """
    ordered = sorted(tickets, key=lambda t: (t.datetime, t.id))
    keep_ids = set()
    seen: set[tuple[str, ...]] = set()
    for ticket in ordered:
        key = tuple(preprocess_text(ticket.description))
        if key in seen:
            continue
        seen.add(key)
        keep_ids.add(ticket.id)
    return [t for t in tickets if t.id in keep_ids]
