"""Token vocabulary with reserved special indices."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .tickets import CorpusError, TokenizedTicket

PAD, SOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<sos>", "<eos>", "<unk>")


@dataclass(frozen=True)
class Vocabulary:
    index_to_token: tuple[str, ...]
    token_to_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.index_to_token[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"indices 0-3 must be {SPECIAL_TOKENS}")
        mapping = {token: i for i, token in enumerate(self.index_to_token)}
        if len(mapping) != len(self.index_to_token):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "token_to_index", mapping)

    def __len__(self) -> int:
        return len(self.index_to_token)

    def encode(self, tokens) -> list[int]:
        return [self.token_to_index.get(token, UNK) for token in tokens]

    def decode(self, indices) -> list[str]:
        return [self.index_to_token[i] for i in indices]

    def save(self, path: str | Path) -> None:
        payload = {"version": 1, "tokens": list(self.index_to_token)}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("version") != 1:
            raise CorpusError("unsupported vocabulary file version")
        return cls(index_to_token=tuple(payload["tokens"]))


def build_vocab(tickets: list[TokenizedTicket], min_freq: int = 1) -> Vocabulary:
    """Vocabulary over description and resolution tokens with frequency >= min_freq.

    Index order is deterministic: frequency descending, then lexicographic.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    if not tickets:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    freq: Counter[str] = Counter()
    for ticket in tickets:
        for token in ticket.description_tokens + ticket.resolution_tokens:
            if token not in SPECIAL_TOKENS:
                freq[token] += 1
    kept = sorted(
        (token for token, count in freq.items() if count >= min_freq),
        key=lambda token: (-freq[token], token),
    )
    return Vocabulary(index_to_token=SPECIAL_TOKENS + tuple(kept))


def encode_ticket(ticket: TokenizedTicket, vocab: Vocabulary) -> tuple[list[int], list[int]]:
    """Map both token sequences to index sequences; unknown tokens become UNK."""
    return vocab.encode(ticket.description_tokens), vocab.encode(ticket.resolution_tokens)
