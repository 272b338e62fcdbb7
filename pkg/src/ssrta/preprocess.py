"""Ticket text normalization: tokenizing, symbol filtering, stop words, stemming.

The cleaning pipeline mirrors what IT ticket text needs in practice: hostnames,
dates, error codes and punctuation carry no transferable signal, so only pure
alphabetic tokens survive.  The stop-word list and the suffix-stripping rules
are shipped as plain-text data files so the output is stable across releases.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_WORD_RE = re.compile(r"[A-Za-z0-9]+")
_ALPHA_RE = re.compile(r"[a-z]+")

# Minimum stem length a rule is allowed to leave behind.
_MIN_STEM = 2

# Consonants eligible for undoubling after -ing/-ed style stripping.
_DOUBLABLE = set("bdfglmnprt")


def _load_lines(name: str) -> list[str]:
    text = resources.files("ssrta.data").joinpath(name).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


@lru_cache(maxsize=1)
def stop_words() -> frozenset[str]:
    return frozenset(_load_lines("stopwords.txt"))


@lru_cache(maxsize=1)
def stemmer_rules() -> tuple[tuple[str, str, bool], ...]:
    """Ordered (suffix, replacement, undouble) rules from the data file."""
    rules = []
    for line in _load_lines("stemmer_rules.txt"):
        parts = line.split(":")
        suffix, replacement = parts[0], parts[1]
        undouble = len(parts) > 2 and parts[2] == "undouble"
        rules.append((suffix, replacement, undouble))
    return tuple(rules)


def _strip_once(token: str) -> str:
    for suffix, replacement, undouble in stemmer_rules():
        if not token.endswith(suffix):
            continue
        stem = token[: len(token) - len(suffix)] + replacement
        if len(stem) < _MIN_STEM:
            continue
        if undouble and len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] in _DOUBLABLE:
            stem = stem[:-1]
        return stem
    return token


def stem(token: str) -> str:
    """Deterministic suffix-stripping stemmer, iterated to a fixed point."""
    while True:
        stripped = _strip_once(token)
        if stripped == token:
            return token
        token = stripped


def preprocess_text(raw: str) -> list[str]:
    """Clean raw ticket text into a token list.

    Lowercases, drops every token containing a digit (hostnames, dates, error
    codes), removes stop words, stems, and drops stems that landed on a stop
    word again.  Order is preserved; the result may be empty.
    """
    stops = stop_words()
    tokens = []
    for match in _WORD_RE.finditer(raw.lower()):
        word = match.group()
        if not _ALPHA_RE.fullmatch(word):
            continue
        if word in stops:
            continue
        stemmed = stem(word)
        if stemmed in stops:
            continue
        tokens.append(stemmed)
    return tokens
