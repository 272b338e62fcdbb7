"""Synthetic ticket corpus generator with planted per-expert topics.

Stands in for the private production datasets: every expert owns disjoint
pools of invented topic words, descriptions are built from the resolver's
pool, and resolutions come from paired templates over the same pool.  Two
description styles are supported: user-generated (natural phrasing) and
system-generated (monitoring templates full of code-like tokens that the
preprocessing pipeline strips away).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from datetime import datetime, timedelta

from .preprocess import preprocess_text, stem, stop_words
from .tickets import RawTicket, STATUS_CLOSED

_CONSONANT_SYLLABLES = [c + v for c in "bcdfglmnprstvz" for v in "aeiou"]

_FIRST_NAMES = [
    "ada", "bruno", "carla", "dmitri", "elena", "farid", "greta", "hugo",
    "iris", "jonas", "kira", "liam", "mona", "nils", "olga", "pavel",
]
_LAST_NAMES = [
    "alvarez", "brandt", "costa", "dubois", "eriksen", "fischer", "garcia",
    "holt", "ishida", "jensen", "keller", "lindgren", "moreau", "novak",
    "okafor", "petrov",
]

_TICKET_TYPES = ["CONNECTIVITY", "STORAGE", "COMPUTE", "DATABASE", "MONITORING"]

_USER_TEMPLATES = [
    "The {0} {1} service is not responding and the {2} queue on {3} keeps growing",
    "Users report that the {0} job fails while writing {1} data to the {2} volume on {3}",
    "We noticed the {0} daemon restarted right after the {1} check of {2} on the {3} cluster",
    "Please check the {0} monitor because the {1} alarm for {2} on {3} stays active",
    "The nightly {0} backup of {1} stopped with a {2} warning near the {3} stage",
]

_SYSTEM_TEMPLATES = [
    "ALERT {code} {0} {1} threshold exceeded on host {host} code {num}",
    "{host} {code} job step failed CC={num} {0} resource {1} unavailable",
    "Corrective action {code} failed service {0} state {1} severity {num}",
]

_RESOLUTION_TEMPLATES = [
    "Restarted the {0} service and verified the {1} queue drained",
    "Cleared the {0} volume and resubmitted the {1} job successfully",
    "Reloaded the {0} configuration and confirmed the {1} check passes",
    "Rebuilt the {0} index and the {1} monitor reports healthy again",
]

_USER_SLOTS = 4
_SYSTEM_SLOTS = 2
_RESOLUTION_SLOTS = 2


class SyntheticSpecError(ValueError):
    """Raised when a generator spec is invalid or unsatisfiable."""


@dataclass(frozen=True)
class SyntheticSpec:
    n_experts: int
    tickets_per_expert: int
    templates_per_expert: int = 3
    user_generated_fraction: float = 1.0
    noise_rate: float = 0.0
    vocab_topic_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_experts < 2:
            raise SyntheticSpecError("n_experts must be >= 2")
        if self.tickets_per_expert < 1:
            raise SyntheticSpecError("tickets_per_expert must be >= 1")
        if self.templates_per_expert < 1:
            raise SyntheticSpecError("templates_per_expert must be >= 1")
        if not 0.0 <= self.user_generated_fraction <= 1.0:
            raise SyntheticSpecError("user_generated_fraction must lie in [0, 1]")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise SyntheticSpecError("noise_rate must lie in [0, 1]")
        if self.vocab_topic_size < _USER_SLOTS + 1:
            raise SyntheticSpecError(f"vocab_topic_size must be >= {_USER_SLOTS + 1}")
        if self.n_experts > len(_FIRST_NAMES) * len(_LAST_NAMES):
            raise SyntheticSpecError("n_experts exceeds the available name inventory")


def _template_vocabulary() -> frozenset[str]:
    """Stems of every word the templates themselves can contribute."""
    texts = _USER_TEMPLATES + _SYSTEM_TEMPLATES + _RESOLUTION_TEMPLATES
    stems: set[str] = set()
    for text in texts:
        filler = text.format("x", "x", "x", "x", code="x", host="x", num="x")
        stems.update(preprocess_text(filler))
    return frozenset(stems)


def _candidate_words() -> list[str]:
    """Invented topic words: 2-3 open syllables, stemmer-stable, not stop words.

    Words the templates themselves produce are excluded so topic pools never
    collide with template glue.
    """
    stops = stop_words()
    reserved = _template_vocabulary()
    words = []
    for a, b in itertools.product(_CONSONANT_SYLLABLES, repeat=2):
        word = a + b
        if word not in stops and word not in reserved and stem(word) == word:
            words.append(word)
    for a, b in itertools.product(_CONSONANT_SYLLABLES[:24], repeat=2):
        for c in _CONSONANT_SYLLABLES[:24]:
            word = a + b + c
            if word not in stops and word not in reserved and stem(word) == word:
                words.append(word)
    return words


def _plan_pools(spec: SyntheticSpec, rng: random.Random) -> list[list[list[str]]]:
    """Per expert, ``templates_per_expert`` disjoint topic-word pools."""
    needed = spec.n_experts * spec.templates_per_expert * spec.vocab_topic_size
    candidates = _candidate_words()
    if needed > len(candidates):
        raise SyntheticSpecError(
            f"cannot build {needed} disjoint topic words "
            f"(inventory holds {len(candidates)})"
        )
    rng.shuffle(candidates)
    chosen = candidates[:needed]
    pools: list[list[list[str]]] = []
    cursor = 0
    for _ in range(spec.n_experts):
        expert_pools = []
        for _ in range(spec.templates_per_expert):
            expert_pools.append(chosen[cursor : cursor + spec.vocab_topic_size])
            cursor += spec.vocab_topic_size
        pools.append(expert_pools)
    return pools


def expert_names(spec: SyntheticSpec) -> list[str]:
    names = [f"{f}.{l}" for f, l in itertools.product(_FIRST_NAMES, _LAST_NAMES)]
    return names[: spec.n_experts]


def expert_topic_pools(spec: SyntheticSpec) -> list[list[str]]:
    """Union of each expert's topic pools, in expert order (for oracle checks)."""
    rng = random.Random(spec.seed)
    pools = _plan_pools(spec, rng)
    return [sorted(set(itertools.chain.from_iterable(ps))) for ps in pools]


def _skewed_sample(pool: list[str], count: int, rng: random.Random) -> list[str]:
    """Distinct pool words with Zipf-like usage: early words dominate, the
    tail shows up rarely.  Resolutions sample uniformly instead, so tail words
    are mostly learnable from resolution text."""
    weights = [1.0 / (rank + 1) for rank in range(len(pool))]
    picked: list[str] = []
    while len(picked) < count:
        word = rng.choices(pool, weights=weights, k=1)[0]
        if word not in picked:
            picked.append(word)
    return picked


def _code_token(rng: random.Random) -> str:
    letters = "".join(rng.choice("ABCDEFGHKLMNPRSTVWXZ") for _ in range(5))
    return letters + str(rng.randrange(100, 999))


def _apply_noise(text: str, rng: random.Random, rate: float, inventory: list[str]) -> str:
    if rate <= 0.0:
        return text
    words = text.split(" ")
    for i in range(len(words)):
        if rng.random() < rate:
            words[i] = rng.choice(inventory)
    return " ".join(words)


def generate_synthetic(spec: SyntheticSpec) -> list[RawTicket]:
    """Produce a shuffled, fully deterministic corpus of CLOSED tickets."""
    rng = random.Random(spec.seed)
    pools = _plan_pools(spec, rng)
    names = expert_names(spec)
    # Noise replacements come from the whole working vocabulary, glue included.
    noise_inventory = sorted(
        set(itertools.chain.from_iterable(itertools.chain.from_iterable(pools)))
        | _template_vocabulary()
    )

    tickets = []
    serial = 0
    for expert_idx in range(spec.n_experts):
        for _ in range(spec.tickets_per_expert):
            pool = pools[expert_idx][rng.randrange(spec.templates_per_expert)]
            user_style = rng.random() < spec.user_generated_fraction
            if user_style:
                template = rng.choice(_USER_TEMPLATES)
                slots = _skewed_sample(pool, _USER_SLOTS, rng)
                description = template.format(*slots)
            else:
                template = rng.choice(_SYSTEM_TEMPLATES)
                slots = _skewed_sample(pool, _SYSTEM_SLOTS, rng)
                description = template.format(
                    *slots,
                    code=_code_token(rng),
                    host=_code_token(rng),
                    num=rng.randrange(1000, 9999),
                )
            description = _apply_noise(description, rng, spec.noise_rate, noise_inventory)
            res_slots = rng.sample(pool, _RESOLUTION_SLOTS)
            resolution = rng.choice(_RESOLUTION_TEMPLATES).format(*res_slots)
            stamp = datetime(2023, 5, 1) + timedelta(minutes=serial)
            tickets.append(
                RawTicket(
                    id=f"TK{serial:06d}",
                    datetime=stamp.isoformat(),
                    type=rng.choice(_TICKET_TYPES),
                    status=STATUS_CLOSED,
                    expert=names[expert_idx],
                    description=description,
                    resolution=resolution,
                )
            )
            serial += 1
    rng.shuffle(tickets)
    return tickets
