"""Stimulus generation for the altruism and number-comparison tasks.

Amounts are integer cents throughout. Everything is a pure function of its
arguments and an explicit seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

OTHER_CENTS = (655, 926, 1310, 1852)
# beta = k / 20 for k = 0..11, i.e. 0, 0.05, ..., 0.55
BETA_STEPS = tuple(range(12))
PRACTICE_OTHER = 1000
REPETITIONS = 5


@dataclass(frozen=True)
class SumDecomposition:
    self1: int
    self2: int
    other1: int
    other2: int
    # (self_order, other_order); each a permutation of the two addend slots
    display_order: tuple = ((0, 1), (0, 1))

    @property
    def self_total(self) -> int:
        return self.self1 + self.self2

    @property
    def other_total(self) -> int:
        return self.other1 + self.other2

    def displayed(self):
        """Addends in on-screen order: ((self_a, self_b), (other_a, other_b))."""
        s = (self.self1, self.self2)
        o = (self.other1, self.other2)
        so, oo = self.display_order
        return (s[so[0]], s[so[1]]), (o[oo[0]], o[oo[1]])


@dataclass(frozen=True)
class TrialSpec:
    task: str
    game_id: int
    self_cents: int
    other_cents: int
    repetition: int = 0
    round: int = 0
    split: Optional[SumDecomposition] = None

    @property
    def ratio(self) -> float:
        return self.self_cents / self.other_cents


def indifference_self(other_cents: int, k: int) -> int:
    """Self amount making a beta = k/20 decision maker indifferent, floored to the cent."""
    # exact integer arithmetic: other * (k/20) / (1 - k/20) = other * k / (20 - k)
    return (other_cents * k) // (20 - k)


def altruism_grid() -> list[TrialSpec]:
    trials = []
    game = 0
    for other in OTHER_CENTS:
        for k in BETA_STEPS:
            trials.append(TrialSpec("altruism", game, indifference_self(other, k), other))
            game += 1
    return trials


def number_grid() -> list[TrialSpec]:
    """Altruism grid without the A = 0 and A > B rows, renumbered."""
    kept = [t for t in altruism_grid() if 0 < t.self_cents <= t.other_cents]
    return [replace(t, task="number", game_id=i) for i, t in enumerate(kept)]


def practice_trials() -> list[TrialSpec]:
    return [TrialSpec("altruism", k, indifference_self(PRACTICE_OTHER, k), PRACTICE_OTHER)
            for k in BETA_STEPS]


def expand_and_shuffle(pairs, repetitions: int = REPETITIONS, seed: int = 0) -> list[TrialSpec]:
    """Repeat every pair and return the trials in a seeded random order."""
    expanded = [replace(p, repetition=r) for p in pairs for r in range(repetitions)]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(expanded))
    return [replace(expanded[j], round=i) for i, j in enumerate(order)]


def decompose_sum(self_cents: int, other_cents: int, rng) -> SumDecomposition:
    """Split both payments into two addends with self1 > other1.

    ``rng`` needs a numpy-style ``integers(low, high)`` method (high exclusive).
    """
    if other_cents <= 0:
        raise ValueError(f"other_cents must be positive, got {other_cents}")
    if self_cents < 0:
        raise ValueError(f"self_cents must be non-negative, got {self_cents}")
    if self_cents == 0:
        other1 = int(rng.integers(1, other_cents)) if other_cents > 1 else 0
        return SumDecomposition(0, 0, other1, other_cents - other1)
    upper = min(self_cents, other_cents)
    if upper < 2:
        raise ValueError("payments below 2 cents cannot be split with self1 > other1 > 0")
    self1 = 1
    while self1 < 2:
        self1 = int(rng.integers(1, upper + 1))
    other1 = int(rng.integers(1, self1))
    return SumDecomposition(self1, self_cents - self1, other1, other_cents - other1)


def _trial_seed(participant_seed: int, trial_key: int, d: SumDecomposition):
    return np.random.SeedSequence([participant_seed, trial_key, d.self1, d.self2, d.other1, d.other2])


def shuffle_positions(decomposition: SumDecomposition, participant_seed: int,
                      trial_key: int = 0) -> SumDecomposition:
    """Randomise the on-screen order of the addends for one participant."""
    rng = np.random.default_rng(_trial_seed(participant_seed, trial_key, decomposition))
    flips = rng.integers(0, 2, size=2)
    order = tuple((1, 0) if f else (0, 1) for f in flips)
    return replace(decomposition, display_order=order)


def with_decompositions(trials, seed: int) -> list[TrialSpec]:
    """Attach one fixed decomposition per trial, as used for all treatment participants."""
    rng = np.random.default_rng(seed)
    return [replace(t, split=decompose_sum(t.self_cents, t.other_cents, rng)) for t in trials]


def session_trials(seed: int, treatment: bool = False) -> list[TrialSpec]:
    """Both tasks' trials in presentation order (altruism first)."""
    ss = np.random.SeedSequence(seed)
    s_alt, s_num, s_split = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    trials = expand_and_shuffle(altruism_grid(), seed=s_alt)
    trials += expand_and_shuffle(number_grid(), seed=s_num)
    if treatment:
        trials = with_decompositions(trials, s_split)
    return trials
