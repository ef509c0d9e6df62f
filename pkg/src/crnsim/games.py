"""Hitting games behind the discovery lower bounds.

A referee hides a matching ``M`` of ``k`` pairs between two sides of size
``c``; each round the player proposes a pair ``(a, b)`` and wins as soon as
the pair is in ``M``. The player only ever learns "lost" for each guess.
The complete variant is the case ``k = c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .core import Idle, NetworkParams, NodeView, SILENCE
from .seek import SeekConfig, SeekMachine
from .topology import random_matching

DUMMY_GUESS = (1, 1)


class PlayerFault(ValueError):
    """A guess outside ``[1, c]^2``."""


@dataclass(frozen=True)
class GameInstance:
    c: int
    k: int
    matching: frozenset[tuple[int, int]]

    def __post_init__(self):
        if len(self.matching) != self.k:
            raise ValueError(f"matching has {len(self.matching)} pairs, expected {self.k}")
        a = {x for x, _ in self.matching}
        b = {y for _, y in self.matching}
        if len(a) != self.k or len(b) != self.k:
            raise ValueError("matching is not injective")
        if not all(1 <= x <= self.c and 1 <= y <= self.c for x, y in self.matching):
            raise ValueError("matching pair outside [1, c]")

    @property
    def complete(self) -> bool:
        return self.k == self.c

    @classmethod
    def random(cls, c: int, k: int, rng: np.random.Generator) -> "GameInstance":
        return cls(c, k, frozenset(random_matching(c, k, rng)))


class PlayerStrategy(Protocol):
    def next_guess(self, history: list[tuple[int, int]], rng: np.random.Generator) -> tuple[int, int] | None:
        """Next pair to propose, or None to resign."""


@dataclass
class GameResult:
    won: bool
    rounds: int


def _check_guess(g, c: int) -> None:
    a, b = g
    if not (1 <= a <= c and 1 <= b <= c):
        raise PlayerFault(f"guess {g} outside [1, {c}]^2")


def referee_play(instance: GameInstance, player, max_rounds: int,
                 rng: np.random.Generator | None = None) -> GameResult:
    """Play until the first hit or ``max_rounds`` losing guesses.

    Players that expose ``guess_block(start, size, rng)`` are served in
    blocks; this is only valid for strategies whose guesses do not depend
    on the (all-losing) history, which is true of every block player here.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    c = instance.c
    if hasattr(player, "guess_block"):
        M = np.zeros((c + 1, c + 1), dtype=bool)
        for a, b in instance.matching:
            M[a, b] = True
        done = 0
        while done < max_rounds:
            size = min(4096, max_rounds - done)
            g = np.asarray(player.guess_block(done, size, rng))
            if g.min() < 1 or g.max() > c:
                raise PlayerFault(f"guess outside [1, {c}]^2 in rounds {done + 1}..{done + size}")
            hits = np.flatnonzero(M[g[:, 0], g[:, 1]])
            if hits.size:
                return GameResult(True, done + int(hits[0]) + 1)
            done += size
        return GameResult(False, max_rounds)

    history: list[tuple[int, int]] = []
    for r in range(1, max_rounds + 1):
        g = player.next_guess(history, rng)
        if g is None:
            return GameResult(False, max_rounds)
        _check_guess(g, c)
        if tuple(g) in instance.matching:
            return GameResult(True, r)
        history.append(tuple(g))
        if hasattr(player, "lost"):
            player.lost()
    return GameResult(False, max_rounds)


# -- players ----------------------------------------------------------------

@dataclass
class UniformPlayer:
    """Independent uniform guesses over all ``c^2`` pairs."""

    c: int
    name: str = "uniform"

    def next_guess(self, history, rng):
        a, b = rng.integers(1, self.c + 1, size=2)
        return int(a), int(b)

    def guess_block(self, start, size, rng):
        return rng.integers(1, self.c + 1, size=(size, 2))


@dataclass
class FreshPairPlayer:
    """Enumerates pairs row-major, so no pair repeats within ``c^2`` rounds.

    A matching with ``k >= 1`` is always hit before the enumeration wraps.
    """

    c: int
    name: str = "fresh-pair"

    def next_guess(self, history, rng):
        i = len(history) % (self.c * self.c)
        return i // self.c + 1, i % self.c + 1

    def guess_block(self, start, size, rng):
        idx = np.arange(start, start + size) % (self.c * self.c)
        return np.stack([idx // self.c + 1, idx % self.c + 1], axis=1)


def make_uniform_player(c: int) -> UniformPlayer:
    return UniformPlayer(c)


def make_fresh_pair_player(c: int) -> FreshPairPlayer:
    return FreshPairPlayer(c)


@dataclass
class ReductionPlayer:
    """Replays a two-node discovery run and proposes the pair of tuned labels.

    Node 0's label is the ``a`` side and node 1's the ``b`` side. A losing
    guess means the two simulated nodes were apart, so both observe
    silence, exactly as on the real network.
    """

    c: int
    k: int
    seed: int
    machine_factory: object = None
    name: str = "reduction"
    slot: int = 0
    machines: list = field(default_factory=list)

    def __post_init__(self):
        params = NetworkParams(2, self.c, self.k, self.k, 1, 1)
        make = self.machine_factory or (lambda view, s: SeekMachine(view, SeekConfig(), s))
        self.machines = [make(NodeView(u, params), self.seed) for u in (0, 1)]

    def next_guess(self, history, rng):
        if any(m.done for m in self.machines):
            return None
        self._pending = [m.act(self.slot) for m in self.machines]
        labels = [a.label for a in self._pending]
        if any(x is None for x in labels):
            return DUMMY_GUESS
        return labels[0], labels[1]

    def lost(self):
        for m in self.machines:
            m.observe(self.slot, SILENCE)
        self.slot += 1


def make_reduction_player(c: int, k: int, seed: int, machine_factory=None) -> ReductionPlayer:
    return ReductionPlayer(c, k, seed, machine_factory)


def make_player(name: str, c: int, k: int, seed: int):
    if name == "uniform":
        return make_uniform_player(c)
    if name == "fresh-pair":
        return make_fresh_pair_player(c)
    if name == "reduction":
        return make_reduction_player(c, k, seed)
    raise ValueError(f"unknown player {name!r}")


def first_shared_slot(trace, shared_pairs) -> int | None:
    """First slot of a two-node trace in which both nodes sit on one shared channel."""
    shared = set(shared_pairs)
    for t, acts in enumerate(trace):
        la, lb = acts[0].label, acts[1].label
        if la is not None and lb is not None and (la, lb) in shared:
            return t
    return None


# -- statistics -------------------------------------------------------------

def game_stats(results, ts=(), qs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
    """Order statistics of game lengths; lost games count at their cap."""
    if not results:
        raise ValueError("game_stats needs at least one result")
    r = np.sort(np.array([x.rounds for x in results]))
    won = np.array([x.won for x in results])
    n = r.size

    def q(p):  # smallest t with empirical CDF >= p
        return int(r[max(0, math.ceil(p * n) - 1)])

    wins = np.sort(np.array([x.rounds for x in results if x.won]))
    return {
        "n": n,
        "median": q(0.5),
        "mean": float(r.mean()),
        "quantiles": {p: q(p) for p in qs},
        "lost_fraction": float(1 - won.mean()),
        "win_curve": {t: float(np.searchsorted(wins, t, side="right") / n) for t in ts},
    }


def geometric_cdf(t, p: float):
    return 1.0 - (1.0 - p) ** np.asarray(t, dtype=float)


def ks_distance_geometric(rounds, p: float) -> float:
    """Sup distance between the empirical CDF of ``rounds`` and Geometric(p) on {1, 2, ...}.

    Both CDFs are step functions with jumps at integers, so the supremum is
    attained on the integers up to the sample maximum.
    """
    r = np.sort(np.asarray(rounds))
    t = np.arange(1, r[-1] + 1)
    emp = np.searchsorted(r, t, side="right") / r.size
    return float(np.max(np.abs(emp - geometric_cdf(t, p))))


GAME_CSV_FIELDS = ("game", "c", "k", "player", "trial", "rounds", "won")
