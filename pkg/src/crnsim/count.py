"""Count: one listener estimates how many broadcasters share its channel.

Round ``i`` (1-based) guesses ``2**(i-1)`` broadcasters; each broadcaster
transmits with probability ``1 / 2**(i-1)`` per slot. The first round in
which the listener hears clear messages in more than ``threshold`` of its
slots fixes the estimate at ``2**(i+1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Broadcast, Heard, Identity, Idle, Listen, NodeView, payload_sender
from .rng import RngStream, uniforms

TAG_TX = 3


def lg_ceil(x: float) -> int:
    """``ceil(log2 x)`` for x >= 1, exact on powers of two."""
    if x <= 1:
        return 0
    return (math.ceil(x) - 1).bit_length() if float(x).is_integer() else math.ceil(math.log2(x))


@dataclass(frozen=True)
class CountConfig:
    n: int
    delta_max: int
    delta_param: float = 0.5
    round_len_mult: int = 8

    def __post_init__(self):
        if not (0 < self.delta_param < 1):
            raise ValueError(f"delta_param must lie in (0, 1), got {self.delta_param}")
        if self.round_len_mult < 1:
            raise ValueError("round_len_mult must be >= 1")
        if not self.threshold < (1 - self.delta_param) * 2 * math.exp(-4):
            raise ValueError(f"detection gap closed for delta_param={self.delta_param}")

    @property
    def round_len(self) -> int:
        return self.round_len_mult * max(1, lg_ceil(self.n))

    @property
    def num_rounds(self) -> int:
        return max(1, lg_ceil(2 * self.delta_max))

    @property
    def threshold(self) -> float:
        return (1 + self.delta_param) * 8 * math.exp(-7)

    @property
    def total_slots(self) -> int:
        return self.round_len * self.num_rounds

    def tx_probability(self, round_i: int) -> float:
        return 1.0 / (1 << (round_i - 1))

    def triggers(self, heard: int) -> bool:
        return heard / self.round_len > self.threshold


@dataclass(frozen=True)
class CountResult:
    estimate: int
    ids_heard: frozenset[int]
    triggered_round: int | None


@dataclass
class CountState:
    heard_in_round: int = 0
    estimate: int | None = None
    triggered_round: int | None = None
    ids_heard: set[int] = field(default_factory=set)
    payloads: list = field(default_factory=list)

    def result(self) -> CountResult:
        return CountResult(self.estimate or 0, frozenset(self.ids_heard), self.triggered_round)


def count_listener_step(round_i: int, observations, cfg: CountConfig, state: CountState) -> CountState:
    """Fold one round's observations into ``state``."""
    if not (1 <= round_i <= cfg.num_rounds):
        raise ValueError(f"round {round_i} outside [1, {cfg.num_rounds}]")
    heard = 0
    for o in observations:
        if isinstance(o, Heard):
            heard += 1
            state.ids_heard.add(payload_sender(o.payload))
            state.payloads.append(o.payload)
    if state.estimate is None and cfg.triggers(heard):
        state.estimate = 1 << (round_i + 1)
        state.triggered_round = round_i
    return state


def count_broadcaster_action(round_i: int, slot: int, my_id: int, rng: RngStream,
                             cfg: CountConfig, label: int = 1, payload=None):
    """Transmit with probability ``1 / 2**(round_i - 1)``; draw ``slot`` of ``rng``."""
    if not (1 <= round_i <= cfg.num_rounds):
        raise ValueError(f"round {round_i} outside [1, {cfg.num_rounds}]")
    if rng.uniform(slot) < cfg.tx_probability(round_i):
        return Broadcast(label, Identity(my_id) if payload is None else payload)
    return Idle(label)


# -- machines for the engine ------------------------------------------------

class CountListener:
    def __init__(self, view: NodeView, cfg: CountConfig, label: int = 1):
        self.cfg = cfg
        self.label = label
        self.state = CountState()
        self._round_obs: list = []
        self._slot = 0

    def act(self, slot):
        return Listen(self.label)

    def observe(self, slot, obs):
        self._round_obs.append(obs)
        self._slot = slot + 1
        if self._slot % self.cfg.round_len == 0:
            count_listener_step(self._slot // self.cfg.round_len, self._round_obs, self.cfg, self.state)
            self._round_obs = []

    @property
    def done(self):
        return self._slot >= self.cfg.total_slots

    def output(self):
        return self.state.result()


class CountBroadcaster:
    def __init__(self, view: NodeView, cfg: CountConfig, seed: int, label: int = 1):
        self.cfg = cfg
        self.id = view.id
        self.label = label
        self.rng = RngStream(seed, view.id, TAG_TX)
        self._slot = 0

    def act(self, slot):
        return count_broadcaster_action(slot // self.cfg.round_len + 1, slot, self.id, self.rng,
                                        self.cfg, self.label)

    def observe(self, slot, obs):
        self._slot = slot + 1

    @property
    def done(self):
        return self._slot >= self.cfg.total_slots

    def output(self):
        return None


def count_factory(cfg: CountConfig, broadcasters, listener: int = 0):
    """Node ``listener`` listens, nodes in ``broadcasters`` broadcast, others stay idle."""
    bset = set(broadcasters)

    class _Quiet:
        done = True
        def act(self, slot): return Idle()
        def observe(self, slot, obs): pass
        def output(self): return None

    def make(view, seed):
        if view.id == listener:
            return CountListener(view, cfg)
        if view.id in bset:
            return CountBroadcaster(view, cfg, seed)
        return _Quiet()
    return make


# -- batched path -----------------------------------------------------------

def simulate_count(m: int, cfg: CountConfig, seed: int, broadcaster_ids=None) -> CountResult:
    """One Count execution with ``m`` co-channel broadcasters.

    Same draws as :class:`CountBroadcaster`: node ``v`` transmits in slot
    ``t`` iff ``uniform(key(seed, v, TAG_TX), t) < p(round)``.
    """
    ids = list(range(1, m + 1)) if broadcaster_ids is None else list(broadcaster_ids)
    if m == 0:
        return CountResult(0, frozenset(), None)
    T = cfg.total_slots
    keys = np.array([RngStream(seed, v, TAG_TX).key for v in ids], dtype=np.uint64)
    u = uniforms(keys, np.arange(T))
    p = 1.0 / (2.0 ** (np.arange(T) // cfg.round_len))
    tx = u < p[:, None]
    single = tx.sum(axis=1) == 1
    per_round = single.reshape(cfg.num_rounds, cfg.round_len).sum(axis=1)
    est, trig = 0, None
    for i, h in enumerate(per_round, start=1):
        if cfg.triggers(int(h)):
            est, trig = 1 << (i + 1), i
            break
    who = np.argmax(tx[single], axis=1)
    return CountResult(est, frozenset(ids[j] for j in np.unique(who)), trig)


def exact_in_range_probability(m: int, cfg: CountConfig, lo: float, hi: float) -> float:
    """P[estimate in [lo, hi]] computed from per-round binomial laws.

    Independent of the simulator: round i hears a clear slot with
    probability ``m p (1-p)**(m-1)``, slots are independent, rounds too.
    """
    from scipy.stats import binom

    L = cfg.round_len
    need = math.floor(cfg.threshold * L) + 1  # smallest count with count/L > threshold
    alive = 1.0
    total = 0.0
    for i in range(1, cfg.num_rounds + 1):
        p = cfg.tx_probability(i)
        q = m * p * (1 - p) ** (m - 1) if m else 0.0
        trig = binom.sf(need - 1, L, q)
        if lo <= (1 << (i + 1)) <= hi:
            total += alive * trig
        alive *= 1 - trig
    if lo <= 0 <= hi:
        total += alive
    return total

