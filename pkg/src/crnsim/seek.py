"""Two-part neighbour discovery (CSeek) and its good-neighbour filter (CkSeek).

Part one: each step a node picks a uniform local channel and a fair role,
then runs one Count execution there; listeners add the Count estimate to a
per-channel tally. Part two: broadcasters pick a uniform channel and do a
back-off broadcast over ``ceil(lg Δ)`` slots; listeners pick a channel with
probability proportional to its tally and listen throughout.

Two interchangeable executions are provided. :class:`SeekMachine` runs one
node through :func:`crnsim.core.run_protocol`; :func:`simulate_seek`
evaluates whole steps for all nodes at once with numpy. Both index the same
counter-based draws, so on equal seeds they produce equal results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (Broadcast, ConfigurationError, Heard, Identity, Idle, Listen, NetworkParams,
                   NodeView, payload_sender)
from .count import TAG_TX, CountConfig, CountState, count_broadcaster_action, count_listener_step, lg_ceil
from .rng import RngStream, node_keys, uniforms

TAG_P1_CH = 1
TAG_P1_ROLE = 2
TAG_P2_ROLE = 4
TAG_P2_CH = 5


@dataclass(frozen=True)
class SeekConfig:
    mode: str = "full"
    k_hat: int | None = None
    delta_khat: int | None = None
    A1: float = 4.0
    A2: float = 4.0
    count_a: int = 8
    count_delta: float = 0.5
    log_base: str = "lg"

    def __post_init__(self):
        if self.log_base not in ("lg", "ln"):
            raise ConfigurationError(f"log_base must be 'lg' or 'ln', got {self.log_base!r}")
        if self.mode not in ("full", "filter"):
            raise ConfigurationError(f"unknown seek mode {self.mode!r}")
        if self.mode == "filter" and self.k_hat is None:
            raise ConfigurationError("filter mode needs k_hat")
        if self.A1 <= 0 or self.A2 <= 0:
            raise ConfigurationError("step multipliers must be positive")


@dataclass(frozen=True)
class SeekBudget:
    steps1: int
    steps2: int
    count: CountConfig
    step_len2: int

    @property
    def step_len1(self) -> int:
        return self.count.total_slots

    @property
    def part1_slots(self) -> int:
        return self.steps1 * self.step_len1

    @property
    def part2_slots(self) -> int:
        return self.steps2 * self.step_len2

    @property
    def total_slots(self) -> int:
        return self.part1_slots + self.part2_slots

    def step_of(self, slot: int) -> tuple[int, int, int]:
        """(part, step, offset within step) of ``slot``."""
        if slot < self.part1_slots:
            s, j = divmod(slot, self.step_len1)
            return 1, s, j
        s, j = divmod(slot - self.part1_slots, self.step_len2)
        return 2, s, j


def seek_budget(params: NetworkParams, cfg: SeekConfig) -> SeekBudget:
    n, c, k, k_max, delta = params.n, params.c, params.k, params.k_max, params.delta_max
    log_n = math.log2(n) if cfg.log_base == "lg" else math.log(n)
    if cfg.mode == "full":
        steps1 = math.ceil(cfg.A1 * (c * c / k) * log_n)
        steps2 = math.ceil(cfg.A2 * (k_max / k) * delta * log_n)
    else:
        kh = cfg.k_hat
        if kh < k:
            raise ConfigurationError(f"k_hat={kh} is below k={k}")
        steps1 = math.ceil(cfg.A1 * (c * c / kh) * log_n)
        if cfg.delta_khat is not None:
            steps2 = math.ceil(cfg.A2 * ((k_max / kh) * cfg.delta_khat + delta + c) * log_n)
        else:
            steps2 = math.ceil(cfg.A2 * ((k_max / kh) * delta + c) * log_n)
    count = CountConfig(n, delta, cfg.count_delta, cfg.count_a)
    return SeekBudget(steps1, steps2, count, max(1, lg_ceil(delta)))


def backoff_probability(i: int, length: int) -> float:
    """Slot ``i`` (1-based) of a back-off of ``length`` slots: ``2**(i-1) / 2**length``."""
    return 2.0 ** (i - 1 - length)


def weighted_channel_pick(counts, total: int, draw: float) -> int:
    """Local label chosen with probability ``counts[l-1] / total``; uniform if total is 0."""
    c = len(counts)
    if total <= 0:
        return int(draw * c) + 1
    target = draw * total
    cum = 0
    for i, x in enumerate(counts):
        cum += x
        if cum > target:
            return i + 1
    return c


@dataclass
class SeekState:
    counts: list[int]
    sum: int = 0
    ids: set[int] = field(default_factory=set)
    first_heard: dict[int, int] = field(default_factory=dict)
    payload_log: dict[int, object] = field(default_factory=dict)
    labels: list[int] = field(default_factory=list)  # one local label per step

    def record(self, slot: int, payload) -> None:
        v = payload_sender(payload)
        self.ids.add(v)
        if v not in self.first_heard:
            self.first_heard[v] = slot
            self.payload_log[v] = payload


@dataclass
class StepPlan:
    label: int
    listener: bool


def part1_step(view: NodeView, step: int, streams: dict[int, RngStream]) -> StepPlan:
    c = view.params.c
    label = streams[TAG_P1_CH].randint(step, c) + 1
    return StepPlan(label, streams[TAG_P1_ROLE].uniform(step) < 0.5)


def part2_step(view: NodeView, step: int, streams: dict[int, RngStream], state: SeekState) -> StepPlan:
    listener = streams[TAG_P2_ROLE].uniform(step) < 0.5
    draw = streams[TAG_P2_CH].uniform(step)
    if listener:
        return StepPlan(weighted_channel_pick(state.counts, state.sum, draw), True)
    return StepPlan(int(draw * view.params.c) + 1, False)


class SeekMachine:
    """One node running CSeek or CkSeek, slot by slot."""

    def __init__(self, view: NodeView, cfg: SeekConfig, seed: int, payload=None):
        self.view = view
        self.budget = seek_budget(view.params, cfg)
        self.payload = Identity(view.id) if payload is None else payload
        self.streams = {t: RngStream(seed, view.id, t)
                        for t in (TAG_P1_CH, TAG_P1_ROLE, TAG_TX, TAG_P2_ROLE, TAG_P2_CH)}
        self.state = SeekState([0] * view.params.c)
        self.plan: StepPlan | None = None
        self._count: CountState | None = None
        self._round_obs: list = []
        self._next = 0

    def act(self, slot):
        b = self.budget
        part, step, j = b.step_of(slot)
        if j == 0:
            if part == 1:
                self.plan = part1_step(self.view, step, self.streams)
                self._count = CountState()
                self._round_obs = []
            else:
                self.plan = part2_step(self.view, step, self.streams, self.state)
            self.state.labels.append(self.plan.label)
        label = self.plan.label
        if self.plan.listener:
            return Listen(label)
        if part == 1:
            return count_broadcaster_action(j // b.count.round_len + 1, slot, self.view.id,
                                            self.streams[TAG_TX], b.count, label, self.payload)
        if self.streams[TAG_TX].uniform(slot) < backoff_probability(j + 1, b.step_len2):
            return Broadcast(label, self.payload)
        return Idle(label)

    def observe(self, slot, obs):
        self._next = slot + 1
        if isinstance(obs, Heard):
            self.state.record(slot, obs.payload)
        b = self.budget
        part, step, j = b.step_of(slot)
        if part != 1 or not self.plan.listener:
            return
        self._round_obs.append(obs)
        if (j + 1) % b.count.round_len == 0:
            count_listener_step((j + 1) // b.count.round_len, self._round_obs, b.count, self._count)
            self._round_obs = []
        if j + 1 == b.step_len1:
            est = self._count.result().estimate
            self.state.counts[self.plan.label - 1] += est
            self.state.sum += est

    @property
    def done(self):
        return self._next >= self.budget.total_slots

    def output(self) -> SeekState:
        return self.state


def seek_factory(cfg: SeekConfig, payload_maker=None):
    def make(view, seed):
        p = None if payload_maker is None else payload_maker(view.id)
        return SeekMachine(view, cfg, seed, p)
    return make


# -- batched execution ------------------------------------------------------

@dataclass
class SeekRun:
    budget: SeekBudget
    first_heard: np.ndarray  # [u, v] slot u first heard v, -1 if never
    counts: np.ndarray  # [u, l] part-one tally per 0-based label
    labels1: np.ndarray  # [step, u] 0-based label, part one
    labels2: np.ndarray  # [step, u] 0-based label, part two
    payloads: list

    @property
    def n(self) -> int:
        return self.first_heard.shape[0]

    @property
    def total_slots(self) -> int:
        return self.budget.total_slots

    def ids(self, u: int) -> set[int]:
        return set(np.flatnonzero(self.first_heard[u] >= 0).tolist())

    def heard_payloads(self, u: int) -> dict[int, object]:
        return {v: self.payloads[v] for v in self.ids(u)}

    def label_at(self, u: int, slot: int) -> int:
        part, step, _ = self.budget.step_of(slot)
        arr = self.labels1 if part == 1 else self.labels2
        return int(arr[step, u]) + 1

    def state(self, u: int) -> SeekState:
        fh = {int(v): int(self.first_heard[u, v]) for v in self.ids(u)}
        return SeekState(
            counts=[int(x) for x in self.counts[u]],
            sum=int(self.counts[u].sum()),
            ids=set(fh),
            first_heard=fh,
            payload_log={v: self.payloads[v] for v in fh},
            labels=[int(x) + 1 for x in np.concatenate([self.labels1[:, u], self.labels2[:, u]])],
        )

    def discovery_time(self, required=None) -> int | None:
        """Slots until every ``u`` has heard every ``v`` in ``required[u]``; None if some never did.

        ``required`` defaults to "all pairs heard at all"; pass the true
        neighbour sets for full discovery.
        """
        worst = -1
        for u in range(self.n):
            need = self.ids(u) if required is None else required[u]
            for v in need:
                t = int(self.first_heard[u, v])
                if t < 0:
                    return None
                worst = max(worst, t)
        return worst + 1


def _resolve_block(tx: np.ndarray, M: np.ndarray):
    """Per (step, slot, listener): number of audible senders and the unique sender id."""
    txf = tx.astype(np.float32)
    Mf = M.astype(np.float32)
    cnt = np.matmul(txf, Mf)
    n = M.shape[1]
    who = np.matmul(txf, Mf * np.arange(1, n + 1, dtype=np.float32)[None, :, None])
    heard = cnt == 1
    return heard, who


def _record_heard(heard, who, slot_of, fh_min):
    s_i, t_i, u_i = np.nonzero(heard)
    if s_i.size == 0:
        return
    v = np.rint(who[s_i, t_i, u_i]).astype(np.int64) - 1
    np.minimum.at(fh_min, (u_i, v), slot_of(s_i, t_i))


def simulate_seek(net, cfg: SeekConfig, seed: int, payloads=None, chunk_cells: int = 1 << 21) -> SeekRun:
    """All nodes of ``net`` run one CSeek/CkSeek execution; numpy, step-batched."""
    params = net.params
    n, c = params.n, params.c
    b = seek_budget(params, cfg)
    cc = b.count
    A = net.adjacency_matrix
    G = net.label_matrix
    rows = np.arange(n)[None, :]
    if payloads is None:
        payloads = [Identity(u) for u in range(n)]

    keys = {t: node_keys(seed, n, t) for t in (TAG_P1_CH, TAG_P1_ROLE, TAG_TX, TAG_P2_ROLE, TAG_P2_CH)}
    big = np.iinfo(np.int64).max
    fh = np.full((n, n), big, dtype=np.int64)
    counts = np.zeros((n, c), dtype=np.int64)
    labels1 = np.zeros((b.steps1, n), dtype=np.int16)
    labels2 = np.zeros((b.steps2, n), dtype=np.int16)

    # part one
    T1 = b.step_len1
    p1 = 1.0 / 2.0 ** (np.arange(T1) // cc.round_len)
    per = max(1, chunk_cells // max(1, T1 * n))
    for s0 in range(0, b.steps1, per):
        steps = np.arange(s0, min(b.steps1, s0 + per))
        S = steps.size
        lab = (uniforms(keys[TAG_P1_CH], steps) * c).astype(np.int64)
        labels1[steps] = lab
        g = G[rows, lab]
        listener = uniforms(keys[TAG_P1_ROLE], steps) < 0.5
        bc = ~listener
        slots = steps[:, None] * T1 + np.arange(T1)[None, :]
        tx = (uniforms(keys[TAG_TX], slots) < p1[None, :, None]) & bc[:, None, :]
        M = A[None] & (g[:, :, None] == g[:, None, :]) & bc[:, :, None] & listener[:, None, :]
        heard, who = _resolve_block(tx, M)
        _record_heard(heard, who, lambda si, ti: (steps[si] * T1 + ti), fh)
        per_round = heard.reshape(S, cc.num_rounds, cc.round_len, n).sum(axis=2)
        trig = per_round / cc.round_len > cc.threshold
        first = np.argmax(trig, axis=1)
        est = np.where(trig.any(axis=1), 2 ** (first + 2), 0) * listener
        np.add.at(counts, (np.broadcast_to(rows, (S, n)), lab), est)

    # part two
    T2 = b.step_len2
    p2 = 2.0 ** (np.arange(T2) - T2)
    total = counts.sum(axis=1)
    cum = np.cumsum(counts, axis=1)
    base = b.part1_slots
    per = max(1, chunk_cells // max(1, T2 * n))
    for s0 in range(0, b.steps2, per):
        steps = np.arange(s0, min(b.steps2, s0 + per))
        listener = uniforms(keys[TAG_P2_ROLE], steps) < 0.5
        draw = uniforms(keys[TAG_P2_CH], steps)
        uni = (draw * c).astype(np.int64)
        target = draw * total[None, :]
        weighted = (cum[None, :, :] <= target[:, :, None]).sum(axis=2)
        lab = np.where(listener & (total[None, :] > 0), np.minimum(weighted, c - 1), uni)
        labels2[steps] = lab
        g = G[rows, lab]
        bc = ~listener
        slots = base + steps[:, None] * T2 + np.arange(T2)[None, :]
        tx = (uniforms(keys[TAG_TX], slots) < p2[None, :, None]) & bc[:, None, :]
        M = A[None] & (g[:, :, None] == g[:, None, :]) & bc[:, :, None] & listener[:, None, :]
        heard, who = _resolve_block(tx, M)
        _record_heard(heard, who, lambda si, ti: (base + steps[si] * T2 + ti), fh)

    fh[fh == big] = -1
    return SeekRun(b, fh, counts, labels1, labels2, list(payloads))


def cseek(net, cfg: SeekConfig, seed: int, payloads=None) -> SeekRun:
    if cfg.mode != "full":
        raise ConfigurationError("cseek needs mode='full'")
    return simulate_seek(net, cfg, seed, payloads)


def ckseek(net, cfg: SeekConfig, seed: int, payloads=None) -> SeekRun:
    if cfg.mode != "filter":
        raise ConfigurationError("ckseek needs mode='filter'")
    if cfg.k_hat < net.params.k:
        raise ConfigurationError(f"k_hat={cfg.k_hat} is below k={net.params.k}")
    return simulate_seek(net, cfg, seed, payloads)


def good_neighbors(net, k_hat: int) -> list[set[int]]:
    return [{v for v in net.neighbors(u) if net.overlap(u, v) >= k_hat} for u in range(net.params.n)]


def true_neighbors(net) -> list[set[int]]:
    return [set(net.neighbors(u)) for u in range(net.params.n)]
