"""Global broadcast over a discovered network.

Pipeline: a discovery run records first-reception slots, a second run
exchanges those slots so both ends of each edge agree on a dedicated
channel, a Luby-style coloring of the line graph assigns every edge a
color in ``[1, 2Δ]``, and a colored schedule disseminates the message.
Every exchange between neighbours is a real CSeek execution; a payload
reaches a neighbour only if that run delivered it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import (Broadcast, Bundle, ColorInfo, ConfigurationError, Data, Heard, IdentityWithTimes,
                   Idle, Listen, NodeView, run_protocol)
from .count import lg_ceil
from .rng import RngStream, draw_uniform, derive_key, mix
from .seek import SeekConfig, SeekRun, backoff_probability, seek_budget, simulate_seek

TAG_COLOR_ABSTAIN = 11
TAG_COLOR_PICK = 12
TAG_DISSEMINATE = 13

Edge = tuple[int, int]


def edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


# Every edge must survive several independent CSeek runs, so the pipeline
# runs CSeek with doubled multipliers; that squares the per-run miss rate.
PIPELINE_MULTIPLIER = 8.0


@dataclass(frozen=True)
class CGCastConfig:
    seek: SeekConfig = field(default_factory=lambda: SeekConfig(A1=PIPELINE_MULTIPLIER, A2=PIPELINE_MULTIPLIER))
    B: float = 4.0
    R: int | None = None

    def __post_init__(self):
        if self.seek.mode != "full":
            raise ConfigurationError("cgcast runs CSeek in full mode")
        if self.B <= 0:
            raise ConfigurationError("B must be positive")
        if self.R is not None and self.R < 1:
            raise ConfigurationError("R must be >= 1")

    def phase_budget(self, n: int) -> int:
        return max(1, math.ceil(self.B * math.log(n)))

    def rounds(self, n: int) -> int:
        return self.R if self.R is not None else max(1, math.ceil(2 * math.log(n)))


def round_len(delta: int) -> int:
    """Slots of one dissemination round: ``ceil(lg Δ)``, at least one."""
    return max(1, lg_ceil(delta))


def dissemination_slots(diam: int, delta: int, R: int) -> int:
    return diam * 2 * delta * R * round_len(delta)


# -- neighbour exchange -----------------------------------------------------

@dataclass
class Exchange:
    received: list[dict[int, object]]  # per node: origin -> payload
    runs: list[SeekRun]

    @property
    def slots(self) -> int:
        return sum(r.total_slots for r in self.runs)


def exchange_round(net, cfg: SeekConfig, payloads, seed: int, two_hop: bool = False) -> Exchange:
    """One CSeek run carrying ``payloads``; with ``two_hop`` a second run relays what was heard."""
    n = net.params.n
    first = simulate_seek(net, cfg, mix(seed, 1), payloads)
    received = [dict(first.heard_payloads(u)) for u in range(n)]
    if not two_hop:
        return Exchange(received, [first])
    relays = [Bundle(u, (payloads[u],) + tuple(received[u][v] for v in sorted(received[u])))
              for u in range(n)]
    second = simulate_seek(net, cfg, mix(seed, 2), relays)
    for u in range(n):
        for v, bundle in second.heard_payloads(u).items():
            for item in bundle.items:
                o = _origin(item)
                if o != u:
                    received[u].setdefault(o, item)
    return Exchange(received, [first, second])


def _origin(p) -> int:
    return p.id if isinstance(p, IdentityWithTimes) else p.origin


def exchange_slots(params, cfg: SeekConfig, two_hop: bool) -> int:
    return seek_budget(params, cfg).total_slots * (2 if two_hop else 1)


# -- dedicated channels -----------------------------------------------------

@dataclass
class ChannelTables:
    tables: list[dict[int, int]]  # per node: neighbour -> local label
    flagged: set[Edge]


def fix_dedicated_channels(run1: SeekRun, received2) -> ChannelTables:
    """Each node picks the label it used at slot ``min(t_uv, t_vu)`` of ``run1``.

    ``received2[u][v]`` is the :class:`IdentityWithTimes` ``u`` got from
    ``v`` in the second run. Missing information flags the edge.
    """
    n = run1.n
    tables: list[dict[int, int]] = [{} for _ in range(n)]
    flagged: set[Edge] = set()
    for u in range(n):
        for v in sorted(run1.ids(u)):
            msg = received2[u].get(v)
            theirs = dict(msg.times).get(u) if isinstance(msg, IdentityWithTimes) else None
            if theirs is None:
                flagged.add(edge(u, v))
                continue
            t = min(int(run1.first_heard[u, v]), theirs)
            tables[u][v] = run1.label_at(u, t)
    return ChannelTables(tables, flagged)


def channel_disagreements(net, tables) -> list[str]:
    """Entries whose two ends do not land on one global channel shared by both."""
    out = []
    for u, tab in enumerate(tables):
        for v, lab in tab.items():
            g = net.global_channel(u, lab)
            if g not in net.channels[v]:
                out.append(f"edge {edge(u, v)}: channel {g} not available to {v}")
            back = tables[v].get(u)
            if back is not None and net.global_channel(v, back) != g:
                out.append(f"edge {edge(u, v)}: {u} uses {g}, {v} uses {net.global_channel(v, back)}")
    return out


# -- line-graph coloring ----------------------------------------------------

@dataclass
class VirtualNode:
    edge: Edge
    palette: list[int]
    tentative: int | None = None
    final: int | None = None

    @property
    def active(self) -> bool:
        return self.final is None


@dataclass
class ColoringResult:
    colors: dict[Edge, int]  # owner's final colors
    known: list[dict[int, int]]  # per node: neighbour -> color of their edge
    phases_used: int
    colored: bool
    palette_ok: bool
    slots: int


def _adjacent_owners(u: int, v: int, nbrs_u, nbrs_of_v) -> set[int]:
    owners = {min(u, x) for x in nbrs_u if x != v}
    owners |= {min(v, x) for x in nbrs_of_v if x != u}
    return owners


def _shares_end(a: Edge, b: Edge) -> bool:
    return a != b and bool(set(a) & set(b))


def color_line_graph(net, cfg: CGCastConfig, seed: int, usable, nbrs1, nbr_lists) -> ColoringResult:
    """Luby-style coloring of the line graph, two CSeek runs per exchange.

    ``usable[u]``: neighbours with a dedicated channel at ``u``.
    ``nbrs1[u]``: ids ``u`` heard in the first discovery run.
    ``nbr_lists[u][v]``: the neighbour list ``v`` reported to ``u``.

    A virtual node only fixes its color when it holds this phase's report
    from every owner of a possibly adjacent edge and none of them clashes.
    """
    n = net.params.n
    delta = net.params.delta_max
    budget = cfg.phase_budget(n)
    per_phase = 2 * exchange_slots(net.params, cfg.seek, True)
    owned: list[list[VirtualNode]] = [
        [VirtualNode(edge(u, v), list(range(1, 2 * delta + 1))) for v in sorted(usable[u]) if u < v]
        for u in range(n)
    ]
    known: list[dict[int, int]] = [{} for _ in range(n)]
    palette_ok = True

    def learn(u, infos):
        for info in infos:
            for e, col, tag in info.entries:
                if tag == "final" and u in e:
                    known[u][e[0] + e[1] - u] = col

    phases_used = 0
    for p in range(1, budget + 1):
        if all(not w.active for ws in owned for w in ws):
            break
        phases_used = p
        for u in range(n):
            for w in owned[u]:
                if not w.active:
                    continue
                palette_ok &= len(w.palette) >= 1
                scope = w.edge[0] * n + w.edge[1]
                if draw_uniform(derive_key(seed, scope, TAG_COLOR_ABSTAIN), p) < 0.5:
                    w.tentative = None
                else:
                    i = int(draw_uniform(derive_key(seed, scope, TAG_COLOR_PICK), p) * len(w.palette))
                    w.tentative = w.palette[i]

        def report(u, step):
            entries = []
            for w in owned[u]:
                if w.final is not None:
                    entries.append((w.edge, w.final, "final"))
                elif step == 1:
                    entries.append((w.edge, w.tentative or 0, "try" if w.tentative else "idle"))
            return ColorInfo(u, p, step, tuple(entries))

        ex1 = exchange_round(net, cfg.seek, [report(u, 1) for u in range(n)], mix(seed, p, 1), True)
        decided = []
        for u in range(n):
            reports = {o: r for o, r in ex1.received[u].items() if isinstance(r, ColorInfo)
                       and r.phase == p and r.step == 1}
            reports[u] = report(u, 1)
            learn(u, reports.values())
            for w in owned[u]:
                if not w.active or w.tentative is None:
                    continue
                other = w.edge[1]  # owner is always the smaller endpoint
                need = _adjacent_owners(u, other, nbrs1[u], nbr_lists[u].get(other, ()))
                if not need <= reports.keys():
                    continue
                clash = any(_shares_end(e, w.edge) and col == w.tentative and tag != "idle"
                            for r in reports.values() for e, col, tag in r.entries)
                if not clash:
                    decided.append(w)
        for w in decided:
            w.final = w.tentative

        ex2 = exchange_round(net, cfg.seek, [report(u, 2) for u in range(n)], mix(seed, p, 2), True)
        for u in range(n):
            infos = [r for r in ex2.received[u].values() if isinstance(r, ColorInfo)]
            infos += [r for r in ex1.received[u].values() if isinstance(r, ColorInfo)]
            infos.append(report(u, 2))
            learn(u, infos)
            for w in owned[u]:
                if not w.active:
                    continue
                taken = {col for r in infos for e, col, tag in r.entries
                         if tag == "final" and _shares_end(e, w.edge)}
                w.palette = [x for x in w.palette if x not in taken]
                palette_ok &= len(w.palette) >= 1

    colors = {w.edge: w.final for ws in owned for w in ws if w.final is not None}
    colored = all(not w.active for ws in owned for w in ws)
    for u in range(n):
        for e, col in colors.items():
            if e[0] == u:
                known[u][e[1]] = col
    return ColoringResult(colors, known, phases_used, colored, palette_ok, budget * per_phase)


def coloring_violations(colors: dict[Edge, int], delta: int) -> list[str]:
    """Out-of-range colors and pairs of edges sharing an endpoint with one color."""
    out = [f"edge {e}: color {c} outside [1, {2 * delta}]" for e, c in sorted(colors.items())
           if not 1 <= c <= 2 * delta]
    by_node: dict[int, dict[int, Edge]] = {}
    for e, c in sorted(colors.items()):
        for x in e:
            prev = by_node.setdefault(x, {}).get(c)
            if prev is not None:
                out.append(f"edges {prev} and {e} share node {x} and color {c}")
            by_node[x][c] = e
    return out


# -- dissemination ----------------------------------------------------------

class DisseminationNode:
    """Follows the colored schedule: listen until informed, then back off on the edge's channel."""

    def __init__(self, view: NodeView, schedule: dict[int, int], informed: bool, body: bytes,
                 R: int, seed: int):
        p = view.params
        self.id = view.id
        self.schedule = schedule  # color -> local label of that edge's dedicated channel
        self.colors = 2 * p.delta_max
        self.L = round_len(p.delta_max)
        self.step_len = R * self.L
        self.total = p.diam * self.colors * self.step_len
        self.body = body
        self.informed_at: int | None = 0 if informed else None
        self.rng = RngStream(seed, view.id, TAG_DISSEMINATE)
        self._sending = False
        self._next = 0

    def act(self, slot):
        step, j = divmod(slot, self.step_len)
        label = self.schedule.get(step % self.colors + 1)
        if j == 0:
            self._sending = self.informed_at is not None
        if label is None:
            return Idle()
        if not self._sending:
            return Listen(label)
        if self.rng.uniform(slot) < backoff_probability(j % self.L + 1, self.L):
            return Broadcast(label, Data(self.id, self.body))
        return Idle(label)

    def observe(self, slot, obs):
        self._next = slot + 1
        if isinstance(obs, Heard) and self.informed_at is None:
            self.informed_at = slot

    @property
    def done(self):
        return self._next >= self.total

    def output(self):
        return self.informed_at


def disseminate(net, source: int, message: bytes, schedules, R: int, seed: int) -> dict[int, int | None]:
    """Slot (from dissemination start) at which each node first holds the message; source is 0."""
    def make(view, s):
        return DisseminationNode(view, schedules[view.id], view.id == source, message, R, s)
    total = dissemination_slots(net.params.diam, net.params.delta_max, R)
    res = run_protocol(net, make, total, seed)
    return res.outputs


# -- whole pipeline ---------------------------------------------------------

@dataclass
class CGCastResult:
    colored: bool
    phases_used: int
    informed_at: dict[int, int | None]
    flagged_edges: list[Edge]
    colors: dict[Edge, int]
    palette_ok: bool
    channel_errors: list[str]
    slots: dict[str, int]

    @property
    def all_informed(self) -> bool:
        return all(t is not None for t in self.informed_at.values())

    @property
    def success(self) -> bool:
        return self.colored and self.all_informed

    @property
    def total_slots(self) -> int:
        return sum(self.slots.values())

    @property
    def all_informed_time(self) -> int | None:
        """Dissemination slots until the last node held the message."""
        if not self.all_informed:
            return None
        return max(self.informed_at.values()) + 1

    def to_json(self) -> dict:
        return {
            "colored": self.colored,
            "phases_used": self.phases_used,
            "informed_at": {str(u): t for u, t in sorted(self.informed_at.items())},
            "flagged_edges": [list(e) for e in sorted(self.flagged_edges)],
            "total_slots": self.total_slots,
        }


def cgcast_budget(params, cfg: CGCastConfig) -> dict[str, int]:
    one = seek_budget(params, cfg.seek).total_slots
    return {
        "discovery": one,
        "times_exchange": one,
        "coloring": cfg.phase_budget(params.n) * 4 * one,
        "handoff": one,
        "dissemination": dissemination_slots(params.diam, params.delta_max, cfg.rounds(params.n)),
    }


def cgcast(net, source: int, message: bytes, cfg: CGCastConfig, seed: int) -> CGCastResult:
    n = net.params.n
    if not 0 <= source < n:
        raise ConfigurationError(f"source {source} outside [0, {n})")
    run1 = simulate_seek(net, cfg.seek, mix(seed, 101))
    times = [IdentityWithTimes(u, tuple((v, int(run1.first_heard[u, v])) for v in sorted(run1.ids(u))))
             for u in range(n)]
    ex2 = exchange_round(net, cfg.seek, times, mix(seed, 102))
    tabs = fix_dedicated_channels(run1, ex2.received)
    nbrs1 = [run1.ids(u) for u in range(n)]
    nbr_lists = [{v: [x for x, _ in m.times] for v, m in ex2.received[u].items()} for u in range(n)]
    usable = [set(t) for t in tabs.tables]

    col = color_line_graph(net, cfg, mix(seed, 103), usable, nbrs1, nbr_lists)

    handoff = [ColorInfo(u, col.phases_used, 3, tuple((e, c, "final") for e, c in sorted(col.colors.items())
                                                      if e[0] == u)) for u in range(n)]
    ex3 = exchange_round(net, cfg.seek, handoff, mix(seed, 104))
    known = [dict(k) for k in col.known]
    for u in range(n):
        for info in ex3.received[u].values():
            for e, c, _ in info.entries:
                if u in e:
                    known[u][e[0] + e[1] - u] = c

    schedules = []
    for u in range(n):
        sched = {}
        for v, c in sorted(known[u].items()):
            if v in tabs.tables[u]:
                sched.setdefault(c, tabs.tables[u][v])
        schedules.append(sched)
    R = cfg.rounds(n)
    informed = disseminate(net, source, message, schedules, R, mix(seed, 105))
    return CGCastResult(
        colored=col.colored,
        phases_used=col.phases_used,
        informed_at=informed,
        flagged_edges=sorted(tabs.flagged),
        colors=col.colors,
        palette_ok=col.palette_ok,
        channel_errors=channel_disagreements(net, tabs.tables),
        slots={
            "discovery": run1.total_slots,
            "times_exchange": ex2.slots,
            "coloring": col.slots,
            "handoff": ex3.slots,
            "dissemination": dissemination_slots(net.params.diam, net.params.delta_max, R),
        },
    )
