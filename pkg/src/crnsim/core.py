"""Slot-synchronous execution engine.

Reception follows the graph model: a listener hears a payload only when
exactly one of its neighbours broadcasts on the same global channel in
that slot. Collisions and silence are indistinguishable, and a
broadcaster learns nothing from the channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Protocol


class ConfigurationError(ValueError):
    """Malformed actions, unknown nodes, or inconsistent parameters."""


class SimulationAbort(RuntimeError):
    def __init__(self, node: int, slot: int, reason: str):
        super().__init__(f"node {node} at slot {slot}: {reason}")
        self.node = node
        self.slot = slot


@dataclass(frozen=True)
class NetworkParams:
    n: int
    c: int
    k: int
    k_max: int
    delta_max: int
    diam: int

    def violations(self) -> list[str]:
        out = []
        if not (1 <= self.k <= self.k_max <= self.c):
            out.append(f"need 1 <= k <= k_max <= c, got k={self.k} k_max={self.k_max} c={self.c}")
        if not (1 <= self.delta_max <= self.n - 1):
            out.append(f"need 1 <= delta_max <= n-1, got delta_max={self.delta_max} n={self.n}")
        if self.diam < 1:
            out.append(f"need diam >= 1, got {self.diam}")
        return out


# -- payloads ---------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    id: int


@dataclass(frozen=True)
class IdentityWithTimes:
    id: int
    times: tuple[tuple[int, int], ...]  # (neighbour id, slot of first reception)


@dataclass(frozen=True)
class ColorInfo:
    origin: int
    phase: int
    step: int
    entries: tuple[tuple[tuple[int, int], int, str], ...]  # (edge, color, tag)


@dataclass(frozen=True)
class Bundle:
    """Relay of payloads heard earlier; carries two-hop exchanges."""

    origin: int
    items: tuple[Any, ...]


@dataclass(frozen=True)
class Data:
    origin: int
    body: bytes


Payload = Identity | IdentityWithTimes | ColorInfo | Bundle | Data


def payload_sender(p: Payload) -> int:
    return p.id if isinstance(p, (Identity, IdentityWithTimes)) else p.origin


def _jsonable(p):
    if isinstance(p, Identity):
        return {"t": "id", "id": p.id}
    if isinstance(p, IdentityWithTimes):
        return {"t": "idt", "id": p.id, "times": [list(x) for x in p.times]}
    if isinstance(p, ColorInfo):
        return {"t": "color", "origin": p.origin, "phase": p.phase, "step": p.step,
                "entries": [[list(e), col, tag] for e, col, tag in p.entries]}
    if isinstance(p, Bundle):
        return {"t": "bundle", "origin": p.origin, "items": [_jsonable(x) for x in p.items]}
    if isinstance(p, Data):
        return {"t": "data", "origin": p.origin, "body": p.body.hex()}
    raise TypeError(f"not a payload: {p!r}")


def payload_bytes(p: Payload) -> bytes:
    """Canonical serialisation, used for traces and equality checks."""
    return json.dumps(_jsonable(p), sort_keys=True, separators=(",", ":")).encode()


# -- actions and observations -----------------------------------------------

@dataclass(frozen=True)
class Broadcast:
    label: int
    payload: Payload


@dataclass(frozen=True)
class Listen:
    label: int


@dataclass(frozen=True)
class Idle:
    # Radio may stay tuned to a channel without transmitting; None means off.
    label: int | None = None


SlotAction = Broadcast | Listen | Idle


@dataclass(frozen=True)
class Heard:
    payload: Payload


@dataclass(frozen=True)
class Silence:
    pass


SILENCE = Silence()
SlotObservation = Heard | Silence


def tuned_label(action: SlotAction) -> int | None:
    return action.label


# -- machines ---------------------------------------------------------------

@dataclass(frozen=True)
class NodeView:
    """All a protocol may know about its node: identity and public parameters."""

    id: int
    params: NetworkParams


class Machine(Protocol):
    def act(self, slot: int) -> SlotAction: ...
    def observe(self, slot: int, obs: SlotObservation) -> None: ...
    @property
    def done(self) -> bool: ...
    def output(self) -> Any: ...


class NetLike(Protocol):
    params: NetworkParams
    def neighbors(self, u: int) -> frozenset[int]: ...
    def global_channel(self, u: int, label: int) -> int: ...


def resolve_slot(actions: Mapping[int, SlotAction], net: NetLike) -> dict[int, SlotObservation]:
    n, c = net.params.n, net.params.c
    on_channel: dict[int, list[int]] = {}
    listeners: list[tuple[int, int]] = []
    for u, a in actions.items():
        if not (0 <= u < n):
            raise ConfigurationError(f"unknown node id {u}")
        if isinstance(a, Idle):
            if a.label is not None and not (1 <= a.label <= c):
                raise ConfigurationError(f"node {u}: label {a.label} outside [1, {c}]")
            continue
        if not isinstance(a, (Broadcast, Listen)):
            raise ConfigurationError(f"node {u}: not a slot action: {a!r}")
        if not (1 <= a.label <= c):
            raise ConfigurationError(f"node {u}: label {a.label} outside [1, {c}]")
        g = net.global_channel(u, a.label)
        if isinstance(a, Broadcast):
            on_channel.setdefault(g, []).append(u)
        else:
            listeners.append((u, g))

    obs: dict[int, SlotObservation] = {u: SILENCE for u in actions}
    for u, g in listeners:
        senders = on_channel.get(g)
        if not senders:
            continue
        nbrs = net.neighbors(u)
        hit = [v for v in senders if v in nbrs]
        if len(hit) == 1:
            obs[u] = Heard(actions[hit[0]].payload)
    return obs


@dataclass
class RunResult:
    outputs: dict[int, Any]
    slots: int
    first_heard: dict[int, dict[int, int]]
    messages_heard: dict[int, int]
    broadcasts: dict[int, int]
    trace: list[dict[int, SlotAction]] | None = None

    def summary(self, trial: int = 0, slot_budget: int | None = None) -> dict:
        return {
            "trial": trial,
            "slot_budget": self.slots if slot_budget is None else slot_budget,
            "per_node": {
                str(u): {
                    "discovered": sorted(self.first_heard[u]),
                    "first_heard": {str(v): t for v, t in sorted(self.first_heard[u].items())},
                    "messages_heard": self.messages_heard[u],
                }
                for u in sorted(self.outputs)
            },
        }


def run_protocol(net: NetLike, protocol_factory: Callable[[NodeView, int], Machine],
                 slot_budget: int, master_seed: int, *, trace: bool = False,
                 ) -> RunResult:
    """Drive one machine per node for up to ``slot_budget`` slots."""
    if slot_budget < 1:
        raise ConfigurationError("slot_budget must be >= 1")
    n = net.params.n
    machines = {u: protocol_factory(NodeView(u, net.params), master_seed) for u in range(n)}
    first_heard: dict[int, dict[int, int]] = {u: {} for u in range(n)}
    heard_count = {u: 0 for u in range(n)}
    sent = {u: 0 for u in range(n)}
    log: list[dict[int, SlotAction]] | None = [] if trace else None

    slot = 0
    while slot < slot_budget and not all(m.done for m in machines.values()):
        actions = {}
        for u, m in machines.items():
            a = m.act(slot)
            if not isinstance(a, (Broadcast, Listen, Idle)):
                raise SimulationAbort(u, slot, f"malformed action {a!r}")
            label = a.label
            if label is not None and not (isinstance(label, int) and 1 <= label <= net.params.c):
                raise SimulationAbort(u, slot, f"label {label!r} outside [1, {net.params.c}]")
            if isinstance(a, Broadcast):
                sent[u] += 1
            actions[u] = a
        obs = resolve_slot(actions, net)
        for u, m in machines.items():
            o = obs[u]
            if isinstance(o, Heard):
                heard_count[u] += 1
                v = payload_sender(o.payload)
                first_heard[u].setdefault(v, slot)
            m.observe(slot, o)
        if log is not None:
            log.append(actions)
        slot += 1

    return RunResult(
        outputs={u: m.output() for u, m in machines.items()},
        slots=slot,
        first_heard=first_heard,
        messages_heard=heard_count,
        broadcasts=sent,
        trace=log,
    )
