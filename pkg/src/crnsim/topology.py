"""Network instances: graph, per-node channel sets, and local label orders."""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .core import NetworkParams


class TopologyError(ValueError):
    """Infeasible generator parameters or exhausted retries."""


class InstanceParseError(ValueError):
    pass


Edge = tuple[int, int]


@dataclass(frozen=True)
class NetworkInstance:
    params: NetworkParams
    edges: tuple[Edge, ...]  # sorted, u < v
    channels: tuple[frozenset[int], ...]
    labels: tuple[tuple[int, ...], ...]  # labels[u][l - 1] = global id of local label l

    @cached_property
    def adjacency(self) -> tuple[frozenset[int], ...]:
        adj = [set() for _ in range(self.params.n)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return tuple(frozenset(a) for a in adj)

    def neighbors(self, u: int) -> frozenset[int]:
        return self.adjacency[u]

    def global_channel(self, u: int, label: int) -> int:
        return self.labels[u][label - 1]

    def label_of(self, u: int, channel: int) -> int:
        return self.labels[u].index(channel) + 1

    def overlap(self, u: int, v: int) -> int:
        return len(self.channels[u] & self.channels[v])

    @cached_property
    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.params.n, self.params.n), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    @cached_property
    def label_matrix(self) -> np.ndarray:
        """``[u, l]`` -> global channel of 0-based local label ``l``."""
        return np.array(self.labels, dtype=np.int64)


def _bfs(adj, src: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[src] = 0
    q = deque([src])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


def _adj_lists(n: int, edges) -> list[set[int]]:
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def is_connected(n: int, edges) -> bool:
    return min(_bfs(_adj_lists(n, edges), 0)) >= 0


def diameter(n: int, edges) -> int:
    adj = _adj_lists(n, edges)
    best = 0
    for s in range(n):
        d = _bfs(adj, s)
        if min(d) < 0:
            raise TopologyError("graph is disconnected")
        best = max(best, max(d))
    return best


def build_instance(n: int, c: int, edges, channels, labels=None, *, k=None, k_max=None,
                   seed: int | None = None) -> NetworkInstance:
    """Assemble an instance, recomputing Δ, D and (unless given) k, k_max."""
    edges = tuple(sorted((min(u, v), max(u, v)) for u, v in edges))
    channels = tuple(frozenset(s) for s in channels)
    if labels is None:
        rng = np.random.default_rng(seed)
        labels = tuple(tuple(int(x) for x in rng.permutation(sorted(s))) for s in channels)
    ov = [len(channels[u] & channels[v]) for u, v in edges]
    adj = _adj_lists(n, edges)
    params = NetworkParams(
        n=n, c=c,
        k=min(ov) if k is None else k,
        k_max=max(ov) if k_max is None else k_max,
        delta_max=max(len(a) for a in adj),
        diam=diameter(n, edges),
    )
    return NetworkInstance(params, edges, channels, tuple(tuple(l) for l in labels))


def validate_instance(net: NetworkInstance) -> list[str]:
    p = net.params
    out = list(p.violations())
    n = p.n
    seen = set()
    for e in net.edges:
        u, v = e
        if u == v:
            out.append(f"self-loop at {u}")
        if not (0 <= u < n and 0 <= v < n):
            out.append(f"edge {e} names an unknown node")
            continue
        if e in seen:
            out.append(f"duplicate edge {e}")
        seen.add(e)
        ov = net.overlap(u, v)
        if not (p.k <= ov <= p.k_max):
            out.append(f"edge ({u}, {v}) overlap {ov} outside [{p.k}, {p.k_max}]")
    if len(net.channels) != n or len(net.labels) != n:
        out.append("channel/label tables do not cover every node")
        return out
    for u in range(n):
        if len(net.channels[u]) != p.c:
            out.append(f"node {u} has {len(net.channels[u])} channels, expected {p.c}")
        if len(net.labels[u]) != p.c or set(net.labels[u]) != set(net.channels[u]):
            out.append(f"node {u} label order is not a bijection onto its channel set")
    if out:
        return out
    adj = _adj_lists(n, net.edges)
    deg = max(len(a) for a in adj)
    if deg > p.delta_max:
        out.append(f"max degree {deg} exceeds delta_max {p.delta_max}")
    if not is_connected(n, net.edges):
        out.append("graph is disconnected")
    elif diameter(n, net.edges) != p.diam:
        out.append(f"diameter {diameter(n, net.edges)} != diam {p.diam}")
    return out


# -- generators -------------------------------------------------------------

def two_node_from_matching(c: int, matching, seed: int | None = None,
                           identity_labels: bool = True) -> NetworkInstance:
    """Two nodes whose shared channels, in local labels, are exactly ``matching``.

    Node 0 sees channel ``i - 1`` as label ``i``; node 1 sees label ``j`` as
    the channel matched to it, or a private channel otherwise.
    """
    matching = sorted(matching)
    if not matching:
        raise TopologyError("two-node instance needs at least one shared channel")
    partner = {j: i for i, j in matching}
    a = [i - 1 for i in range(1, c + 1)]
    b = [partner[j] - 1 if j in partner else c + j - 1 for j in range(1, c + 1)]
    k = len(matching)
    inst = build_instance(2, c, [(0, 1)], [set(a), set(b)], labels=[a, b], k=k, k_max=k)
    if not identity_labels:
        inst = shuffle_labels(inst, seed)
    return inst


def random_matching(c: int, k: int, rng: np.random.Generator) -> tuple[tuple[int, int], ...]:
    if not (1 <= k <= c):
        raise TopologyError(f"need 1 <= k <= c, got k={k} c={c}")
    a = rng.choice(c, size=k, replace=False) + 1
    b = rng.choice(c, size=k, replace=False) + 1
    return tuple(sorted((int(x), int(y)) for x, y in zip(a, b)))


def gen_two_node(c: int, k: int, seed: int) -> NetworkInstance:
    if not (1 <= k <= c):
        raise TopologyError(f"need 1 <= k <= c, got k={k} c={c}")
    rng = np.random.default_rng(seed)
    a = list(range(c))
    b = list(range(k)) + list(range(c, 2 * c - k))
    la = [int(x) for x in rng.permutation(a)]
    lb = [int(x) for x in rng.permutation(b)]
    return build_instance(2, c, [(0, 1)], [a, b], labels=[la, lb], k=k, k_max=k)


def shared_label_pairs(net: NetworkInstance, u: int = 0, v: int = 1) -> tuple[tuple[int, int], ...]:
    """The overlap of ``u`` and ``v`` as (label at u, label at v) pairs."""
    return tuple(sorted((net.label_of(u, g), net.label_of(v, g))
                        for g in net.channels[u] & net.channels[v]))


def gen_star(delta: int, c: int, k: int, seed: int, k_max: int | None = None,
             pool: int | None = None, spread: bool = True) -> NetworkInstance:
    """Hub 0 with ``delta`` leaves; each hub-leaf overlap drawn from [k, k_max].

    With ``spread`` the hub channels are dealt to leaves round-robin so
    shared channels are as evenly loaded as possible. Leaves get private
    channels otherwise, so ``pool`` must be at least ``c + delta * (c - k)``.
    """
    k_max = k if k_max is None else k_max
    if delta < 1:
        raise TopologyError("delta must be >= 1")
    if not (1 <= k <= k_max <= c):
        raise TopologyError(f"need 1 <= k <= k_max <= c, got k={k} k_max={k_max} c={c}")
    need = c + delta * (c - k)
    if pool is not None and pool < need:
        raise TopologyError(f"pool {pool} too small: star with delta={delta}, c={c}, k={k} needs {need}")
    rng = np.random.default_rng(seed)
    hub = list(range(c))
    order = [int(x) for x in rng.permutation(c)]
    chans = [set(hub)]
    nxt = c
    cursor = 0
    for _ in range(delta):
        ov = int(rng.integers(k, k_max + 1))
        if spread:
            shared = {order[(cursor + i) % c] for i in range(ov)}
            cursor += ov
        else:
            shared = {int(x) for x in rng.choice(c, size=ov, replace=False)}
        own = set(range(nxt, nxt + c - ov))
        nxt += c - ov
        chans.append(shared | own)
    edges = [(0, i) for i in range(1, delta + 1)]
    return build_instance(delta + 1, c, edges, chans, seed=int(rng.integers(2**63)),
                          k=k, k_max=k_max)


def gen_complete_tree(depth: int, c: int, delta: int, seed: int, k: int = 1) -> NetworkInstance:
    """Complete tree, ``min(c, delta) - 1`` children per internal node.

    Each child shares exactly ``k`` of its parent's channels; siblings
    share none. The remaining channels of every node are private.
    """
    if depth < 1:
        raise TopologyError("depth must be >= 1")
    kids = min(c, delta) - 1
    if kids < 1:
        raise TopologyError(f"min(c, delta) must be >= 2, got c={c} delta={delta}")
    if kids * k > c:
        raise TopologyError(f"{kids} children x overlap {k} exceeds c={c}: siblings cannot be disjoint")
    rng = np.random.default_rng(seed)
    chans = [set(range(c))]
    nxt = c
    edges = []
    frontier = [0]
    for _ in range(depth):
        new = []
        for p in frontier:
            pc = [int(x) for x in rng.permutation(sorted(chans[p]))]
            for j in range(kids):
                child = len(chans)
                shared = set(pc[j * k:(j + 1) * k])
                chans.append(shared | set(range(nxt, nxt + c - k)))
                nxt += c - k
                edges.append((p, child))
                new.append(child)
        frontier = new
    return build_instance(len(chans), c, edges, chans, seed=int(rng.integers(2**63)), k=k, k_max=k)


def gen_random(n: int, pool: int, c: int, k: int, k_max: int, edge_density: float,
               seed: int, max_retries: int = 200) -> NetworkInstance:
    """Assignment-first random instance, rejected until connected."""
    if n < 2 or pool < c or not (1 <= k <= k_max <= c) or not (0 < edge_density <= 1):
        raise TopologyError(f"infeasible random instance: n={n} pool={pool} c={c} k={k} "
                            f"k_max={k_max} density={edge_density}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        chans = [frozenset(int(x) for x in rng.choice(pool, size=c, replace=False)) for _ in range(n)]
        edges = []
        for u, v in itertools.combinations(range(n), 2):
            ov = len(chans[u] & chans[v])
            # draw for every pair so the stream does not depend on overlaps
            keep = rng.random() < edge_density
            if k <= ov <= k_max and keep:
                edges.append((u, v))
        if edges and is_connected(n, edges):
            return build_instance(n, c, edges, chans, seed=int(rng.integers(2**63)))
    raise TopologyError(
        f"{max_retries} consecutive draws were disconnected (n={n}, pool={pool}, c={c}, "
        f"k={k}, k_max={k_max}, density={edge_density}); raise the density, shrink the pool, "
        f"or widen [k, k_max]")


def gen_affine_overlap(p: int = 7, rows: int = 6, k_hat: int = 4, slopes=(1, 2, 3, 4),
                       seed: int = 0) -> NetworkInstance:
    """Every node has ``rows - 1`` strong and ``len(slopes) * (rows - 1)`` weak neighbours.

    Nodes are points (x, y) of the affine plane over Z_p with y < rows.
    A column x shares ``k_hat`` channels among all its points; each line
    y = s*x + b with s in ``slopes`` is one more channel on its points.
    Two points on a common line overlap on exactly that channel.
    """
    if any(not (0 < s < p) for s in slopes) or rows > p:
        raise TopologyError("slopes must be nonzero mod p and rows <= p")
    pts = [(x, y) for x in range(p) for y in range(rows)]
    chans = []
    for x, y in pts:
        s = {x * k_hat + t for t in range(k_hat)}
        base = p * k_hat
        for si, sl in enumerate(slopes):
            b = (y - sl * x) % p
            s.add(base + si * p + b)
        chans.append(s)
    edges = [(i, j) for i, j in itertools.combinations(range(len(pts)), 2)
             if chans[i] & chans[j]]
    return build_instance(len(pts), k_hat + len(slopes), edges, chans, seed=seed)


def shuffle_labels(net: NetworkInstance, seed: int | None) -> NetworkInstance:
    rng = np.random.default_rng(seed)
    labels = tuple(tuple(int(x) for x in rng.permutation(sorted(s))) for s in net.channels)
    return replace(net, labels=labels)


# -- files ------------------------------------------------------------------

def instance_to_dict(net: NetworkInstance) -> dict:
    p = net.params
    return {
        "params": {"n": p.n, "c": p.c, "k": p.k, "k_max": p.k_max, "delta": p.delta_max, "diam": p.diam},
        "edges": [list(e) for e in net.edges],
        "channels": {str(u): sorted(s) for u, s in enumerate(net.channels)},
        "labels": {str(u): list(l) for u, l in enumerate(net.labels)},
    }


def instance_from_dict(d: dict) -> NetworkInstance:
    try:
        pd = d["params"]
    except (KeyError, TypeError):
        raise InstanceParseError("missing field 'params'") from None
    try:
        params = NetworkParams(n=int(pd["n"]), c=int(pd["c"]), k=int(pd["k"]), k_max=int(pd["k_max"]),
                               delta_max=int(pd["delta"]), diam=int(pd["diam"]))
    except KeyError as e:
        raise InstanceParseError(f"params: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise InstanceParseError(f"params: {e}") from None
    n = params.n
    try:
        edges = tuple(sorted((min(int(u), int(v)), max(int(u), int(v))) for u, v in d["edges"]))
    except KeyError:
        raise InstanceParseError("missing field 'edges'") from None
    except (TypeError, ValueError):
        raise InstanceParseError("edges: every entry must be a pair of node ids") from None
    tables = {}
    for name in ("channels", "labels"):
        try:
            raw = d[name]
        except KeyError:
            raise InstanceParseError(f"missing field {name!r}") from None
        try:
            tables[name] = [[int(x) for x in raw[str(u)]] for u in range(n)]
        except KeyError as e:
            raise InstanceParseError(f"{name}: missing entry for node {e.args[0]}") from None
        except (TypeError, ValueError):
            raise InstanceParseError(f"{name}: entries must be lists of channel ids") from None
    return NetworkInstance(
        params, edges,
        tuple(frozenset(s) for s in tables["channels"]),
        tuple(tuple(l) for l in tables["labels"]),
    )


def save_instance(net: NetworkInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(net), indent=1, sort_keys=True))


def load_instance(path) -> NetworkInstance:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceParseError(f"{path}: line {e.lineno}: {e.msg}") from None
    return instance_from_dict(d)
