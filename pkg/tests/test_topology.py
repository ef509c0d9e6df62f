import json
from collections import Counter
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare, ks_2samp

from crnsim.seek import SeekConfig, simulate_seek, true_neighbors
from crnsim.topology import (InstanceParseError, TopologyError, gen_affine_overlap, gen_complete_tree,
                             gen_random, gen_star, gen_two_node, instance_from_dict, instance_to_dict,
                             load_instance, random_matching, save_instance, shared_label_pairs,
                             shuffle_labels, two_node_from_matching, validate_instance)


def test_two_node_single_channel():
    net = gen_two_node(1, 1, 0)
    assert net.channels[0] == net.channels[1]
    assert validate_instance(net) == []


def test_two_node_overlap_is_a_matching():
    net = gen_two_node(4, 2, 3)
    assert validate_instance(net) == []
    assert len(net.channels[0] & net.channels[1]) == 2
    pairs = shared_label_pairs(net)
    assert len({a for a, _ in pairs}) == len({b for _, b in pairs}) == 2


def test_two_node_rejects_k_above_c():
    with pytest.raises(TopologyError):
        gen_two_node(2, 3, 0)


def test_two_node_matching_is_uniform():
    # c=3, k=2: 3 * 3 * 2 = 18 matchings, equally likely
    counts = Counter(shared_label_pairs(gen_two_node(3, 2, s)) for s in range(3600))
    assert len(counts) == 18
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_from_matching_realises_the_matching():
    M = ((1, 3), (4, 2))
    net = two_node_from_matching(5, M)
    assert shared_label_pairs(net) == tuple(sorted(M))
    assert validate_instance(net) == []


def test_star_single_leaf_is_two_nodes():
    net = gen_star(1, 3, 1, 0)
    assert net.params.n == 2 and net.edges == ((0, 1),)


def test_star_degree_and_overlaps():
    net = gen_star(8, 4, 2, 1)
    assert validate_instance(net) == []
    assert len(net.neighbors(0)) == 8
    assert all(net.overlap(0, v) >= 2 for v in range(1, 9))
    assert all(net.neighbors(v) == {0} for v in range(1, 9))


def test_star_pool_too_small():
    with pytest.raises(TopologyError, match="pool"):
        gen_star(4, 4, 1, 0, pool=5)


def test_tree_depth_one_is_star_with_disjoint_leaves():
    net = gen_complete_tree(1, 3, 3, 0)
    assert net.params.n == 3
    assert not (net.channels[1] & net.channels[2])


def test_tree_depth_two_sizes_and_sibling_disjointness():
    net = gen_complete_tree(2, 4, 4, 5)
    assert net.params.n == 1 + 3 + 9
    assert validate_instance(net) == []
    kids = {}
    for u, v in net.edges:
        kids.setdefault(u, []).append(v)
    for sibs in kids.values():
        for a, b in combinations(sibs, 2):
            assert not (net.channels[a] & net.channels[b])


def test_tree_infeasible():
    with pytest.raises(TopologyError):
        gen_complete_tree(2, 1, 4, 0)


def test_random_two_nodes_full_overlap():
    net = gen_random(2, 3, 3, 1, 3, 1.0, 0)
    assert net.edges == ((0, 1),) and net.overlap(0, 1) == 3


def test_random_acceptance_grid_instance():
    net = gen_random(32, 24, 8, 2, 8, 0.3, 1)
    assert validate_instance(net) == []
    assert all(2 <= net.overlap(u, v) <= 8 for u, v in net.edges)


def test_random_gives_up_with_advice():
    with pytest.raises(TopologyError, match="density"):
        gen_random(20, 400, 2, 1, 1, 0.01, 0, max_retries=5)


def test_affine_overlap_profile():
    net = gen_affine_overlap()
    assert validate_instance(net) == []
    assert net.params.n == 42 and net.params.c == 8 and net.params.delta_max == 25
    for u in range(net.params.n):
        ov = Counter(net.overlap(u, v) for v in net.neighbors(u))
        assert ov == {4: 5, 1: 20}


def test_injected_low_overlap_is_reported():
    net = gen_random(10, 8, 4, 2, 4, 0.5, 2)
    bad = replace(net, params=replace(net.params, k=net.params.k + 3, k_max=4))
    problems = validate_instance(bad)
    assert problems and all("overlap" in p or "k <=" in p for p in problems)


def test_validator_names_the_edge():
    net = gen_random(10, 8, 4, 2, 4, 0.5, 2)
    u, v = net.edges[0]
    shrunk = list(net.channels)
    keep = sorted(shrunk[u] & shrunk[v])[:1]
    # rebuild v's channels so it shares only one channel with u
    fresh = 1000
    new_v = set(keep) | {fresh + i for i in range(3)}
    shrunk[v] = frozenset(new_v)
    labels = list(net.labels)
    labels[v] = tuple(sorted(new_v))
    bad = replace(net, channels=tuple(shrunk), labels=tuple(labels))
    problems = validate_instance(bad)
    assert any(f"({u}, {v}) overlap 1" in p for p in problems)


def test_save_load_round_trip(tmp_path):
    for net in (gen_random(12, 9, 4, 1, 4, 0.4, 3), gen_complete_tree(2, 3, 3, 1), gen_two_node(5, 2, 9)):
        p = tmp_path / "net.json"
        save_instance(net, p)
        assert load_instance(p) == net


def test_schema_keys():
    d = instance_to_dict(gen_two_node(2, 1, 0))
    assert set(d) == {"params", "edges", "channels", "labels"}
    assert set(d["params"]) == {"n", "c", "k", "k_max", "delta", "diam"}


def test_parse_faults_name_the_problem(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"params": {"n": 2,\n "c": }')
    with pytest.raises(InstanceParseError, match="line 2"):
        load_instance(p)
    d = instance_to_dict(gen_two_node(2, 1, 0))
    del d["labels"]["1"]
    with pytest.raises(InstanceParseError, match="labels"):
        instance_from_dict(json.loads(json.dumps(d)))
    d = instance_to_dict(gen_two_node(2, 1, 0))
    del d["params"]["k_max"]
    with pytest.raises(InstanceParseError, match="k_max"):
        instance_from_dict(d)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 12), st.integers(1, 3), st.integers(0, 10_000))
def test_random_generator_output_is_valid(n, k, seed):
    c = 4
    try:
        net = gen_random(n, 8, c, k, c, 0.6, seed, max_retries=30)
    except TopologyError:
        return
    assert validate_instance(net) == []


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 10_000))
def test_star_generator_output_is_valid(delta, c, seed):
    k = max(1, c // 2)
    assert validate_instance(gen_star(delta, c, k, seed, k_max=c)) == []


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 1000))
def test_random_matching_is_injective(c, k, seed):
    if k > c:
        return
    M = random_matching(c, k, np.random.default_rng(seed))
    assert len({a for a, _ in M}) == len({b for _, b in M}) == k


def test_label_shuffle_is_invisible_to_discovery():
    net = gen_random(8, 8, 4, 1, 4, 0.5, 11)
    other = shuffle_labels(net, 99)
    assert validate_instance(other) == []
    cfg = SeekConfig(A1=1, A2=1)
    truth = true_neighbors(net)

    def found(inst, s):
        run = simulate_seek(inst, cfg, s)
        return sum(len(run.ids(u)) for u in range(inst.params.n))

    a = [found(net, s) for s in range(60)]
    b = [found(other, s + 1000) for s in range(60)]
    assert ks_2samp(a, b).pvalue > 1e-3
    assert max(a + b) <= sum(len(x) for x in truth)
