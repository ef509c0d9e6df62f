"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Thresholds are pinned constants below; none are tuned to the observed
results. Run with ``pytest tests/test_acceptance.py -s`` or
``python3 scripts/run_acceptance.py``.
"""
import math
from functools import lru_cache

import numpy as np
import pytest

from crnsim.core import run_protocol
from crnsim.games import (GameInstance, first_shared_slot, ks_distance_geometric, make_reduction_player,
                          referee_play)
from crnsim.harness import ExperimentConfig, records_to_csv, run, run_records, sweep
from crnsim.seek import SeekConfig, seek_factory
from crnsim.topology import shared_label_pairs, two_node_from_matching

pytestmark = pytest.mark.acceptance

RATE = 0.95
COUNT_MS = (1, 3, 8, 17, 32)
COUNT_TRIALS = 500
SLOPE_C = (1.6, 2.4)
SLOPE_DELTA = (0.7, 1.3)
SWEEP_TRIALS = 50
KS_MAX = 0.02
GAMES = 10_000
EARLY_WIN_MAX = 0.5

RANDOM32 = dict(n=32, pool=24, c=8, k=2, k_max=8, edge_density=0.3)
COLORING32 = dict(n=32, pool=12, c=4, k=2, k_max=4, edge_density=0.2)
RANDOM16 = dict(n=16, pool=8, c=4, k=2, k_max=4, edge_density=0.3)
TREE3 = dict(depth=3, c=3, delta=3)


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def tree_records():
    return run_records(ExperimentConfig("cgcast", generator="tree", gen_params=TREE3, trials=100, master_seed=6))


def test_count_accuracy(capsys):
    rates = {}
    for m in COUNT_MS:
        out = run(ExperimentConfig("count", m=m, count_n=64, count_delta_max=32, count_delta=0.5, count_a=8,
                                   trials=COUNT_TRIALS, master_seed=1))
        rates[m] = out.summary["success_rate"]
    ok = all(r >= RATE for r in rates.values())
    report(capsys, "1 count accuracy", ok,
           "P[estimate in [m,4m]] " + ", ".join(f"m={m}: {r:.3f}" for m, r in rates.items()) + f" (need >= {RATE})")


def test_cseek_complete_and_sound(capsys):
    out = run(ExperimentConfig("cseek", generator="random", gen_params=RANDOM32, A1=4, A2=4,
                               trials=100, master_seed=2))
    s = out.summary
    ok = s["success_rate"] >= RATE and s["sound_rate"] == 1.0
    report(capsys, "2 cseek completeness/soundness", ok,
           f"exact discovery {s['success_rate']:.2f} (need >= {RATE}), sound {s['sound_rate']:.2f} (need 1.00)")


def _sweep_line(res):
    pts = ", ".join(f"{p['value']}: {p['summary']['median']} ({p['summary']['success_rate']:.2f})"
                    for p in res["points"])
    return pts


def test_cseek_scaling(capsys):
    a = sweep(ExperimentConfig("cseek", generator="star", gen_params=dict(delta=4, k=1), A1=8, A2=8,
                               trials=SWEEP_TRIALS, master_seed=3), "c", [4, 8, 16, 32])
    b = sweep(ExperimentConfig("cseek", generator="star", gen_params=dict(c=4, k=2), A1=8, A2=8,
                               trials=SWEEP_TRIALS, master_seed=3), "delta", [4, 8, 16, 32])
    sa = a["fit"]["slope"] if a["fit"] else math.nan
    sb = b["fit"]["slope"] if b["fit"] else math.nan
    ok_a = SLOPE_C[0] <= sa <= SLOPE_C[1]
    ok_b = SLOPE_DELTA[0] <= sb <= SLOPE_DELTA[1]
    report(capsys, "3 cseek scaling", ok_a and ok_b,
           f"(a) slope in c = {sa:.3f} need {SLOPE_C} [median slots (success) {_sweep_line(a)}]; "
           f"(b) slope in delta = {sb:.3f} need {SLOPE_DELTA} [{_sweep_line(b)}]")


def test_ckseek_filter(capsys):
    ck = run(ExperimentConfig("ckseek", generator="affine", k_hat=4, delta_khat=5, trials=100, master_seed=4))
    cs = run(ExperimentConfig("cseek", generator="affine", trials=100, master_seed=4))
    assert [r["n"] for r in ck.records] == [r["n"] for r in cs.records]
    med = lambda recs, key: float(np.median([math.inf if r[key] is None else r[key] for r in recs]))
    ck_done, cs_done = med(ck.records, "discovery_slots"), med(cs.records, "discovery_slots")
    ck_budget, cs_budget = med(ck.records, "budget_slots"), med(cs.records, "budget_slots")
    ok = ck.summary["success_rate"] >= RATE and ck_done < cs_done and ck_budget < cs_budget
    report(capsys, "4 ckseek filter", ok,
           f"good neighbours all found {ck.summary['success_rate']:.2f} (need >= {RATE}); median slots to finish "
           f"ckseek {ck_done:.0f} vs cseek {cs_done:.0f}; median run length {ck_budget:.0f} vs {cs_budget:.0f}")


def test_edge_coloring(capsys):
    out = run(ExperimentConfig("cgcast", generator="random", gen_params=COLORING32, trials=100, master_seed=5))
    recs = out.records
    colored = [r for r in recs if r["colored"]]
    all_proper = all(r["proper"] for r in colored)
    rate = len(colored) / len(recs)
    budget = math.ceil(4 * math.log(32))
    within = all(r["phases_used"] <= budget for r in colored)
    ok = all_proper and within and rate >= RATE
    report(capsys, "5 edge coloring", ok,
           f"colored within {budget} phases {rate:.2f} (need >= {RATE}); proper with colors in [1, 2Δ] on "
           f"{sum(r['proper'] for r in colored)}/{len(colored)} colored trials; "
           f"max phases {max(r['phases_used'] for r in recs)}")


def _dissemination_formula(r):
    R = math.ceil(2 * math.log(r["n"]))
    return r["diam"] * 2 * r["delta"] * R * math.ceil(math.log2(r["delta"]))


def test_cgcast_informs_everyone(capsys):
    rnd = run_records(ExperimentConfig("cgcast", generator="random", gen_params=RANDOM16, trials=100,
                                       master_seed=6))
    tree = tree_records()
    rate_r = sum(r["all_informed"] for r in rnd) / len(rnd)
    rate_t = sum(r["all_informed"] for r in tree) / len(tree)
    arith = all(r["dissemination_slots"] == _dissemination_formula(r) for r in rnd + tree)
    ok = rate_r >= RATE and rate_t >= RATE and arith
    report(capsys, "6 cgcast", ok,
           f"all informed: random n=16 {rate_r:.2f}, depth-3 trees {rate_t:.2f} (need >= {RATE}); "
           f"dissemination slots = D*2Δ*R*ceil(lg Δ) on {sum(r['dissemination_slots'] == _dissemination_formula(r) for r in rnd + tree)}/{len(rnd + tree)}")


def test_tree_propagation_floor(capsys):
    tree = tree_records()
    c, delta = TREE3["c"], TREE3["delta"]
    floor = 3 * (min(c, delta) - 1)
    times = [r["all_informed_time"] for r in tree if r["all_informed_time"] is not None]
    ok = bool(times) and min(times) >= floor
    report(capsys, "7 tree propagation floor", ok,
           f"min all-informed time {min(times) if times else None} slots over {len(times)} runs (need >= {floor})")


def test_hitting_game_laws(capsys):
    # (a) uniform player, c=32, k=1
    a = run(ExperimentConfig("game-bipartite", c=32, k=1, player="uniform", max_rounds=10**7,
                             trials=GAMES, master_seed=8))
    rounds = [r["rounds"] for r in a.records]
    ks = ks_distance_geometric(rounds, 1 / 1024)
    early_a = sum(r["won"] and r["rounds"] <= 128 for r in a.records) / GAMES
    ok_a = ks < KS_MAX and early_a <= EARLY_WIN_MAX

    # (b) complete variant, c=16, every built-in player
    early_b = {}
    for player, scenario in (("uniform", "game-complete"), ("fresh-pair", "game-complete"),
                             ("reduction", "game-reduction")):
        k = 16
        cfg = ExperimentConfig(scenario, c=16, k=k, player=player, max_rounds=10**6, trials=GAMES, master_seed=8)
        recs = run(cfg).records
        early_b[player] = sum(r["won"] and r["rounds"] <= 5 for r in recs) / GAMES
    ok_b = all(p <= EARLY_WIN_MAX for p in early_b.values())

    # (c) reduction player against the real two-node trace, same seeds
    match = 0
    runs = 100
    for t in range(runs):
        inst = GameInstance.random(8, 2, np.random.default_rng(t))
        net = two_node_from_matching(8, inst.matching)
        res = run_protocol(net, seek_factory(SeekConfig()), 10**7, t, trace=True)
        fs = first_shared_slot(res.trace, shared_label_pairs(net))
        g = referee_play(inst, make_reduction_player(8, 2, t), 10**7)
        match += (g.won and fs is not None and g.rounds == fs + 1) or (not g.won and fs is None)
    ok_c = match == runs
    report(capsys, "8 hitting games", ok_a and ok_b and ok_c,
           f"(a) KS {ks:.4f} (need < {KS_MAX}), P[win <= 128] {early_a:.3f} (need <= {EARLY_WIN_MAX}); "
           f"(b) P[win <= 5] " + ", ".join(f"{p} {v:.3f}" for p, v in early_b.items()) +
           f" (need <= {EARLY_WIN_MAX}); (c) reduction matches trace {match}/{runs}")


def test_reproducibility(capsys):
    cases = [
        ExperimentConfig("count", m=8, trials=50, master_seed=9),
        ExperimentConfig("cseek", generator="random", gen_params=dict(RANDOM16), trials=8, master_seed=9),
        ExperimentConfig("ckseek", generator="affine", k_hat=4, delta_khat=5, trials=4, master_seed=9),
        ExperimentConfig("cgcast", generator="tree", gen_params=dict(TREE3), trials=4, master_seed=9),
        ExperimentConfig("game-bipartite", c=8, k=2, trials=200, master_seed=9),
        ExperimentConfig("game-reduction", c=4, k=2, trials=20, master_seed=9),
    ]
    same, par = 0, 0
    for cfg in cases:
        first = records_to_csv(run_records(cfg), cfg.scenario, cfg)
        again = records_to_csv(run_records(cfg), cfg.scenario, cfg)
        wide = ExperimentConfig.from_dict({**cfg.to_dict(), "workers": 2})
        parallel = records_to_csv(run_records(wide), wide.scenario, wide)
        same += first == again
        par += first == parallel
    ok = same == par == len(cases)
    report(capsys, "9 reproducibility", ok,
           f"rerun byte-identical {same}/{len(cases)}, serial vs parallel byte-identical {par}/{len(cases)}")
