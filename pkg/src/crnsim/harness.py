"""Experiment configuration, trial orchestration, statistics and output.

Per-scenario success definitions:

* ``count``: estimate in ``[m, 4m]``.
* ``cseek``: every node discovers exactly its neighbour set.
* ``ckseek``: every node discovers all of its good neighbours (overlap >= k_hat).
* ``cgcast``: coloring completed and every node informed.
* ``game-*``: the player wins within the round cap.

Trial ``i`` uses seed ``mix(master_seed, i)``; from it the instance seed
and the protocol seed are derived, so two scenarios with the same master
seed run on the same instances.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cgcast import PIPELINE_MULTIPLIER, CGCastConfig, cgcast, coloring_violations
from .core import ConfigurationError
from .count import CountConfig, simulate_count
from .games import GameInstance, make_player, referee_play
from .rng import mix
from .seek import SeekConfig, good_neighbors, seek_budget, simulate_seek, true_neighbors
from .topology import (TopologyError, gen_affine_overlap, gen_complete_tree, gen_random, gen_star,
                       gen_two_node, load_instance)

SCENARIOS = ("count", "cseek", "ckseek", "cgcast", "game-bipartite", "game-complete", "game-reduction")
GENERATORS = {
    "random": gen_random,
    "star": gen_star,
    "tree": gen_complete_tree,
    "two_node": gen_two_node,
    "affine": gen_affine_overlap,
}
SWEEP_AXES = {"n": "n", "c": "c", "k": "k", "k_hat": "k_hat", "delta": "delta", "diam": "depth"}


EXECUTION_ONLY = ("workers", "out")


@dataclass
class ExperimentConfig:
    scenario: str
    generator: str | None = None
    gen_params: dict = field(default_factory=dict)
    instance_path: str | None = None
    # protocol constants
    A1: float | None = None  # resolved per scenario: 4 for discovery, 8 inside cgcast
    A2: float | None = None
    B: float = 4.0
    R: int | None = None
    count_delta: float = 0.5
    count_a: int = 8
    log_base: str = "lg"
    k_hat: int | None = None
    delta_khat: int | None = None
    # count scenario
    m: int = 1
    count_n: int = 64
    count_delta_max: int = 32
    # cgcast scenario
    source: int = 0
    # game scenarios
    c: int = 8
    k: int = 1
    player: str = "uniform"
    max_rounds: int = 100_000
    # run control
    trials: int = 100
    master_seed: int = 0
    slot_budget_cap: int | None = None
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        default = PIPELINE_MULTIPLIER if self.scenario == "cgcast" else 4.0
        if self.A1 is None:
            self.A1 = default
        if self.A2 is None:
            self.A2 = default

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        for name in ("A1", "A2", "B", "count_a"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.R is not None and self.R < 1:
            raise ConfigurationError("R must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"format must be csv or json, got {self.format!r}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.scenario in ("cseek", "ckseek", "cgcast"):
            if self.instance_path is None and self.generator not in GENERATORS:
                raise ConfigurationError(f"{self.scenario} needs instance_path or a generator in "
                                         f"{sorted(GENERATORS)}")
        if self.scenario == "ckseek" and self.k_hat is None:
            raise ConfigurationError("ckseek needs k_hat")
        if self.scenario == "count":
            CountConfig(self.count_n, self.count_delta_max, self.count_delta, self.count_a)
            if self.m < 0:
                raise ConfigurationError("m must be >= 0")
        if self.scenario.startswith("game"):
            if not (1 <= self.k <= self.c):
                raise ConfigurationError(f"need 1 <= k <= c, got k={self.k} c={self.c}")
            if self.max_rounds < 1:
                raise ConfigurationError("max_rounds must be >= 1")
        self.seek_config()
        if self.scenario == "cgcast":
            self.cgcast_config()

    def seek_config(self) -> SeekConfig:
        mode = "filter" if self.scenario == "ckseek" else "full"
        return SeekConfig(mode, self.k_hat if mode == "filter" else None,
                          self.delta_khat if mode == "filter" else None,
                          self.A1, self.A2, self.count_a, self.count_delta, self.log_base)

    def cgcast_config(self) -> CGCastConfig:
        return CGCastConfig(self.seek_config(), self.B, self.R)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        """Resolved config minus fields that cannot change a result (where and how wide it ran)."""
        d = self.to_dict()
        for key in EXECUTION_ONLY:
            d.pop(key)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}: bad JSON at line {e.lineno}: {e.msg}") from e


# -- record schemas ---------------------------------------------------------

INSTANCE_FIELDS = (("n", int), ("c", int), ("k", int), ("k_max", int), ("delta", int), ("diam", int))
SCHEMAS: dict[str, tuple[tuple[str, type], ...]] = {
    "count": (("trial", int), ("m", int), ("estimate", int), ("triggered_round", int), ("success", bool)),
    "cseek": (("trial", int),) + INSTANCE_FIELDS + (
        ("success", bool), ("sound", bool), ("missed", int), ("budget_slots", int),
        ("discovery_slots", int)),
    "cgcast": (("trial", int),) + INSTANCE_FIELDS + (
        ("success", bool), ("colored", bool), ("proper", bool), ("phases_used", int),
        ("all_informed", bool), ("all_informed_time", int), ("flagged", int),
        ("total_slots", int), ("dissemination_slots", int)),
    "game": (("game", str), ("c", int), ("k", int), ("player", str), ("trial", int),
             ("rounds", int), ("won", bool)),
}
SCHEMAS["ckseek"] = SCHEMAS["cseek"]


def schema_for(scenario: str):
    return SCHEMAS["game" if scenario.startswith("game") else scenario]


# -- trials -----------------------------------------------------------------

def trial_seed(master_seed: int, trial: int) -> int:
    return mix(master_seed, trial)


def make_instance(cfg: ExperimentConfig, seed: int):
    if cfg.instance_path is not None:
        return load_instance(cfg.instance_path)
    try:
        return GENERATORS[cfg.generator](**cfg.gen_params, seed=seed)
    except TypeError as e:
        raise ConfigurationError(f"bad gen_params for {cfg.generator}: {e}") from e


def _instance_fields(net) -> dict:
    p = net.params
    return {"n": p.n, "c": p.c, "k": p.k, "k_max": p.k_max, "delta": p.delta_max, "diam": p.diam}


def run_trial(cfg: ExperimentConfig, trial: int) -> dict:
    ts = trial_seed(cfg.master_seed, trial)
    sc = cfg.scenario
    if sc == "count":
        cc = CountConfig(cfg.count_n, cfg.count_delta_max, cfg.count_delta, cfg.count_a)
        r = simulate_count(cfg.m, cc, ts)
        return {"trial": trial, "m": cfg.m, "estimate": r.estimate, "triggered_round": r.triggered_round,
                "success": cfg.m <= r.estimate <= 4 * cfg.m}

    if sc.startswith("game"):
        game = "complete" if sc == "game-complete" else "bipartite"
        k = cfg.c if game == "complete" else cfg.k
        player_name = "reduction" if sc == "game-reduction" else cfg.player
        inst = GameInstance.random(cfg.c, k, np.random.default_rng(mix(ts, 1)))
        player = make_player(player_name, cfg.c, k, mix(ts, 2))
        cap = cfg.max_rounds if cfg.slot_budget_cap is None else min(cfg.max_rounds, cfg.slot_budget_cap)
        g = referee_play(inst, player, cap, np.random.default_rng(mix(ts, 2)))
        return {"game": game, "c": cfg.c, "k": k, "player": player_name, "trial": trial,
                "rounds": g.rounds, "won": g.won}

    net = make_instance(cfg, mix(ts, 1))
    proto_seed = mix(ts, 2)
    rec = {"trial": trial, **_instance_fields(net)}
    if sc in ("cseek", "ckseek"):
        scfg = cfg.seek_config()
        run = simulate_seek(net, scfg, proto_seed)
        truth = true_neighbors(net)
        required = truth if sc == "cseek" else good_neighbors(net, cfg.k_hat)
        found = [run.ids(u) for u in range(net.params.n)]
        sound = all(found[u] <= truth[u] for u in range(net.params.n))
        missed = sum(len(required[u] - found[u]) for u in range(net.params.n))
        if sc == "cseek":
            ok = sound and all(found[u] == truth[u] for u in range(net.params.n))
        else:
            ok = sound and missed == 0
        rec.update(success=ok, sound=sound, missed=missed, budget_slots=run.total_slots,
                   discovery_slots=run.discovery_time(required))
        return rec

    r = cgcast(net, cfg.source % net.params.n, b"message", cfg.cgcast_config(), proto_seed)
    proper = not coloring_violations(r.colors, net.params.delta_max)
    rec.update(success=r.success and proper, colored=r.colored, proper=proper,
               phases_used=r.phases_used, all_informed=r.all_informed,
               all_informed_time=r.all_informed_time, flagged=len(r.flagged_edges),
               total_slots=r.total_slots, dissemination_slots=r.slots["dissemination"])
    return rec


def _budget_check(cfg: ExperimentConfig) -> None:
    if cfg.slot_budget_cap is None or cfg.scenario not in ("cseek", "ckseek", "cgcast"):
        return
    net = make_instance(cfg, mix(trial_seed(cfg.master_seed, 0), 1))
    need = seek_budget(net.params, cfg.seek_config()).total_slots
    if need > cfg.slot_budget_cap:
        raise ConfigurationError(f"one discovery run needs {need} slots, above the cap {cfg.slot_budget_cap}")


def _run_one(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_records(cfg: ExperimentConfig) -> list[dict]:
    cfg.validate()
    _budget_check(cfg)
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if cfg.workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(_run_one, jobs))


# -- statistics -------------------------------------------------------------

METRIC = {"count": "estimate", "cseek": "discovery_slots", "ckseek": "discovery_slots",
          "cgcast": "total_slots", "game": "rounds"}


def _quantile(xs, p: float):
    """Inverted empirical CDF: smallest sample with CDF >= p."""
    s = sorted(xs)
    return s[max(0, math.ceil(p * len(s)) - 1)]


def summarize(records: list[dict], scenario: str) -> dict:
    """Success rate and order statistics of the scenario metric.

    Trials without a metric value (discovery never completed) count as
    censored at +infinity; a quantile that lands on them is reported as None.
    """
    key = "won" if scenario.startswith("game") else "success"
    metric = METRIC["game" if scenario.startswith("game") else scenario]
    out = {
        "trials": len(records),
        "success_rate": (sum(bool(r[key]) for r in records) / len(records)) if records else None,
        "metric": metric,
        "median": None, "p10": None, "p90": None,
    }
    vals = [math.inf if r.get(metric) is None else r[metric] for r in records]
    if vals:
        for name, p in (("median", 0.5), ("p10", 0.1), ("p90", 0.9)):
            q = _quantile(vals, p)
            out[name] = None if q == math.inf else q
    if scenario in ("cseek", "ckseek"):
        out["sound_rate"] = sum(r["sound"] for r in records) / len(records) if records else None
    return out


@dataclass
class RunOutput:
    config: ExperimentConfig
    records: list[dict]
    summary: dict


def run(cfg: ExperimentConfig) -> RunOutput:
    records = run_records(cfg)
    return RunOutput(cfg, records, summarize(records, cfg.scenario))


def fit_slope(xs, ys) -> dict:
    """Least-squares slope of log(y) on log(x), with RMS residual."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    return {"slope": float(slope), "intercept": float(icpt), "rms_residual": float(np.sqrt(np.mean(resid ** 2)))}


def sweep(cfg: ExperimentConfig, axis: str, values) -> dict:
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    cfg.validate()
    points, skipped = [], []
    for v in values:
        sub = dataclasses.replace(cfg, gen_params=dict(cfg.gen_params))
        if axis == "k_hat":
            sub.k_hat = v
        elif sub.scenario.startswith("game") and axis in ("c", "k"):
            setattr(sub, axis, v)
        else:
            sub.gen_params[SWEEP_AXES[axis]] = v
        try:
            out = run(sub)
        except (TopologyError, ConfigurationError) as e:
            skipped.append({"value": v, "reason": str(e)})
            continue
        points.append({"value": v, "summary": out.summary, "records": out.records})
    fit = None
    usable = [p for p in points if p["summary"]["median"]]
    if len(usable) >= 3:
        fit = fit_slope([p["value"] for p in usable], [p["summary"]["median"] for p in usable])
    return {"axis": axis, "points": points, "skipped": skipped, "fit": fit,
            "fit_refused": None if fit else f"need >= 3 values with a median, got {len(usable)}"}


# -- output -----------------------------------------------------------------

def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    return str(x)


def _parse(s: str, typ):
    if s == "":
        return None
    if typ is bool:
        return s == "true"
    return typ(s)


def records_to_csv(records: list[dict], scenario: str, config: ExperimentConfig | None = None) -> str:
    cols = [name for name, _ in schema_for(scenario)]
    buf = io.StringIO()
    if config is not None:
        buf.write("# config: " + json.dumps(config.provenance(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def records_from_csv(text: str, scenario: str) -> list[dict]:
    types = dict(schema_for(scenario))
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return [{k: _parse(v, types[k]) for k, v in row.items()} for row in rows]


def emit(records: list[dict], fmt: str, path, config: ExperimentConfig, summary: dict | None = None) -> Path:
    path = Path(path)
    if fmt == "csv":
        text = records_to_csv(records, config.scenario, config)
    elif fmt == "json":
        text = json.dumps({"config": config.provenance(), "summary": summary, "records": records},
                          sort_keys=True, indent=1) + "\n"
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror}") from e
    return path


def load_records(path, scenario: str | None = None) -> tuple[dict | None, list[dict]]:
    """Read back an emitted file: (config dict, records)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        return d["config"], d["records"]
    cfg = None
    if text.startswith("# config: "):
        cfg = json.loads(text.splitlines()[0][len("# config: "):])
    sc = scenario or (cfg or {}).get("scenario")
    if sc is None:
        raise ConfigurationError(f"{path}: no embedded config, pass the scenario")
    return cfg, records_from_csv(text, sc)
