"""Evaluation pipeline: score a decoding strategy over an instance set.

Per instance: optional active search, decode, feasibility check, then a
relative gap against a reference (the exact solver when the instance is
small enough, otherwise the best objective seen in the same run).  Rows and
aggregates go to CSV for comparison across strategies.
"""

import configparser
import hashlib
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import decoders, meta, net, oracles, solution_space
from .errors import MetricError, ParameterError
from .instances import read_dimacs, read_tsp, rng_for

VERSION = "metaheat-0.1.0"


def compute_drop(objective, reference, sense):
    """Relative gap in percent; positive means worse than the reference.
    Minimization compares objective above reference, maximization below."""
    if not reference > 0:
        raise MetricError(f"reference must be positive, got {reference}")
    if sense == "min":
        return (objective - reference) / reference * 100.0
    if sense == "max":
        return (reference - objective) / reference * 100.0
    raise ParameterError(f"unknown sense {sense!r}")


@dataclass
class EvalRow:
    instance: str
    objective: float
    reference: float
    drop_pct: float
    as_ms: float
    decode_ms: float
    decoder: str
    seed: int
    failed: bool = False


@dataclass
class EvalReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    @property
    def mean_objective(self):
        good = [r.objective for r in self.rows if not r.failed]
        return float(np.mean(good)) if good else float("nan")

    @property
    def mean_drop(self):
        good = [r.drop_pct for r in self.rows if not r.failed]
        return float(np.mean(good)) if good else float("nan")

    @property
    def total_ms(self):
        return float(sum(r.as_ms + r.decode_ms for r in self.rows))

    @property
    def any_failed(self):
        return any(r.failed for r in self.rows)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("instance,objective,reference,drop_pct,as_ms,decode_ms,decoder,seed\n")
            for r in self.rows:
                fh.write(f"{r.instance},{r.objective:.9f},{r.reference:.9f},"
                         f"{r.drop_pct:.9f},{r.as_ms:.3f},{r.decode_ms:.3f},"
                         f"{r.decoder},{r.seed}\n")


EVAL_DEFAULTS = {
    "problem": "tsp",
    "instance_dir": "",
    "ckpt": "",
    "heatmap": "ckpt",  # ckpt | rank | uniform
    "decoder": "sample",  # greedy | sample | mcts | two_opt
    "as_steps": 0,
    "as_alpha": 0.05,
    "as_K": 0,
    "K": 1024,
    "tau": 1.0,
    "budget": 20000,
    "seed": 0,
    "scope": "GNNOut+MLP",
}

_EVAL_TYPES = {"as_steps": int, "as_K": int, "K": int, "budget": int, "seed": int,
               "as_alpha": float, "tau": float}


def parse_scope(text):
    return tuple(s.strip() for s in text.split("+") if s.strip())


def load_config(path, section):
    """Flat key=value config; keys mirror the CLI flags."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (K vs k)
    read = cp.read(path)
    if not read:
        raise ParameterError(f"cannot read config file {path}")
    if not cp.has_section(section):
        raise ParameterError(f"config file {path} has no [{section}] section")
    return dict(cp[section])


def apply_overrides(cfg, overrides):
    for item in overrides:
        k, sep, v = item.partition("=")
        if not sep:
            raise ParameterError(f"override {item!r} is not key=value")
        cfg[k.strip()] = v.strip()
    return cfg


def _coerce(cfg, defaults, types):
    out = dict(defaults)
    for k, v in cfg.items():
        if k not in out:
            raise ParameterError(f"unknown config key {k!r}")
        out[k] = types[k](v) if k in types else v
    return out


def load_instances(directory, problem):
    exts = (".tsp",) if problem == "tsp" else (".dimacs", ".col", ".graph")
    files = sorted(f for f in os.listdir(directory) if f.endswith(exts))
    if not files:
        raise ParameterError(f"no {problem} instance files in {directory}")
    reader = read_tsp if problem == "tsp" else read_dimacs
    return [reader(os.path.join(directory, f)) for f in files]


def _reference(inst, problem, fallback):
    """Exact objective when the instance fits the oracle, else the best
    objective observed in this run."""
    if problem == "tsp" and inst.n <= oracles.HELD_KARP_MAX:
        return oracles.held_karp(inst).objective
    if problem == "mis" and inst.n <= oracles.EXACT_MIS_MAX:
        return oracles.exact_mis(inst).objective
    return fallback


def _base_theta(cfg, params, inst, problem):
    if cfg["heatmap"] == "rank":
        if problem != "tsp":
            raise ParameterError("rank heatmap applies to tours only")
        return decoders.rank_heatmap(inst)
    if cfg["heatmap"] == "uniform":
        return decoders.uniform_heatmap(inst, problem)
    if cfg["heatmap"] != "ckpt":
        raise ParameterError(f"unknown heatmap source {cfg['heatmap']!r}")
    if params is None:
        raise ParameterError("heatmap=ckpt needs a checkpoint path")
    theta, _ = (net.tsp_forward if problem == "tsp" else net.mis_forward)(
        params, inst, need_trace=False)
    return theta


def _decode(cfg, theta, inst, problem, rng):
    dec = cfg["decoder"]
    if dec == "greedy":
        return decoders.greedy_decode(theta, inst, rng)
    if dec == "sample":
        return decoders.sample_decode(theta, inst, cfg["K"], cfg["tau"], rng)
    if dec == "mcts":
        if problem != "tsp":
            raise ParameterError("tree-search decoding applies to tours only")
        return decoders.mcts_decode(theta, inst, cfg["budget"], rng)
    if dec == "two_opt":
        if problem != "tsp":
            raise ParameterError("2-opt applies to tours only")
        seeded = decoders.greedy_decode(theta, inst, rng)
        return decoders.two_opt(inst, seeded)
    raise ParameterError(f"unknown decoder {dec!r}")


def eval_run(cfg, instances=None, params=None):
    """Run one decoding strategy over an instance set and score every row."""
    cfg = _coerce(cfg, EVAL_DEFAULTS, _EVAL_TYPES)
    problem = cfg["problem"]
    if problem not in ("tsp", "mis"):
        raise ParameterError(f"unknown problem {problem!r}")
    if instances is None:
        if not cfg["instance_dir"]:
            raise ParameterError("config needs instance_dir")
        instances = load_instances(cfg["instance_dir"], problem)
    ckpt_hash = ""
    if params is None and cfg["ckpt"]:
        params, _, _ = net.load_params(cfg["ckpt"])
        with open(cfg["ckpt"], "rb") as fh:
            ckpt_hash = hashlib.sha256(fh.read()).hexdigest()[:12]
    sense = "min" if problem == "tsp" else "max"
    scope = parse_scope(cfg["scope"])
    rows = []
    results = []
    for idx, inst in enumerate(instances):
        rng = rng_for(cfg["seed"], 707, idx)
        t0 = time.perf_counter()
        failed = False
        theta = _base_theta(cfg, params, inst, problem)
        if cfg["as_steps"] > 0:
            if params is None or cfg["heatmap"] != "ckpt":
                raise ParameterError("active search needs heatmap=ckpt")
            theta = meta.active_search(params, inst, cfg["as_steps"],
                                       cfg["as_alpha"], scope, rng,
                                       K=cfg["as_K"], tau=cfg["tau"])
        as_ms = (time.perf_counter() - t0) * 1000.0
        t1 = time.perf_counter()
        sol = _decode(cfg, theta, inst, problem, rng)
        decode_ms = (time.perf_counter() - t1) * 1000.0
        ok, violations = solution_space.check_feasible(inst, sol, problem)
        if not ok:
            failed = True
            objective = float("nan")
            warnings.warn(f"instance {inst.id} produced an infeasible solution: "
                          f"{violations[:3]}")
        else:
            objective = sol.cost if problem == "tsp" else float(sol.size)
        rows.append((inst, objective, as_ms, decode_ms, failed))
        results.append(objective)
    finite = [r for r in results if np.isfinite(r)]
    best = (min(finite) if sense == "min" else max(finite)) if finite else float("nan")
    out = []
    for (inst, objective, as_ms, decode_ms, failed) in rows:
        if failed:
            out.append(EvalRow(inst.id, objective, float("nan"), float("nan"),
                               as_ms, decode_ms, cfg["decoder"], cfg["seed"], True))
            continue
        ref = _reference(inst, problem, best)
        drop = compute_drop(objective, ref, sense)
        out.append(EvalRow(inst.id, objective, ref, drop, as_ms, decode_ms,
                           cfg["decoder"], cfg["seed"]))
    meta_info = {"version": VERSION, "seed": cfg["seed"], "decoder": cfg["decoder"],
                 "ckpt_hash": ckpt_hash, "config": dict(cfg)}
    return EvalReport(rows=out, metadata=meta_info)
