"""Command-line entry points: instance generation, training, fine-tuning,
solving, oracle runs, and benchmark evaluation."""

import argparse
import os
import sys

import numpy as np

from . import bench, decoders, meta, net, oracles, solution_space
from .containers import read_container, write_container
from .errors import MetaheatError, ParameterError
from .instances import (gen_er, gen_tsp_uniform, read_cnf, read_dimacs,
                        read_tsp, reduce_cnf_to_mis, rng_for, write_dimacs,
                        write_tsp)

TRAIN_TYPES = {
    "steps": int, "batch": int, "t": int, "k": int, "seed": int, "n": int,
    "knn": int, "n_lo": int, "n_hi": int, "checkpoint_every": int,
    "alpha": float, "meta_lr": float, "meta_wd": float, "inner_wd": float,
    "tau": float, "p": float,
    "width": int, "gnn_layers": int, "mlp_layers": int, "gcn_layers": int,
    "mlp_blocks": int,
}
ARCH_KEYS = ("width", "gnn_layers", "mlp_layers", "gcn_layers", "mlp_blocks")


def _read_instance(path):
    if path.endswith(".tsp"):
        return read_tsp(path), "tsp"
    if path.endswith((".dimacs", ".col", ".graph")):
        return read_dimacs(path), "mis"
    raise ParameterError(f"unrecognized instance extension: {path}")


def _load_theta(path, problem, inst):
    meta_kv, arrays = read_container(path)
    if meta_kv.get("kind") != "theta":
        raise ParameterError(f"{path} is not a score-table container")
    if meta_kv.get("problem") != problem:
        raise ParameterError(f"score table is for {meta_kv.get('problem')}, "
                             f"instance is {problem}")
    theta = solution_space.Theta(problem, arrays["values"])
    theta.validate(inst)
    return theta


def _save_theta(path, theta, inst):
    write_container(path, {"kind": "theta", "problem": theta.problem,
                           "instance": inst.id}, {"values": theta.values})


def _write_solution(path, sol, problem):
    with open(path, "w") as fh:
        if problem == "tsp":
            fh.write(f"tour {len(sol.perm)}\n")
            fh.write(" ".join(str(int(v)) for v in sol.perm) + "\n")
        else:
            ids = [str(int(v)) for v in np.nonzero(sol.members)[0]]
            fh.write(f"set {len(sol.members)} {len(ids)}\n")
            fh.write(" ".join(ids) + "\n")


def _cmd_gen_tsp(args):
    insts = gen_tsp_uniform(args.n, args.count, args.seed,
                            k=args.k if args.k > 0 else None)
    os.makedirs(args.out_dir, exist_ok=True)
    for inst in insts:
        write_tsp(inst, os.path.join(args.out_dir, inst.id + ".tsp"))
    print(f"wrote {len(insts)} instances to {args.out_dir}")


def _cmd_gen_er(args):
    insts = gen_er(args.n_lo, args.n_hi, args.p, args.count, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    for inst in insts:
        write_dimacs(inst, os.path.join(args.out_dir, inst.id + ".dimacs"))
    print(f"wrote {len(insts)} instances to {args.out_dir}")


def _cmd_reduce_cnf(args):
    num_vars, clauses = read_cnf(args.cnf)
    stem = os.path.splitext(os.path.basename(args.cnf))[0]
    inst, nodes = reduce_cnf_to_mis(num_vars, clauses, id=stem)
    write_dimacs(inst, args.out)
    with open(args.out + ".map", "w") as fh:
        for node, (clause_idx, lit) in enumerate(nodes):
            fh.write(f"{node} {clause_idx} {lit}\n")
    print(f"{inst.n} nodes, {inst.edge_count} edges -> {args.out}")


def _train_config(args):
    raw = bench.load_config(args.config, "train") if args.config else {}
    raw = bench.apply_overrides(raw, args.override or [])
    cfg = meta.TrainConfig(problem=args.problem)
    arch = {}
    for key, val in raw.items():
        if key in ARCH_KEYS:
            arch[key] = TRAIN_TYPES[key](val)
        elif key == "scope":
            cfg.scope = bench.parse_scope(val)
        elif key == "standardize":
            cfg.standardize = val.strip().lower() in ("1", "true", "yes", "on")
        elif key == "instance_dir":
            cfg.instance_dir = val
        elif key == "t":
            cfg.T = int(val)
        elif key == "k":
            cfg.K = int(val)
        elif key in TRAIN_TYPES and hasattr(cfg, key):
            setattr(cfg, key, TRAIN_TYPES[key](val))
        else:
            raise ParameterError(f"unknown train config key {key!r}")
    cfg.arch = arch
    return cfg


def _cmd_train(args):
    cfg = _train_config(args)
    params, log = meta.train(cfg, out_path=args.out, resume=args.resume)
    log_path = args.log or (args.out + ".log.csv")
    with open(log_path, "w") as fh:
        fh.write("step,mean_cost,wall_ms\n")
        for step, cost, wall in log:
            fh.write(f"{step},{cost:.9f},{wall:.3f}\n")
    if log:
        print(f"trained {len(log)} steps; final mean cost {log[-1][1]:.4f}")
    print(f"checkpoint -> {args.out}; log -> {log_path}")


def _cmd_tune(args):
    params, _, _ = net.load_params(args.ckpt)
    inst, problem = _read_instance(args.instance)
    if problem != params.problem:
        raise ParameterError(f"checkpoint is for {params.problem}, "
                             f"instance is {problem}")
    rng = rng_for(args.seed, 606)
    theta = meta.active_search(params, inst, args.steps, args.alpha,
                               bench.parse_scope(args.scope), rng,
                               K=args.K, tau=args.tau)
    _save_theta(args.out, theta, inst)
    print(f"score table -> {args.out}")


def _cmd_solve(args):
    inst, problem = _read_instance(args.instance)
    rng = rng_for(args.seed, 707, 0)
    if args.theta:
        theta = _load_theta(args.theta, problem, inst)
    else:
        if not args.ckpt:
            raise ParameterError("solve needs --ckpt or --theta")
        params, _, _ = net.load_params(args.ckpt)
        if params.problem != problem:
            raise ParameterError(f"checkpoint is for {params.problem}, "
                                 f"instance is {problem}")
        if args.as_steps > 0:
            theta = meta.active_search(params, inst, args.as_steps, args.alpha,
                                       bench.parse_scope(args.scope), rng,
                                       tau=args.tau)
        else:
            fwd = net.tsp_forward if problem == "tsp" else net.mis_forward
            theta, _ = fwd(params, inst, need_trace=False)
    if args.decoder == "greedy":
        sol = decoders.greedy_decode(theta, inst, rng, start=args.start)
    elif args.decoder == "sample":
        sol = decoders.sample_decode(theta, inst, args.K, args.tau, rng)
    elif args.decoder == "mcts":
        if problem != "tsp":
            raise ParameterError("tree-search decoding applies to tours only")
        sol = decoders.mcts_decode(theta, inst, args.budget, rng, start=args.start)
    else:
        raise ParameterError(f"unknown decoder {args.decoder!r}")
    ok, violations = solution_space.check_feasible(inst, sol, problem)
    if not ok:
        raise MetaheatError(f"infeasible solution: {violations[:3]}")
    objective = sol.cost if problem == "tsp" else sol.size
    if args.out:
        _write_solution(args.out, sol, problem)
    print(f"{inst.id} {args.decoder} objective {objective}")


def _cmd_oracle(args):
    inst, problem = _read_instance(args.instance)
    m = args.method
    if m == "held-karp":
        res = oracles.held_karp(inst)
        print(f"{inst.id} optimal {res.objective:.6f} proven {res.proven} "
              f"({res.wall_ms:.1f} ms)")
    elif m == "exact-mis":
        res = oracles.exact_mis(inst)
        print(f"{inst.id} maximum {int(res.objective)} proven {res.proven} "
              f"nodes {res.nodes} ({res.wall_ms:.1f} ms)")
    elif m in ("nearest", "random", "farthest"):
        rng = rng_for(args.seed, 808)
        tour = oracles.insertion(inst, m, rng)
        cost = solution_space.tour_cost(inst, tour)
        print(f"{inst.id} {m}-insertion {cost:.6f}")
    elif m == "greedy-mis":
        sol = oracles.greedy_degree_mis(inst)
        print(f"{inst.id} greedy size {sol.size}")
    else:
        raise ParameterError(f"unknown oracle method {m!r}")


def _cmd_eval(args):
    cfg = bench.load_config(args.config, "eval")
    cfg = bench.apply_overrides(cfg, args.override or [])
    report = bench.eval_run(cfg)
    report.to_csv(args.out)
    print(f"{len(report.rows)} instances; mean objective "
          f"{report.mean_objective:.4f}, mean drop {report.mean_drop:.2f}% "
          f"-> {args.out}")
    if report.any_failed:
        print("some instances produced infeasible solutions", file=sys.stderr)
        sys.exit(1)


def build_parser():
    ap = argparse.ArgumentParser(prog="metaheat",
                                 description="score-table solvers for tours and node sets")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tsp", help="generate uniform tour instances")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=0, help="neighbor list size (0 = complete)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen_tsp)

    p = sub.add_parser("gen-er", help="generate random graphs")
    p.add_argument("--n-lo", type=int, required=True)
    p.add_argument("--n-hi", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen_er)

    p = sub.add_parser("reduce-cnf", help="convert a CNF formula to a graph instance")
    p.add_argument("--cnf", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reduce_cnf)

    p = sub.add_parser("train", help="meta-train a network")
    p.add_argument("--problem", choices=("tsp", "mis"), required=True)
    p.add_argument("--config", default="")
    p.add_argument("--override", action="append", metavar="K=V")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--log", default="")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("tune", help="fine-tune scores on one instance")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--scope", default="GNNOut+MLP")
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("solve", help="decode a solution for one instance")
    p.add_argument("--ckpt", default="")
    p.add_argument("--theta", default="", help="score-table container from tune")
    p.add_argument("--instance", required=True)
    p.add_argument("--decoder", choices=("greedy", "sample", "mcts"), default="greedy")
    p.add_argument("--as-steps", type=int, default=0, dest="as_steps")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--scope", default="GNNOut+MLP")
    p.add_argument("--K", type=int, default=1024)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=None, help="pin the tour start node")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("oracle", help="run an exact solver or classical heuristic")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", required=True,
                   choices=("held-karp", "exact-mis", "nearest", "random",
                            "farthest", "greedy-mis"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("eval", help="score a decoding strategy over an instance set")
    p.add_argument("--config", required=True)
    p.add_argument("--override", action="append", metavar="K=V")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (MetaheatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
