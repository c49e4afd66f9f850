"""Command-line entry point for reproducible experiments.

Subcommands: generate (synthetic instances), search (tnale / tnls / brute),
landscape (neighborhood diagnostics), report (merged curves and summary).
All randomness flows from --seed through named substreams; reruns with the
same flags reproduce outputs byte-for-byte apart from recorded wall times.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import GenSpec, TopologyTemplate, generate, load_truth, success, template_adjacency, write_instance
from .landscape import ale_min_entry, build_landscape, min_entry_brute, unfolding_spectra
from .objective import (Evaluator, ObjectiveConfig, derive_rng, read_trace_csv,
                        write_structures_json, write_trace_csv)
from .search import (AleConfig, DEFAULT_GRID_CAP, GridCapExceededError,
                     TnaleConfig, TnlsConfig, brute_force, evals_to_success,
                     tnale, tnls)
from .solver import SolverConfig
from .structure import TnStructure, efficiency
from .tensor import load_tnsr, save_tnsr


def _grid_cap(args) -> int:
    env = os.environ.get("TNALE_GRID_CAP")
    if getattr(args, "grid_cap", None) is not None:
        return args.grid_cap
    if env:
        return int(env)
    return DEFAULT_GRID_CAP


def _write_manifest(outdir: Path, command: str, args: argparse.Namespace,
                    wall: float, outputs: list[str]) -> None:
    echo = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {
        "command": command,
        "config": echo,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": wall,
        "outputs": outputs,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def cmd_generate(args) -> int:
    t0 = time.time()
    outdir = Path(args.out)
    spec = GenSpec(template=TopologyTemplate(args.template, args.order),
                   phys_dim=args.dim, rank_range=(args.rank_lo, args.rank_hi),
                   permute=args.permute, core_std=args.core_std, seed=args.seed)
    result = generate(spec)
    write_instance(spec, result, outdir)
    _write_manifest(outdir, "generate", args, time.time() - t0,
                    ["target.tnsr", "truth.json", "manifest.json"])
    return 0


def _load_template(args, target) -> TnStructure:
    order = args.order if args.order is not None else target.order
    return template_adjacency(TopologyTemplate(args.template, order), args.dim)


def cmd_search(args) -> int:
    t0 = time.time()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    target = load_tnsr(args.input)
    template = _load_template(args, target)
    solver = SolverConfig(learning_rate=args.lr, max_iters=args.max_iters,
                          init_std=args.init_std, seed=args.seed)
    ocfg = ObjectiveConfig(lam=args.lam, solver=solver,
                           iters_per_eval=args.iters_per_eval)
    evaluator = Evaluator(target, ocfg, budget=args.budget)
    bounds = (args.rank_lo, args.rank_hi)

    if args.algo == "tnale":
        cfg = TnaleConfig(r1=args.r1, r2=args.r2, l0=args.l0, l=args.l,
                          ale=AleConfig(round_trips=args.d,
                                        permutation_search=args.permutation_search,
                                        rank_bounds=bounds),
                          restart_patience=args.restart_patience, seed=args.seed)
        trace = tnale(target, template, cfg, evaluator=evaluator)
        final = trace.final
    elif args.algo == "tnls":
        cfg = TnlsConfig(samples_per_iter=args.samples, max_iters=args.l,
                         radius_schedule=args.radius_decay,
                         permutation_search=args.permutation_search,
                         rank_bounds=bounds, seed=args.seed)
        trace = tnls(target, template, cfg, evaluator=evaluator)
        final = trace.final
    else:
        try:
            final = brute_force(target, template, bounds, cfg=ocfg,
                                evaluator=evaluator, cap=_grid_cap(args))
        except GridCapExceededError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        trace = None

    records = trace.records if trace is not None else evaluator.log
    write_trace_csv(records, outdir / "trace.csv")
    write_structures_json(records, outdir / "structures.json")
    result = {
        "algorithm": args.algo,
        "final_structure": final.structure.to_json_dict(),
        "objective": final.objective,
        "rse": final.rse,
        "compression_ratio": final.compression_ratio,
        "n_eval": evaluator.eval_count,
        "restarts": trace.restarts if trace is not None else 0,
        "wall_time_s": time.time() - t0,
    }
    if args.truth:
        truth, _ = load_truth(args.truth)
        result["eff"] = efficiency(final.structure, truth)
        result["success"] = success(final, truth)
        if trace is not None:
            result["evals_to_success"] = evals_to_success(trace, truth)
    with open(outdir / "result.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    _write_manifest(outdir, "search", args, time.time() - t0,
                    ["trace.csv", "structures.json", "result.json", "manifest.json"])
    return 0


def cmd_landscape(args) -> int:
    t0 = time.time()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    target = load_tnsr(args.input)
    template = _load_template(args, target)
    center = template.with_ranks([args.center_rank] * len(template.edges()))
    solver = SolverConfig(learning_rate=args.lr, max_iters=args.max_iters,
                          init_std=args.init_std, seed=args.seed)
    ocfg = ObjectiveConfig(lam=args.lam, solver=solver,
                           iters_per_eval=args.iters_per_eval)
    evaluator = Evaluator(target, ocfg)
    try:
        land = build_landscape(center, args.radius, args.include_graph_mode,
                               evaluator, rank_bounds=(args.rank_lo, args.rank_hi),
                               cap=_grid_cap(args), workers=args.workers)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    save_tnsr(land.tensor, outdir / "landscape.tnsr")

    spectra = unfolding_spectra(land)
    brute = min_entry_brute(land)
    fiber = ale_min_entry(land, round_trips=args.d)
    rng = derive_rng(args.seed, "reciprocal-check")
    checks = []
    shape = land.tensor.dims
    for _ in range(20):
        idx = tuple(int(rng.integers(0, s)) for s in shape)
        rec = evaluator.evaluate(land.decode(idx))
        entry = float(land.tensor.array[idx])
        checks.append(abs(1.0 / entry - rec.objective) <= 1e-12 * rec.objective)
    spectra["min_entry"] = {
        "brute_index": list(brute.index), "brute_value": brute.value,
        "ale_index": list(fiber.index), "ale_value": fiber.value,
        "ale_entry_reads": fiber.entry_reads,
        "agree": list(brute.index) == list(fiber.index),
    }
    spectra["reciprocal_check_pass"] = all(checks)
    with open(outdir / "spectra.json", "w") as fh:
        json.dump(spectra, fh, indent=2, sort_keys=True)
    _write_manifest(outdir, "landscape", args, time.time() - t0,
                    ["landscape.tnsr", "spectra.json", "manifest.json"])
    return 0


def cmd_report(args) -> int:
    t0 = time.time()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    runs = []
    for d in args.runs:
        d = Path(d)
        trace_path = d / "trace.csv"
        result_path = d / "result.json"
        if not trace_path.exists():
            print(f"error: no trace.csv under {d}", file=sys.stderr)
            return 2
        rows = read_trace_csv(trace_path)
        result = json.loads(result_path.read_text()) if result_path.exists() else {}
        runs.append((d.name, rows, result))
    if not runs:
        print("error: no runs given", file=sys.stderr)
        return 2

    with open(outdir / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "eval_index", "best_log_objective"])
        for name, rows, _ in runs:
            best = math.inf
            seen = set()
            for r in rows:
                if r["estimated"]:
                    continue
                best = min(best, r["objective"])
                if r["eval_index"] in seen:
                    continue
                seen.add(r["eval_index"])
                writer.writerow([name, r["eval_index"], f"{math.log10(best):.17g}"])

    by_algo: dict[str, list[dict]] = {}
    for name, _, result in runs:
        if result:
            by_algo.setdefault(result.get("algorithm", "unknown"), []).append(result)
    summary = {}
    for algo, results in by_algo.items():
        n_eval = [r["n_eval"] for r in results]
        effs = [r["eff"] for r in results if "eff" in r]
        succ = [r["success"] for r in results if "success" in r]
        summary[algo] = {
            "runs": len(results),
            "n_eval_mean": float(np.mean(n_eval)),
            "n_eval_std": float(np.std(n_eval)),
            "eff_mean": float(np.mean(effs)) if effs else None,
            "eff_std": float(np.std(effs)) if effs else None,
            "success_rate": float(np.mean(succ)) if succ else None,
        }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    _write_manifest(outdir, "report", args, time.time() - t0,
                    ["curves.csv", "summary.json", "manifest.json"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnale",
                                description="Tensor-network structure search")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic instance")
    g.add_argument("--template", required=True, choices=["tr", "tw", "peps", "ht", "mera", "fc"])
    g.add_argument("--order", type=int, required=True)
    g.add_argument("--dim", type=int, default=3)
    g.add_argument("--rank-lo", type=int, default=1)
    g.add_argument("--rank-hi", type=int, default=4)
    g.add_argument("--permute", action="store_true")
    g.add_argument("--core-std", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("search", help="run a structure search")
    s.add_argument("--algo", required=True, choices=["tnale", "tnls", "brute"])
    s.add_argument("--input", required=True)
    s.add_argument("--template", default="tr", choices=["tr", "tw", "peps", "ht", "mera", "fc"])
    s.add_argument("--order", type=int, default=None,
                   help="template order (defaults to the target's order)")
    s.add_argument("--dim", type=int, default=3)
    s.add_argument("--lambda", dest="lam", type=float, default=200.0)
    s.add_argument("--rank-lo", type=int, default=1)
    s.add_argument("--rank-hi", type=int, default=7)
    s.add_argument("--r1", type=int, default=2)
    s.add_argument("--r2", type=int, default=1)
    s.add_argument("--l0", type=int, default=2)
    s.add_argument("--l", type=int, default=30)
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--samples", type=int, default=60)
    s.add_argument("--radius-decay", type=float, default=0.7)
    s.add_argument("--restart-patience", type=int, default=5)
    s.add_argument("--permutation-search", action="store_true")
    s.add_argument("--budget", type=int, default=None)
    s.add_argument("--truth", default=None)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--init-std", type=float, default=0.1)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--iters-per-eval", type=int, default=None)
    s.add_argument("--grid-cap", type=int, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    ls = sub.add_parser("landscape", help="materialize a neighborhood landscape")
    ls.add_argument("--input", required=True)
    ls.add_argument("--template", default="tr", choices=["tr", "tw", "peps", "ht", "mera", "fc"])
    ls.add_argument("--order", type=int, default=None)
    ls.add_argument("--dim", type=int, default=3)
    ls.add_argument("--lambda", dest="lam", type=float, default=200.0)
    ls.add_argument("--center-rank", type=int, default=2)
    ls.add_argument("--radius", type=int, default=1)
    ls.add_argument("--rank-lo", type=int, default=1)
    ls.add_argument("--rank-hi", type=int, default=7)
    ls.add_argument("--include-graph-mode", action="store_true")
    ls.add_argument("--d", type=int, default=1)
    ls.add_argument("--lr", type=float, default=1e-3)
    ls.add_argument("--init-std", type=float, default=0.1)
    ls.add_argument("--max-iters", type=int, default=5000)
    ls.add_argument("--iters-per-eval", type=int, default=None)
    ls.add_argument("--grid-cap", type=int, default=None)
    ls.add_argument("--workers", type=int, default=1)
    ls.add_argument("--seed", type=int, default=0)
    ls.add_argument("--out", required=True)
    ls.set_defaults(func=cmd_landscape)

    r = sub.add_parser("report", help="merge traces and summarize runs")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
