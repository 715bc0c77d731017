"""Command-line front end: solve, verify, bench.

Documents are JSON with every number an exact integer or ``p/q`` string;
outputs are deterministic for a fixed input and seed (no timestamps, keys
sorted), so repeated runs are byte-identical.  The only inexact field
anywhere is the wall-time column of the benchmark CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
import time

from arcticauction.core import (
    InstanceError,
    MarketInstance,
    compute_stats,
    format_rational,
    load_instance,
    parse_rational,
    perturb,
    PerturbationConfig,
)
from arcticauction.driver import GenericityExhausted, solve_instance
from arcticauction.errors import SolverError
from arcticauction.oracle import Certificate, Equilibrium, check_equilibrium
from arcticauction.randgen import random_instance


def equilibrium_doc(inst: MarketInstance, eq: Equilibrium) -> dict:
    spending_rows = [
        [b, g, format_rational(v)]
        for (b, g), v in sorted(
            eq.spending.items(),
            key=lambda kv: (inst.buyer_pos[kv[0][0]], inst.good_pos[kv[0][1]]),
        )
    ]
    quantity_rows = [
        [b, g, format_rational(v)]
        for (b, g), v in sorted(
            eq.quantities.items(),
            key=lambda kv: (inst.buyer_pos[kv[0][0]], inst.good_pos[kv[0][1]]),
        )
    ]
    return {
        "prices": {g: format_rational(eq.prices[g]) for g in inst.goods},
        "spending": spending_rows,
        "refunds": {b: format_rational(eq.refunds[b]) for b in inst.buyers},
        "quantities": quantity_rows,
    }


def certificate_doc(cert: Certificate) -> dict:
    return {
        "pass": cert.ok,
        "conditions": [
            {"name": c.name, "ok": c.ok, "violations": list(c.violations)}
            for c in cert.conditions
        ],
    }


def cmd_solve(args: argparse.Namespace) -> int:
    try:
        inst = load_instance(args.input)
        magnitude = (
            parse_rational(args.perturb) if args.perturb is not None else None
        )
        outcome = solve_instance(
            inst,
            algorithm=args.algorithm,
            magnitude=magnitude,
            seed=args.seed,
            max_retries=args.max_retries,
        )
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GenericityExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    results = {}
    for name, (eq, trace) in sorted(outcome.results.items()):
        results[name] = {
            "equilibrium": equilibrium_doc(inst, eq),
            "certificate": certificate_doc(eq.certificate),
            "stats": trace.stats_doc(),
        }
    doc = {
        "perturbation": {
            "sigma": format_rational(outcome.magnitude),
            "seed": outcome.seed,
            "retries_used": outcome.retries_used,
        },
        "results": results,
    }
    payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(payload)
    else:
        sys.stdout.write(payload)
    if args.trace:
        lines = []
        for name, (_, trace) in sorted(outcome.results.items()):
            for line in trace.to_lines():
                lines.append(json.dumps({"algorithm": name, **line}, sort_keys=True))
        with open(args.trace, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines) + "\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        inst = load_instance(args.input)
        with open(args.solution, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except (InstanceError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        sigma = parse_rational(doc["perturbation"]["sigma"])
        seed = int(doc["perturbation"]["seed"])
        results = doc["results"]
    except (KeyError, TypeError) as exc:
        print(f"error: malformed solution document ({exc})", file=sys.stderr)
        return 1
    target = perturb(inst, PerturbationConfig(magnitude=sigma, seed=seed))

    all_ok = True
    for name in sorted(results):
        section = results[name]["equilibrium"]
        try:
            prices = {g: parse_rational(v) for g, v in section["prices"].items()}
            spending = {
                (row[0], row[1]): parse_rational(row[2])
                for row in section["spending"]
            }
            refunds = {b: parse_rational(v) for b, v in section["refunds"].items()}
        except (InstanceError, KeyError, IndexError, TypeError) as exc:
            print(f"error: malformed equilibrium section ({exc})", file=sys.stderr)
            return 1
        cert = check_equilibrium(target, prices, spending, refunds)
        all_ok = all_ok and cert.ok
        print(f"[{name}] {'PASS' if cert.ok else 'FAIL'}")
        for condition in cert.conditions:
            status = "ok" if condition.ok else "VIOLATED"
            print(f"  {condition.name}: {status}")
            for violation in condition.violations:
                print(f"    {violation}")
    return 0 if all_ok else 1


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    rows = []
    for n in sizes:
        for trial in range(args.trials):
            rng = random.Random(args.seed * 1000003 + n * 1009 + trial)
            inst = random_instance(n, rng)
            stats = compute_stats(inst)
            started = time.perf_counter()
            outcome = solve_instance(
                inst, algorithm="both", seed=args.seed + trial
            )
            wall_ms = int(1000 * (time.perf_counter() - started))
            strong_trace = outcome.results["strong"][1]
            rows.append(
                {
                    "n": stats.n,
                    "m": stats.m,
                    "trial": trial,
                    "algorithm": "both",
                    "phases": strong_trace.phase_count,
                    "augmentations": strong_trace.augmentations,
                    "restarts": strong_trace.restart_count,
                    "abundant_edges": len(strong_trace.abundant_discovered),
                    "wall_ms": wall_ms,
                }
            )
    fieldnames = [
        "n",
        "m",
        "trial",
        "algorithm",
        "phases",
        "augmentations",
        "restarts",
        "abundant_edges",
        "wall_ms",
    ]
    if args.csv:
        handle = open(args.csv, "w", newline="", encoding="utf-8")
    else:
        handle = sys.stdout
    try:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.csv:
            handle.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arctic-auction",
        description="Exact equilibrium solver for the Arctic Auction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve an instance file")
    solve.add_argument("--input", required=True, help="instance JSON path")
    solve.add_argument(
        "--algorithm", choices=["weak", "strong", "both"], default="both"
    )
    solve.add_argument("--output", help="write the result document here")
    solve.add_argument("--trace", help="write a JSON-lines step trace here")
    solve.add_argument(
        "--perturb",
        help="perturbation magnitude as p/q (default: invariant bound / 10^6)",
    )
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--max-retries", type=int, default=8)
    solve.set_defaults(func=cmd_solve)

    verify = sub.add_parser("verify", help="check a solution document")
    verify.add_argument("--input", required=True)
    verify.add_argument("--solution", required=True)
    verify.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="random-instance benchmark sweep")
    bench.add_argument("--sizes", required=True, help="comma-separated node counts")
    bench.add_argument("--trials", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--csv", help="write CSV here (default: stdout)")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
