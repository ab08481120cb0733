"""Command-line surface: benchmarks, verification suites, streaming runs,
LSH collision curves, and dyadic-cover inspection.

Every run prints its fully resolved configuration to stderr; results go to
stdout (or --out) as JSON or CSV.  Exit code 0 iff every assertion in the
chosen run passes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import distributions as dists
from .dst import Dst, DstConfig, dyadic_cover
from .lsh import collision_curve
from .sketch import ExactCounters, LpSketch, parse_stream
from . import verify


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _print_config(args, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func" and v is not None}
    cfg.update(extra or {})
    print("config: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------

def cmd_cover(args):
    _print_config(args)
    parts = dyadic_cover(args.a, args.b, args.ulog)
    spans = " ".join("[%d,%d)" % p.span(args.ulog) for p in parts)
    _emit(args, (spans or "(empty)") + "\n")
    return 0


# ---------------------------------------------------------------------------

def _time_queries(dst, a, b, batches=5):
    """Median-of-batches wall time per split and per query, monotonic clock."""
    dst.range_sums(a, b, count_splits=True)  # warmup
    per_split, per_query = [], []
    for _ in range(batches):
        t0 = time.perf_counter_ns()
        _, splits = dst.range_sums(a, b, count_splits=True)
        dt = time.perf_counter_ns() - t0
        total = int(splits.sum())
        per_split.append(dt / max(total, 1))
        per_query.append(dt / len(a))
    return float(np.median(per_split)), float(np.median(per_query))


def _selected(args):
    return dists.DISTRIBUTIONS if args.dist == "all" else (args.dist,)


def cmd_bench(args):
    _print_config(args)
    rng = np.random.default_rng(args.seed)
    rows = []
    u = 1 << args.ulog
    n_queries = max(1, args.splits // (args.ulog * 2))
    a = rng.integers(0, u, n_queries, dtype=np.uint64)
    b = rng.integers(0, u, n_queries, dtype=np.uint64)
    a, b = np.minimum(a, b), np.maximum(a, b)
    split_ns = {}
    for dist in _selected(args):
        dst = Dst(DstConfig(args.ulog, dist, master_seed=args.seed))
        ns, _ = _time_queries(dst, a, b)
        split_ns[dist] = ns
        rows.append({"bench": "split", "distribution": dist, "ulog": args.ulog, "ns_per_split": ns})

    scaling = []
    for ulog in range(10, 31, 4):
        uu = 1 << ulog
        qa = rng.integers(0, uu, 4096, dtype=np.uint64)
        qb = rng.integers(0, uu, 4096, dtype=np.uint64)
        qa, qb = np.minimum(qa, qb), np.maximum(qa, qb)
        dst = Dst(DstConfig(ulog, dists.GAUSSIAN, master_seed=args.seed))
        _, per_query = _time_queries(dst, qa, qb)
        scaling.append((ulog, per_query))
        rows.append({"bench": "range_sum", "distribution": dists.GAUSSIAN,
                     "ulog": ulog, "ns_per_range_sum": per_query})

    # the ordering assertion needs all three distributions measured
    ok = len(split_ns) < 3 or (
        split_ns[dists.GAUSSIAN] < split_ns[dists.CAUCHY]
        and split_ns[dists.GAUSSIAN] < split_ns[dists.RANDOM_WALK])
    # latency must grow at most ~linearly in log U (generous noise factor)
    base_ulog, base_t = scaling[0]
    top_ulog, top_t = scaling[-1]
    linear_ok = top_t <= base_t * (top_ulog / base_ulog) * 2.0
    rows.append({"bench": "assertions", "gaussian_fastest": ok, "scaling_linear": bool(linear_ok)})
    if args.format == "csv":
        lines = ["bench,distribution,ulog,value"]
        for r in rows:
            val = r.get("ns_per_split", r.get("ns_per_range_sum", ""))
            lines.append(f"{r['bench']},{r.get('distribution','')},{r.get('ulog','')},{val}")
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, "\n".join(json.dumps(r) for r in rows) + "\n")
    return 0 if (ok and linear_ok) else 1


# ---------------------------------------------------------------------------

_SUITES = ("split", "marginal", "kwise", "ideal")


def cmd_verify(args):
    _print_config(args)
    reports = []
    suites = _SUITES if args.suite == "all" else (args.suite,)
    trials = args.trials

    def retry(fn):
        return verify.passes_with_retry(fn, (args.seed, args.seed ^ 0x9E3779B9))

    if "split" in suites:
        for dist in _selected(args):
            reports.append(retry(lambda s, d=dist: verify.check_split_theorem(d, 8, trials, s)))
    if "marginal" in suites:
        for dist in _selected(args):
            reports.append(retry(lambda s, d=dist: verify.check_marginal_theorem(
                d, 3, 9, 4, trials, args.hash, s)))
    if "kwise" in suites:
        reports.append(retry(lambda s: verify.check_kwise_theorem(2, 1, dists.GAUSSIAN, 6, trials, s)))
        reports.append(retry(lambda s: verify.check_kwise_theorem(4, 2, dists.GAUSSIAN, 6, trials, s)))
    if "ideal" in suites:
        reports.append(retry(lambda s: verify.check_ideal_equivalence(6, min(trials, 5000), s)))

    flat = []
    for rep in reports:
        for c in rep.get("checks", [rep]):
            flat.append(c)
    _emit(args, "\n".join(json.dumps(c) for c in flat) + "\n")
    return 0 if all(r["pass"] for r in reports) else 1


# ---------------------------------------------------------------------------

def cmd_stream(args):
    _print_config(args)
    with open(args.stream_file) as fh:
        a, b, delta = parse_stream(fh)
    sketch = LpSketch(args.p, args.r, args.ulog, seed=args.seed, hash_family=args.hash)
    sketch.update_many(a, b, delta)
    est = sketch.estimate()
    result = {"p": args.p, "r": args.r, "ulog": args.ulog, "seed": args.seed,
              "updates": len(a), "estimate": est}
    if args.ulog <= 24:
        oracle = ExactCounters(args.ulog)
        oracle.update_many(a, b, delta)
        d1, d2 = oracle.norms()
        truth = d1 if args.p == "l1" else d2**2
        result["oracle"] = truth
        result["relative_error"] = abs(est - truth) / truth if truth else 0.0
    _emit(args, json.dumps(result) + "\n")
    return 0


# ---------------------------------------------------------------------------

def cmd_lsh_collision(args):
    _print_config(args)
    distances = [int(x) for x in args.distances.split(",")]
    curve = collision_curve(args.W, distances, args.trials, args.ulog, args.seed)
    lines = ["D,probability,stderr"]
    for d, p, se in curve:
        lines.append(f"{d},{p:.6f},{se:.6f}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------

def main(argv=None):
    ap = argparse.ArgumentParser(prog="dyadsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, ulog=20):
        p.add_argument("--ulog", type=int, default=ulog, help="universe is 2^ulog")
        p.add_argument("--dist", default="all", choices=["all", "gaussian", "cauchy", "rw"])
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--hash", default="fast", choices=["fast", "poly2", "poly4"])
        p.add_argument("--format", default="json", choices=["json", "csv"])
        p.add_argument("--out", default=None)

    p = sub.add_parser("cover", help="print the dyadic cover of [a, b)")
    p.add_argument("a", type=int)
    p.add_argument("b", type=int)
    common(p, ulog=4)
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("bench", help="split/range-sum timings")
    common(p)
    p.add_argument("--splits", type=int, default=1_000_000, help="target split count per distribution")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="statistical verification suites")
    common(p, ulog=16)
    p.add_argument("--suite", default="all", choices=("all",) + _SUITES)
    p.add_argument("--trials", type=int, default=10_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stream", help="run a range-update stream through a sketch")
    p.add_argument("stream_file")
    common(p)
    p.add_argument("--p", default="l2", choices=["l1", "l2"])
    p.add_argument("--r", type=int, default=400)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("lsh-collision", help="Monte-Carlo collision-probability curve")
    common(p)
    p.add_argument("--W", type=float, default=122.0)
    p.add_argument("--m", type=int, default=1,
                   help="point dimension; coordinates shared between s and q cancel "
                        "in the collision indicator, so the curve depends only on D")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--distances", default="10,100,1000,10000,20000")
    p.set_defaults(func=cmd_lsh_collision)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
