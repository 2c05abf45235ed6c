"""Command line entry point: ``dpcube <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .applications import LabeledSchema, accuracy, assign_blocks, reduction_ratio, train_id3
from .cube import counts_from_coords
from .estimate import estimate
from .io import (
    FormatError,
    config_hash,
    load_coords,
    load_release,
    load_schema,
    read_csv_table,
    read_queries,
    save_release,
    write_csv,
)
from .partition import KdParams, default_xi0, release_cell, release_dpcube, split_budget
from .privacy import BudgetExceeded, BudgetLedger, NoiseSource
from .workload import abs_errors, generate_workload, size_bands

log = logging.getLogger("dpcube")

#: Mixed into the release seed to get the workload seed.
EVAL_SEED_MASK = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    pass


def _provenance(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    return {"config_hash": config_hash(cfg), "seed": getattr(args, "seed", None)}


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args) -> None:
    schema = load_schema(args.schema)
    x = counts_from_coords(load_coords(args.data, schema), schema)
    doc = {"schema": schema.to_dict(), "counts": [int(v) for v in x.values], "provenance": _provenance(args)}
    (_outdir(args) / "counts.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"{int(x.total)} records into {schema.m} cells")


def cmd_release(args) -> None:
    if args.alpha is None or args.alpha <= 0:
        raise ConfigError("--alpha must be positive")
    schema = load_schema(args.schema)
    x = counts_from_coords(load_coords(args.data, schema), schema)
    ledger = BudgetLedger(args.alpha)
    src = NoiseSource(args.seed)
    if args.strategy == "cell":
        h = release_cell(x, args.alpha, ledger, src)
    else:
        try:
            alpha1, alpha2 = split_budget(args.alpha, args.alpha1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        xi0 = default_xi0(alpha1) if args.xi0 is None else args.xi0
        if xi0 < 0:
            raise ConfigError("--xi0 must be >= 0")
        h = release_dpcube(x, alpha1, alpha2, KdParams(xi0=xi0), ledger, src)
    out = _outdir(args)
    save_release(h, out / "release.json", _provenance(args))
    (out / "ledger.jsonl").write_text(ledger.to_jsonl(), encoding="utf-8")
    print(f"released {schema.m} cells and {len(h.boxes)} subcubes; spent {ledger.spent!r} of {ledger.total_alpha!r}")


def cmd_query(args) -> None:
    h = load_release(args.release)
    queries = read_queries(args.queries, h.schema)
    rows = [(qid, args.method, estimate(q, h, args.method).value) for qid, q in queries]
    write_csv(_outdir(args) / "estimates.csv", ["query_id", "method", "estimate"], rows, _provenance(args))


def cmd_evaluate(args) -> None:
    schema = load_schema(args.schema)
    x = counts_from_coords(load_coords(args.data, schema), schema)
    h = load_release(args.release)
    if h.schema != schema:
        raise ConfigError("release and schema differ")
    seed = (args.seed ^ EVAL_SEED_MASK) & 0xFFFFFFFFFFFFFFFF
    w = generate_workload(schema, args.queries, seed)
    sizes = w.sizes()
    methods = args.method or (["uniform", "ls", "cell"] if h.has_subcubes else ["cell"])
    bands = [("all", 1, schema.m)] + [(f"{a}-{b}", a, b) for a, b in size_bands(schema.m)]
    rows = []
    for method in methods:
        err = abs_errors(w, x, h, method)
        for name, a, b in bands:
            sel = (sizes >= a) & (sizes <= b)
            if not sel.any():
                continue
            rows.append(("dpcube-" + method if h.has_subcubes else method, name, int(sel.sum()),
                         float(err[sel].mean()), float(np.mean(err[sel] <= args.epsilon))))
    header = ["method", "size_band", "n_queries", "avg_abs_error", "empirical_usefulness"]
    for path in args.baseline or []:
        for r in read_csv_table(path):
            rows.append((r["method"], r["size_band"], r.get("n_queries", ""), r["avg_abs_error"],
                         r.get("empirical_usefulness", "")))
    write_csv(_outdir(args) / "evaluate.csv", header, rows, _provenance(args))


def _sweep_values(args):
    n = args.np
    if args.sweep == "s":
        return [("s", v, dict(s=v)) for v in range(1, n + 1)]
    if args.sweep == "alpha1":
        total = args.alpha1 + args.alpha2
        grid = [round(total * f, 12) for f in np.arange(1, 10) / 10]
        return [("alpha1", a, dict(alpha1=a, alpha2=total - a)) for a in grid]
    if args.sweep == "np":
        return [("n_p", v, dict(n_p=v, s=max(1, v // 2))) for v in range(1, 2 * n + 1)]
    if args.sweep == "gamma":
        return [("gamma", float(g), dict(gamma=float(g))) for g in range(0, 11)]
    if args.sweep == "eta":
        return [("eta", float(e), dict(eta=float(e))) for e in range(0, 11)]
    raise ConfigError(f"unknown sweep {args.sweep!r}")


def cmd_simulate(args) -> None:
    base = dict(n_p=args.np, s=min(args.s, args.np), alpha1=args.alpha1, alpha2=args.alpha2,
                gamma=args.gamma, eta=args.eta)
    rows = []
    for name, value, over in _sweep_values(args):
        p = analysis.SmoothnessParams(**{**base, **over})
        ls_err = analysis.ls_error_expected(p, mc=args.mc, seed=args.seed)
        rows.append((name, value, analysis.uniform_error_general(p), analysis.uniform_error_bound(p),
                     ls_err.mean, ls_err.se))
    header = ["parameter", "value", "E_H", "maxE_H", "E_LS", "se_LS"]
    write_csv(_outdir(args) / f"simulate_{args.sweep}.csv", header, rows, _provenance(args))


def cmd_classify(args) -> None:
    h = load_release(args.release)
    labeled = LabeledSchema.by_name(h.schema, args.class_dim)
    test = load_coords(args.test, h.schema)
    tree = train_id3(h, labeled, max_depth=args.max_depth, method=args.method)
    rows = [("release-" + args.method, accuracy(tree, labeled, test))]
    doc = {"release_tree": tree.to_dict(), "provenance": _provenance(args)}
    if args.data:
        exact = counts_from_coords(load_coords(args.data, h.schema), h.schema)
        exact_tree = train_id3(exact, labeled, max_depth=args.max_depth)
        rows.append(("exact", accuracy(exact_tree, labeled, test)))
        doc["exact_tree"] = exact_tree.to_dict()
    out = _outdir(args)
    (out / "tree.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    write_csv(out / "accuracy.csv", ["model", "accuracy"], rows, _provenance(args))


def cmd_blocking(args) -> None:
    h = load_release(args.release)
    a = assign_blocks(load_coords(args.data, h.schema), load_coords(args.data2, h.schema), h)
    write_csv(_outdir(args) / "blocking.csv", ["k", "reduction_ratio"], [(a.k, reduction_ratio(a))],
              _provenance(args))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpcube", description="Differentially private histogram release.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", default=".", help="output directory")
        return p

    p = add("ingest", cmd_ingest, "count records into cells")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)

    p = add("release", cmd_release, "release a noisy histogram")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", choices=["cell", "dpcube"], default="dpcube")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--alpha1", type=float, default=None, help="phase-one budget (default alpha/4)")
    p.add_argument("--xi0", type=float, default=None, help="variance threshold (default 4/alpha1^2)")
    p.add_argument("--seed", type=int, default=0)

    p = add("query", cmd_query, "answer queries from a release")
    p.add_argument("--release", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--method", choices=["uniform", "ls", "cell"], default="uniform")
    p.add_argument("--seed", type=int, default=None)

    p = add("evaluate", cmd_evaluate, "random-workload error of a release")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--release", required=True)
    p.add_argument("--queries", type=int, default=100_000)
    p.add_argument("--epsilon", type=float, default=float("inf"))
    p.add_argument("--method", action="append", choices=["uniform", "ls", "cell"])
    p.add_argument("--baseline", action="append", help="CSV with the same columns to append")
    p.add_argument("--seed", type=int, default=0)

    p = add("simulate", cmd_simulate, "expected-error sweeps")
    p.add_argument("--sweep", choices=["s", "alpha1", "np", "gamma", "eta"], default="s")
    p.add_argument("--np", type=int, default=11)
    p.add_argument("--s", type=int, default=5)
    p.add_argument("--alpha1", type=float, default=0.05)
    p.add_argument("--alpha2", type=float, default=0.15)
    p.add_argument("--gamma", type=float, default=5.0)
    p.add_argument("--eta", type=float, default=5.0)
    p.add_argument("--mc", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)

    p = add("classify", cmd_classify, "train ID3 from a release")
    p.add_argument("--release", required=True)
    p.add_argument("--class-dim", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--data", help="raw training records for an exact-count baseline")
    p.add_argument("--method", choices=["uniform", "ls", "cell"], default="uniform")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("blocking", cmd_blocking, "reduction ratio of release-based blocking")
    p.add_argument("--release", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--data2", required=True)
    p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, FormatError, BudgetExceeded, analysis.QuadratureError) as exc:
        print(f"dpcube {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"dpcube {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
