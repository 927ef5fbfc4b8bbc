"""Command line: gen, verify, norm, constants, search.

Every command takes --seed, --budget (restarts, optionally ``restarts:iterations``)
and --out.  JSON outputs carry ``"v": 1``.  Exit codes: 0 success (soft
warnings are listed but do not fail), 1 hard invariant failure, 2 usage,
I/O or schema error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

from .generate import BundleError, GeneratorConfig, InstanceBundle, generate
from .norms import Budget, ExponentPair, norm_bruteforce, norm_l2_exact, norm_lplq_ascent, operator_norm
from .operators import PositiveDyadic
from .suites import SUITES, run_suite
from .testing import gap_search, testing_report


class UsageError(Exception):
    pass


def _budget(text: str) -> tuple[int, int | None]:
    try:
        parts = [int(x) for x in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"budget must be RESTARTS or RESTARTS:ITERATIONS, got {text!r}")
    if len(parts) not in (1, 2) or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"budget must be positive integers, got {text!r}")
    return parts[0], (parts[1] if len(parts) == 2 else None)


def make_budget(args) -> Budget:
    restarts, iterations = args.budget
    return Budget(restarts=restarts, iterations=iterations or Budget.iterations, seed=args.seed)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(args, text: str, default_name: str) -> None:
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out = Path(args.out)
    if out.is_dir() or str(args.out).endswith(os.sep):
        out = out / default_name
    write_atomic(out, text if text.endswith("\n") else text + "\n")


def load_bundle(path: Path) -> InstanceBundle:
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return InstanceBundle.loads(text)
    except BundleError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _bundle_paths(target: Path) -> list[Path]:
    if target.is_dir():
        paths = sorted(target.glob("*.json"))
        if not paths:
            raise UsageError(f"{target}: no .json bundles found")
        return paths
    return [target]


# ------------------------------------------------------------------ commands

def cmd_gen(args) -> int:
    try:
        cfg = GeneratorConfig(n=args.n, depth=args.depth, weight_law=args.weight_law,
                              operator_kind=args.operator_kind, sparsity=args.sparsity,
                              seed=args.seed, p=args.p, q=args.q)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.count == 1:
        _emit(args, generate(cfg).dumps(), f"instance_{args.seed}.json")
        return 0
    if args.out is None:
        raise UsageError("--count > 1 needs --out DIRECTORY")
    out = Path(args.out)
    for k in range(args.count):
        b = generate(cfg.replace(seed=args.seed + k))
        write_atomic(out / f"instance_{args.seed + k}.json", b.dumps() + "\n")
    return 0


def cmd_verify(args) -> int:
    budget = make_budget(args)
    rows, fails, warns = [], 0, []
    for path in _bundle_paths(Path(args.target)):
        b = load_bundle(path)
        for c in run_suite(b, args.suite, budget):
            rows.append(dict(c.to_json(), bundle=path.name, seed=b.seed))
            if not c.passed:
                if c.hard:
                    fails += 1
                else:
                    warns.append(f"{path.name}: {c.name} ({c.detail or c.value})")
    report = {"v": 1, "suite": args.suite, "budget": {"restarts": budget.restarts, "iterations": budget.iterations,
                                                      "seed": budget.seed},
              "hard_failures": fails, "warnings": warns, "checks": rows}
    out = Path(args.out or "reports")
    write_atomic(out / f"verify_{args.suite}.json", json.dumps(report, indent=1) + "\n")
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["bundle", "seed", "name", "passed", "hard", "value", "detail"])
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in w.fieldnames})
    write_atomic(out / f"verify_{args.suite}.csv", buf.getvalue())
    for line in warns:
        print(f"warning: {line}", file=sys.stderr)
    print(f"{args.suite}: {len(rows)} checks, {fails} hard failures, {len(warns)} warnings")
    return 1 if fails else 0


def cmd_norm(args) -> int:
    b = load_bundle(Path(args.bundle))
    e = ExponentPair(args.p or b.e.p, args.q or b.e.q)
    budget = make_budget(args)
    if args.method == "svd":
        if not e.hilbert:
            raise UsageError("svd needs p = q = 2")
        est = norm_l2_exact(b.operator, b.mu, b.nu)
    elif args.method == "ascent":
        est = norm_lplq_ascent(b.operator, b.mu, b.nu, e, budget)
    elif args.method == "bruteforce":
        try:
            est = norm_bruteforce(b.operator, b.mu, b.nu, e, grid=args.grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        est = operator_norm(b.operator, b.mu, b.nu, e, budget, nonnegative=isinstance(b.operator, PositiveDyadic))
    _emit(args, est.dumps(), "norm.json")
    return 0


def cmd_constants(args) -> int:
    b = load_bundle(Path(args.bundle))
    e = ExponentPair(args.p or b.e.p, args.q or b.e.q)
    rep = testing_report(b.operator, b.mu, b.nu, e, make_budget(args), family_policy=args.policy,
                         meta={"seed": b.seed, "n": b.lattice.n, "depth": b.lattice.depth})
    _emit(args, json.dumps(rep.to_json(), indent=1), "constants.json")
    return 0


def cmd_search(args) -> int:
    if args.p is None:
        raise UsageError("search needs --p (the exponent pair is (p, p))")
    cfg = GeneratorConfig(n=1, depth=args.depth, operator_kind="haar", sparsity=args.sparsity, seed=args.seed)
    rep = gap_search(ExponentPair(args.p, args.p), cfg, make_budget(args), evaluations=args.evaluations)
    if args.out is None:
        sys.stdout.write(rep.to_csv())
        return 0
    out = Path(args.out)
    write_atomic(out / f"gap_trace_p{args.p:g}.csv", rep.to_csv())
    write_atomic(out / f"gap_trace_p{args.p:g}.json", json.dumps(rep.to_json(), indent=1) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twoweight", description="Two-weight dyadic testing experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--budget", type=_budget, default=(16, None),
                       help="optimizer budget RESTARTS[:ITERATIONS] (default 16)")
        p.add_argument("--out", default=None, help=out_help)

    g = sub.add_parser("gen", help="generate seeded instance bundles")
    common(g, "output file or directory (default stdout)")
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--depth", type=int, default=3)
    g.add_argument("--weight-law", default="log-uniform")
    g.add_argument("--operator-kind", default="positive")
    g.add_argument("--sparsity", type=float, default=0.5)
    g.add_argument("--p", type=float, default=2.0)
    g.add_argument("--q", type=float, default=2.0)
    g.add_argument("--count", type=int, default=1)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("verify", help="run an invariant suite on a bundle or a directory of bundles")
    common(v, "report directory (default ./reports)")
    v.add_argument("target")
    v.add_argument("--suite", choices=SUITES, default="core")
    v.set_defaults(func=cmd_verify)

    for name, func, helptext in (("norm", cmd_norm, "operator norm estimate"),
                                 ("constants", cmd_constants, "Sawyer and square-function testing constants")):
        c = sub.add_parser(name, help=helptext)
        common(c, "output file (default stdout)")
        c.add_argument("bundle")
        c.add_argument("--p", type=float, default=None)
        c.add_argument("--q", type=float, default=None)
        if name == "norm":
            c.add_argument("--method", choices=("auto", "svd", "ascent", "bruteforce"), default="auto")
            c.add_argument("--grid", type=int, default=40)
        else:
            c.add_argument("--policy", choices=("all", "carleson"), default=None)
        c.set_defaults(func=func)

    s = sub.add_parser("search", help="exploratory gap search over Haar multipliers")
    common(s, "directory for the CSV/JSON trace (default: CSV to stdout)")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--depth", type=int, default=4)
    s.add_argument("--evaluations", type=int, default=40)
    s.add_argument("--sparsity", type=float, default=0.5)
    s.set_defaults(func=cmd_search)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"twoweight {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"twoweight {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
