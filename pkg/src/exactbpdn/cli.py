"""Command-line front end.

Subcommands: ``solve``, ``path``, ``feasible``, ``verify``, ``bench`` and ``gen``.
Exit codes: 0 success, 1 I/O or usage error, 2 convergence or verification
failure, 3 infeasible data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import generate_instance, read_matrix_market, read_vector, write_matrix_market, write_path
from .errors import (BPDNError, InfeasibleError, InvalidArgumentError, NonConvergenceError,
                     ParseError, PathStallError)
from .greedy import greedy_feasible
from .homotopy import solution_path
from .linalg import as_design_matrix
from .slow import SolverOptions, regularization_path, solve_bpdn
from .verify import dual_objective, fista_baseline, feasible_rescale, kkt_check, lipschitz_constant

EXIT_OK, EXIT_IO, EXIT_CONVERGENCE, EXIT_INFEASIBLE = 0, 1, 2, 3
BENCH_METHODS = ("alg1", "alg1-warm-alg3", "fista")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- config

@dataclass
class GridSpec:
    count: int
    lo: float
    hi: float
    include_zero: bool = False

    def expand(self, t0):
        """Decreasing grid ``t0 * logspace(hi .. lo)``, followed by ``0`` if requested."""
        ts = t0 * np.logspace(math.log10(self.hi), math.log10(self.lo), self.count)
        ts = list(ts) if self.count > 1 else [t0 * self.hi]
        if self.include_zero:
            ts.append(0.0)
        if any(a <= c for a, c in zip(ts, ts[1:])):
            raise UsageError("t-grid does not expand to a strictly decreasing sequence")
        return ts


def parse_grid(text, include_zero=False):
    """Parse ``"<count> log <lo> <hi> [--include-zero]"``."""
    tok = text.split()
    if "--include-zero" in tok:
        include_zero = True
        tok.remove("--include-zero")
    if len(tok) != 4 or tok[1] != "log":
        raise UsageError(f"bad t-grid {text!r}; expected '<count> log <lo> <hi> [--include-zero]'")
    try:
        count, lo, hi = int(tok[0]), float(tok[2]), float(tok[3])
    except ValueError:
        raise UsageError(f"bad t-grid {text!r}") from None
    if count < 1 or not 0 < lo <= hi:
        raise UsageError("t-grid needs count >= 1 and 0 < lo <= hi")
    if count > 1 and lo == hi:
        raise UsageError("t-grid with several points needs lo < hi")
    return GridSpec(count, lo, hi, include_zero)


def parse_gen(text):
    tok = text.split()
    if len(tok) != 4 or tok[3].lower() not in ("hdr", "ldr"):
        raise UsageError(f"bad --gen {text!r}; expected 'm n k {{hdr|ldr}}'")
    try:
        return int(tok[0]), int(tok[1]), int(tok[2]), tok[3].lower()
    except ValueError:
        raise UsageError(f"bad --gen {text!r}") from None


@dataclass
class Instance:
    name: str
    A: object
    b: np.ndarray
    meta: dict = field(default_factory=dict)


def load_instance(args):
    """Instance from ``--matrix/--rhs`` or from ``--gen/--seed``; exactly one source."""
    files = args.matrix is not None or args.rhs is not None
    gen = getattr(args, "gen", None)
    if files == (gen is not None):
        raise UsageError("give either --matrix and --rhs or --gen")
    if files:
        if args.matrix is None or args.rhs is None:
            raise UsageError("--matrix and --rhs must be given together")
        A = read_matrix_market(args.matrix)
        b = read_vector(args.rhs)
        if b.shape != (A.m,):
            raise ParseError(f"rhs has length {b.size}, matrix has {A.m} rows")
        return Instance(Path(args.matrix).stem, A, b, {"matrix": str(args.matrix), "rhs": str(args.rhs)})
    m, n, k, dr = parse_gen(gen)
    try:
        bundle = generate_instance(m, n, k, args.seed, dr)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    return Instance(bundle.metadata["name"], bundle.A, bundle.b, dict(bundle.metadata))


def solver_options(args, verify=True):
    return SolverOptions(tol_eq=args.tol_eq, tol_conv=args.tol_conv, verify=verify)


def t_values(args, A, b):
    t0 = float(np.max(np.abs(A.rmatvec(b))))
    if (args.t is None) == (args.t_grid is None):
        raise UsageError("give exactly one of --t and --t-grid")
    if args.t is not None:
        if not args.t >= 0 or math.isinf(args.t):
            raise UsageError("--t must be finite and nonnegative")
        return [float(args.t)]
    return parse_grid(args.t_grid, args.include_zero).expand(t0)


# ---------------------------------------------------------------- output

def sparse_triplets(x):
    idx = np.flatnonzero(x)
    return {"n": int(x.size), "idx": idx.tolist(), "val": [float(v) for v in x[idx]]}


def dense_from_triplets(obj):
    x = np.zeros(int(obj["n"]))
    if obj["idx"]:
        x[np.asarray(obj["idx"], dtype=np.intp)] = np.asarray(obj["val"], dtype=np.float64)
    return x


def _emit(args, text):
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(args.out).write_text(text, encoding="utf-8")


def _json(obj):
    return json.dumps(obj, indent=1, allow_nan=False)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def kkt_score(rep, b):
    """Single scaled residual: the largest of the four normalised KKT measures."""
    scale = 1.0 + float(np.max(np.abs(b)))
    return max(rep.stationarity / scale, rep.sign_consistency / scale,
               rep.dual_feasibility, rep.relative_gap)


def _solve_record(A, b, pair, report, wall):
    kkt = kkt_check(A, b, pair.t, pair.x, pair.p)
    return {
        "t": float(pair.t),
        "x": sparse_triplets(pair.x),
        "p": [float(v) for v in pair.p],
        "kkt": kkt.to_dict(),
        "kkt_pass": bool(kkt.passes(b)),
        "iterations": int(report.iterations),
        "wall_ms": 1000.0 * wall,
    }


# ---------------------------------------------------------------- commands

def cmd_solve(args):
    inst = load_instance(args)
    A, b = inst.A, inst.b
    ts = t_values(args, A, b)
    opts = solver_options(args)
    records = []
    p0, active = None, None
    for t in ts:
        start = time.perf_counter()
        pair, _, rep = solve_bpdn(A, b, t, p0=p0, opts=opts, warm_start=active)
        records.append(_solve_record(A, b, pair, rep, time.perf_counter() - start))
        p0, active = pair.p, rep.extra.get("active_set")
    if args.format == "csv":
        rows = [[r["t"], len(r["x"]["idx"]), r["kkt"]["stationarity"], r["kkt"]["dual_feasibility"],
                 r["kkt"]["sign_consistency"], r["kkt"]["gap"], r["iterations"], r["wall_ms"]]
                for r in records]
        _emit(args, _csv(["t", "nnz", "stationarity", "dual_feasibility", "sign_consistency",
                          "gap", "iterations", "wall_ms"], rows))
    else:
        _emit(args, _json({"command": "solve", "instance": inst.name, "m": A.m, "n": A.n,
                           "results": records}))
    if args.verify and not all(r["kkt_pass"] for r in records):
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_path(args):
    inst = load_instance(args)
    path = solution_path(inst.A, inst.b, solver_options(args))
    path.meta.update({"instance": inst.name})
    if args.format == "csv":
        rows = [[bp.t, int(np.count_nonzero(bp.x)), float(np.abs(bp.x).sum())]
                for bp in path.breakpoints]
        _emit(args, _csv(["t", "nnz", "l1_norm"], rows))
    else:
        buf = io.StringIO()
        write_path(path, buf)
        _emit(args, buf.getvalue())
    if args.verify:
        for bp in path.breakpoints:
            if not kkt_check(inst.A, inst.b, bp.t, bp.x, bp.p).passes(inst.b):
                return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_feasible(args):
    inst = load_instance(args)
    A, b = inst.A, inst.b
    opts = solver_options(args)
    start = time.perf_counter()
    pair, rep = greedy_feasible(A, b, opts)
    wall = time.perf_counter() - start
    out = {
        "command": "feasible",
        "instance": inst.name,
        "m": A.m,
        "n": A.n,
        "feasible": {
            "x": sparse_triplets(pair.x_f),
            "p": [float(v) for v in pair.p_f],
            "iterations": int(pair.iterations),
            "residual": float(np.max(np.abs(A.matvec(pair.x_f) - b))),
            "dual_norm": float(np.max(np.abs(A.rmatvec(pair.p_f)))),
            "wall_ms": 1000.0 * wall,
        },
    }
    code = EXIT_OK
    if args.continue_exact:
        start = time.perf_counter()
        ex, _, xrep = solve_bpdn(A, b, 0.0, p0=pair.p_f, opts=opts)
        out["exact"] = _solve_record(A, b, ex, xrep, time.perf_counter() - start)
        if args.verify and not out["exact"]["kkt_pass"]:
            code = EXIT_CONVERGENCE
    _emit(args, _json(out))
    return code


def cmd_verify(args):
    inst = load_instance(args)
    try:
        obj = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if "results" in obj:
        cands = obj["results"]
    elif "exact" in obj:
        cands = [obj["exact"]]
    else:
        cands = [obj]
    reports = []
    try:
        for c in cands:
            x = dense_from_triplets(c["x"]) if isinstance(c["x"], dict) else np.asarray(c["x"], float)
            p = np.asarray(c["p"], dtype=np.float64)
            t = float(c["t"]) if args.t is None else float(args.t)
            if x.shape != (inst.A.n,) or p.shape != (inst.A.m,):
                raise ParseError("solution dimensions do not match the instance")
            rep = kkt_check(inst.A, inst.b, t, x, p)
            reports.append({"t": t, "kkt": rep.to_dict(), "kkt_pass": bool(rep.passes(inst.b))})
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed solution entry: {exc}") from None
    _emit(args, _json({"command": "verify", "instance": inst.name, "reports": reports}))
    return EXIT_OK if all(r["kkt_pass"] for r in reports) else EXIT_CONVERGENCE


def cmd_gen(args):
    m, n, k, dr = parse_gen(args.gen)
    try:
        bundle = generate_instance(m, n, k, args.seed, dr)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    if args.out is None:
        raise UsageError("gen needs --out <directory>")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_market(bundle.A, out / "A.mtx")
    write_matrix_market(bundle.b, out / "b.mtx")
    write_matrix_market(bundle.x_ref, out / "x_ref.mtx")
    (out / "meta.json").write_text(_json(bundle.metadata), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- bench

def _read_instance_list(path, default_seed):
    specs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        tok = s.split()
        if tok[0] == "gen":
            if len(tok) not in (5, 6):
                raise ParseError("expected 'gen m n k {hdr|ldr} [seed]'", lineno)
            seed = int(tok[5]) if len(tok) == 6 else default_seed
            specs.append(("gen", " ".join(tok[1:5]), seed))
        elif len(tok) == 2:
            base = Path(path).parent
            specs.append(("files", str(base / tok[0]), str(base / tok[1])))
        else:
            raise ParseError("expected 'gen ...' or '<matrix> <rhs>'", lineno)
    return specs


def _materialise(spec):
    if spec[0] == "gen":
        m, n, k, dr = parse_gen(spec[1])
        bundle = generate_instance(m, n, k, spec[2], dr)
        return Instance(bundle.metadata["name"], bundle.A, bundle.b)
    A = read_matrix_market(spec[1])
    b = read_vector(spec[2])
    if b.shape != (A.m,):
        raise ParseError(f"rhs has length {b.size}, matrix has {A.m} rows")
    return Instance(Path(spec[1]).stem, A, b)


def _bench_alg1(A, b, ts, opts):
    pairs = regularization_path(A, b, ts, opts)
    return [(pr.t, pr.x, pr.p) for pr in pairs]


def _bench_alg1_greedy(A, b, ts, opts):
    pos = [t for t in ts if t > 0]
    out = [(pr.t, pr.x, pr.p) for pr in regularization_path(A, b, pos, opts)] if pos else []
    if len(pos) < len(ts):
        feas, _ = greedy_feasible(A, b, opts)
        pair, _, _ = solve_bpdn(A, b, 0.0, p0=feas.p_f, opts=opts)
        out.append((0.0, pair.x, pair.p))
    return out


def _bench_fista(A, b, ts, rel_tol):
    L = lipschitz_constant(A) * (1.0 + 1e-5)
    out, x = [], None
    for t in ts:
        if t == 0:
            continue
        res = fista_baseline(A, b, t, rel_tol=rel_tol, x0=x, L=L)
        out.append((t, res.x, res.p))
        x = res.x
    return out


def _bench_instance(spec, methods, grid, runs, opts, fista_tol):
    try:
        inst = _materialise(spec)
        A, b = as_design_matrix(inst.A), inst.b
        ts = grid.expand(float(np.max(np.abs(A.rmatvec(b)))))
    except (BPDNError, OSError) as exc:
        return [[spec[1], meth, grid.count + grid.include_zero, math.nan, math.nan, math.nan,
                 f"error:{type(exc).__name__}"] for meth in methods]
    rows = []
    for meth in methods:
        try:
            total = 0.0
            for _ in range(runs):
                start = time.perf_counter()
                if meth == "alg1":
                    sols = _bench_alg1(A, b, ts, opts)
                elif meth == "alg1-warm-alg3":
                    sols = _bench_alg1_greedy(A, b, ts, opts)
                else:
                    sols = _bench_fista(A, b, ts, fista_tol)
                total += time.perf_counter() - start
            worst = max(kkt_score(kkt_check(A, b, t, x, p), b) for t, x, p in sols)
            vsum = sum(dual_objective(b, t, feasible_rescale(A, p)) for t, x, p in sols if t > 0)
            rows.append([inst.name, meth, len(sols), total / runs, worst, vsum, "ok"])
        except BPDNError as exc:
            rows.append([inst.name, meth, len(ts), math.nan, math.nan, math.nan,
                         f"error:{type(exc).__name__}"])
    return rows


def worker_count(n_tasks):
    try:
        cap = int(os.environ.get("EXACTBPDN_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


def cmd_bench(args):
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    bad = [s for s in methods if s not in BENCH_METHODS]
    if bad or not methods:
        raise UsageError(f"unknown bench method(s) {bad}; choose from {', '.join(BENCH_METHODS)}")
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    grid = parse_grid(args.t_grid or "16 log 1e-4 1", args.include_zero)
    specs = []
    if args.instances:
        specs += _read_instance_list(args.instances, args.seed)
    for g in args.gen or []:
        parse_gen(g)
        specs += [("gen", g, args.seed + i) for i in range(args.count)]
    if args.matrix is not None or args.rhs is not None:
        if args.matrix is None or args.rhs is None:
            raise UsageError("--matrix and --rhs must be given together")
        specs.append(("files", args.matrix, args.rhs))
    if not specs:
        raise UsageError("bench needs --gen, --matrix/--rhs or --instances")
    opts = solver_options(args)
    with ThreadPoolExecutor(max_workers=worker_count(len(specs))) as pool:
        blocks = list(pool.map(
            lambda s: _bench_instance(s, methods, grid, args.runs, opts, args.fista_tol), specs))
    rows = [r for blk in blocks for r in blk]
    header = ["instance", "method", "grid_size", "seconds", "max_kkt", "dual_objective_sum", "status"]
    if args.format == "json":
        clean = [[None if isinstance(v, float) and math.isnan(v) else v for v in r] for r in rows]
        _emit(args, _json({"command": "bench", "rows": [dict(zip(header, r)) for r in clean]}))
    else:
        _emit(args, _csv(header, rows))
    return EXIT_OK if any(r[-1] == "ok" for r in rows) else EXIT_CONVERGENCE


# ---------------------------------------------------------------- parser

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--matrix", help="Matrix Market file for A")
    common.add_argument("--rhs", help="Matrix Market, text, or raw float64 (.bin/.raw/.f64) file for b")
    common.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    common.add_argument("--tol-eq", type=float, default=1e-8, dest="tol_eq")
    common.add_argument("--tol-conv", type=float, default=None, dest="tol_conv")
    common.add_argument("--out", help="output file (directory for gen); default stdout")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (default csv for bench, json otherwise)")
    common.add_argument("--verify", action="store_true",
                        help="exit 2 unless every returned pair passes the KKT check")

    single_gen = _Parser(add_help=False)
    single_gen.add_argument("--gen", help="generate 'm n k {hdr|ldr}' instead of reading files")

    grid = _Parser(add_help=False)
    grid.add_argument("--t", type=float, default=None)
    grid.add_argument("--t-grid", dest="t_grid",
                      help="'<count> log <lo> <hi> [--include-zero]', relative to ||A^T b||_inf")
    grid.add_argument("--include-zero", action="store_true", dest="include_zero")

    p = _Parser(prog="exactbpdn", description="Exact BPDN and basis pursuit solvers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common, single_gen, grid], help="solve at one t or a grid")
    sub.add_parser("path", parents=[common, single_gen], help="full homotopy path")
    f = sub.add_parser("feasible", parents=[common, single_gen], help="greedy feasible BP pair")
    f.add_argument("--continue-exact", action="store_true", dest="continue_exact",
                   help="continue to the exact BP solution from the feasible dual point")
    v = sub.add_parser("verify", parents=[common, single_gen], help="KKT check of a saved solution")
    v.add_argument("--solution", required=True, help="JSON written by solve or feasible")
    v.add_argument("--t", type=float, default=None, help="override the stored t")
    g = sub.add_parser("gen", parents=[common], help="write a generated instance")
    g.add_argument("--gen", required=True, help="'m n k {hdr|ldr}'")
    b = sub.add_parser("bench", parents=[common], help="timing and accuracy table")
    b.add_argument("--gen", action="append", help="'m n k {hdr|ldr}', repeatable")
    b.add_argument("--count", type=int, default=1, help="instances per --gen (seeds seed, seed+1, ...)")
    b.add_argument("--instances", help="file of 'gen m n k dr [seed]' or '<matrix> <rhs>' lines")
    b.add_argument("--methods", default=",".join(BENCH_METHODS))
    b.add_argument("--runs", type=int, default=5, help="timing runs averaged per method")
    b.add_argument("--t-grid", dest="t_grid", default=None)
    b.add_argument("--include-zero", action="store_true", dest="include_zero")
    b.add_argument("--fista-tol", type=float, default=1e-8, dest="fista_tol")
    return p


COMMANDS = {"solve": cmd_solve, "path": cmd_path, "feasible": cmd_feasible, "verify": cmd_verify,
            "bench": cmd_bench, "gen": cmd_gen}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.format is None:
            args.format = "csv" if args.command == "bench" else "json"
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"exactbpdn: usage error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ParseError) as exc:
        print(f"exactbpdn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InfeasibleError as exc:
        print(f"exactbpdn: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NonConvergenceError, PathStallError, BPDNError) as exc:
        print(f"exactbpdn: solver failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
