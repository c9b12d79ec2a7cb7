"""Command line: ``online-alloc {gen,bench,diag}``.

``bench`` runs every (instance, algorithm, eps) cell over seeded random
orders and reports mean competitive ratio ``P/P*`` and mean wall time per
order. Order ``p`` uses seed ``seed XOR splitmix64(p)``, so adding orders
never changes earlier ones.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics
from .algorithms import run_algorithm
from .generators import (
    WorstCaseSpec,
    build_worst_case,
    derive_seed,
    make_rng,
    random_linear_instance,
    sample_permutation,
    splitmix64,
)
from .lp import offline_optimum
from .model import Instance, gamma_of_instance, load_instance, save_instance

CSV_HEADER = ("instance", "algorithm", "eps", "mean_cr", "std_cr", "mean_time_s", "perms")
EPS_ALGORITHMS = ("esa", "ola", "dla")
THREADS_ENV = "ONLINE_ALLOC_THREADS"


class UsageError(ValueError):
    pass


def parse_gen_spec(text: str, seed: int = 0) -> WorstCaseSpec:
    """``"d=3,c=30"`` -> :class:`WorstCaseSpec`."""
    fields = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"bad generator spec {text!r}; expected d=..,c=..")
        fields[key.strip()] = value.strip()
    try:
        d, c = int(fields.pop("d")), float(fields.pop("c"))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad generator spec {text!r}") from exc
    if fields:
        raise UsageError(f"unknown generator keys {sorted(fields)}")
    try:
        return WorstCaseSpec(d, c, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _split_list(values, cast=str):
    out = []
    for v in values or ():
        out += [cast(s) for s in str(v).split(",") if s.strip()]
    return out


def resolve_threads(flag):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            flag = int(env)
        except ValueError as exc:
            raise UsageError(f"{THREADS_ENV} must be an integer") from exc
    if flag is None:
        flag = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    if flag < 1:
        raise UsageError("threads must be >= 1")
    return flag


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    sources: tuple  # ("gen", text) or ("file", path)
    algorithms: tuple
    eps: tuple
    perms: int
    instances: int = 1
    seed: int = 0
    fmt: str = "csv"
    out: str | None = None
    threads: int = 1
    gamma: float | None = None
    timing: bool = True

    def validate(self):
        if self.perms < 1 or self.instances < 1:
            raise UsageError("perms and instances must be >= 1")
        if not self.algorithms:
            raise UsageError("need at least one algorithm")
        for a in self.algorithms:
            if a not in EPS_ALGORITHMS and not (a.startswith("krtv") and (a[4:] == "" or a[4:].isdigit())):
                raise UsageError(f"unknown algorithm {a!r}")
            if a.startswith("krtv") and a[4:] and int(a[4:]) < 1:
                raise UsageError("krtv period must be >= 1")
        if any(a in EPS_ALGORITHMS for a in self.algorithms) and not self.eps:
            raise UsageError("esa/ola/dla need --eps")
        for e in self.eps:
            if not 0 < e < 1:
                raise UsageError(f"eps must lie in (0, 1), got {e}")
        if self.fmt not in ("csv", "md"):
            raise UsageError("format must be csv or md")


@dataclass(frozen=True)
class Cell:
    instance: str
    algorithm: str
    eps: float | None
    ratios: np.ndarray
    times: np.ndarray

    @property
    def eps_label(self) -> str:
        return "" if self.eps is None else f"{self.eps:g}"


def _load_group(source, count: int, seed: int):
    """Label plus the list of instances behind one column group."""
    kind, value = source
    if kind == "file":
        try:
            inst = load_instance(value)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read instance {value!r}: {exc}") from exc
        return Path(value).stem, [inst]
    base = parse_gen_spec(value)
    stream = splitmix64(seed)
    insts = [build_worst_case(WorstCaseSpec(base.d, base.c, derive_seed(stream, j))) for j in range(count)]
    return base.label, insts


_WORKER = {}


def _init_worker(instances):
    _WORKER["instances"] = instances


def _one_run(args):
    idx, name, eps, gamma, seed, p, p_star = args
    inst = _WORKER["instances"][idx]
    sigma = sample_permutation(inst.n, make_rng(derive_seed(seed, p)))
    res = run_algorithm(name, inst, sigma, eps, gamma)
    if not res.feasible:
        raise RuntimeError(f"{name} produced an infeasible allocation")
    return res.objective / p_star, res.elapsed


def run_bench(cfg: BenchConfig) -> list:
    cfg.validate()
    groups = [_load_group(src, cfg.instances, cfg.seed) for src in cfg.sources]
    flat, owners = [], []
    for g, (_, insts) in enumerate(groups):
        for inst in insts:
            flat.append(inst)
            owners.append(g)
    solved = []
    for inst in flat:
        p_star, _, _ = offline_optimum(inst)
        if not p_star > 0:
            raise UsageError("offline optimum must be positive")
        gamma = cfg.gamma if cfg.gamma is not None else gamma_of_instance(inst, p_star).gamma
        solved.append((p_star, gamma))

    plan = []
    for a in cfg.algorithms:
        for e in (cfg.eps if a in EPS_ALGORITHMS else (None,)):
            plan.append((a, e))

    tasks = []
    for g in range(len(groups)):
        for a, e in plan:
            for idx in (i for i, o in enumerate(owners) if o == g):
                p_star, gamma = solved[idx]
                tasks += [(idx, a, e, gamma, cfg.seed, p, p_star) for p in range(cfg.perms)]

    if cfg.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(cfg.threads, initializer=_init_worker, initargs=(flat,)) as pool:
            results = list(pool.map(_one_run, tasks, chunksize=max(1, len(tasks) // (8 * cfg.threads))))
    else:
        _init_worker(flat)
        results = [_one_run(t) for t in tasks]

    cells = []
    pos = 0
    for g, (label, insts) in enumerate(groups):
        for a, e in plan:
            size = len(insts) * cfg.perms
            chunk = np.array(results[pos : pos + size], dtype=float).reshape(size, 2)
            pos += size
            cells.append(Cell(label, a, e, chunk[:, 0], chunk[:, 1]))
    return cells


def format_csv(cells, timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in cells:
        t = f"{c.times.mean():.6g}" if timing else ""
        w.writerow([c.instance, c.algorithm, c.eps_label, f"{c.ratios.mean():.6f}", f"{c.ratios.std():.6f}", t, c.ratios.size])
    return buf.getvalue()


def format_markdown(cells, timing: bool = True) -> str:
    """Rows per (algorithm, eps); a (CR, time) column pair per instance."""
    labels = list(dict.fromkeys(c.instance for c in cells))
    keys = list(dict.fromkeys((c.algorithm, c.eps_label) for c in cells))
    index = {(c.instance, c.algorithm, c.eps_label): c for c in cells}
    head = ["algorithm"]
    for lab in labels:
        head += [f"{lab} CR", f"{lab} time (s)"]
    rows = []
    for a, e in keys:
        row = [a.upper() + (f" (eps={e})" if e else "")]
        for lab in labels:
            c = index.get((lab, a, e))
            row += ["" if c is None else f"{c.ratios.mean():.3f}"]
            row += ["" if c is None or not timing else f"{c.times.mean():.4g}"]
        rows.append(row)
    widths = [max(len(r[j]) for r in [head] + rows) for j in range(len(head))]

    def line(r):
        return "| " + " | ".join(s.ljust(w) for s, w in zip(r, widths)) + " |"

    out = [line(head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_bench(args) -> int:
    sources = [("gen", g) for g in args.gen or ()] + [("file", f) for f in args.instance or ()]
    if not sources:
        raise UsageError("bench needs --gen or --instance")
    cfg = BenchConfig(
        sources=tuple(sources),
        algorithms=tuple(a.lower() for a in _split_list(args.alg)),
        eps=tuple(_split_list(args.eps, float)),
        perms=args.perms,
        instances=args.instances,
        seed=args.seed,
        fmt=args.format,
        out=args.out,
        threads=resolve_threads(args.threads),
        gamma=args.gamma,
        timing=not args.no_timing,
    )
    cells = run_bench(cfg)
    text = format_csv(cells, cfg.timing) if cfg.fmt == "csv" else format_markdown(cells, cfg.timing)
    _emit(text, cfg.out)
    return 0


def cmd_gen(args) -> int:
    try:
        spec = WorstCaseSpec(args.d, args.c, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    inst = build_worst_case(spec)
    try:
        save_instance(inst, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    bid = float((inst.A_stack / inst.b[None, :, None]).max())
    print(f"n={inst.n} m={inst.m} k={inst.k} gamma={bid:.6g} -> {args.out}")
    return 0


def _diag_instance(args) -> Instance:
    if args.instance:
        return load_instance(args.instance)
    return build_worst_case(parse_gen_spec(args.gen, args.seed))


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value"])
    for t, v in zip(trace.steps, trace.values):
        w.writerow([int(t), repr(float(v))])
    return buf.getvalue()


def cmd_diag(args) -> int:
    if args.what == "martingale":
        inst = random_linear_instance(args.n, args.m, args.k, 0.7, args.seed)
        p_star, X, _ = offline_optimum(inst)
        checks = [diagnostics.exact_martingale_R(inst, X, i) for i in range(inst.m)]
        checks.append(diagnostics.exact_martingale_S(inst, X, p_star))
        gap = max(c.max_gap for c in checks)
        ok = all(c.passed(args.tol) for c in checks)
        print(f"exact: {'pass' if ok else 'fail'} (n={inst.n}, max gap {gap:.3g})")
        return 0 if ok else 1

    inst = _diag_instance(args)
    p_star, X, y = offline_optimum(inst)
    gamma = args.gamma if args.gamma is not None else gamma_of_instance(inst, p_star).gamma
    if args.what == "phi":
        sigma = sample_permutation(inst.n, make_rng(derive_seed(args.seed, args.perm_index)))
        trace = diagnostics.phi_trace(inst, sigma, args.eps, gamma, X, p_star)
        _emit(_trace_csv(trace), args.out)
        print(f"Phi first={trace.values[0]:.6g} last={trace.values[-1]:.6g} (2m={2 * inst.m})", file=sys.stderr)
        return 0

    stats = diagnostics.event_stats(inst, args.eps, gamma, args.perms, args.seed, (p_star, X, y))
    lines = [f"{'event':<14} {'estimate':>10} {'bound':>12} status"]
    for r in stats.rows():
        lines.append(f"{r.name:<14} {r.estimate:>10.4f} {r.bound:>12.4g} {r.status}")
    lines.append(f"{'perms':<14} {stats.perms:>10d}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="online-alloc", description="Online allocation benchmarks and diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="competitive ratio and time per order")
    b.add_argument("--gen", action="append", help="worst-case generator spec, e.g. d=3,c=30 (repeatable)")
    b.add_argument("--instance", action="append", help="instance JSON file (repeatable)")
    b.add_argument("--alg", action="append", required=True, help="comma list of esa, ola, dla, krtv, krtvK")
    b.add_argument("--eps", action="append", help="comma list of eps values")
    b.add_argument("--perms", type=int, default=100)
    b.add_argument("--instances", type=int, default=1, help="independent draws per --gen spec")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--gamma", type=float, default=None, help="override the ESA gamma")
    b.add_argument("--format", choices=("csv", "md"), default="csv")
    b.add_argument("--out", default=None)
    b.add_argument("--threads", type=int, default=None, help=f"worker processes (env {THREADS_ENV} wins)")
    b.add_argument("--no-timing", action="store_true", help="leave the time column empty (byte-stable output)")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("gen", help="write a worst-case instance as JSON")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--c", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("diag", help="martingale, Phi and event diagnostics")
    d.add_argument("what", choices=("phi", "events", "martingale"))
    d.add_argument("--gen", default="d=2,c=400")
    d.add_argument("--instance", default=None)
    d.add_argument("--eps", type=float, default=0.25)
    d.add_argument("--gamma", type=float, default=None)
    d.add_argument("--perms", type=int, default=100)
    d.add_argument("--perm-index", type=int, default=0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--n", type=int, default=5, help="martingale: item count (<= 8)")
    d.add_argument("--m", type=int, default=2)
    d.add_argument("--k", type=int, default=2)
    d.add_argument("--tol", type=float, default=1e-12)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_diag)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
