"""Command-line interface.

Exit status is 0 on success, 1 for invalid input (the message names the
violated invariant) and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import re
import sys

import numpy as np

from .absorbing import ExitDistribution, exit_by_time, greens_function, poisson_kernel, restrict
from .doob import doob_transform, poisson_via_doob
from .errors import NumericalError, RuinkitError, ValidationError
from .estimates import EstimateContext
from .graph_core import graph_to_dict
from .io import csv_text, dumps, loads, model_document, read_model_document, with_schema
from .models import ModelSpec, first_elimination_exact, generate
from .montecarlo import SimConfig, exit_time_profile, first_elimination, simulate_exits
from .spectral import full_decomposition, perron_pair, spectral_poisson
from .verify import SUITES, run_suite

ALIASES = {
    "line": ("Line", 1),
    "box": ("BoxZn", 2),
    "triangle": ("TriangleGame", 2),
    "game": ("TriangleGame", 2),
    "punctured": ("PuncturedCube", 3),
}


def parse_model(name: str, N, n=None, margin=None, lazy=None) -> ModelSpec:
    """Model names: line, box<n>, triangle, punctured<n>, or the kind names."""
    key = name.strip()
    m = re.fullmatch(r"(box|punctured)(\d+)", key.lower())
    if m:
        kind, dim = ALIASES[m.group(1)][0], int(m.group(2))
    elif key.lower() in ALIASES:
        kind, dim = ALIASES[key.lower()]
    elif key in ("Line", "BoxZn", "TriangleGame", "PuncturedCube"):
        kind, dim = key, 2 if key != "PuncturedCube" else 3
    else:
        raise ValidationError(f"unknown model {name!r}")
    if N is None:
        raise ValidationError("--N is required with --model")
    return ModelSpec(kind, int(N), int(n or dim), margin, lazy)


def _count(text) -> int:
    value = float(text)
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return int(value)


def _coords(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text}") from None


def _load(args):
    """(graph, domain, spec or None) from --model or from --input / stdin."""
    if getattr(args, "model", None):
        spec = parse_model(args.model, args.N, args.n, args.margin, args.lazy)
        g, d = generate(spec)
        return g, d, spec
    src = args.input
    text = sys.stdin.read() if src in (None, "-") else open(src).read()
    g, d, _ = read_model_document(loads(text))
    return g, d, None


def _point(graph, domain, args, attr="from_"):
    raw = getattr(args, attr, None)
    if raw is None:
        return _center(domain)
    if len(raw) == 1 and graph.coords is not None and graph.coords.shape[1] != 1:
        return graph.index_of_id(raw[0])
    return graph.index_of(raw)


def _center(domain):
    c = domain.clearance
    return int(domain.u[int(np.flatnonzero(c == c.max()).min())])


def _emit(args, text: str):
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w") as fh:
            fh.write(text)


def _coord_cols(graph, v):
    return [] if graph.coords is None else [int(c) for c in graph.coords[v]]


# ----------------------------------------------------------------------------
# commands


def cmd_model(args):
    spec = parse_model(args.kind, args.N, args.n, args.margin, args.lazy)
    g, d = generate(spec)
    _emit(args, dumps(model_document(g, d, spec), indent=0))


def cmd_exit(args):
    g, d, _ = _load(args)
    x = _point(g, d, args)
    sub = restrict(None, d)
    if args.t is not None:
        law = exit_by_time(sub, x, args.t, extended=args.extended)
    elif args.route == "green":
        law = poisson_kernel(sub, greens_function(sub), x, extended=args.extended)
    elif args.route == "doob":
        law = poisson_via_doob(doob_transform(sub, perron_pair(sub)), x, extended=args.extended)
    else:
        probs = spectral_poisson(full_decomposition(sub), x)
        law = ExitDistribution(d, x, None, "extended", probs, probs / g.pi[d.half_edges[:, 1]])
        if not args.extended:
            law = law.contract()
    dim = 0 if g.coords is None else g.coords.shape[1]
    ycols = [f"y{i + 1}" for i in range(dim)]
    if args.extended:
        header = ["y_id", *ycols, "z_id", "P", "p_density"]
        rows = [[int(g.ids[y]), *_coord_cols(g, y), int(g.ids[z]), float(p), float(q)]
                for (z, y), p, q in zip(d.half_edges, law.probs, law.densities)]
    else:
        header = ["y_id", *ycols, "P", "p_density"]
        rows = [[int(g.ids[y]), *_coord_cols(g, y), float(p), float(q)]
                for y, p, q in zip(d.boundary, law.probs, law.densities)]
    if args.format == "json":
        _emit(args, dumps(with_schema({"source": int(g.ids[x]), "horizon": args.t,
                                       "columns": header, "rows": rows})))
    else:
        _emit(args, csv_text(header, rows))


def cmd_eigen(args):
    g, d, _ = _load(args)
    sub = restrict(None, d)
    ids = g.ids[d.u]
    if args.top == 1 and not args.full:
        pair = perron_pair(sub)
        betas, phis = [pair.beta0], pair.phi0[:, None]
    else:
        dec = full_decomposition(sub)
        k = min(args.top, sub.size)
        betas, phis = dec.betas[:k].tolist(), dec.phis[:, :k]
    doc = {"beta": [float(b) for b in betas], "T_U": 1.0 / (1.0 - betas[0]),
           "phi0": {str(int(i)): float(v) for i, v in zip(ids, phis[:, 0])}}
    if args.full:
        doc["phi"] = [{str(int(i)): float(v) for i, v in zip(ids, phis[:, j])}
                      for j in range(phis.shape[1])]
    _emit(args, dumps(with_schema(doc)))


def cmd_doob(args):
    g, d, _ = _load(args)
    sub = restrict(None, d)
    pair = perron_pair(sub)
    chain = doob_transform(sub, pair)
    doc = {"beta0": pair.beta0, "T_U": pair.t_u,
           "row_sum_err": chain.row_sum_error(),
           "graph": graph_to_dict(chain.as_weighted_graph())}
    _emit(args, dumps(with_schema(doc), indent=0))


def cmd_verify(args):
    g, d, spec = _load(args)
    doc = {"suite": args.suite}
    if spec is not None:
        doc["model"] = spec.to_dict()
    doc.update(run_suite(args.suite, g, d, seed=args.seed))
    _emit(args, dumps(with_schema(doc)))


def cmd_simulate(args):
    if args.record == "first-elimination":
        if args.model is not None:
            spec = parse_model(args.model, args.N)
            if spec.kind != "TriangleGame":
                raise ValidationError("first-elimination needs the triangle game model")
        elif args.N is None:
            raise ValidationError("first-elimination needs --N")
        N = int(args.N)
        start = None
        if args.from_ is not None:
            if len(args.from_) != 2:
                raise ValidationError("--from takes the fortunes of A and B")
            a, b = args.from_
            start = (a, b, N - a - b)
        cfg = SimConfig(args.samples, args.seed, args.max_steps, "first-elimination")
        emp = first_elimination(N, start, cfg)
        exact = first_elimination_exact(N, start[:2] if start else None)
        header = ["cell", "count", "freq", "lo", "hi", "exact"]
        rows = [[*r, exact[r[0]]] for r in emp.rows()]
    else:
        g, d, _ = _load(args)
        x = _point(g, d, args)
        sub = restrict(None, d)
        cfg = SimConfig(args.samples, args.seed, args.max_steps, args.record)
        if args.record == "exit-time":
            prof = exit_time_profile(sub, x, cfg)
            t_u = perron_pair(sub).t_u
            checkpoints = args.t_list or [max(1, int(round(c * t_u))) for c in (0.25, 1, 4)]
            header = ["t", "cdf", "lo", "hi"]
            rows = [[int(t), prof.cdf(t), *prof.cdf_interval(t)] for t in checkpoints]
            emp = prof
        else:
            emp = simulate_exits(sub, x, cfg)
            header = ["cell", "count", "freq", "lo", "hi"]
            rows = [["%d-%d" % r[0] if isinstance(r[0], tuple) else r[0], *r[1:]]
                    for r in emp.rows()]
    rows.append(["censored", emp.censored, "", "", ""][: len(header)])
    _emit(args, csv_text(header, rows))


def cmd_report(args):
    g, d, spec = _load(args)
    sub = restrict(None, d)
    pair = perron_pair(sub)
    ctx = EstimateContext(sub, pair)
    law = poisson_kernel(sub, greens_function(sub), ctx.o)
    doc = {
        "vertices": g.n, "U": d.size, "boundary": int(d.boundary.size),
        "half_edges": int(d.half_edges.shape[0]),
        "beta0": pair.beta0, "T_U": pair.t_u,
        "center": int(g.ids[ctx.o]), "depth": ctx.R,
        "exit_from_center": {"total": float(law.probs.sum()), "max": float(law.probs.max()),
                             "min": float(law.probs.min())},
    }
    if spec is not None:
        doc = {"model": spec.to_dict(), **doc}
    _emit(args, dumps(with_schema(doc)))


# ----------------------------------------------------------------------------
# argument parsing


def _add_source(p, model_flag=True):
    p.add_argument("--input", help="model JSON path ('-' or omitted: stdin)")
    if model_flag:
        p.add_argument("--model", help="generate a model instead of reading JSON")
    p.add_argument("--N", type=int)
    p.add_argument("--n", type=int, help="dimension for boxes and the punctured cube")
    p.add_argument("--margin", type=int)
    lz = p.add_mutually_exclusive_group()
    lz.add_argument("--lazy", dest="lazy", action="store_true", default=None)
    lz.add_argument("--non-lazy", dest="lazy", action="store_false")


def _add_common(p):
    p.add_argument("--output", help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--seed", type=int, default=0)


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input: exit status 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ruinkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("model", help="emit a model as graph + domain JSON")
    p.add_argument("kind", help="line, box<n>, triangle, punctured<n>")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--margin", type=int)
    lz = p.add_mutually_exclusive_group()
    lz.add_argument("--lazy", dest="lazy", action="store_true", default=None)
    lz.add_argument("--non-lazy", dest="lazy", action="store_false")
    _add_common(p)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("exit", help="exit distribution from one point (CSV)")
    _add_source(p)
    _add_common(p)
    p.add_argument("--from", dest="from_", type=_coords, help="coordinates (or a vertex id)")
    p.add_argument("--t", type=int, help="finite horizon")
    p.add_argument("--extended", action="store_true", help="one row per dangling edge")
    p.add_argument("--route", choices=("green", "spectral", "doob"), default="green")
    p.set_defaults(func=cmd_exit)

    p = sub.add_parser("eigen", help="Perron pair / top of the spectrum (JSON)")
    _add_source(p)
    _add_common(p)
    p.add_argument("--top", type=int, default=1)
    p.add_argument("--full", action="store_true", help="emit every requested eigenfunction")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("doob", help="the transformed chain as a weighted graph (JSON)")
    _add_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_doob)

    p = sub.add_parser("verify", help="run an invariant suite (JSON)")
    p.add_argument("suite", choices=SUITES)
    _add_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo counts and Wilson intervals (CSV)")
    _add_source(p)
    _add_common(p)
    p.add_argument("--samples", type=_count, default=10**5)
    p.add_argument("--from", dest="from_", type=_coords)
    p.add_argument("--record", default="exit-point",
                   choices=("exit-point", "exit-half-edge", "first-elimination", "exit-time"))
    p.add_argument("--max-steps", type=_count)
    p.add_argument("--t-list", type=lambda s: [int(v) for v in s.split(",")],
                   help="checkpoints for exit-time")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="summary of a model (JSON)")
    _add_source(p)
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"ruinkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (RuinkitError, OSError) as exc:
        print(f"ruinkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
