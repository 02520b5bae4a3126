"""Rebuild oracles.json from scratch with exact rational arithmetic.

Independent of ruinkit: lattices, kernels and absorbing solves are written
out here directly with sympy rationals.  Run from the repository root:

    python3 tests/fixtures/derive_oracles.py
"""
import json
import pathlib
from itertools import product

import sympy as sp

VERSION = 1
OUT = pathlib.Path(__file__).with_name("oracles.json")


def exit_law(interior, steps, mu, holding, start):
    """Exact exit law of the walk on Z^d killed outside ``interior``.

    Each step in ``steps`` (and its negative) has probability ``mu``; the walk
    stays put with probability ``holding``.  Returns {boundary point: prob}.
    """
    pts = sorted(interior)
    index = {p: i for i, p in enumerate(pts)}
    moves = [s for s in steps] + [tuple(-c for c in s) for s in steps]
    n = len(pts)
    A = sp.eye(n)
    leak = {}
    for p in pts:
        i = index[p]
        A[i, i] -= holding
        for s in moves:
            q = tuple(a + b for a, b in zip(p, s))
            if q in index:
                A[i, index[q]] -= mu
            else:
                leak.setdefault(q, [0] * n)
                leak[q][i] += mu
    targets = sorted(leak)
    B = sp.Matrix(n, len(targets), lambda i, j: leak[targets[j]][i])
    X = A.LUsolve(B)
    row = index[start]
    return {q: X[row, j] for j, q in enumerate(targets)}


def as_rows(law):
    return [[list(q), str(v)] for q, v in sorted(law.items())]


def main():
    out = {"version": VERSION}

    # non-lazy line N=4: G_U(2,2), exit from 1, exit at 0 from 2 within 2 steps
    line = [(k,) for k in (1, 2, 3)]
    law = exit_law(line, [(1,)], sp.Rational(1, 2), 0, (1,))
    K = sp.Matrix([[0, sp.Rational(1, 2), 0], [sp.Rational(1, 2), 0, sp.Rational(1, 2)],
                   [0, sp.Rational(1, 2), 0]])
    G = (sp.eye(3) - K).inv()
    # paths 2 -> 1 -> 0 only (2 -> 3 -> ... cannot reach 0 in two steps)
    two_step = sp.Rational(1, 2) * sp.Rational(1, 2)
    out["line4"] = {"G22": str(G[1, 1]), "exit_from_1": as_rows(law),
                    "exit_at_0_by_2_from_2": str(two_step),
                    "spectrum": sorted(str(sp.nsimplify(v)) for v in K.eigenvals())}

    # lazy box N=2 in Z^2 (mu = 1/8, holding 1/2)
    box = [p for p in product(range(-2, 3), repeat=2)]
    steps = [(1, 0), (0, 1)]
    out["box2_N2"] = {
        "from_0_0": as_rows(exit_law(box, steps, sp.Rational(1, 8), sp.Rational(1, 2), (0, 0))),
        "from_1_-2": as_rows(exit_law(box, steps, sp.Rational(1, 8), sp.Rational(1, 2), (1, -2))),
    }

    # non-lazy triangle game N=6 (6 moves of 1/6)
    N = 6
    tri = [(a, b) for a in range(1, N) for b in range(1, N) if a + b < N]
    tsteps = [(1, 0), (0, 1), (1, -1)]
    out["triangle_N6"] = {
        "from_2_2": as_rows(exit_law(tri, tsteps, sp.Rational(1, 6), 0, (2, 2))),
        "beta0": str(sp.nsimplify(sp.Rational(1, 3) * (1 + 2 * sp.cos(2 * sp.pi / N)))),
    }

    # lazy box N=1: the corner (1,1) leaks 2 of its 8ths
    out["box2_N1_corner_row_sum"] = str(1 - sp.Rational(2, 8))

    # triangle N=4: phi0 = 1/sqrt(3) on 3 points, 12 dangling edges of weight 1/6
    phi = 1 / sp.sqrt(3)
    lhs = 12 * phi * sp.Rational(1, 6)
    rhs = (1 - sp.Rational(1, 3)) * 3 * phi
    assert sp.simplify(lhs - rhs) == 0
    out["triangle_N4_flux"] = str(sp.simplify(lhs))

    OUT.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
