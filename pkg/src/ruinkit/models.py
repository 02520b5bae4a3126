"""Lattice models: the line, boxes in Z^n, the three-player ruin triangle and
the punctured cube.

Each generator returns a finite patch of the ambient lattice (the domain, its
boundary and ``margin`` extra layers) together with the domain.  Vertices are
numbered in lexicographic coordinate order.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .domain import Domain, build_domain
from .errors import NoClosedForm, NoSurrogate, SpecInvalid
from .graph_core import WeightedGraph

KINDS = ("Line", "BoxZn", "TriangleGame", "PuncturedCube")

# offsets for the three-player game in (X_A, X_B) coordinates: a transfer
# between A and C, B and C, or A and B
TRIANGLE_STEPS = ((1, 0), (0, 1), (1, -1))


@dataclass(frozen=True)
class ModelSpec:
    """Model parameters.

    ``lazy=None`` picks the usual convention per kind: the line and the
    triangle game are non-lazy, boxes and the punctured cube are lazy.
    ``margin=None`` means 2N layers beyond the boundary.
    """

    kind: str
    N: int
    n: int = 2
    margin: int | None = None
    lazy: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecInvalid(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if int(self.N) != self.N or self.N < 2:
            if not (self.kind == "BoxZn" and self.N == 1):
                raise SpecInvalid("N must be an integer >= 2 (N >= 1 for boxes)")
        if self.kind == "TriangleGame" and self.N < 3:
            raise SpecInvalid("the triangle needs N >= 3 to have interior points")
        if int(self.n) != self.n or self.n < 1:
            raise SpecInvalid("dimension n must be >= 1")
        if self.kind == "PuncturedCube" and self.n < 2:
            raise SpecInvalid("the punctured cube needs n >= 2")
        if self.margin is not None and self.margin < 1:
            raise SpecInvalid("margin must be >= 1")

    @property
    def pad(self) -> int:
        return 2 * self.N if self.margin is None else int(self.margin)

    @property
    def is_lazy(self) -> bool:
        if self.lazy is not None:
            return bool(self.lazy)
        return self.kind in ("BoxZn", "PuncturedCube")

    @property
    def dim(self) -> int:
        if self.kind == "Line":
            return 1
        if self.kind == "TriangleGame":
            return 2
        return self.n

    def to_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N, "n": self.dim, "margin": self.pad,
                "lazy": self.is_lazy}


def _lattice(lo, hi, steps, mu, keep=None):
    """Patch of a translation-invariant lattice on the box [lo, hi] (inclusive).

    ``steps`` lists one offset per undirected edge class; ``keep`` optionally
    masks the box.  Returns a WeightedGraph with pi = 1.
    """
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    shape = tuple(hi - lo + 1)
    grid = np.indices(shape).reshape(len(shape), -1).T + lo
    mask = np.ones(grid.shape[0], dtype=bool) if keep is None else keep(grid)
    rank = np.full(grid.shape[0], -1, dtype=np.int64)
    rank[mask] = np.arange(int(mask.sum()))
    coords = grid[mask]
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(len(shape))])

    def lookup(pts):
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        out[inside] = rank[(pts[inside] - lo) @ strides]
        return out

    edges = []
    truncated = np.zeros(coords.shape[0], dtype=bool)
    for s in steps:
        s = np.asarray(s)
        fwd = lookup(coords + s)
        bwd = lookup(coords - s)
        truncated |= (fwd < 0) | (bwd < 0)
        ok = fwd >= 0
        edges.append(np.stack([np.flatnonzero(ok), fwd[ok]], axis=1))
    edges = np.concatenate(edges)
    return WeightedGraph(np.ones(coords.shape[0]), edges, np.full(edges.shape[0], mu),
                         coords=coords, truncated=truncated)


def _unit_steps(n):
    return [tuple(int(i == j) for j in range(n)) for i in range(n)]


def generate(spec: ModelSpec) -> tuple[WeightedGraph, Domain]:
    """Ambient patch and domain for a model."""
    N, m = int(spec.N), spec.pad
    lazy = spec.is_lazy
    if spec.kind == "Line":
        g = _lattice([-m], [N + m], _unit_steps(1), 0.25 if lazy else 0.5)
        c = g.coords[:, 0]
        u = np.flatnonzero((c >= 1) & (c <= N - 1))
    elif spec.kind in ("BoxZn", "PuncturedCube"):
        n = spec.n
        mu = 1.0 / (4 * n) if lazy else 1.0 / (2 * n)
        L = N + 1 + m
        g = _lattice([-L] * n, [L] * n, _unit_steps(n), mu)
        inside = np.all(np.abs(g.coords) <= N, axis=1)
        if spec.kind == "PuncturedCube":
            inside &= np.any(g.coords != 0, axis=1)
        u = np.flatnonzero(inside)
    else:
        mu = 1.0 / 12 if lazy else 1.0 / 6
        g = _lattice([-m, -m], [N + m, N + m], TRIANGLE_STEPS, mu,
                     keep=lambda p: p.sum(axis=1) <= N + m)
        x1, x2 = g.coords[:, 0], g.coords[:, 1]
        u = np.flatnonzero((x1 > 0) & (x2 > 0) & (x1 + x2 < N))
    return g, build_domain(g, u)


# ----------------------------------------------------------------------------
# closed forms


@dataclass(frozen=True)
class ClosedFormEigen:
    """Closed-form Perron pair; ``phi0`` is indexed like ``domain.u`` and has pi(phi0^2) = 1."""

    beta0: float
    phi0: np.ndarray
    valid: bool = True


def _closed_form_raw(spec: ModelSpec, coords):
    N = spec.N
    if spec.kind == "Line":
        beta = np.cos(np.pi / N)
        phi = np.sin(np.pi * coords[:, 0] / N)
    elif spec.kind == "BoxZn":
        theta = np.pi / (2 * (N + 1))
        beta = np.cos(theta)
        phi = np.prod(np.cos(theta * coords), axis=1)
    elif spec.kind == "TriangleGame":
        a = 2 * np.pi / N
        beta = (1 + 2 * np.cos(a)) / 3
        x1, x2 = coords[:, 0], coords[:, 1]
        phi = np.sin(a * x1) + np.sin(a * x2) - np.sin(a * (x1 + x2))
    else:
        raise NoClosedForm(f"no closed-form eigenpair for {spec.kind}")
    if spec.is_lazy:
        # the lazy kernel is (I + K) / 2 of the non-lazy one
        beta = 0.5 * (1 + beta)
    return float(beta), phi


def closed_form_eigen(spec: ModelSpec, domain: Domain | None = None) -> ClosedFormEigen:
    """Explicit Perron eigenvalue and eigenfunction where the model has one."""
    if spec.kind not in ("Line", "BoxZn", "TriangleGame"):
        raise NoClosedForm(f"no closed-form eigenpair for {spec.kind}")
    if domain is None:
        _, domain = generate(ModelSpec(spec.kind, spec.N, spec.n, 1, spec.lazy))
    coords = domain.graph.coords[domain.u]
    beta, phi = _closed_form_raw(spec, coords)
    pi = domain.graph.pi[domain.u]
    phi = phi / np.sqrt(np.sum(phi * phi * pi))
    return ClosedFormEigen(beta, phi, True)


def phi0_surrogate(spec: ModelSpec, x) -> float:
    """Two-sided comparison profile for phi0 (not an eigenfunction).

    Triangle: N^-7 x1 x2 (x1+x2)(N-x1)(N-x2)(N-x1-x2).  Punctured cube:
    N^{-n/2}(1 - (1+|x|)^{2-n}) prod(1 - |x_i|/(N+1)) for n >= 3 and
    N^{-1} prod(1 - |x_i|/(N+1)) log(1+|x|)/log(1+N) for n = 2, with
    |x| the l1 norm.
    """
    x = np.asarray(x, dtype=float)
    N = float(spec.N)
    if spec.kind == "TriangleGame":
        x1, x2 = x[..., 0], x[..., 1]
        return x1 * x2 * (x1 + x2) * (N - x1) * (N - x2) * (N - x1 - x2) / N**7
    if spec.kind == "PuncturedCube":
        n = spec.n
        norm = np.abs(x).sum(axis=-1)
        box = np.prod(1 - np.abs(x) / (N + 1), axis=-1)
        if n >= 3:
            return N ** (-n / 2) * (1 - (1 + norm) ** (2 - n)) * box
        return box * np.log1p(norm) / (N * np.log1p(N))
    raise NoSurrogate(f"no comparison profile for {spec.kind}")


def all_specs_small():
    """A handful of small models used by the verification suites."""
    out = [ModelSpec("Line", N) for N in (5, 10)]
    out += [ModelSpec("Line", 6, lazy=True)]
    out += [ModelSpec("BoxZn", N, 2, margin=1) for N in (1, 4, 8)]
    out += [ModelSpec("BoxZn", 3, 3, margin=1), ModelSpec("BoxZn", 4, 1, margin=1)]
    out += [ModelSpec("TriangleGame", N, margin=1) for N in (4, 6, 12)]
    out += [ModelSpec("PuncturedCube", 4, 2, margin=1), ModelSpec("PuncturedCube", 3, 3, margin=1)]
    return out



def first_elimination_exact(N: int, start=None) -> dict:
    """Exact chance that each player of the ruin game is eliminated first.

    The game on fortunes (a, b, N - a - b) is the non-lazy triangle walk;
    player A is out when the walk exits onto x1 = 0, B onto x2 = 0 and C onto
    x1 + x2 = N.  One exit step never lands on two sides at once.
    """
    from .absorbing import greens_function, poisson_kernel, restrict

    N = int(N)
    if start is None:
        start = (N // 4, N // 4)
    a, b = int(start[0]), int(start[1])
    if not (a > 0 and b > 0 and a + b < N):
        raise SpecInvalid("start must leave every player with at least one unit")
    g, dom = generate(ModelSpec("TriangleGame", N, margin=1))
    sub = restrict(None, dom)
    law = poisson_kernel(sub, greens_function(sub), g.index_of((a, b)), check=False)
    c = g.coords[dom.boundary]
    return {
        "A": float(law.probs[c[:, 0] == 0].sum()),
        "B": float(law.probs[c[:, 1] == 0].sum()),
        "C": float(law.probs[c.sum(axis=1) == N].sum()),
    }
