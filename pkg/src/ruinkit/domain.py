"""Finite domains U, their three boundaries, and the inner metric d_U.

Vertices are referred to by their index in the ambient graph.  Functions on
U (eigenfunctions, Green's function rows, ...) are arrays indexed by the
*local* position of a vertex in ``domain.u``; ``domain.local`` maps ambient
indices to local ones (``-1`` off U).

Ties in "lexicographically smallest" selections are broken by ambient vertex
index; model generators number vertices in lexicographic coordinate order so
the two notions agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    DisconnectedU,
    EmptyBoundary,
    NoAdmissiblePoint,
    TooLarge,
    ValidationError,
)
from .graph_core import WeightedGraph, bfs_distances

UNIFORM_BUDGET = 10**8


class Domain:
    """A connected vertex set U with outer, extended and intrinsic boundaries.

    Attributes
    ----------
    u : ndarray
        Sorted ambient indices of U.
    boundary : ndarray
        Sorted ambient indices of the outer boundary (vertices off U with a
        neighbour in U).
    half_edges : ndarray, shape (h, 2)
        Extended boundary: one row ``(z, y)`` per dangling edge with z in U
        and y in the outer boundary, sorted by ``(y, z)``.
    intrinsic : ndarray
        Ambient indices of the points of U that leak mass (have a neighbour
        off U).
    """

    def __init__(self, graph: WeightedGraph, u, boundary, half_edges, adjacency):
        self.graph = graph
        self.u = u
        self.boundary = boundary
        self.half_edges = half_edges
        self.adjacency = adjacency
        self.local = np.full(graph.n, -1, dtype=np.int64)
        self.local[u] = np.arange(u.size)
        self.boundary_local = np.full(graph.n, -1, dtype=np.int64)
        self.boundary_local[boundary] = np.arange(boundary.size)
        ys = half_edges[:, 1]
        starts = np.searchsorted(ys, boundary)
        ends = np.searchsorted(ys, boundary, side="right")
        self._nu_slices = np.stack([starts, ends], axis=1)
        self.intrinsic = np.unique(half_edges[:, 0])
        self._clearance = None
        self._metric = None

    @property
    def size(self) -> int:
        return self.u.size

    def nu(self, y) -> np.ndarray:
        """Ambient indices of the neighbours of boundary point y inside U."""
        b = self.boundary_local[y]
        if b < 0:
            raise ValidationError(f"vertex {int(self.graph.ids[y])} is not on the boundary")
        lo, hi = self._nu_slices[b]
        return self.half_edges[lo:hi, 0]

    def half_edge_slice(self, y):
        b = self.boundary_local[y]
        lo, hi = self._nu_slices[b]
        return slice(int(lo), int(hi))

    def half_edge_index(self, z, y) -> int:
        sl = self.half_edge_slice(y)
        hits = np.flatnonzero(self.half_edges[sl, 0] == z)
        if hits.size == 0:
            raise ValidationError("(z, y) is not a dangling edge of U")
        return sl.start + int(hits[0])

    def extend(self, f_local) -> np.ndarray:
        """Extend a function on U by zero to the whole ambient graph."""
        out = np.zeros(self.graph.n)
        out[self.u] = f_local
        return out

    def contains(self, x) -> bool:
        return self.local[x] >= 0

    @property
    def clearance(self) -> np.ndarray:
        """d(x, X \\ U) for x in U (local indexing)."""
        if self._clearance is None:
            d = bfs_distances(self.graph.weights, self.boundary, min_only=True)
            self._clearance = d[self.u].astype(np.int64)
        return self._clearance

    @property
    def metric(self) -> "InnerMetric":
        if self._metric is None:
            self._metric = InnerMetric(self)
        return self._metric


def build_domain(graph: WeightedGraph, u_set) -> Domain:
    u = np.unique(np.asarray(list(u_set) if not isinstance(u_set, np.ndarray) else u_set,
                             dtype=np.int64))
    if u.size == 0:
        raise ValidationError("U is empty")
    if u.min() < 0 or u.max() >= graph.n:
        raise ValidationError("U contains an index outside the graph")
    if np.any(graph.truncated[u]):
        raise ValidationError("U reaches the edge of the stored patch; enlarge the margin")
    in_u = np.zeros(graph.n, dtype=bool)
    in_u[u] = True

    W = graph.weights.tocoo()
    rows, cols = W.row, W.col
    inside = in_u[rows] & in_u[cols]
    dangling = in_u[rows] & ~in_u[cols]

    local = np.full(graph.n, -1, dtype=np.int64)
    local[u] = np.arange(u.size)
    adjacency = sparse.csr_matrix(
        (np.ones(int(inside.sum())), (local[rows[inside]], local[cols[inside]])),
        shape=(u.size, u.size),
    )
    ncomp, _ = csgraph.connected_components(adjacency, directed=False)
    if ncomp != 1:
        raise DisconnectedU(f"U has {ncomp} connected components in E_U")

    z, y = rows[dangling], cols[dangling]
    if z.size == 0:
        raise EmptyBoundary("U has no exterior boundary")
    order = np.lexsort((z, y))
    half_edges = np.stack([z[order], y[order]], axis=1)
    boundary = np.unique(y)
    return Domain(graph, u, boundary, half_edges, adjacency)


def domain_to_dict(domain: Domain) -> dict:
    ids = domain.graph.ids
    return {"U": [int(v) for v in ids[domain.u]], "boundary": [int(v) for v in ids[domain.boundary]]}


def domain_from_dict(graph: WeightedGraph, doc: dict) -> Domain:
    try:
        u = [graph.index_of_id(v) for v in doc["U"]]
    except KeyError:
        raise ValidationError("domain JSON lacks field 'U'") from None
    dom = build_domain(graph, u)
    if "boundary" in doc:
        given = sorted(graph.index_of_id(v) for v in doc["boundary"])
        if given != dom.boundary.tolist():
            raise ValidationError("domain JSON boundary disagrees with the graph")
    return dom


# ----------------------------------------------------------------------------
# inner metric


class InnerMetric:
    """Graph distance inside (U, E_U), extended to the outer and extended boundaries."""

    def __init__(self, domain: Domain):
        self.domain = domain
        self._rows = {}
        self._matrix = None

    def row(self, x) -> np.ndarray:
        """d_U(x, .) over U in local indexing (x is an ambient index)."""
        i = int(self.domain.local[x])
        if i < 0:
            raise ValidationError("inner distance source must lie in U")
        if self._matrix is not None:
            return self._matrix[i]
        r = self._rows.get(i)
        if r is None:
            r = bfs_distances(self.domain.adjacency, i).astype(np.int64)
            r.flags.writeable = False
            self._rows[i] = r
        return r

    def ball(self, x, r) -> np.ndarray:
        """Local indices of the inner ball B_U(x, r)."""
        return np.flatnonzero(self.row(x) <= r)

    def to_half_edges(self, x) -> np.ndarray:
        """d_U(x, y*_z) = 1 + d_U(x, z) for every dangling edge (z, y)."""
        dom = self.domain
        return 1 + self.row(x)[dom.local[dom.half_edges[:, 0]]]

    def to_boundary(self, x) -> np.ndarray:
        """d_U(x, y) = min over z in nu(y) of 1 + d_U(x, z), per outer boundary point."""
        he = self.to_half_edges(x)
        dom = self.domain
        return np.minimum.reduceat(he, dom._nu_slices[:, 0])

    def dist(self, x, y) -> int:
        dom = self.domain
        if dom.local[y] >= 0:
            return int(self.row(x)[dom.local[y]])
        if dom.boundary_local[y] >= 0:
            return int(self.to_boundary(x)[dom.boundary_local[y]])
        raise ValidationError("inner distance target must lie in U or on its boundary")

    def matrix(self) -> np.ndarray:
        """All-pairs d_U on U x U (local indexing)."""
        if self._matrix is None:
            m = csgraph.shortest_path(self.domain.adjacency, directed=False, unweighted=True)
            self._matrix = m.astype(np.int64)
            self._matrix.flags.writeable = False
        return self._matrix


def inner_distance(domain: Domain) -> InnerMetric:
    return domain.metric


# ----------------------------------------------------------------------------
# inner uniformity


@dataclass(frozen=True)
class InnerUniformReport:
    alpha: float
    a_cap: float
    holds: bool
    witness_failure: tuple | None = None

    def to_dict(self, graph=None):
        failure = None
        if self.witness_failure is not None:
            failure = list(self.witness_failure)
            if graph is not None:
                failure = [int(graph.ids[v]) for v in failure]
        return {"alpha": self.alpha, "A": self.a_cap, "holds": self.holds, "failure": failure}


def verify_inner_uniform(domain: Domain, alpha: float, a_cap: float,
                         budget: int = UNIFORM_BUDGET) -> InnerUniformReport:
    """Decide exactly whether U is inner (alpha, A)-uniform.

    For every candidate length k the admissible walks of length k are
    propagated from all sources at once: step j may only visit vertices with
    clearance >= alpha (1 + min(j, k - j)).  A pair (x, y) passes when y is
    reached at step k for some k in [d_U(x, y), A d_U(x, y)].
    """
    if not (0 < alpha <= 1) or a_cap < 1:
        raise ValidationError("need alpha in (0, 1] and A >= 1")
    D = domain.metric.matrix()
    m = domain.size
    diam = int(D.max())
    if m * m * max(diam, 1) > budget:
        raise TooLarge(f"|U|^2 * diameter = {m * m * diam} exceeds budget {budget}")
    clearance = domain.clearance.astype(float)
    adj = domain.adjacency
    ok = np.zeros((m, m), dtype=bool)
    k_max = int(np.floor(a_cap * diam + 1e-9))
    for k in range(k_max + 1):
        window = (D <= k) & (k <= a_cap * D + 1e-9) & ~ok
        if not window.any():
            continue
        j = np.arange(k + 1)
        need = alpha * (1 + np.minimum(j, k - j))
        # F[v, s]: v reachable at step j from source s along an admissible walk
        F = np.diag((clearance >= need[0] - 1e-12).astype(np.float32))
        for step in range(1, k + 1):
            F = adj @ F
            F = ((F > 0) & (clearance >= need[step] - 1e-12)[:, None]).astype(np.float32)
        ok |= window & (F.T > 0)
    if ok.all():
        return InnerUniformReport(alpha, a_cap, True)
    s, t = np.argwhere(~ok)[0]
    return InnerUniformReport(alpha, a_cap, False, (int(domain.u[s]), int(domain.u[t])))


# ----------------------------------------------------------------------------
# inner points x_r


@dataclass
class InnerPointIndex:
    """Central point o, depth R, and the x_r selector for a domain.

    ``select(x, r)`` returns the point of largest clearance in the inner
    ball B_U(x, A1 min(r, R)), ties to the smallest index; for r >= R it
    returns o.  Raises NoAdmissiblePoint when the chosen point is shallower
    than a1 min(r, R).
    """

    domain: Domain
    r_max: int
    center: int
    a1: float
    a_cap_1: float
    _cache: dict = field(default_factory=dict, repr=False)

    def select(self, x, r) -> int:
        key = (int(x), float(r))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if r >= self.r_max:
            out = self.center
        else:
            dom = self.domain
            rho = int(np.floor(self.a_cap_1 * max(r, 0.0) + 1e-9))
            cand = dom.metric.ball(x, rho)
            c = dom.clearance[cand]
            best = cand[c == c.max()].min()
            if dom.clearance[best] < self.a1 * r - 1e-12:
                raise NoAdmissiblePoint(
                    f"no point within inner distance {rho} of {int(dom.graph.ids[x])} "
                    f"has clearance >= {self.a1 * r}"
                )
            out = int(dom.u[best])
        self._cache[key] = out
        return out

    __call__ = select

    def _running_best(self, x):
        """best[rho] = local index of the deepest point of B_U(x, rho), ties to the smallest."""
        key = ("best", int(x))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        dom = self.domain
        row = dom.metric.row(x)
        c = dom.clearance
        idx = np.arange(row.size)
        order = np.lexsort((idx, -c, row))
        levels = row[order]
        first = np.concatenate([[0], np.flatnonzero(np.diff(levels)) + 1])
        best = np.empty(int(row.max()) + 1, dtype=np.int64)
        cur = -1
        for lvl, pos in zip(levels[first], first):
            cand = order[pos]
            if cur < 0 or c[cand] > c[cur] or (c[cand] == c[cur] and cand < cur):
                cur = cand
            best[lvl] = cur
        self._cache[key] = best
        return best

    def profile(self, x, radii) -> np.ndarray:
        """Ambient indices of x_r for each r in ``radii`` (same rule as ``select``)."""
        radii = np.asarray(radii, dtype=float)
        dom = self.domain
        best = self._running_best(x)
        rho = np.minimum(np.floor(self.a_cap_1 * np.maximum(radii, 0.0) + 1e-9).astype(np.int64),
                         best.size - 1)
        chosen = best[rho]
        short = radii < self.r_max
        bad = short & (dom.clearance[chosen] < self.a1 * radii - 1e-12)
        if np.any(bad):
            r = float(radii[np.flatnonzero(bad)[0]])
            raise NoAdmissiblePoint(
                f"no point near {int(dom.graph.ids[x])} has clearance >= {self.a1 * r} at r = {r}"
            )
        return np.where(short, dom.u[chosen], self.center)


def inner_points(domain: Domain, a1: float = 0.25, a_cap_1: float = 0.5) -> InnerPointIndex:
    c = domain.clearance
    R = int(c.max())
    o_local = int(np.flatnonzero(c == R).min())
    o = int(domain.u[o_local])
    # B(o, a1 R) must sit inside U: every point of it is closer to o than the complement
    if not c[o_local] > a1 * R:
        raise NoAdmissiblePoint("central ball B(o, a1 R) leaves U")
    return InnerPointIndex(domain, R, o, a1, a_cap_1)
