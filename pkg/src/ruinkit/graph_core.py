"""Finite weighted graphs, their Markov kernels, and geometric constants.

A :class:`WeightedGraph` holds vertex weights ``pi`` and symmetric edge
weights ``mu``.  The induced kernel is

    K(x, y) = mu_xy / pi(x)            for y != x
    K(x, x) = 1 - sum_y mu_xy / pi(x)

which is reversible with respect to ``pi`` (both sides of detailed balance
equal ``mu_xy``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    BallTooLarge,
    BallTruncated,
    Disconnected,
    NegativeHolding,
    NonSymmetricMu,
    ValidationError,
)

HOLDING_TOL = 1e-12
POINCARE_DENSE_CAP = 2000


class WeightedGraph:
    """Finite connected graph with vertex weights and edge weights.

    Parameters
    ----------
    pi : array_like, shape (n,)
        Positive vertex weights.
    edges : array_like, shape (m, 2)
        Vertex index pairs.  Each unordered pair may appear more than once
        only if all copies carry the same weight.
    mu : array_like, shape (m,)
        Positive edge weights.
    coords : array_like, shape (n, d), optional
        Integer lattice coordinates attached by model generators.
    truncated : array_like of bool, shape (n,), optional
        Marks vertices whose neighbourhood was cut off by the edge of a
        finite patch of a larger lattice.  Balls reaching such vertices are
        not exact.
    ids : array_like of int, optional
        External vertex ids (defaults to ``0..n-1``).
    """

    def __init__(self, pi, edges, mu, coords=None, truncated=None, ids=None):
        pi = np.asarray(pi, dtype=float)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        mu = np.asarray(mu, dtype=float).reshape(-1)
        n = pi.shape[0]
        if edges.shape[0] != mu.shape[0]:
            raise ValidationError("edges and mu have different lengths")
        if n == 0:
            raise ValidationError("graph has no vertices")
        if np.any(~(pi > 0)) or not np.all(np.isfinite(pi)):
            raise ValidationError("vertex weights pi must be positive and finite")
        if np.any(~(mu > 0)) or not np.all(np.isfinite(mu)):
            raise ValidationError("edge weights mu must be positive and finite")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValidationError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValidationError("self loops are not edges")

        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        order = np.lexsort((hi, lo))
        lo, hi, mu = lo[order], hi[order], mu[order]
        if lo.size:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                if np.any(mu[1:][dup] != mu[:-1][dup]):
                    i = int(np.flatnonzero(dup & (mu[1:] != mu[:-1]))[0])
                    raise NonSymmetricMu(
                        f"mu({lo[i]},{hi[i]}) given twice with different values"
                    )
                keep = np.concatenate([[True], ~dup])
                lo, hi, mu = lo[keep], hi[keep], mu[keep]

        self.pi = pi
        self.edges = np.stack([lo, hi], axis=1)
        self.mu = mu
        self.coords = None if coords is None else np.asarray(coords, dtype=np.int64)
        self.truncated = (
            np.zeros(n, dtype=bool) if truncated is None else np.asarray(truncated, dtype=bool)
        )
        self.ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        for arr in (self.pi, self.mu, self.edges, self.truncated, self.ids):
            arr.flags.writeable = False
        self.weights = sparse.coo_matrix(
            (np.concatenate([mu, mu]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
            shape=(n, n),
        ).tocsr()
        self.weights.sort_indices()
        self._coord_index = None
        self._id_index = None

    @classmethod
    def from_weight_matrix(cls, W, pi, **kwargs):
        """Build from a (possibly dense) matrix of edge weights; must be symmetric."""
        W = sparse.csr_matrix(W, dtype=float)
        diff = abs(W - W.T)
        if diff.nnz and diff.max() > 0:
            raise NonSymmetricMu("weight matrix is not symmetric")
        upper = sparse.triu(W, k=1).tocoo()
        return cls(pi, np.stack([upper.row, upper.col], axis=1), upper.data, **kwargs)

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    def neighbors(self, x):
        lo, hi = self.weights.indptr[x], self.weights.indptr[x + 1]
        return self.weights.indices[lo:hi]

    def mu_between(self, x, y) -> float:
        return float(self.weights[x, y])

    def index_of(self, coord) -> int:
        """Vertex index of a lattice coordinate."""
        if self.coords is None:
            raise ValidationError("graph carries no coordinates")
        if self._coord_index is None:
            self._coord_index = {tuple(c): i for i, c in enumerate(self.coords.tolist())}
        try:
            return self._coord_index[tuple(int(c) for c in coord)]
        except KeyError:
            raise ValidationError(f"no vertex at coordinates {tuple(coord)}") from None

    def index_of_id(self, vid) -> int:
        if self._id_index is None:
            self._id_index = {int(v): i for i, v in enumerate(self.ids.tolist())}
        try:
            return self._id_index[int(vid)]
        except KeyError:
            raise ValidationError(f"unknown vertex id {vid}") from None

    def validate(self):
        """Check connectivity and the condition sum_y mu_xy <= pi(x)."""
        ncomp, _ = csgraph.connected_components(self.weights, directed=False)
        if ncomp != 1:
            raise Disconnected(f"graph has {ncomp} connected components")
        total = np.asarray(self.weights.sum(axis=1)).ravel()
        bad = total > self.pi * (1.0 + HOLDING_TOL)
        if np.any(bad):
            x = int(np.flatnonzero(bad)[0])
            raise NegativeHolding(
                f"sum of mu at vertex {int(self.ids[x])} is {total[x]!r} > pi = {self.pi[x]!r}"
            )


class MarkovKernel:
    """The kernel K induced by a weighted graph (immutable, CSR rows)."""

    def __init__(self, graph: WeightedGraph, matrix: sparse.csr_matrix, holding: np.ndarray):
        self.graph = graph
        self.matrix = matrix
        self.holding = holding
        self.matrix.data.flags.writeable = False

    def row(self, x):
        lo, hi = self.matrix.indptr[x], self.matrix.indptr[x + 1]
        return self.matrix.indices[lo:hi], self.matrix.data[lo:hi]

    def __getitem__(self, xy):
        return float(self.matrix[xy[0], xy[1]])

    def flux(self, x, y) -> float:
        """pi(x) K(x, y) for x != y, which is the stored edge weight mu_xy."""
        return self.graph.mu_between(x, y)


def build_kernel(graph: WeightedGraph) -> MarkovKernel:
    graph.validate()
    W = graph.weights
    off = sparse.diags(1.0 / graph.pi) @ W
    holding = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    holding[np.abs(holding) < 1e-15] = 0.0
    holding = np.maximum(holding, 0.0)
    K = (off + sparse.diags(holding)).tocsr()
    K.eliminate_zeros()
    K.sort_indices()
    return MarkovKernel(graph, K, holding)


# ----------------------------------------------------------------------------
# distances and balls


def bfs_distances(adjacency, sources, limit=np.inf, min_only=False):
    """Unweighted shortest-path distances from ``sources`` (inf beyond ``limit``)."""
    return csgraph.dijkstra(
        adjacency, directed=False, indices=sources, unweighted=True, limit=limit,
        min_only=min_only,
    )


def graph_distance(graph: WeightedGraph, x, y) -> int:
    d = bfs_distances(graph.weights, x)[y]
    return int(d)


def ball(graph: WeightedGraph, x, r) -> np.ndarray:
    """Vertex indices of B(x, r) = {y : d(x, y) <= r}, sorted."""
    if r < 0:
        raise ValidationError("radius must be nonnegative")
    d = bfs_distances(graph.weights, x, limit=float(r) + 0.5)
    return np.flatnonzero(d <= r)


def _exact_ball(graph, x, r):
    """Ball and distances, refusing balls that the patch edge could cut."""
    d = bfs_distances(graph.weights, x, limit=float(r) + 0.5)
    inner = d <= r - 1
    if np.any(graph.truncated & inner):
        raise BallTruncated(f"B({int(graph.ids[x])}, {r}) reaches the edge of the stored patch")
    members = np.flatnonzero(d <= r)
    return members, d


def ball_volume(graph: WeightedGraph, x, r) -> float:
    members, _ = _exact_ball(graph, x, r)
    return float(graph.pi[members].sum())


def volume_profile(graph: WeightedGraph, x, r_max) -> np.ndarray:
    """V[r] = pi(B(x, r)) for r = 0..r_max (exact balls only)."""
    _, d = _exact_ball(graph, x, r_max)
    finite = np.isfinite(d)
    counts = np.bincount(d[finite].astype(np.int64), weights=graph.pi[finite], minlength=r_max + 1)
    return np.cumsum(counts[: r_max + 1])


def doubling_constant(graph: WeightedGraph, centers, radii) -> float:
    """max over (x, r) of pi(B(x, 2r)) / pi(B(x, r)) at the sampled scales."""
    radii = [int(r) for r in radii]
    if any(r < 1 for r in radii):
        raise ValidationError("doubling radii must be >= 1")
    worst = 1.0
    for x in centers:
        V = volume_profile(graph, x, 2 * max(radii))
        for r in radii:
            worst = max(worst, V[2 * r] / V[r])
    return float(worst)


def poincare_constant(graph: WeightedGraph, center, r, theta=2) -> float:
    """Smallest C with Var_B(f) <= C r^theta E_B(f) on the ball B(center, r).

    The left side is sum_B |f - f_B|^2 pi and the right side sums
    |f(u) - f(v)|^2 mu_uv over edges with both ends in B (each edge once).
    Computed as 1 / (lambda_1 r^theta) where lambda_1 is the smallest nonzero
    eigenvalue of the Neumann Laplacian of B relative to pi.
    """
    members, _ = _exact_ball(graph, center, r)
    if members.size == 1:
        return 0.0
    if members.size > POINCARE_DENSE_CAP:
        raise BallTooLarge(f"|B| = {members.size} exceeds {POINCARE_DENSE_CAP}")
    W = graph.weights[members][:, members].toarray()
    L = np.diag(W.sum(axis=1)) - W
    lam = scipy.linalg.eigh(L, np.diag(graph.pi[members]), eigvals_only=True,
                            subset_by_index=[1, 1])[0]
    return float(1.0 / (lam * float(r) ** theta))


@dataclass(frozen=True)
class EllipticityReport:
    p_e: float

    def satisfied_at(self, threshold: float) -> bool:
        return self.p_e <= threshold


def ellipticity(graph: WeightedGraph) -> EllipticityReport:
    """P_e = max over edges {x, y} and both orientations of pi(x) / mu_xy."""
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    ratios = np.maximum(graph.pi[u], graph.pi[v]) / graph.mu
    return EllipticityReport(float(ratios.max()) if ratios.size else 1.0)


# ----------------------------------------------------------------------------
# JSON


def graph_to_dict(graph: WeightedGraph) -> dict:
    vertices = []
    for i in range(graph.n):
        v = {"id": int(graph.ids[i]), "pi": float(graph.pi[i])}
        if graph.coords is not None:
            v["coords"] = [int(c) for c in graph.coords[i]]
        if graph.truncated[i]:
            v["truncated"] = True
        vertices.append(v)
    edges = [
        {"u": int(graph.ids[a]), "v": int(graph.ids[b]), "mu": float(m)}
        for (a, b), m in zip(graph.edges.tolist(), graph.mu.tolist())
    ]
    return {"vertices": vertices, "edges": edges}


def graph_from_dict(doc: dict) -> WeightedGraph:
    try:
        verts = doc["vertices"]
        ids = np.array([int(v["id"]) for v in verts], dtype=np.int64)
        pi = np.array([float(v["pi"]) for v in verts])
        index = {int(v): i for i, v in enumerate(ids.tolist())}
        if len(index) != len(ids):
            raise ValidationError("duplicate vertex ids")
        edges = np.array(
            [[index[int(e["u"])], index[int(e["v"])]] for e in doc["edges"]], dtype=np.int64
        ).reshape(-1, 2)
        mu = np.array([float(e["mu"]) for e in doc["edges"]])
    except KeyError as exc:
        raise ValidationError(f"graph JSON missing field or unknown vertex: {exc}") from None
    coords = None
    if verts and all("coords" in v for v in verts):
        coords = np.array([v["coords"] for v in verts], dtype=np.int64)
    truncated = np.array([bool(v.get("truncated", False)) for v in verts])
    return WeightedGraph(pi, edges, mu, coords=coords, truncated=truncated, ids=ids)
