"""Doob transform of the killed chain by its Perron eigenfunction.

K_phi(x, y) = K_U(x, y) phi0(y) / (beta0 phi0(x)) is a stochastic kernel on U,
reversible with respect to pi_phi = phi0^2 pi, and

    k_U^t(x, y) = beta0^t phi0(x) phi0(y) k_phi^t(x, y).

Exit probabilities follow by summing beta0^t phi0(x) phi0(z) k_phi^t(x, z)
against the dangling edge weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .absorbing import ExitDistribution, SubKernel, _package
from .errors import NonPositivePhi, TruncationBudgetExceeded, ValidationError
from .graph_core import WeightedGraph
from .spectral import PerronPair

TAIL_TOL = 1e-14
MAX_STEPS = 10**7
DENSE_SERIES_CAP = 1500


class DoobChain:
    """The transformed chain (K_phi, pi_phi) on U (local indexing)."""

    def __init__(self, sub: SubKernel, pair: PerronPair):
        phi = np.asarray(pair.phi0, dtype=float)
        if phi.shape != (sub.size,):
            raise ValidationError("eigenfunction does not match the domain")
        if not np.all(phi > 0) or phi.min() < 1e-290:
            raise NonPositivePhi("phi0 must be strictly positive on U")
        self.sub = sub
        self.pair = pair
        self.beta0 = float(pair.beta0)
        self.phi = phi
        self.measure = phi * phi * sub.pi
        self.matrix = (sparse.diags(1.0 / (self.beta0 * phi)) @ sub.matrix
                       @ sparse.diags(phi)).tocsr()
        self.matrix.sort_indices()
        self._transpose = self.matrix.T.tocsr()
        self._series = None

    @property
    def size(self):
        return self.sub.size

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(np.asarray(self.matrix.sum(axis=1)).ravel() - 1.0)))

    def reversibility_error(self) -> float:
        F = sparse.diags(self.measure) @ self.matrix
        D = F - F.T
        return float(np.max(np.abs(D.data))) if D.nnz else 0.0

    def edge_weights(self):
        """mu_phi on the edges of U: beta0^{-1} phi0(x) phi0(y) mu_xy, upper triangle."""
        W = self.sub.matrix.multiply(self.sub.pi[:, None]).tocoo()
        keep = W.row < W.col
        r, c, mu = W.row[keep], W.col[keep], W.data[keep]
        return np.stack([r, c], axis=1), self.phi[r] * self.phi[c] * mu / self.beta0

    def as_weighted_graph(self) -> WeightedGraph:
        """The transformed chain as a weighted graph on U with weights (pi_phi, mu_phi).

        Its kernel reproduces K_phi, with holding K_U(x, x) / beta0.
        """
        edges, mu = self.edge_weights()
        g = self.sub.domain.graph
        coords = None if g.coords is None else g.coords[self.sub.domain.u]
        return WeightedGraph(self.measure, edges, mu, coords=coords,
                             ids=g.ids[self.sub.domain.u])

    def step_rows(self, v):
        return self._transpose @ v


def doob_transform(sub: SubKernel, pair: PerronPair) -> DoobChain:
    return DoobChain(sub, pair)


def doob_heat_row(chain: DoobChain, x, t: int) -> np.ndarray:
    """k_phi^t(x, .) over U."""
    i = chain.sub.domain.local[x]
    if i < 0:
        raise ValidationError("point must lie in U")
    v = np.zeros(chain.size)
    v[i] = 1.0
    for _ in range(int(t)):
        v = chain.step_rows(v)
    return v / chain.measure


def doob_heat_kernel(chain: DoobChain, t: int, x, y) -> float:
    return float(doob_heat_row(chain, x, t)[chain.sub.domain.local[y]])


def conjugation_error(chain: DoobChain, t: int, x, heat_row_u) -> float:
    """max over y of |k_U^t(x, y) - beta0^t phi0(x) phi0(y) k_phi^t(x, y)|.

    ``heat_row_u`` is k_U^t(x, .) computed independently.
    """
    i = chain.sub.domain.local[x]
    rhs = chain.beta0 ** t * chain.phi[i] * chain.phi * doob_heat_row(chain, x, t)
    return float(np.max(np.abs(heat_row_u - rhs)))


def _occupation_from_doob(chain: DoobChain, x, horizon, max_steps):
    """sum_t K_U^t(x, .) rebuilt from the transformed chain."""
    i = chain.sub.domain.local[x]
    if i < 0:
        raise ValidationError("source must lie in U")
    phi, beta = chain.phi, chain.beta0
    v = np.zeros(chain.size)
    v[i] = 1.0
    acc = np.zeros(chain.size)
    scale = 1.0
    t = 0
    while True:
        acc += scale * v
        t += 1
        if horizon is not None and t >= horizon:
            break
        v = chain.step_rows(v)
        scale *= beta
        # mass of the killed chain still alive after t steps bounds the tail
        alive = scale * phi[i] * np.sum(v / phi)
        done = phi[i] * np.sum(acc / phi)
        if horizon is None and alive < TAIL_TOL * done:
            break
        if t > max_steps:
            raise TruncationBudgetExceeded(f"series not converged after {max_steps} steps")
    # acc holds sum_t beta^t K_phi^t(x, .); convert to sum_t K_U^t(x, .)
    return acc * phi[i] / phi


def poisson_via_doob(chain: DoobChain, x, extended=False, horizon=None,
                     max_steps=MAX_STEPS) -> ExitDistribution:
    """Exit law from x through the transformed chain.

    P_U(x, y*_z) = phi0(x) mu_zy sum_t beta0^t phi0(z) k_phi^t(x, z) / pi(y) * pi(y),
    summed until the surviving mass of the killed chain falls below 1e-14 of
    what has already exited (``horizon`` gives the finite-time version).
    """
    if horizon is None and chain.size <= DENSE_SERIES_CAP:
        i = chain.sub.domain.local[x]
        if i < 0:
            raise ValidationError("source must lie in U")
        occ = occupation_matrix_via_doob(chain, max_steps)[i]
    else:
        occ = _occupation_from_doob(chain, x, horizon, max_steps)
    return _package(chain.sub, x, horizon, occ, extended)


def occupation_matrix_via_doob(chain: DoobChain, max_steps=MAX_STEPS) -> np.ndarray:
    """G_U for all sources from the transformed series, summed by doubling.

    With Q = beta0 K_phi the partial sums S_T = sum_{t<T} Q^t satisfy
    S_{2T} = S_T + Q^T S_T; this regroups the same series.  Stops when the
    surviving mass of every source is below 1e-14 of its accumulated value.
    """
    if chain._series is not None:
        return chain._series
    m = chain.size
    if m > DENSE_SERIES_CAP:
        raise ValidationError(f"|U| = {m} too large for the dense series")
    phi = chain.phi
    Q = chain.beta0 * chain.matrix.toarray()
    S = np.eye(m)
    P = Q.copy()
    T = 1
    while True:
        # P = Q^T; mass of K_U^T(x, .) is phi(x) sum_w Q^T(x, w) / phi(w)
        alive = P @ (1.0 / phi)
        done = S @ (1.0 / phi)
        if np.all(alive < TAIL_TOL * done):
            break
        if T > max_steps:
            raise TruncationBudgetExceeded(f"series not converged after {T} steps")
        S = S + P @ S
        P = P @ P
        T *= 2
    G = S * phi[:, None] / phi[None, :]
    chain._series = G
    return G


def doob_poisson_matrix(chain: DoobChain, extended=True) -> np.ndarray:
    """All-sources exit matrix via the transformed chain (rows = U)."""
    G = occupation_matrix_via_doob(chain)
    P = np.asarray((chain.sub.leak.T @ G.T).T)
    if extended:
        return P
    return np.asarray((chain.sub.contract.T @ P.T).T)


@dataclass(frozen=True)
class FluxCheck:
    lhs: float
    rhs: float
    residual: float
    pi_phi: float

    @property
    def relative(self):
        return self.residual / self.pi_phi


def flux_identity_check(sub: SubKernel, pair: PerronPair) -> FluxCheck:
    """sum over dangling edges (z, y) of phi0(z) mu_zy against (1 - beta0) pi(phi0)."""
    dom = sub.domain
    zl = dom.local[dom.half_edges[:, 0]]
    phi = pair.phi0
    lhs = float(np.sum(phi[zl] * sub.half_edge_mu))
    pi_phi = float(np.sum(phi * sub.pi))
    rhs = (1.0 - pair.beta0) * pi_phi
    return FluxCheck(lhs, rhs, abs(lhs - rhs), pi_phi)
