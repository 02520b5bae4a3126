"""Killed kernel K_U, Green's function and exact exit distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import splu

from .domain import Domain
from .errors import InvariantViolation, SingularSystem, SolverFailure, ValidationError
from .graph_core import MarkovKernel, build_kernel

DENSE_CAP = 4000
CROSS_CHECK_TOL = 1e-12


class SubKernel:
    """K restricted to U x U, stored over local indices.

    Attributes
    ----------
    matrix : csr_matrix
        K_U in local indexing.
    defect : ndarray
        1 - sum_y K_U(x, y), the mass that leaks out of U in one step.
    leak : csr_matrix, shape (|U|, h)
        leak[z, j] = K(z, y) for the j-th dangling edge (z, y).
    contract : csr_matrix, shape (h, |dU|)
        Sums dangling edges onto their outer boundary point.
    """

    def __init__(self, kernel: MarkovKernel, domain: Domain):
        if kernel.graph is not domain.graph:
            raise ValidationError("kernel and domain live on different graphs")
        self.kernel = kernel
        self.domain = domain
        u = domain.u
        self.pi = kernel.graph.pi[u]
        self.matrix = kernel.matrix[u][:, u].tocsr()
        self.matrix.sort_indices()
        self.defect = 1.0 - np.asarray(self.matrix.sum(axis=1)).ravel()
        he = domain.half_edges
        zl = domain.local[he[:, 0]]
        self.half_edge_mu = np.asarray(kernel.graph.weights[he[:, 0], he[:, 1]]).ravel()
        h = he.shape[0]
        self.leak = sparse.csr_matrix(
            (self.half_edge_mu / self.pi[zl], (zl, np.arange(h))), shape=(u.size, h)
        )
        self.contract = sparse.csr_matrix(
            (np.ones(h), (np.arange(h), domain.boundary_local[he[:, 1]])),
            shape=(h, domain.boundary.size),
        )
        self._transpose = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def transpose(self):
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose

    def symmetrized(self):
        """M = D^{1/2} K_U D^{-1/2}, symmetric by detailed balance."""
        s = np.sqrt(self.pi)
        return (sparse.diags(s) @ self.matrix @ sparse.diags(1.0 / s)).tocsr()

    def density(self):
        """k_U(x, y) = K_U(x, y) / pi(y)."""
        return (self.matrix @ sparse.diags(1.0 / self.pi)).tocsr()

    def step_rows(self, v):
        """Row-vector step v -> v K_U (mass propagation)."""
        return self.transpose @ v


def restrict(kernel: MarkovKernel | None, domain: Domain) -> SubKernel:
    if kernel is None:
        kernel = build_kernel(domain.graph)
    return SubKernel(kernel, domain)


class GreensFunction:
    """G_U = (I - K_U)^{-1} held as a factorization.

    Dense LU up to ``DENSE_CAP`` points, sparse LU beyond.
    """

    def __init__(self, sub: SubKernel):
        self.sub = sub
        m = sub.size
        A = sparse.identity(m, format="csc") - sub.matrix.tocsc()
        self._dense = m <= DENSE_CAP
        try:
            if self._dense:
                with np.errstate(all="raise"):
                    self._lu = scipy.linalg.lu_factor(A.toarray(), check_finite=True)
                if np.min(np.abs(np.diag(self._lu[0]))) < 1e-300:
                    raise SingularSystem("I - K_U is singular; is the boundary empty?")
            else:
                self._lu = splu(A)
        except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise SingularSystem(f"factorization of I - K_U failed: {exc}") from None
        self._full = None

    def solve(self, b, trans=False):
        b = np.asarray(b, dtype=float)
        if self._dense:
            out = scipy.linalg.lu_solve(self._lu, b, trans=1 if trans else 0)
        else:
            if sparse.issparse(b):
                b = b.toarray()
            out = self._lu.solve(b, trans="T" if trans else "N")
        if not np.all(np.isfinite(out)):
            raise SolverFailure("non-finite values in Green's function solve")
        return out

    def row(self, x) -> np.ndarray:
        """G_U(x, .) over U (x ambient index)."""
        i = self.sub.domain.local[x]
        if i < 0:
            raise ValidationError("source must lie in U")
        e = np.zeros(self.sub.size)
        e[i] = 1.0
        return self.solve(e, trans=True)

    def density_row(self, x) -> np.ndarray:
        """g_U(x, .) = G_U(x, .) / pi."""
        return self.row(x) / self.sub.pi

    def full(self) -> np.ndarray:
        if self._full is None:
            self._full = self.solve(np.eye(self.sub.size))
        return self._full

    def density(self) -> np.ndarray:
        return self.full() / self.sub.pi[None, :]


def greens_function(sub: SubKernel) -> GreensFunction:
    return GreensFunction(sub)


@dataclass
class ExitDistribution:
    """Exit law from one source.

    ``over`` is ``"outer"`` (one entry per outer boundary point, in the
    order of ``domain.boundary``) or ``"extended"`` (one entry per dangling
    edge, in the order of ``domain.half_edges``).  ``horizon`` is None for
    the exit law without a time limit.
    """

    domain: Domain
    source: int
    horizon: int | None
    over: str
    probs: np.ndarray
    densities: np.ndarray

    def contract(self) -> "ExitDistribution":
        if self.over == "outer":
            return self
        sub_contract = _contraction(self.domain)
        probs = sub_contract.T @ self.probs
        pi_y = self.domain.graph.pi[self.domain.boundary]
        return ExitDistribution(self.domain, self.source, self.horizon, "outer", probs,
                                probs / pi_y)

    @property
    def points(self) -> np.ndarray:
        return self.domain.boundary if self.over == "outer" else self.domain.half_edges

    def at(self, y) -> float:
        """Probability of exiting at outer boundary point y."""
        out = self.contract()
        b = self.domain.boundary_local[y]
        if b < 0:
            raise ValidationError("not an outer boundary point")
        return float(out.probs[b])


def _contraction(domain):
    he = domain.half_edges
    h = he.shape[0]
    return sparse.csr_matrix(
        (np.ones(h), (np.arange(h), domain.boundary_local[he[:, 1]])),
        shape=(h, domain.boundary.size),
    )


def _package(sub, x, horizon, acc_row, extended):
    """Exit law from occupation counts acc_row over U."""
    dom = sub.domain
    ext = sub.leak.T @ acc_row
    if extended:
        pi_y = dom.graph.pi[dom.half_edges[:, 1]]
        return ExitDistribution(dom, int(x), horizon, "extended", ext, ext / pi_y)
    outer = sub.contract.T @ ext
    return ExitDistribution(dom, int(x), horizon, "outer", outer,
                            outer / dom.graph.pi[dom.boundary])


def normal_derivative(domain: Domain, f, y) -> float:
    """Interior normal derivative sum_{z in nu(y)} (f(z) - f(y)) mu_zy / pi(y).

    ``f`` is a function on the ambient vertex set (only U and y are read).
    """
    g = domain.graph
    f = np.asarray(f, dtype=float)
    zs = domain.nu(y)
    mu = np.asarray(g.weights[zs, np.full(zs.size, y)]).ravel()
    return float(np.sum((f[zs] - f[y]) * mu) / g.pi[y])


def poisson_kernel(sub: SubKernel, greens: GreensFunction, x, extended=False,
                   check=True) -> ExitDistribution:
    """Exit law P_U(x, .) = sum_{z in nu(y)} G_U(x, z) K(z, y).

    With ``check`` the density is recomputed as the normal derivative of
    g_U(x, .) at every boundary point and compared at 1e-12.
    """
    G_row = greens.row(x)
    dist = _package(sub, x, None, G_row, extended)
    if check:
        dom = sub.domain
        g_full = dom.extend(G_row / sub.pi)
        outer = dist.contract()
        nd = np.array([normal_derivative(dom, g_full, y) for y in dom.boundary])
        err = np.max(np.abs(nd - outer.densities) / np.maximum(1.0, np.abs(nd)))
        if err > CROSS_CHECK_TOL:
            raise InvariantViolation("normal-derivative cross-check", f"max error {err:.3e}")
    return dist


def poisson_matrix(sub: SubKernel, greens: GreensFunction, extended=False) -> np.ndarray:
    """All sources at once: rows indexed by U, columns by boundary points
    (or dangling edges when ``extended``)."""
    P = greens.solve(sub.leak.toarray())
    if extended:
        return P
    return np.asarray(sub.contract.T @ P.T).T


def exit_by_time(sub: SubKernel, x, t: int, extended=False) -> ExitDistribution:
    """P_U(t, x, .): exit at a given point within the first t steps."""
    if t < 1:
        raise ValidationError("horizon t must be >= 1")
    i = sub.domain.local[x]
    if i < 0:
        raise ValidationError("source must lie in U")
    v = np.zeros(sub.size)
    v[i] = 1.0
    acc = v.copy()
    for _ in range(t - 1):
        v = sub.step_rows(v)
        acc += v
    return _package(sub, x, int(t), acc, extended)


def heat_kernel_rows(sub: SubKernel, x, t: int) -> np.ndarray:
    """K_U^t(x, .) by t row-vector steps."""
    v = np.zeros(sub.size)
    v[sub.domain.local[x]] = 1.0
    for _ in range(t):
        v = sub.step_rows(v)
    return v
