"""Spectral data of the killed kernel.

All eigen work happens on the symmetric matrix M = D^{1/2} K_U D^{-1/2}
(D = diag(pi)); eigenvectors v of M map back to pi-orthonormal
eigenfunctions phi = D^{-1/2} v.

The spectral Green's function sum_i (1 - beta_i)^{-1} phi_i(x) phi_i(y) is
exact but, term by term, says nothing about positivity: the terms oscillate
in sign and have comparable sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import eigsh

from .absorbing import DENSE_CAP, SubKernel
from .errors import NoConvergence, NonPositivePhi, TooLargeForDense, ValidationError

PERRON_TOL = 1e-13
PERRON_MAX_ITER = 10**6


@dataclass
class EigenDecomposition:
    """Full spectrum, descending; ``phis[:, i]`` is phi_i over U (local indexing)."""

    sub: SubKernel
    betas: np.ndarray
    phis: np.ndarray

    @property
    def pi(self):
        return self.sub.pi

    def _loc(self, x):
        i = self.sub.domain.local[x]
        if i < 0:
            raise ValidationError("point must lie in U")
        return i

    def heat_kernel(self, t: int, x, y) -> float:
        """k_U^t(x, y) = sum_i beta_i^t phi_i(x) phi_i(y)."""
        i, j = self._loc(x), self._loc(y)
        return float(np.sum(self.betas ** int(t) * self.phis[i] * self.phis[j]))

    def heat_kernel_matrix(self, t: int) -> np.ndarray:
        return (self.phis * self.betas ** int(t)) @ self.phis.T

    def greens_density(self, x, y) -> float:
        """g_U(x, y) = sum_i (1 - beta_i)^{-1} phi_i(x) phi_i(y)."""
        i, j = self._loc(x), self._loc(y)
        return float(np.sum(self.phis[i] * self.phis[j] / (1.0 - self.betas)))

    def greens_density_matrix(self) -> np.ndarray:
        return (self.phis / (1.0 - self.betas)) @ self.phis.T

    def top(self) -> "PerronPair":
        return PerronPair(float(self.betas[0]), self.phis[:, 0].copy())


@dataclass
class PerronPair:
    """Perron eigenvalue beta0, positive eigenfunction phi0 (pi(phi0^2) = 1), T_U."""

    beta0: float
    phi0: np.ndarray
    iterations: int = 0
    bracket: float = 0.0

    @property
    def t_u(self) -> float:
        return 1.0 / (1.0 - self.beta0)


def _sign_fix(v):
    k = np.argmax(np.abs(v))
    return v if v[k] >= 0 else -v


def full_decomposition(sub: SubKernel, cap: int = DENSE_CAP) -> EigenDecomposition:
    """Dense eigendecomposition of the symmetrized kernel."""
    m = sub.size
    if m > cap:
        raise TooLargeForDense(f"|U| = {m} exceeds the dense cap {cap}")
    M = sub.symmetrized().toarray()
    M = 0.5 * (M + M.T)
    w, V = scipy.linalg.eigh(M)
    w, V = w[::-1], V[:, ::-1]
    phis = V / np.sqrt(sub.pi)[:, None]
    phis[:, 0] *= np.sign(phis[:, 0].sum())
    for i in range(1, m):
        phis[:, i] = _sign_fix(phis[:, i])
    return EigenDecomposition(sub, w, phis)


def _start_vector(sub: SubKernel):
    """Deterministic approximation of phi0 used to seed the power iteration."""
    m = sub.size
    s = np.sqrt(sub.pi)
    M = sub.symmetrized()
    if m <= 2:
        return np.ones(m)
    if m <= 1500:
        _, v = scipy.linalg.eigh(M.toarray(), subset_by_index=[m - 1, m - 1])
    else:
        # (I + M) / 2 has its top eigenvalue at the Perron root even for
        # bipartite chains, where -beta0 is also an eigenvalue of M
        from scipy.sparse import identity

        A = 0.5 * (identity(m, format="csr") + M)
        _, v = eigsh(A, k=1, which="LA", v0=s.copy(), tol=1e-14, maxiter=20 * m)
    phi = np.abs(v[:, 0]) / s
    if not np.all(phi > 0):
        return np.ones(m)
    return phi


def perron_pair(sub: SubKernel, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER,
                start=None) -> PerronPair:
    """Perron eigenpair by power iteration on the shifted kernel (I + K_U) / 2.

    Iteration stops when the Collatz-Wielandt bracket
    max_x (A phi)_x / phi_x - min_x (A phi)_x / phi_x, relative to the
    midpoint, drops below ``tol``.  Since every entry of A is nonnegative the
    bracket certifies phi0 componentwise, which is what the Doob transform
    needs.  The shift keeps the iteration convergent when the chain is
    periodic.
    """
    K = sub.matrix
    pi = sub.pi
    phi = np.ones(sub.size) if start is None else np.asarray(start, dtype=float).copy()
    if start is None and sub.size > 1:
        phi = _start_vector(sub)
    if not np.all(phi > 0):
        raise ValidationError("power iteration start must be positive")
    phi /= np.sqrt(np.sum(phi * phi * pi))
    widths = []
    for it in range(max_iter + 1):
        Kphi = K @ phi
        Aphi = 0.5 * (phi + Kphi)
        r = Aphi / phi
        hi, lo = r.max(), r.min()
        width = (hi - lo) / (0.5 * (hi + lo))
        if width <= tol:
            break
        widths.append(width)
        phi = Aphi / np.sqrt(np.sum(Aphi * Aphi * pi))
    else:
        gap = None
        if len(widths) > 100:
            rate = (widths[-1] / widths[-101]) ** 0.01
            gap = 2 * (1 - rate)
        raise NoConvergence(
            f"power iteration did not reach bracket {tol} in {max_iter} steps "
            f"(bracket {width:.3e}, estimated gap {gap})"
        )
    beta0 = float(np.sum(phi * Kphi * pi) / np.sum(phi * phi * pi))
    if not np.all(phi > 0):
        raise NonPositivePhi("Perron eigenfunction lost positivity")
    return PerronPair(beta0, phi, it, float(width))


def spectral_heat_kernel(decomp: EigenDecomposition, t, x, y) -> float:
    return decomp.heat_kernel(t, x, y)


def spectral_greens(decomp: EigenDecomposition, x, y) -> float:
    return decomp.greens_density(x, y)


def spectral_poisson(decomp: EigenDecomposition, x) -> np.ndarray:
    """Exit law from x over dangling edges via the spectral Green's function."""
    i = decomp._loc(x)
    g_row = (decomp.phis[i] / (1.0 - decomp.betas)) @ decomp.phis.T
    sub = decomp.sub
    return sub.leak.T @ (g_row * sub.pi)


def box_psi(a, k, N):
    """psi_a(k): cos(a k pi / (2(N+1))) for odd a, sin(...) for even a."""
    a = np.asarray(a)
    arg = a * np.asarray(k) * np.pi / (2 * (N + 1))
    return np.where(a % 2 == 1, np.cos(arg), np.sin(arg))


def box_poisson_spectral(N: int, x, y2: int, return_partial=False):
    """Exit probability from (x1, x2) at (N+1, y2) for the lazy walk on the
    square {-N..N}^2, as the explicit double sum over product eigenfunctions.

    With ``return_partial`` also returns the running partial sums over a
    (summed over b), which oscillate before settling.
    """
    x1, x2 = x
    if not (abs(x1) <= N and abs(x2) <= N and abs(y2) <= N):
        raise ValidationError("points must lie in the box and on its right face")
    a = np.arange(1, 2 * N + 2)
    theta = np.pi / (2 * (N + 1))
    pa = box_psi(a, x1, N) * box_psi(a, N, N)
    pb = box_psi(a, x2, N) * box_psi(a, y2, N)
    denom = 1 - 0.5 * (np.cos(a * theta)[:, None] + np.cos(a * theta)[None, :])
    terms = pa[:, None] * pb[None, :] / denom / (4 * (N + 1) ** 2)
    value = float(terms.sum())
    if return_partial:
        return value, np.cumsum(terms.sum(axis=1))
    return value
