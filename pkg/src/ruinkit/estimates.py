"""Two-sided estimate shapes for exit probabilities, and numerical checks of
the geometric hypotheses behind them (Harnack constants, Gaussian heat
kernel bounds, cut-off functions, Carleson-type bounds for phi0).

Estimates are returned without their unspecified multiplicative constants.
:class:`RatioReport` measures how far exact values stray from a shape: a
good shape gives a band [min, max] of exact/shape ratios that does not widen
as the model grows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .absorbing import SubKernel
from .domain import Domain, InnerPointIndex, inner_points
from .errors import (
    AmbientTruncated,
    BallTruncated,
    CylinderTruncated,
    OutOfSector,
    UnsupportedFace,
    ValidationError,
)
from .graph_core import WeightedGraph, _exact_ball, bfs_distances, build_kernel, volume_profile
from .spectral import PerronPair

EASY_EXPONENT = 2.1


class EstimateContext:
    """Everything the estimate shapes read: phi0, T_U, o, R, x_r and ambient volumes."""

    def __init__(self, sub: SubKernel, pair: PerronPair, points: InnerPointIndex | None = None,
                 a1: float = 0.25, a_cap_1: float = 0.5):
        self.sub = sub
        self.domain: Domain = sub.domain
        self.graph: WeightedGraph = sub.domain.graph
        self.pair = pair
        self.phi = pair.phi0
        self.t_u = pair.t_u
        self.points = points if points is not None else inner_points(self.domain, a1, a_cap_1)
        self.o = self.points.center
        self.R = self.points.r_max
        self.pi_u = float(sub.pi.sum())
        self._vol = {}
        self._wsum = {}

    def phi_at(self, v) -> np.ndarray:
        return self.phi[self.domain.local[v]]

    def volume(self, x, r) -> np.ndarray:
        """V(x, r) = pi(B(x, floor(r))) in the ambient graph, vectorized over r."""
        r = np.floor(np.asarray(r, dtype=float) + 1e-9).astype(np.int64)
        need = int(np.max(r)) if r.size else 0
        prof = self._vol.get(int(x))
        if prof is None or prof.size <= need:
            try:
                prof = volume_profile(self.graph, int(x), max(need, 1))
            except BallTruncated as exc:
                raise AmbientTruncated(str(exc)) from None
            self._vol[int(x)] = prof
        return prof[r]

    def inner_distance(self, x, z) -> int:
        return int(self.domain.metric.row(x)[self.domain.local[z]])

    def weight_profile(self, x, upper) -> np.ndarray:
        """w[l] = 1 / (phi0(x_sqrt(l))^2 V(x, sqrt(l))) for l = 0..upper."""
        cached = self._wsum.get(int(x))
        if cached is not None and cached.size > upper:
            return cached[: upper + 1]
        ell = np.arange(upper + 1)
        r = np.sqrt(ell)
        xr = self.points.profile(x, r)
        w = 1.0 / (self.phi_at(xr) ** 2 * self.volume(x, r))
        self._wsum[int(x)] = w
        return w


def estimate_context(sub, pair, a1=0.25, a_cap_1=0.5) -> EstimateContext:
    return EstimateContext(sub, pair, a1=a1, a_cap_1=a_cap_1)


# ----------------------------------------------------------------------------
# ratio reports


@dataclass
class RatioReport:
    """exact / estimate over a set of evaluation points."""

    exact: np.ndarray
    estimate: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.exact = np.asarray(self.exact, dtype=float)
        self.estimate = np.asarray(self.estimate, dtype=float)
        keep = self.estimate > 0
        self.ratio = np.full(self.exact.shape, np.nan)
        self.ratio[keep] = self.exact[keep] / self.estimate[keep]

    @property
    def valid(self):
        return self.ratio[np.isfinite(self.ratio) & (self.ratio > 0)]

    @property
    def min(self) -> float:
        return float(self.valid.min())

    @property
    def max(self) -> float:
        return float(self.valid.max())

    @property
    def spread(self) -> float:
        return self.max / self.min

    def to_dict(self):
        return {"pairs": int(self.valid.size), "min": self.min, "max": self.max,
                "spread": self.spread}

    def rows(self):
        for lab, e, s, q in zip(self.labels, self.exact, self.estimate, self.ratio):
            yield (*lab, float(e), float(s), float(q))


# ----------------------------------------------------------------------------
# estimates from the central point


def central_exit_estimate(ctx: EstimateContext, y, use_volume=False) -> float:
    """T_U phi0(o) sum_{z in nu(y)} phi0(z) mu_zy, or T_U pi(U)^{-1/2} sum ... with ``use_volume``."""
    dom = ctx.domain
    sl = dom.half_edge_slice(y)
    zs = dom.local[dom.half_edges[sl, 0]]
    flux = float(np.sum(ctx.phi[zs] * ctx.sub.half_edge_mu[sl]))
    lead = 1.0 / np.sqrt(ctx.pi_u) if use_volume else float(ctx.phi_at(ctx.o))
    return ctx.t_u * lead * flux


def central_estimates_all(ctx: EstimateContext, use_volume=False) -> np.ndarray:
    """Central estimate at every outer boundary point (order of ``domain.boundary``)."""
    dom = ctx.domain
    flux_he = ctx.phi[dom.local[dom.half_edges[:, 0]]] * ctx.sub.half_edge_mu
    flux = ctx.sub.contract.T @ flux_he
    lead = 1.0 / np.sqrt(ctx.pi_u) if use_volume else float(ctx.phi_at(ctx.o))
    return ctx.t_u * lead * flux


def normalization_constant(ctx: EstimateContext) -> float:
    """phi0(o) pi(phi0): the total mass of the central estimate over the boundary."""
    return float(ctx.phi_at(ctx.o) * np.sum(ctx.phi * ctx.sub.pi))


# ----------------------------------------------------------------------------
# H function and the global shape


def _prefactor(ctx, x, d):
    """phi0(x_d)^2 V(x, d) / (1 + d^2)."""
    xd = ctx.points.profile(x, [d])[0]
    return float(ctx.phi_at(xd) ** 2 * ctx.volume(x, d)) / (1.0 + d * d)


def h_function(ctx: EstimateContext, t, x, z) -> float:
    """H(t, x, z) with d = d_U(x, z).

    1 for t < d^2; 1 + c sum_{l=d^2}^{t} w(l) for d^2 <= t <= R^2; and past
    R^2 the value at R^2 plus c (min(t, T_U) - R^2)_+ / (phi0(o)^2 pi(U)),
    where c = phi0(x_d)^2 V(x, d) / (1 + d^2) and w(l) = 1/(phi0(x_sqrt l)^2 V(x, sqrt l)).
    """
    d = ctx.inner_distance(x, z)
    t = float(t)
    R2 = ctx.R * ctx.R
    c = _prefactor(ctx, x, d)
    val = 1.0
    top = int(np.floor(min(t, R2) + 1e-9))
    if top >= d * d:
        w = ctx.weight_profile(x, R2)
        val += c * float(w[d * d: top + 1].sum())
    if t >= R2:
        tail = max(min(t, ctx.t_u) - R2, 0.0)
        val += c * tail / (float(ctx.phi_at(ctx.o)) ** 2 * ctx.pi_u)
    return val


def regimes(ctx: EstimateContext, t, d, eps=0.5, a2=4.0) -> list:
    """Which of the four time regimes (t, d) falls in (they overlap)."""
    out = []
    if 1 + d <= t <= (1 + d) ** (2 - eps):
        out.append("short")
    if 1 + d <= t <= a2 * (1 + d) ** 2:
        out.append("intermediate")
    if (1 + d) ** 2 <= t <= a2 * ctx.R ** 2:
        out.append("bulk")
    if t >= d * d:
        out.append("long")
    return out


def global_estimate(ctx: EstimateContext, t, x, half_edge, c1=(1.0, 1.0), c2=(1.0, 1.0)):
    """Lower and upper expressions
    c1 (1+d^2) phi0(x) phi0(z) mu_zy / (phi0(x_d)^2 V(x, d)) H(t, x, z) exp(-c2 d^2 / t)
    for the chance of leaving through the dangling edge before time t.

    ``half_edge`` is an index into ``domain.half_edges``; ``c1``/``c2`` give
    (lower, upper) constants.
    """
    dom = ctx.domain
    z, _ = dom.half_edges[half_edge]
    d = ctx.inner_distance(x, z)
    if t < 1 + d:
        raise ValidationError("need t >= 1 + d_U(x, z)")
    mu = ctx.sub.half_edge_mu[half_edge]
    shape = float(ctx.phi_at(x) * ctx.phi_at(z) * mu) / _prefactor(ctx, x, d)
    shape *= h_function(ctx, t, x, z)
    lo = c1[0] * shape * np.exp(-c2[0] * d * d / t)
    hi = c1[1] * shape * np.exp(-c2[1] * d * d / t)
    return float(lo), float(hi)


def global_shape(ctx, t, x, half_edge) -> float:
    """The constant-free shape (c1 = c2 = 1)."""
    return global_estimate(ctx, t, x, half_edge)[0]


# ----------------------------------------------------------------------------
# harmonic measure from any start


def volume_growth_exponent(ctx: EstimateContext, x) -> float:
    """Least-squares exponent of r -> phi0(x_r)^2 V(x, r) over r = 1..R."""
    r = np.arange(1, max(ctx.R, 2) + 1, dtype=float)
    xr = ctx.points.profile(x, r)
    f = ctx.phi_at(xr) ** 2 * ctx.volume(x, r)
    slope = np.polyfit(np.log(r), np.log(f), 1)[0]
    return float(slope)


@dataclass
class HarmonicEstimate:
    value: float
    easy: float | None
    exponent: float


def harmonic_measure_estimate(ctx: EstimateContext, x, half_edge) -> HarmonicEstimate:
    """phi0(x) phi0(z) mu_zy {T_U + sum_{l=d^2}^{R^2} 1/(phi0(x_sqrt l)^2 V(x, sqrt l))}.

    The simplified bracket T_U + (1+d^2)/(phi0(x_d)^2 V(x, d)) is offered
    only when phi0(x_r)^2 V(x, r) grows with fitted exponent >= 2.1.
    """
    dom = ctx.domain
    z, _ = dom.half_edges[half_edge]
    d = ctx.inner_distance(x, z)
    R2 = ctx.R * ctx.R
    lead = float(ctx.phi_at(x) * ctx.phi_at(z) * ctx.sub.half_edge_mu[half_edge])
    s = 0.0
    if d * d <= R2:
        s = float(ctx.weight_profile(x, R2)[d * d:].sum())
    value = lead * (ctx.t_u + s)
    expo = volume_growth_exponent(ctx, x)
    easy = None
    if expo >= EASY_EXPONENT:
        easy = lead * (ctx.t_u + 1.0 / _prefactor(ctx, x, d))
    return HarmonicEstimate(value, easy, expo)


# ----------------------------------------------------------------------------
# closed-form shapes for the triangle and the punctured cube


def triangle_exit_neighbor(N, y1):
    """Interior neighbour used for the bottom-side exit point (y1, 0)."""
    if y1 == 1:
        return (1, 1)
    if y1 == N - 1:
        return (N - 2, 1)
    return (y1, 1)


def grp_formula(N, x, y, d) -> float:
    """Exit shape at (y1, 0) from x = (x1, x2) in the sector 0 < x1, 0 < x2, 2 x1 + x2 <= N:

        x1 x2 (x1+x2) (N-x1-x2) (N-x2) y1^2 (N-y1)^2
        ---------------------------------------------
        N^4 (x1+d)^2 (x2+d)^2 (x1+x2+2d)^2

    with d the inner distance from x to the neighbour of y given by
    :func:`triangle_exit_neighbor`.
    """
    x1, x2 = (float(v) for v in x)
    y1 = float(y[0] if np.ndim(y) else y)
    N, d = float(N), float(d)
    if np.ndim(y) and y[1] != 0:
        raise OutOfSector("exit point must lie on the bottom side")
    if not (x1 > 0 and x2 > 0 and 2 * x1 + x2 <= N and 0 < y1 < N):
        raise OutOfSector(f"({x1}, {x2}) -> ({y1}, 0) is outside the fundamental sector")
    num = x1 * x2 * (x1 + x2) * (N - x1 - x2) * (N - x2) * y1**2 * (N - y1) ** 2
    den = N**4 * (x1 + d) ** 2 * (x2 + d) ** 2 * (x1 + x2 + 2 * d) ** 2
    return float(num) / float(den)


def punctured_cube_estimates(n, N, x, y) -> float:
    """Exit shape for the cube {-N..N}^n minus the origin.

    ``y`` is the origin or a point of the top face (last coordinate N+1).
    For the origin with n >= 3 the value is per dangling edge.  |.| is the
    l1 norm.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (n,) or y.shape != (n,):
        raise ValidationError("points must have n coordinates")
    box_x = np.prod(1 - np.abs(x) / (N + 1))
    nx = np.abs(x).sum()
    if nx == 0:
        raise ValidationError("x must differ from the removed centre")
    if np.all(y == 0):
        if n >= 3:
            return float(box_x * nx ** (2 - n))
        return float(box_x * (1 + np.log1p(2 * N / nx)) / ((1 + np.log(N)) * (1 + np.log1p(nx))))
    if y[-1] != N + 1 or np.any(np.abs(y[:-1]) > N):
        raise UnsupportedFace("only the top face and the centre are handled; map by symmetry")
    dist = np.abs(x - y).sum()
    shrink = np.prod((1 - (np.abs(x) - dist) / (N + 1)) ** 2)
    if n >= 3:
        box_y = np.prod(1 - np.abs(y[:-1]) / (N + 1))
        return float(box_x * box_y * dist ** (2 - n) / ((N + 1) * shrink))
    box_y = np.prod(1 - (np.abs(y) - 1) / (N + 1))
    return float(box_x * box_y * np.log1p(nx) / (shrink * np.log1p(N)))


def s_sum(ctx: EstimateContext, x, d, upper=None) -> float:
    """sum_{l=d^2}^{upper} 1/(phi0(x_sqrt l)^2 (1 + l)), upper defaulting to 8 N^2 with N
    read from the domain's coordinate extent."""
    if upper is None:
        N = int(np.abs(ctx.graph.coords[ctx.domain.u]).max())
        upper = 8 * N * N
    ell = np.arange(d * d, upper + 1)
    xr = ctx.points.profile(x, np.sqrt(ell))
    return float(np.sum(1.0 / (ctx.phi_at(xr) ** 2 * (1.0 + ell))))


# ----------------------------------------------------------------------------
# Carleson-type checks and the eigenfunction ratio


@dataclass
class CarlesonReport:
    radii: list
    carleson: list      # max over x of max_{B_U(x,r)} phi0 / phi0(x_r)
    volume_min: list    # min over x of pi_phi(B_U(x,r)) / (V(x,r) phi0(x_r)^2)
    volume_max: list

    @property
    def volume_spread(self):
        return [hi / lo for lo, hi in zip(self.volume_min, self.volume_max)]

    @staticmethod
    def growth(values):
        v = np.asarray(values, dtype=float)
        return float(np.max(v[1:] / v[:-1])) if v.size > 1 else 1.0

    def to_dict(self):
        return {"radii": self.radii, "carleson": self.carleson, "volume_min": self.volume_min,
                "volume_max": self.volume_max, "volume_spread": self.volume_spread,
                "carleson_growth": self.growth(self.carleson),
                "volume_spread_growth": self.growth(self.volume_spread)}


def sample_points(domain: Domain, stride: int) -> np.ndarray:
    """Deterministic subset of U: lattice points with every coordinate divisible by ``stride``."""
    c = domain.graph.coords[domain.u]
    keep = np.all(c % stride == 0, axis=1)
    return domain.u[keep]


def carleson_check(ctx: EstimateContext, radii=(2, 4, 8), xs=None) -> CarlesonReport:
    dom = ctx.domain
    xs = dom.u if xs is None else np.asarray(xs)
    pi_phi = ctx.phi ** 2 * ctx.sub.pi
    carl, vmin, vmax = [], [], []
    for r in radii:
        best, lo, hi = 0.0, np.inf, 0.0
        for x in xs:
            ball = dom.metric.ball(x, r)
            xr = ctx.points.profile(x, [r])[0]
            p = float(ctx.phi_at(xr))
            best = max(best, float(ctx.phi[ball].max()) / p)
            q = float(pi_phi[ball].sum()) / (float(ctx.volume(x, r)) * p * p)
            lo, hi = min(lo, q), max(hi, q)
        carl.append(best)
        vmin.append(lo)
        vmax.append(hi)
    return CarlesonReport(list(radii), carl, vmin, vmax)


def eigenfunction_ratio_fit(ctx: EstimateContext, xs=None, tol=1e-6) -> float:
    """Smallest A with phi0(x)/phi0(z) <= A (1 + d_U(x, z))^A over the sampled pairs."""
    dom = ctx.domain
    xs = dom.u if xs is None else np.asarray(xs)
    zl = dom.local[xs]
    worst_ratio, worst_d = [], []
    for x in xs:
        d = dom.metric.row(x)[zl]
        ratio = ctx.phi_at(x) / ctx.phi[zl]
        worst_ratio.append(ratio)
        worst_d.append(d)
    ratio = np.concatenate(worst_ratio)
    base = 1.0 + np.concatenate(worst_d)

    def ok(a):
        return np.all(np.log(ratio) <= np.log(a) + a * np.log(base) + 1e-12)

    lo, hi = 1e-9, 1.0
    while not ok(hi):
        hi *= 2
        if hi > 1e6:
            raise ValidationError("eigenfunction ratio is not polynomially bounded")
    if ok(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


# ----------------------------------------------------------------------------
# Harnack harness


@dataclass
class HarnackReport:
    theta: int
    table: list          # rows {"R", "x0", "constant"}
    constant_ratio: float

    @property
    def constant(self) -> float:
        return max(row["constant"] for row in self.table)

    def per_scale(self) -> dict:
        out = {}
        for row in self.table:
            out[row["R"]] = max(out.get(row["R"], 0.0), row["constant"])
        return out

    def growth(self) -> float:
        s = self.per_scale()
        keys = sorted(s)
        vals = np.array([s[k] for k in keys])
        return float(np.max(vals[1:] / vals[:-1])) if vals.size > 1 else 1.0

    def to_dict(self):
        return {"theta": self.theta, "constant": self.constant,
                "per_scale": {str(k): v for k, v in self.per_scale().items()},
                "growth": self.growth(), "constant_function_ratio": self.constant_ratio,
                "table": self.table}


def _cylinder_ratio(K_ball, inner_mask, core_mask, tau, data_cols):
    """Worst ratio over initial deltas (columns) and their lateral time shifts."""
    m = K_ball.shape[0]
    steps = 4 * tau + 1
    S = np.zeros((m, len(data_cols)))
    S[data_cols, np.arange(len(data_cols))] = 1.0
    M = np.empty((steps + 1, S.shape[1]))
    core_vals = []
    for t in range(steps + 1):
        core_vals.append(S[core_mask])
        if t < steps:
            S_new = np.zeros_like(S)
            S_new[inner_mask] = K_ball[inner_mask] @ S
            S = S_new
    core_vals = np.stack(core_vals)            # time x core x data
    M = core_vals.max(axis=1)                  # time x data
    D = (core_vals[:-1] + core_vals[1:]).min(axis=1)  # k = 0..steps-1
    return M, D


def harnack_constant(graph: WeightedGraph, radii, x0_list, theta: int = 2) -> HarnackReport:
    """Largest ratio sup_{Q-} u / min_{Q+} (u(k, y) + u(k+1, y)) over the
    extreme nonnegative solutions on each cylinder.

    On Q = [0, 4 tau + 1] x B(x0, 2R+1), tau = ceil(R^theta), a solution is
    fixed by its initial values on B(x0, 2R+1) and its values on the outer
    shell B(x0, 2R+1) \\ B(x0, 2R) at later times.  The extreme rays are unit
    masses at single points of that data; a unit mass on the shell at time s
    is the shell's initial delta delayed by s, so every shell delta is
    evolved once and shifted.
    """
    if theta != 2:
        raise ValidationError("only theta = 2 cylinders are supported")
    kernel = build_kernel(graph)
    rows = []
    const_ratio = 0.0
    for R in radii:
        tau = int(np.ceil(R**theta))
        for x0 in x0_list:
            try:
                members, dist = _exact_ball(graph, int(x0), 2 * R + 1)
            except BallTruncated as exc:
                raise CylinderTruncated(str(exc)) from None
            dm = dist[members]
            K_ball = kernel.matrix[members][:, members].toarray()
            inner = dm <= 2 * R
            core = dm <= R
            shell = np.flatnonzero(~inner)
            M, D = _cylinder_ratio(K_ball, inner, core, tau, np.arange(members.size))
            # initial data: Q- = [tau, 2 tau], Q+ = [3 tau, 4 tau]
            num = M[tau: 2 * tau + 1].max(axis=0)
            den = D[3 * tau: 4 * tau + 1].min(axis=0)
            best = _ratio_max(num, den)
            # shell data delayed by s = 1..2 tau (later shifts never reach Q-)
            for j in shell:
                Mj, Dj = M[:, j], D[:, j]
                for s in range(1, 2 * tau + 1):
                    lo = max(tau - s, 0)
                    nj = Mj[lo: 2 * tau - s + 1].max()
                    if nj <= 0:
                        continue
                    dj = Dj[3 * tau - s: 4 * tau - s + 1].min()
                    best = max(best, np.inf if dj <= 0 else nj / dj)
            rows.append({"R": int(R), "x0": int(graph.ids[x0]), "constant": float(best)})
            const_ratio = max(const_ratio, constant_solution_ratio(graph, R, x0, theta))
    return HarnackReport(theta, rows, const_ratio)


def _ratio_max(num, den):
    keep = num > 0
    if np.any(keep & (den <= 0)):
        return np.inf
    if not np.any(keep):
        return 0.0
    return float(np.max(num[keep] / den[keep]))


def constant_solution_ratio(graph: WeightedGraph, R, x0, theta=2) -> float:
    """Evolve u = 1 through one cylinder and return sup_{Q-} u / min_{Q+}(u(k)+u(k+1))."""
    kernel = build_kernel(graph)
    tau = int(np.ceil(R**theta))
    members, dist = _exact_ball(graph, int(x0), 2 * R + 1)
    dm = dist[members]
    K_ball = kernel.matrix[members][:, members].toarray()
    inner, core = dm <= 2 * R, dm <= R
    u = np.ones(members.size)
    hist = [u[core]]
    for _ in range(4 * tau + 1):
        new = u.copy()  # shell keeps the constant boundary value
        new[inner] = K_ball[inner] @ u
        u = new
        hist.append(u[core])
    hist = np.array(hist)
    num = hist[tau: 2 * tau + 1].max()
    den = (hist[3 * tau: 4 * tau + 1] + hist[3 * tau + 1: 4 * tau + 2]).min()
    return float(num / den)


# ----------------------------------------------------------------------------
# Gaussian bounds


@dataclass
class GaussianFit:
    slope: float          # fitted c in log(k^t V) ~ a - c d^2/t
    intercept: float
    upper: float          # C1: max of k^t V exp(c d^2/t)
    lower: float          # c2: min of (k^t + k^{t+1}) V exp(2c d^2/t)
    residual: float       # max abs residual of the linear fit
    samples: int

    def to_dict(self):
        return dict(self.__dict__)


def gaussian_bound_fit(graph: WeightedGraph, sources, t_values, ratio_max=4.0) -> GaussianFit:
    """Fit the exponent of k^t(x, y) pi(B(x, sqrt t)) against d(x, y)^2 / t.

    Only pairs with d^2/t <= ``ratio_max`` and balls inside the patch are used.
    The lower bound is checked on k^t + k^{t+1}, which is positive even for
    periodic chains.
    """
    kernel = build_kernel(graph)
    KT = kernel.matrix.T.tocsr()
    t_values = sorted(int(t) for t in t_values)
    zs, logs, logs2 = [], [], []
    for x in sources:
        d = bfs_distances(graph.weights, int(x))
        v = np.zeros(graph.n)
        v[x] = 1.0
        t = 0
        rmax = int(np.ceil(np.sqrt(ratio_max * t_values[-1])))
        try:
            vol = volume_profile(graph, int(x), max(int(np.sqrt(t_values[-1])), 1))
            _exact_ball(graph, int(x), rmax)
        except BallTruncated as exc:
            raise AmbientTruncated(str(exc)) from None
        targets = set(t_values) | {tt + 1 for tt in t_values}
        store = {}
        while t <= t_values[-1] + 1:
            if t in targets:
                store[t] = v / graph.pi
            v = KT @ v
            t += 1
        for tt in t_values:
            V = vol[int(np.floor(np.sqrt(tt) + 1e-9))]
            z = d * d / tt
            mask = np.isfinite(z) & (z <= ratio_max)
            k = store[tt][mask]
            k2 = store[tt][mask] + store[tt + 1][mask]
            pos = k > 0
            zs.append(z[mask][pos])
            logs.append(np.log(k[pos] * V))
            logs2.append((z[mask], np.log(np.where(k2 > 0, k2, np.nan) * V)))
    z = np.concatenate(zs)
    L = np.concatenate(logs)
    slope, icpt = np.polyfit(z, L, 1)
    c = -slope
    resid = float(np.max(np.abs(L - (icpt + slope * z))))
    upper = float(np.exp(np.max(L + c * z)))
    lows = [np.nanmin(l2 + 2 * c * zz) for zz, l2 in logs2]
    lower = float(np.exp(np.min(lows)))
    return GaussianFit(float(c), float(icpt), upper, lower, resid, int(z.size))


# ----------------------------------------------------------------------------
# cut-off functions


@dataclass
class Cutoff:
    values: np.ndarray    # over the ambient graph
    checks: dict


def cutoff_theta2(graph: WeightedGraph, x, r, test_functions=None, seed=0) -> Cutoff:
    """phi(z) = min{1, 2 (1 - d(x, z)/r)_+} with checks of the cut-off properties.

    (a) phi >= 1 on B(x, r/2), (b) phi = 0 off B(x, r) and (c) the Lipschitz
    bound |phi(z) - phi(y)| <= 2 d(z, y)/r are checked exactly (on edges,
    which implies all pairs).  (d) is measured for s in {r/4, r/2, r} and
    reported as the smallest constant C2 that works with exponent 1.
    """
    d = bfs_distances(graph.weights, int(x))
    phi = np.minimum(1.0, 2.0 * np.maximum(0.0, 1.0 - d / r))
    phi[~np.isfinite(d)] = 0.0
    a = bool(np.all(phi[d <= r / 2] >= 1.0))
    b = bool(np.all(phi[d > r] == 0.0)) and bool(np.all(phi[d == r] == 0.0))
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    c = bool(np.all(np.abs(phi[u] - phi[v]) <= 2.0 / r + 1e-15))
    try:
        members, _ = _exact_ball(graph, int(x), 2 * int(np.ceil(r)))
    except BallTruncated as exc:
        raise AmbientTruncated(str(exc)) from None
    if test_functions is None:
        rng = np.random.default_rng(seed)
        test_functions = [np.ones(graph.n), (d <= r / 2).astype(float), rng.random(graph.n)]
        if graph.coords is not None:
            test_functions.append(graph.coords[:, 0].astype(float))
    grad2 = np.zeros(graph.n)
    dphi2 = (phi[u] - phi[v]) ** 2 * graph.mu
    np.add.at(grad2, u, dphi2)
    np.add.at(grad2, v, dphi2)
    worst = 0.0
    for s in (r / 4, r / 2, r):
        inner = d <= s
        outer = d <= 2 * s
        both = outer[u] & outer[v]
        for f in test_functions:
            lhs = float(np.sum(f[inner] ** 2 * grad2[inner]))
            rhs = float(np.sum((f[u[both]] - f[v[both]]) ** 2 * graph.mu[both])
                        + s ** -2 * np.sum(f[outer] ** 2 * graph.pi[outer]))
            if rhs > 0:
                worst = max(worst, lhs / (rhs * (s / r) ** 2))
    return Cutoff(phi, {"a": a, "b": b, "c": c, "d_constant": worst})
