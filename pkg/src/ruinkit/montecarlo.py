"""Direct simulation of the killed chain and of the three-player ruin game.

Every sample draws from its own counter-based stream: the state is
splitmix64(seed, sample index) and each draw advances it by the golden
increment.  Samples therefore see the same randomness whatever the thread
count, and per-sample outcomes are tallied afterwards in index order, so
results are bit-identical under any parallel schedule.

Kernel rows are sampled with Walker alias tables built once per row.
``RUINKIT_THREADS`` caps the numba thread pool.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.stats import binomtest

from .absorbing import ExitDistribution, SubKernel
from .errors import AllCensored, ValidationError

RECORDS = ("exit-point", "exit-half-edge", "first-elimination", "exit-time")
CENSOR_FACTOR = 100
PLAYERS = ("A", "B", "C")

# the TBB layer probes an old system library and warns; workqueue needs nothing
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def apply_thread_limit():
    """Set the numba pool size from RUINKIT_THREADS (clamped to what numba has)."""
    raw = os.environ.get("RUINKIT_THREADS")
    if not raw:
        return numba.get_num_threads()
    try:
        k = int(raw)
    except ValueError:
        raise ValidationError(f"RUINKIT_THREADS must be an integer, got {raw!r}") from None
    k = max(1, min(k, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(k)
    return k


@dataclass
class SimConfig:
    samples: int
    seed: int = 0
    max_steps: int | None = None
    record: str = "exit-point"

    def __post_init__(self):
        self.samples = int(self.samples)
        if self.samples < 1:
            raise ValidationError("samples must be >= 1")
        if self.max_steps is not None:
            self.max_steps = int(self.max_steps)
            if self.max_steps < 1:
                raise ValidationError("max_steps must be >= 1")
        if self.record not in RECORDS:
            raise ValidationError(f"record must be one of {RECORDS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        self.seed = int(self.seed)


def wilson_interval(k: int, n: int, level: float = 0.95):
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return ci.low, ci.high


@dataclass
class EmpiricalExit:
    """Tallies of completed runs; censored runs are counted apart.

    ``labels`` names the cells: ambient vertex ids (exit points), id pairs
    (dangling edges) or player names.
    """

    labels: list
    counts: np.ndarray
    censored: int
    samples: int
    _intervals: list | None = field(default=None, repr=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        if self.total == 0:
            raise AllCensored("no run finished before the step cap")
        return self.counts / self.total

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.samples

    def stderr(self) -> np.ndarray:
        p = self.frequencies
        return np.sqrt(p * (1 - p) / self.total)

    def intervals(self, level=0.95):
        """Wilson score intervals per cell."""
        if self._intervals is None or level != 0.95:
            out = [wilson_interval(k, self.total, level) for k in self.counts]
            if level != 0.95:
                return out
            self._intervals = out
        return self._intervals

    def tv_distance(self, reference) -> float:
        """Total variation distance to a reference law over the same cells."""
        ref = reference.probs if isinstance(reference, ExitDistribution) else reference
        ref = np.asarray(ref, dtype=float)
        if ref.shape != self.counts.shape:
            raise ValidationError("reference law has a different number of cells")
        return float(0.5 * np.abs(self.frequencies - ref).sum())

    def rows(self):
        ivs = self.intervals()
        p = self.frequencies
        return [(lab, int(c), float(q), lo, hi)
                for lab, c, q, (lo, hi) in zip(self.labels, self.counts, p, ivs)]


@dataclass
class ExitTimeProfile:
    """Empirical law of the exit time; censored runs have tau > cap."""

    times: np.ndarray
    censored: int
    samples: int
    cap: int

    def cdf(self, t) -> float:
        """P(tau <= t), unbiased for t < cap since censored runs exceed t."""
        return float(np.searchsorted(self.times, t, side="right") / self.samples)

    def cdf_interval(self, t, level=0.95):
        k = int(np.searchsorted(self.times, t, side="right"))
        return wilson_interval(k, self.samples, level)

    def stderr(self, t) -> float:
        p = self.cdf(t)
        return float(np.sqrt(p * (1 - p) / self.samples))


# ----------------------------------------------------------------------------
# random streams and alias tables


@numba.njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always", cache=True)
def _stream(seed, index):
    return _mix(seed + _mix((index + np.uint64(1)) * _GOLDEN))


@numba.njit(inline="always", cache=True)
def _uniform(state):
    state = state + _GOLDEN
    return state, np.float64(_mix(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def build_alias(indptr, probs):
    """Walker alias tables per CSR row, stored in the CSR layout."""
    cut = np.ones(probs.size)
    alias = np.arange(probs.size, dtype=np.int64)
    for r in range(indptr.size - 1):
        lo, hi = indptr[r], indptr[r + 1]
        k = hi - lo
        if k == 0:
            continue
        p = probs[lo:hi] * (k / probs[lo:hi].sum())
        small = [i for i in range(k) if p[i] < 1.0]
        large = [i for i in range(k) if p[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            cut[lo + s] = p[s]
            alias[lo + s] = lo + g
            p[g] -= 1.0 - p[s]
            (small if p[g] < 1.0 else large).append(g)
        for i in small + large:
            cut[lo + i] = 1.0
            alias[lo + i] = lo + i
    return cut, alias


@numba.njit(parallel=True, cache=True)
def _walk(indptr, targets, cut, alias, inside, start, seed, samples, cap,
          last, prev, steps):
    for s in numba.prange(samples):
        state = _stream(seed, np.uint64(s))
        x = start
        p = start
        t = 0
        while inside[x] and t < cap:
            lo = indptr[x]
            k = indptr[x + 1] - lo
            state, u = _uniform(state)
            v = u * k
            j = min(int(v), k - 1)
            e = lo + j
            if v - j >= cut[e]:
                e = alias[e]
            p = x
            x = targets[e]
            t += 1
        last[s] = x
        prev[s] = p
        steps[s] = t if not inside[x] else -1


@numba.njit(parallel=True, cache=True)
def _ruin(a0, b0, c0, seed, samples, cap, loser, steps):
    for s in numba.prange(samples):
        state = _stream(seed, np.uint64(s))
        a, b, c = a0, b0, c0
        t = 0
        while a > 0 and b > 0 and c > 0 and t < cap:
            state, u = _uniform(state)
            m = min(int(u * 6.0), 5)
            # pair (A,B), (A,C) or (B,C), then the direction of the transfer
            sign = 1 if m % 2 == 0 else -1
            pair = m // 2
            if pair == 0:
                a += sign
                b -= sign
            elif pair == 1:
                a += sign
                c -= sign
            else:
                b += sign
                c -= sign
            t += 1
        if a == 0:
            loser[s] = 0
        elif b == 0:
            loser[s] = 1
        elif c == 0:
            loser[s] = 2
        else:
            loser[s] = -1
        steps[s] = t


# ----------------------------------------------------------------------------
# public operations


class _Sampler:
    """Alias tables over the full kernel, cached per kernel object."""

    _cache: dict = {}

    def __init__(self, sub: SubKernel):
        K = sub.kernel.matrix
        key = id(K)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not K:
            cut, alias = build_alias(K.indptr, K.data)
            hit = (K, cut, alias)
            self._cache.clear()
            self._cache[key] = hit
        self.indptr = K.indptr.astype(np.int64)
        self.targets = K.indices.astype(np.int64)
        self.cut, self.alias = hit[1], hit[2]
        self.inside = np.zeros(K.shape[0], dtype=np.bool_)
        self.inside[sub.domain.u] = True


def default_cap(sub: SubKernel, t_u: float | None = None) -> int:
    """100 T_U, with T_U = 1 / (1 - beta0) from the Perron root."""
    if t_u is None:
        from .spectral import perron_pair
        t_u = perron_pair(sub).t_u
    return int(np.ceil(CENSOR_FACTOR * t_u))


def _run_walks(sub: SubKernel, x, config: SimConfig, t_u=None):
    if sub.domain.local[x] < 0:
        raise ValidationError("start point must lie in U")
    apply_thread_limit()
    cap = config.max_steps if config.max_steps is not None else default_cap(sub, t_u)
    smp = _Sampler(sub)
    n = config.samples
    last = np.empty(n, dtype=np.int64)
    prev = np.empty(n, dtype=np.int64)
    steps = np.empty(n, dtype=np.int64)
    _walk(smp.indptr, smp.targets, smp.cut, smp.alias, smp.inside, int(x),
          np.uint64(config.seed), n, int(cap), last, prev, steps)
    return last, prev, steps, cap


def simulate_exits(sub: SubKernel, x, config: SimConfig, t_u=None) -> EmpiricalExit:
    """Run the chain from x until it leaves U and tally where it lands.

    ``config.record`` selects outer boundary points ("exit-point") or
    dangling edges ("exit-half-edge"); cells follow the order of
    ``domain.boundary`` and ``domain.half_edges`` respectively.
    """
    if config.record not in ("exit-point", "exit-half-edge"):
        raise ValidationError("simulate_exits records exit points or half-edges")
    dom = sub.domain
    last, prev, steps, _ = _run_walks(sub, x, config, t_u)
    done = steps >= 0
    ids = dom.graph.ids
    if config.record == "exit-point":
        cells = dom.boundary_local[last[done]]
        counts = np.bincount(cells, minlength=dom.boundary.size)
        labels = [int(v) for v in ids[dom.boundary]]
    else:
        he = dom.half_edges
        # half_edges are sorted by (y, z); encode pairs to locate each run
        key = he[:, 1] * dom.graph.n + he[:, 0]
        cells = np.searchsorted(key, last[done] * dom.graph.n + prev[done])
        counts = np.bincount(cells, minlength=he.shape[0])
        labels = [(int(ids[z]), int(ids[y])) for z, y in he]
    censored = int((~done).sum())
    if censored == config.samples:
        raise AllCensored(f"all {censored} runs hit the step cap")
    return EmpiricalExit(labels, counts.astype(np.int64), censored, config.samples)


def exit_time_profile(sub: SubKernel, x, config: SimConfig, t_u=None) -> ExitTimeProfile:
    """Empirical distribution of tau_U from x."""
    _, _, steps, cap = _run_walks(sub, x, config, t_u)
    done = steps >= 0
    censored = int((~done).sum())
    if censored == config.samples:
        raise AllCensored(f"all {censored} runs hit the step cap")
    return ExitTimeProfile(np.sort(steps[done]), censored, config.samples, int(cap))


def ruin_game_time_scale(N: int) -> float:
    """1 / (1 - beta0) for the game region of total N."""
    return 1.0 / (1.0 - (1.0 + 2.0 * np.cos(2 * np.pi / N)) / 3.0)


def first_elimination(N: int, start=None, config: SimConfig | None = None) -> EmpiricalExit:
    """Three players A, B, C with fortunes summing to N.

    Each round a pair is picked uniformly and one unit moves between them in
    a fair coin direction.  Tallies which player reaches 0 first.  The default
    start is (N/4, N/4, N/2) rounded down for A and B.
    """
    N = int(N)
    if start is None:
        start = (N // 4, N // 4, N - 2 * (N // 4))
    a, b, c = (int(v) for v in start)
    if a + b + c != N:
        raise ValidationError("starting fortunes must sum to N")
    if min(a, b, c) < 1:
        raise ValidationError("every player must start with at least one unit")
    if config is None:
        config = SimConfig(10**6, record="first-elimination")
    apply_thread_limit()
    cap = config.max_steps
    if cap is None:
        cap = int(np.ceil(CENSOR_FACTOR * ruin_game_time_scale(N))) if N >= 3 else 1
    n = config.samples
    loser = np.empty(n, dtype=np.int64)
    steps = np.empty(n, dtype=np.int64)
    _ruin(a, b, c, np.uint64(config.seed), n, int(cap), loser, steps)
    done = loser >= 0
    censored = int((~done).sum())
    if censored == n:
        raise AllCensored(f"all {censored} games hit the step cap")
    counts = np.bincount(loser[done], minlength=3).astype(np.int64)
    return EmpiricalExit(list(PLAYERS), counts, censored, n)
