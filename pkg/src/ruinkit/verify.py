"""Invariant suites run by ``ruinkit verify``.

Each suite returns a JSON-ready dict and raises :class:`InvariantViolation`
naming the first invariant that fails.
"""
from __future__ import annotations

import numpy as np

from .absorbing import DENSE_CAP, GreensFunction, poisson_matrix, restrict
from .doob import (
    conjugation_error,
    doob_poisson_matrix,
    doob_transform,
    flux_identity_check,
)
from .errors import AmbientTruncated, CylinderTruncated, InvariantViolation, NoAdmissiblePoint
from .estimates import (
    EstimateContext,
    RatioReport,
    carleson_check,
    central_estimates_all,
    eigenfunction_ratio_fit,
    gaussian_bound_fit,
    harnack_constant,
    normalization_constant,
)
from .graph_core import ellipticity
from .spectral import full_decomposition, perron_pair

SUITES = ("all", "doob", "estimate", "harnack", "heatkernel", "carleson")

ROW_SUM_TOL = 1e-10
REVERSIBILITY_TOL = 1e-12
CONJUGATION_TOL = 1e-10
FLUX_TOL = 1e-10
ROUTE_TOL = 1e-8


def _require(name, ok, detail):
    if not ok:
        raise InvariantViolation(name, detail)


class Workspace:
    """Shared pieces for one (graph, domain): kernel, G_U, Perron pair, Doob chain."""

    def __init__(self, graph, domain):
        self.graph = graph
        self.domain = domain
        self.sub = restrict(None, domain)
        self._greens = self._pair = self._chain = self._decomp = None

    @property
    def greens(self):
        if self._greens is None:
            self._greens = GreensFunction(self.sub)
        return self._greens

    @property
    def pair(self):
        if self._pair is None:
            self._pair = perron_pair(self.sub)
        return self._pair

    @property
    def chain(self):
        if self._chain is None:
            self._chain = doob_transform(self.sub, self.pair)
        return self._chain

    @property
    def decomposition(self):
        if self._decomp is None and self.sub.size <= DENSE_CAP:
            self._decomp = full_decomposition(self.sub)
        return self._decomp


def route_agreement(ws: Workspace) -> dict:
    """Max deviation of the spectral and Doob exit laws from the Green's function one,
    over every source and every dangling edge."""
    P = poisson_matrix(ws.sub, ws.greens, extended=True)
    out = {}
    dec = ws.decomposition
    if dec is not None:
        G = (dec.phis / (1.0 - dec.betas)) @ dec.phis.T * ws.sub.pi[None, :]
        out["spectral"] = float(np.max(np.abs(P - G @ ws.sub.leak)))
    out["doob"] = float(np.max(np.abs(P - doob_poisson_matrix(ws.chain, extended=True))))
    return out


def suite_doob(ws: Workspace, seed: int = 0, samples: int = 20) -> dict:
    chain = ws.chain
    rs = chain.row_sum_error()
    _require("doob row sums", rs <= ROW_SUM_TOL, f"max |K_phi 1 - 1| = {rs:.3e}")
    rev = chain.reversibility_error()
    _require("doob reversibility", rev <= REVERSIBILITY_TOL, f"max flux asymmetry {rev:.3e}")
    rng = np.random.default_rng(seed)
    conj = 0.0
    for _ in range(samples):
        x = int(rng.choice(ws.domain.u))
        t = int(rng.integers(0, 201))
        v = np.zeros(ws.sub.size)
        v[ws.domain.local[x]] = 1.0
        for _ in range(t):
            v = ws.sub.step_rows(v)
        conj = max(conj, conjugation_error(chain, t, x, v / ws.sub.pi))
    _require("conjugation identity", conj <= CONJUGATION_TOL, f"max error {conj:.3e}")
    flux = flux_identity_check(ws.sub, ws.pair)
    _require("flux identity", flux.residual <= FLUX_TOL * flux.pi_phi,
             f"residual {flux.residual:.3e} vs pi(phi0) {flux.pi_phi:.3e}")
    routes = route_agreement(ws)
    worst = max(routes.values())
    _require("route agreement", worst <= ROUTE_TOL, f"max deviation {worst:.3e}")
    return {"row_sum_err": rs, "reversibility_err": rev, "conjugation_err": conj,
            "flux_residual": flux.residual, "flux_relative": flux.relative,
            "route_agreement_err": worst, "route_detail": routes,
            "beta0": ws.pair.beta0, "T_U": ws.pair.t_u}


def suite_heatkernel(ws: Workspace, t_values=(4, 16, 64)) -> dict:
    """Killed heat kernel: row stepping against the spectral sum, domination by
    the free kernel, and a Gaussian fit on the ambient patch."""
    sub = ws.sub
    x = int(EstimateContext(sub, ws.pair).o)
    out = {"source": int(ws.graph.ids[x])}
    dec = ws.decomposition
    v = np.zeros(sub.size)
    v[ws.domain.local[x]] = 1.0
    free = np.zeros(ws.graph.n)
    free[x] = 1.0
    KT = sub.kernel.matrix.T.tocsr()
    worst_spec, worst_dom = 0.0, 0.0
    t = 0
    for target in sorted(t_values):
        while t < target:
            v = sub.step_rows(v)
            free = KT @ free
            t += 1
        if dec is not None:
            i = ws.domain.local[x]
            spec = (dec.phis[i] * dec.betas ** t) @ dec.phis.T
            worst_spec = max(worst_spec, float(np.max(np.abs(spec - v / sub.pi))))
        worst_dom = max(worst_dom, float(np.max(v - free[ws.domain.u])))
    _require("killed kernel below free kernel", worst_dom <= 1e-14,
             f"excess {worst_dom:.3e}")
    if dec is not None:
        _require("spectral heat kernel", worst_spec <= 1e-10, f"max error {worst_spec:.3e}")
        out["spectral_err"] = worst_spec
    out["domination_excess"] = max(worst_dom, 0.0)
    try:
        fit = gaussian_bound_fit(ws.graph, [x], [t for t in t_values if t >= 4])
        out["gaussian"] = fit.to_dict()
    except AmbientTruncated as exc:
        out["gaussian"] = {"skipped": str(exc)}
    return out


def suite_estimate(ws: Workspace) -> dict:
    """Exact exit law from the central point against the central estimate shape."""
    ctx = EstimateContext(ws.sub, ws.pair)
    P = ws.greens.row(ctx.o) @ ws.sub.leak @ ws.sub.contract
    est = central_estimates_all(ctx)
    rep = RatioReport(P, est)
    _require("central estimate positive", rep.valid.size == P.size,
             "some exit point has a non-positive ratio")
    norm = normalization_constant(ctx)
    total = float(P.sum())
    _require("exit law is a probability", abs(total - 1) <= 1e-10, f"total mass {total!r}")
    return {"center": int(ws.graph.ids[ctx.o]), "depth": ctx.R, "T_U": ctx.t_u,
            "central": rep.to_dict(), "normalization": norm,
            "ellipticity": ellipticity(ws.graph).p_e}


def suite_carleson(ws: Workspace, radii=(2, 4, 8)) -> dict:
    ctx = EstimateContext(ws.sub, ws.pair)
    radii = [r for r in radii if r <= max(ctx.R, 1)]
    try:
        rep = carleson_check(ctx, radii)
    except (NoAdmissiblePoint, AmbientTruncated) as exc:
        return {"skipped": str(exc)}
    out = rep.to_dict()
    out["eigenfunction_ratio_A"] = eigenfunction_ratio_fit(ctx)
    _require("carleson ratio finite", all(np.isfinite(rep.carleson)), "infinite ratio")
    return out


def suite_harnack(ws: Workspace, radii=(1, 2)) -> dict:
    ctx = EstimateContext(ws.sub, ws.pair)
    try:
        rep = harnack_constant(ws.graph, radii, [ctx.o])
    except CylinderTruncated as exc:
        return {"skipped": str(exc)}
    _require("harnack constant finite", np.isfinite(rep.constant), "unbounded ratio")
    _require("constant solution ratio", rep.constant_ratio <= 2.0,
             f"ratio {rep.constant_ratio:.3f}")
    return rep.to_dict()


def run_suite(name: str, graph, domain, seed: int = 0) -> dict:
    ws = Workspace(graph, domain)
    runners = {
        "doob": lambda: suite_doob(ws, seed),
        "heatkernel": lambda: suite_heatkernel(ws),
        "estimate": lambda: suite_estimate(ws),
        "carleson": lambda: suite_carleson(ws),
        "harnack": lambda: suite_harnack(ws),
    }
    if name == "all":
        out = {}
        for key, fn in runners.items():
            out[key] = fn()
        out["route_agreement_err"] = out["doob"]["route_agreement_err"]
        return out
    return runners[name]()
