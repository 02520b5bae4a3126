import numpy as np
import pytest

from ruinkit.absorbing import exit_by_time, poisson_kernel
from ruinkit.errors import AmbientTruncated, CylinderTruncated, OutOfSector, UnsupportedFace
from ruinkit.estimates import (
    EstimateContext,
    RatioReport,
    carleson_check,
    central_estimates_all,
    constant_solution_ratio,
    cutoff_theta2,
    eigenfunction_ratio_fit,
    gaussian_bound_fit,
    global_estimate,
    global_shape,
    grp_formula,
    h_function,
    harmonic_measure_estimate,
    harnack_constant,
    normalization_constant,
    punctured_cube_estimates,
    regimes,
    s_sum,
    triangle_exit_neighbor,
)
from ruinkit.models import _lattice

from conftest import built


def ctx_for(kind, N, **kw):
    kw.setdefault("margin", None)
    g, d, sub, G, pair = built(kind, N, **kw)
    return g, d, sub, G, EstimateContext(sub, pair)


def z2(L, mu=1 / 8):
    return _lattice([-L, -L], [L, L], [(1, 0), (0, 1)], mu)


def test_ratio_report_ignores_nonpositive_estimates():
    rep = RatioReport([1.0, 2.0, 3.0], [0.5, 0.0, 3.0], [("a",), ("b",), ("c",)])
    assert rep.valid.size == 2
    assert rep.spread == pytest.approx(2.0)
    rows = list(rep.rows())
    assert rows[0] == ("a", 1.0, 0.5, 2.0)
    assert np.isnan(rows[1][-1])


def test_central_estimate_total_mass():
    g, d, sub, G, ctx = ctx_for("BoxZn", 8)
    est = central_estimates_all(ctx)
    np.testing.assert_allclose(est.sum(), normalization_constant(ctx), rtol=1e-10)
    phi_o = ctx.phi_at(ctx.o)
    np.testing.assert_allclose(
        est.sum(), ctx.t_u * phi_o * (1 - ctx.pair.beta0) * np.sum(ctx.phi * sub.pi), rtol=1e-10)


def test_box_right_face_band():
    N = 8
    g, d, sub, G, ctx = ctx_for("BoxZn", N)
    law = poisson_kernel(sub, G, ctx.o)
    est = central_estimates_all(ctx)
    face = g.coords[d.boundary][:, 0] == N + 1
    rep = RatioReport(law.probs[face], est[face])
    assert rep.spread <= 20


def test_box_centre_exit_against_cosine_profile():
    bands = []
    for N in (8, 16):
        g, d, sub, G, ctx = ctx_for("BoxZn", N)
        law = poisson_kernel(sub, G, g.index_of((0, 0)))
        n = np.arange(-N, N + 1)
        exact = np.array([law.at(g.index_of((N + 1, k))) for k in n])
        rep = RatioReport(exact, np.cos(np.pi * n / (2 * (N + 1))) / (N + 1))
        bands.append((rep.min, rep.max))
    assert bands[1][1] / bands[1][0] <= bands[0][1] / bands[0][0] * 1.05
    assert 0.1 < bands[1][0] and bands[1][1] < 0.3


def test_h_function_branches():
    g, d, sub, G, ctx = ctx_for("TriangleGame", 24)
    x = g.index_of((3, 3))
    z = g.index_of((9, 6))
    dist = ctx.inner_distance(x, z)
    assert h_function(ctx, dist * dist - 1, x, z) == 1.0
    vals = [h_function(ctx, t, x, z) for t in (dist**2, ctx.R**2, 2 * ctx.R**2, 10 * ctx.t_u)]
    assert np.all(np.diff(vals) >= 0)
    np.testing.assert_allclose(h_function(ctx, 10 * ctx.t_u, x, z),
                               h_function(ctx, 100 * ctx.t_u, x, z), rtol=1e-15)


def test_regimes_overlap():
    g, d, sub, G, ctx = ctx_for("BoxZn", 8)
    assert regimes(ctx, 3, 2) == ["short", "intermediate"]
    assert "bulk" in regimes(ctx, 16, 3) and "long" in regimes(ctx, 16, 3)
    assert regimes(ctx, 1000, 3) == ["long"]


def test_global_estimate_one_step():
    g, d, sub, G, ctx = ctx_for("BoxZn", 4)
    j = 0
    z, y = d.half_edges[j]
    exact = exit_by_time(sub, z, 1, extended=True).probs[j]
    np.testing.assert_allclose(exact, sub.kernel.matrix[z, y])
    lo, hi = global_estimate(ctx, 1, z, j)
    assert lo == hi == global_shape(ctx, 1, z, j)
    assert 0 < exact / lo < np.inf
    with pytest.raises(Exception):
        global_estimate(ctx, 1, ctx.o, j)


def test_global_shape_tracks_exit_by_time():
    g, d, sub, G, ctx = ctx_for("BoxZn", 8)
    x = g.index_of((2, 1))
    j = int(np.flatnonzero(g.coords[d.half_edges[:, 1]][:, 0] == 9)[4])
    dist = ctx.inner_distance(x, d.half_edges[j, 0])
    ratios = []
    for t in (dist + 1, dist**2, 4 * dist**2, 400):
        exact = exit_by_time(sub, x, t, extended=True).probs[j]
        ratios.append(exact / global_shape(ctx, t, x, j))
    assert min(ratios) > 0 and np.isfinite(max(ratios))


def test_harmonic_measure_estimate_band_narrows():
    spreads = []
    for N in (8, 16):
        g, d, sub, G, ctx = ctx_for("BoxZn", N)
        x = g.index_of((3, -2))
        exact = poisson_kernel(sub, G, x, extended=True).probs
        est = [harmonic_measure_estimate(ctx, x, j).value for j in range(exact.size)]
        spreads.append(RatioReport(exact, est).spread)
    assert spreads[1] <= spreads[0]


def test_s_sum_positive_and_decreasing_in_d():
    g, d, sub, G, ctx = ctx_for("TriangleGame", 16)
    x = g.index_of((2, 2))
    assert s_sum(ctx, x, 1) > s_sum(ctx, x, 4) > 0


def test_grp_reduces_at_the_corner():
    for N in (32, 64):
        y = np.arange(1, N)
        v = np.array([grp_formula(N, (1, 1), (k, 0), k - 1) for k in y])
        r = v / ((N - y) ** 2 / (N**2 * y**4.0))
        np.testing.assert_allclose(r, r[0], rtol=1e-12)


def grp_central_spread(N):
    g, d, sub, G, ctx = ctx_for("TriangleGame", N, margin=1)
    x = g.index_of((N // 4, N // 4))
    law = poisson_kernel(sub, G, x)
    exact, shape = [], []
    for y1 in range(1, N):
        dist = ctx.inner_distance(x, g.index_of(triangle_exit_neighbor(N, y1)))
        exact.append(law.at(g.index_of((y1, 0))))
        shape.append(grp_formula(N, (N // 4, N // 4), (y1, 0), dist))
    return RatioReport(exact, shape).spread


def test_grp_central_start_band_is_stable():
    s24, s48 = grp_central_spread(24), grp_central_spread(48)
    assert np.isfinite(s24)
    assert s48 <= 1.05 * s24


def test_grp_sector_checks():
    with pytest.raises(OutOfSector):
        grp_formula(12, (5, 5), (3, 0), 2)
    with pytest.raises(OutOfSector):
        grp_formula(12, (1, 1), (3, 1), 2)


def test_punctured_estimates():
    v = punctured_cube_estimates(2, 8, (1, 0), (0, 0))
    expect = (1 - 1 / 9) * (1 + np.log1p(16)) / ((1 + np.log(8)) * (1 + np.log(2)))
    np.testing.assert_allclose(v, expect)
    assert punctured_cube_estimates(3, 6, (1, 0, 0), (0, 0, 0)) > 0
    assert punctured_cube_estimates(3, 6, (1, 2, 3), (0, 0, 7)) > 0
    with pytest.raises(UnsupportedFace):
        punctured_cube_estimates(3, 6, (1, 0, 0), (7, 0, 0))


def test_carleson_and_eigenfunction_ratio():
    g, d, sub, G, ctx = ctx_for("BoxZn", 12)
    rep = carleson_check(ctx, (2, 4))
    assert all(1 <= c < 10 for c in rep.carleson)
    assert all(v > 0 for v in rep.volume_min)
    assert 0 < eigenfunction_ratio_fit(ctx) < 5


def test_carleson_needs_ambient_room():
    g, d, sub, G, ctx = ctx_for("BoxZn", 12, margin=1)
    with pytest.raises(AmbientTruncated):
        carleson_check(ctx, (8,))


def test_harnack_on_lazy_z2():
    g = z2(12)
    x0 = g.index_of((0, 0))
    rep = harnack_constant(g, [1, 2], [x0])
    assert np.isfinite(rep.constant) and rep.constant >= 1
    assert rep.constant_ratio <= 2
    assert set(rep.per_scale()) == {1, 2}
    with pytest.raises(CylinderTruncated):
        harnack_constant(g, [6], [x0])


def test_constant_solution_ratio_is_one_half():
    g = z2(10)
    np.testing.assert_allclose(constant_solution_ratio(g, 2, g.index_of((0, 0))), 0.5)


def test_gaussian_fit_lazy_z2():
    g = z2(30)
    fit = gaussian_bound_fit(g, [g.index_of((0, 0))], [9, 16, 25])
    assert fit.slope > 0
    assert 0 < fit.lower <= fit.upper < np.inf
    assert fit.residual < 3


def test_gaussian_lower_bound_on_bipartite_chain():
    g = z2(30, mu=1 / 4)
    from ruinkit.graph_core import build_kernel
    K = build_kernel(g).matrix.T.tocsr()
    x = g.index_of((0, 0))
    v = np.zeros(g.n)
    v[x] = 1.0
    for _ in range(9):
        v = K @ v
    y_even = g.index_of((2, 0))
    assert v[y_even] == 0.0
    fit = gaussian_bound_fit(g, [x], [9, 16])
    assert fit.lower > 0


def test_cutoff_properties():
    g = z2(20)
    cut = cutoff_theta2(g, g.index_of((0, 0)), 6)
    assert cut.checks["a"] and cut.checks["b"] and cut.checks["c"]
    assert np.isfinite(cut.checks["d_constant"])


def median_strip_spread(N):
    g, d, sub, G, ctx = ctx_for("TriangleGame", N)
    bottom = np.flatnonzero(g.coords[d.half_edges[:, 1]][:, 1] == 0)
    exact, est = [], []
    for k in range(1, N // 2):
        x = g.index_of((k, k))
        law = poisson_kernel(sub, G, x, extended=True).probs
        exact.extend(law[bottom])
        est.extend(harmonic_measure_estimate(ctx, x, int(j)).value for j in bottom)
    return RatioReport(exact, est).spread


def test_harmonic_estimate_median_strip_growth_slows():
    # small N is dominated by the T_U term; the band widens ever more slowly
    s = [median_strip_spread(N) for N in (12, 24, 48)]
    np.testing.assert_allclose(s, [63.24, 425.7, 876.8], rtol=1e-3)
    assert s[2] / s[1] < s[1] / s[0]
    assert s[2] / s[1] < 2.1
