from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruinkit.absorbing import (
    GreensFunction,
    exit_by_time,
    greens_function,
    heat_kernel_rows,
    normal_derivative,
    poisson_kernel,
    poisson_matrix,
    restrict,
)
from ruinkit.domain import build_domain
from ruinkit.errors import ValidationError
from ruinkit.graph_core import build_kernel
from ruinkit.models import ModelSpec, _lattice, generate

from conftest import built, exact_law, oracles


def law_by_coords(g, law):
    return {tuple(g.coords[y]): p for y, p in zip(law.domain.boundary, law.probs)}


def test_box_N1_corner_row_sum():
    g, d, sub, _, _ = built("BoxZn", 1)
    i = d.local[g.index_of((1, 1))]
    expect = float(Fraction(oracles()["box2_N1_corner_row_sum"]))
    np.testing.assert_allclose(sub.matrix[i].sum(), expect, rtol=1e-15)
    np.testing.assert_allclose(sub.defect[i], 1 - expect, rtol=1e-14)


def test_line_green_function_centre():
    g, d, sub, G, _ = built("Line", 4)
    x = g.index_of((2,))
    np.testing.assert_allclose(G.row(x)[d.local[x]], float(oracles()["line4"]["G22"]), rtol=1e-14)


def test_line_exit_probability():
    g, d, sub, G, _ = built("Line", 4)
    law = poisson_kernel(sub, G, g.index_of((1,)))
    ref = exact_law(oracles()["line4"]["exit_from_1"])
    got = law_by_coords(g, law)
    for c, p in ref.items():
        np.testing.assert_allclose(got[c], p, atol=1e-15)


@pytest.mark.parametrize("start", ["from_0_0", "from_1_-2"])
def test_box_exit_law_against_rational_solve(start):
    g, d, sub, G, _ = built("BoxZn", 2)
    x = g.index_of(tuple(int(v) for v in start[5:].split("_")))
    got = law_by_coords(g, poisson_kernel(sub, G, x))
    ref = exact_law(oracles()["box2_N2"][start])
    assert set(got) == set(ref)
    for c in ref:
        np.testing.assert_allclose(got[c], ref[c], atol=1e-15)


def test_triangle_exit_law_against_rational_solve():
    g, d, sub, G, _ = built("TriangleGame", 6)
    got = law_by_coords(g, poisson_kernel(sub, G, g.index_of((2, 2))))
    ref = exact_law(oracles()["triangle_N6"]["from_2_2"])
    assert set(got) == set(ref)
    for c in ref:
        np.testing.assert_allclose(got[c], ref[c], atol=1e-15)


def test_green_function_reversibility():
    g, d, sub, G, _ = built("TriangleGame", 8)
    dens = G.density()
    np.testing.assert_allclose(dens, dens.T, atol=1e-13)


def test_neumann_series_matches_solve():
    g, d, sub, G, _ = built("BoxZn", 3)
    K = sub.matrix.toarray()
    S = np.eye(sub.size)
    P = np.eye(sub.size)
    for _ in range(10**4):
        P = P @ K
        S += P
        if P.max() < 1e-18:
            break
    np.testing.assert_allclose(S, G.full(), atol=1e-8)


def test_exit_law_sums_to_one_and_is_harmonic():
    g, d, sub, G, _ = built("TriangleGame", 12)
    P = poisson_matrix(sub, G)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    # u(x) = P_x(exit at y) is K-harmonic in U with boundary value 1{y}
    y = 5
    u = np.zeros(g.n)
    u[d.u] = P[:, y]
    u[d.boundary[y]] = 1.0
    Ku = sub.kernel.matrix @ u
    np.testing.assert_allclose(Ku[d.u], u[d.u], atol=1e-13)


def test_extended_contracts_to_outer():
    g, d, sub, G, _ = built("TriangleGame", 8)
    x = g.index_of((3, 2))
    ext = poisson_kernel(sub, G, x, extended=True)
    out = poisson_kernel(sub, G, x)
    np.testing.assert_allclose(ext.contract().probs, out.probs, atol=1e-16)
    y = d.boundary[3]
    assert out.at(y) == pytest.approx(out.probs[3])


def test_normal_derivative_equals_density():
    g, d, sub, G, _ = built("BoxZn", 4)
    x = g.index_of((1, 2))
    f = d.extend(G.density_row(x))
    law = poisson_kernel(sub, G, x)
    for b, y in enumerate(d.boundary):
        np.testing.assert_allclose(normal_derivative(d, f, y), law.densities[b], atol=1e-14)


def test_exit_by_time_small_cases():
    g, d, sub, G, _ = built("Line", 4)
    law = exit_by_time(sub, g.index_of((2,)), 2)
    got = law_by_coords(g, law)
    np.testing.assert_allclose(got[(0,)], float(Fraction(oracles()["line4"]["exit_at_0_by_2_from_2"])))
    with pytest.raises(ValidationError):
        exit_by_time(sub, g.index_of((2,)), 0)


def test_exit_by_time_zero_before_distance_and_converges():
    g, d, sub, G, _ = built("TriangleGame", 12)
    x = g.index_of((4, 4))
    row = d.metric.to_boundary(x)
    for t in (1, 2, 3, 5):
        law = exit_by_time(sub, x, t)
        assert np.all(law.probs[row > t] == 0)
    far = exit_by_time(sub, x, 4000)
    np.testing.assert_allclose(far.probs, poisson_kernel(sub, G, x).probs, atol=1e-12)
    a, b = exit_by_time(sub, x, 20).probs, exit_by_time(sub, x, 40).probs
    assert np.all(b >= a - 1e-17)


def test_heat_rows_killed_below_free():
    g, d, sub, G, _ = built("BoxZn", 4)
    x = g.index_of((0, 0))
    free = np.zeros(g.n)
    free[x] = 1.0
    KT = sub.kernel.matrix.T
    for _ in range(7):
        free = KT @ free
    assert np.all(heat_kernel_rows(sub, x, 7) <= free[d.u] + 1e-17)


def test_sparse_path_agrees_with_dense(monkeypatch):
    g, d, sub, G, _ = built("TriangleGame", 12)
    import ruinkit.absorbing as ab
    monkeypatch.setattr(ab, "DENSE_CAP", 1)
    Gs = GreensFunction(sub)
    assert not Gs._dense
    x = g.index_of((3, 5))
    np.testing.assert_allclose(Gs.row(x), G.row(x), atol=1e-13)


def test_source_outside_u():
    g, d, sub, G, _ = built("Line", 4)
    with pytest.raises(ValidationError):
        G.row(g.index_of((0,)))


def test_kernel_domain_mismatch():
    g1, d1 = generate(ModelSpec("Line", 4, margin=1))
    g2, d2 = generate(ModelSpec("Line", 4, margin=1))
    with pytest.raises(ValidationError):
        restrict(build_kernel(g1), d2)


@st.composite
def subdomains(draw):
    """Random connected subsets of a Z^2 patch grown from the origin."""
    L = 7
    g = _lattice([-L, -L], [L, L], [(1, 0), (0, 1)], draw(st.sampled_from([1 / 8, 1 / 4])))
    size = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    cells = {(0, 0)}
    frontier = [(0, 0)]
    while len(cells) < size:
        c = frontier[rng.integers(len(frontier))]
        s = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.integers(4)]
        q = (c[0] + s[0], c[1] + s[1])
        if max(abs(q[0]), abs(q[1])) < L - 1 and q not in cells:
            cells.add(q)
            frontier.append(q)
    return g, build_domain(g, [g.index_of(c) for c in cells])


@settings(max_examples=30, deadline=None)
@given(subdomains())
def test_random_subdomains_exit_law(gd):
    g, d = gd
    sub = restrict(None, d)
    G = greens_function(sub)
    P = poisson_matrix(sub, G, extended=True)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P.min() >= -1e-15
    for x in d.u[:3]:
        poisson_kernel(sub, G, x)  # runs the normal-derivative cross-check


@pytest.mark.parametrize("lazy", [False, True])
def test_line_x_over_N_either_convention(lazy):
    N = 7
    g, d, sub, G, pair = built("Line", N, lazy=lazy)
    top = g.index_of((N,))
    got = [poisson_kernel(sub, G, g.index_of((x,))).at(top) for x in range(1, N)]
    np.testing.assert_allclose(got, np.arange(1, N) / N, atol=1e-14)
