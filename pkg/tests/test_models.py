import numpy as np
import pytest

from ruinkit.errors import NoSurrogate, SpecInvalid
from ruinkit.models import (
    ModelSpec,
    all_specs_small,
    closed_form_eigen,
    first_elimination_exact,
    generate,
    phi0_surrogate,
)


def test_line_N4():
    g, d = generate(ModelSpec("Line", 4, margin=1))
    assert g.coords[d.u, 0].tolist() == [1, 2, 3]
    assert g.coords[d.boundary, 0].tolist() == [0, 4]


def test_box_N1_sizes():
    g, d = generate(ModelSpec("BoxZn", 1, margin=1))
    assert d.size == 9
    assert d.boundary.size == 12


def test_triangle_N4():
    g, d = generate(ModelSpec("TriangleGame", 4, margin=1))
    assert sorted(map(tuple, g.coords[d.u].tolist())) == [(1, 1), (1, 2), (2, 1)]
    c = g.coords[d.boundary]
    on_side = (c[:, 0] == 0) | (c[:, 1] == 0) | (c.sum(axis=1) == 4)
    assert np.all(on_side)
    assert d.boundary.size == 9
    assert d.half_edges.shape[0] == 12


def test_punctured_cube_excludes_centre():
    g, d = generate(ModelSpec("PuncturedCube", 2, 3, margin=1))
    assert d.size == 5**3 - 1
    assert g.index_of((0, 0, 0)) in d.boundary


@pytest.mark.parametrize("kwargs", [
    dict(kind="Nope", N=3), dict(kind="Line", N=1), dict(kind="TriangleGame", N=2),
    dict(kind="PuncturedCube", N=3, n=1), dict(kind="BoxZn", N=3, margin=0),
])
def test_spec_validation(kwargs):
    with pytest.raises(SpecInvalid):
        ModelSpec(**kwargs)


def test_closed_form_values():
    cf = closed_form_eigen(ModelSpec("BoxZn", 1, margin=1))
    np.testing.assert_allclose(cf.beta0, (2 + np.sqrt(2)) / 4, rtol=1e-15)
    cf = closed_form_eigen(ModelSpec("TriangleGame", 6, margin=1))
    np.testing.assert_allclose(cf.beta0, 2 / 3, rtol=1e-15)
    cf = closed_form_eigen(ModelSpec("TriangleGame", 4, margin=1))
    np.testing.assert_allclose(cf.phi0, 1 / np.sqrt(3), rtol=1e-14)


def test_triangle_surrogate_central_value_scales_like_inverse_N():
    vals = [phi0_surrogate(ModelSpec("TriangleGame", N), (N // 4, N // 4)) for N in (16, 32, 64)]
    prod = np.array(vals) * np.array([16, 32, 64])
    assert prod.max() / prod.min() < 1.1


def test_surrogate_missing():
    with pytest.raises(NoSurrogate):
        phi0_surrogate(ModelSpec("BoxZn", 4), (0, 0))


def test_punctured_surrogate_small_next_to_centre():
    spec = ModelSpec("PuncturedCube", 6, 3)
    near = phi0_surrogate(spec, (1, 0, 0))
    mid = phi0_surrogate(spec, (2, 0, 0))
    assert 0 < near < mid
    far = phi0_surrogate(spec, (6, 6, 6))
    assert far < mid


def test_all_small_specs_generate():
    for spec in all_specs_small():
        g, d = generate(spec)
        assert d.size > 0 and d.boundary.size > 0


def test_first_elimination_exact_symmetry_and_total():
    p = first_elimination_exact(12)
    np.testing.assert_allclose(p["A"], p["B"], rtol=1e-12)
    np.testing.assert_allclose(sum(p.values()), 1.0, atol=1e-12)
    with pytest.raises(SpecInvalid):
        first_elimination_exact(12, (0, 3))
