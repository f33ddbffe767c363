import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdse_dtbc.cases import gaussian_initial, preset
from tdse_dtbc.error_analysis import l2h_norm
from tdse_dtbc.mesh import (
    Coefficients,
    Mesh1D,
    build_mesh,
    evaluate,
    evaluation_grid,
    global_nodes,
    interpolate,
    reference_basis,
)


def test_build_mesh_half_count():
    m = build_mesh(0.8, 30)
    assert m.n_elements == 60
    assert m.h == pytest.approx(0.8 / 30)
    assert m.node_coords[0] == -0.8 and m.node_coords[-1] == 0.8
    assert np.allclose(np.diff(m.node_coords), m.h)


def test_build_mesh_two_elements():
    assert np.array_equal(build_mesh(1.0, 1).node_coords, [-1.0, 0.0, 1.0])


def test_build_mesh_double_well_nodes():
    m = build_mesh(9.0, 36)
    assert m.h == pytest.approx(0.25)
    for x in (6, 6.5, 7, 7.5, 8):
        assert m.is_node(x)


@pytest.mark.parametrize("X,J", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
def test_build_mesh_rejects(X, J):
    with pytest.raises(ValueError):
        build_mesh(X, J)


def test_linear_basis_is_hat():
    b = reference_basis(1)
    assert np.allclose(b.shape_values([0.0, 1.0]), np.eye(2), atol=1e-15)


def test_quadratic_midpoint():
    b = reference_basis(2)
    v = b.shape_values([0.0, 0.5, 1.0])
    assert v[1, 1] == pytest.approx(1.0)
    assert abs(v[0, 1]) < 1e-15 and abs(v[2, 1]) < 1e-15


@pytest.mark.parametrize("n", range(1, 10))
def test_kronecker_and_partition_of_unity(n, rng):
    b = reference_basis(n)
    assert np.allclose(b.shape_values(b.nodes), np.eye(n + 1), atol=1e-12)
    xi = rng.random(50)
    assert np.max(np.abs(b.shape_values(xi).sum(axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(b.shape_derivatives(xi).sum(axis=1))) < 1e-10
    assert b.nodes[0] == 0.0 and b.nodes[-1] == 1.0


@pytest.mark.parametrize("n", [0, 10, 2.5])
def test_degree_range(n):
    with pytest.raises(ValueError):
        reference_basis(n)


@pytest.mark.parametrize("n", range(1, 10))
def test_quadrature_exact_for_degree_2n(n, rng):
    b = reference_basis(n)
    c = rng.standard_normal(2 * n + 1)
    exact = sum(ck / (k + 1) for k, ck in enumerate(c))
    approx = b.quad_weights @ np.polynomial.polynomial.polyval(b.quad_points, c)
    assert abs(approx - exact) <= 1e-13 * max(1.0, abs(exact))


@pytest.mark.parametrize("n", [1, 4, 9])
def test_reference_matrices_against_quadrature(n):
    b = reference_basis(n)
    t, w = np.polynomial.legendre.leggauss(40)
    x, w = 0.5 * (t + 1), 0.5 * w
    phi, dphi = b.shape_values(x), b.shape_derivatives(x)
    assert np.allclose(b.mass, phi.T @ (w[:, None] * phi), atol=1e-13)
    assert np.allclose(b.stiffness, dphi.T @ (w[:, None] * dphi), atol=1e-10 * np.max(np.abs(b.stiffness)))


def test_dof_count_and_sharing():
    m = Mesh1D(-1.0, 1.0, 7)
    for n in (1, 3, 9):
        x = global_nodes(m, reference_basis(n))
        assert x.size == m.n_dofs(n) == 7 * n + 1
        assert np.all(np.diff(x) > 0)
        assert np.allclose(x[::n], m.node_coords)


def test_interpolate_zero():
    m = build_mesh(1.0, 3)
    assert not np.any(interpolate(lambda x: np.zeros_like(x), m, reference_basis(4)))


@pytest.mark.parametrize("nodes", ["lobatto", "equispaced"])
@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_interpolate_reproduces_polynomials(n, nodes, rng):
    m = Mesh1D(-1.0, 2.0, 5)
    c = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
    f = lambda x: np.polynomial.polynomial.polyval(x, c)
    u = interpolate(f, m, reference_basis(n), nodes)
    pts = rng.uniform(-1.0, 2.0, 40)
    assert np.max(np.abs(evaluate(u, m, reference_basis(n), pts) - f(pts))) < 1e-11


@pytest.mark.parametrize("nodes", ["lobatto", "equispaced"])
def test_interpolate_is_projection(nodes):
    m = build_mesh(0.8, 15)
    b = reference_basis(6)
    u = interpolate(lambda x: np.exp(3j * x - x**2), m, b, nodes)
    again = interpolate(lambda x: evaluate(u, m, b, x), m, b, nodes)
    assert np.max(np.abs(again - u)) < 1e-13


@pytest.mark.parametrize("nodes", ["lobatto", "equispaced"])
def test_interpolant_norm_of_packet(nodes):
    p = preset("ex1")
    m = p.mesh(60)
    u = interpolate(lambda x: gaussian_initial(x, p.gaussian), m, reference_basis(9), nodes)
    vals = evaluate(u, m, reference_basis(9), evaluation_grid(m, 9))
    assert abs(l2h_norm(vals, m, 9) - 1.0) < 5e-8


def test_equispaced_interpolation_matches_samples():
    m = build_mesh(1.0, 4)
    b = reference_basis(5)
    f = lambda x: np.cos(4 * x) + 1j * x**7
    u = interpolate(f, m, b, "equispaced")
    x = evaluation_grid(m, 5)
    assert np.max(np.abs(evaluate(u, m, b, x) - f(x))) < 1e-13


def test_interpolate_rejects_nonfinite():
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        interpolate(lambda x: 1.0 / x, build_mesh(1.0, 2), reference_basis(1))
    with pytest.raises(ValueError):
        interpolate(np.sin, build_mesh(1.0, 2), reference_basis(1), "chebyshev")


def test_coefficients_exterior_must_match():
    m = build_mesh(1.0, 2)
    c = Coefficients.uniform(m, B=2.0)
    with pytest.raises(ValueError):
        Coefficients(1.0, c.rho, c.B, c.V, (1.0, 3.0, 0.0), c.right)
    with pytest.raises(ValueError):
        Coefficients.uniform(m, rho=-1.0)


def test_piecewise_potential_alignment():
    m = Mesh1D(-1.5, 1.5, 30)
    c = Coefficients.piecewise(m, V_pieces=((0.5, 0.6, 800.0),))
    assert np.count_nonzero(c.V) == 1
    with pytest.raises(ValueError, match="not a mesh node"):
        Coefficients.piecewise(Mesh1D(-1.5, 1.5, 31), V_pieces=((0.5, 0.6, 800.0),))


@settings(max_examples=40, deadline=None)
@given(
    left=st.floats(-10, 10),
    width=st.floats(0.1, 20),
    ne=st.integers(1, 50),
    frac=st.floats(0, 1),
)
def test_element_of_contains_point(left, width, ne, frac):
    m = Mesh1D(left, left + width, ne)
    x = m.left + frac * (m.right - m.left)
    e = int(m.element_of(x))
    assert 0 <= e < ne
    assert m.node_coords[e] - 1e-9 * width <= x <= m.node_coords[e + 1] + 1e-9 * width
