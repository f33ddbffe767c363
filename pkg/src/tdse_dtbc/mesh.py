"""Uniform meshes, Lobatto-node reference elements and piecewise-constant coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse

MAX_DEGREE = 9


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of ``[left, right]`` into ``n_elements`` elements.

    The symmetric meshes on ``(-X, X)`` with ``2J`` elements are built by
    :func:`build_mesh`; the general form is needed for enlarged domains.
    """

    left: float
    right: float
    n_elements: int

    def __post_init__(self):
        if not (self.right > self.left):
            raise ValueError(f"mesh needs right > left, got [{self.left}, {self.right}]")
        if self.n_elements < 1:
            raise ValueError(f"mesh needs at least one element, got {self.n_elements}")

    @property
    def h(self) -> float:
        return (self.right - self.left) / self.n_elements

    @property
    def node_coords(self) -> np.ndarray:
        return np.linspace(self.left, self.right, self.n_elements + 1)

    @property
    def X(self) -> float:
        return 0.5 * (self.right - self.left)

    @property
    def J(self) -> int:
        return self.n_elements // 2

    def n_dofs(self, n: int) -> int:
        return self.n_elements * n + 1

    def element_of(self, x) -> np.ndarray:
        """Index of the element containing each point (right endpoint goes to the last element)."""
        idx = np.floor((np.asarray(x, dtype=float) - self.left) / self.h).astype(int)
        return np.clip(idx, 0, self.n_elements - 1)

    def is_node(self, x, rtol: float = 1e-10) -> bool:
        s = (x - self.left) / self.h
        return abs(s - round(s)) <= rtol * max(1.0, abs(s))


def build_mesh(X: float, J: int) -> Mesh1D:
    """Mesh of ``(-X, X)`` with ``2J`` elements of size ``X/J``."""
    if not X > 0:
        raise ValueError(f"X must be positive, got {X}")
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J}")
    return Mesh1D(-float(X), float(X), 2 * int(J))


@dataclass(frozen=True)
class ReferenceBasis:
    """Nodal Lagrange basis of degree ``n`` on ``[0, 1]``.

    Nodes are the Gauss-Lobatto points, so both endpoints are nodes (local
    indices ``0`` and ``n``) and global continuity comes from sharing them.
    """

    n: int
    nodes: np.ndarray = field(repr=False)
    _coef: np.ndarray = field(repr=False)  # Legendre coefficients of each shape function (columns)
    quad_points: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    def shape_values(self, xi) -> np.ndarray:
        """Array of shape ``(len(xi), n+1)``."""
        t = 2.0 * np.atleast_1d(np.asarray(xi, dtype=float)) - 1.0
        return legendre.legvander(t, self.n) @ self._coef

    def shape_derivatives(self, xi) -> np.ndarray:
        t = 2.0 * np.atleast_1d(np.asarray(xi, dtype=float)) - 1.0
        dvander = np.empty((t.size, self.n + 1))
        for j in range(self.n + 1):
            c = np.zeros(self.n + 1)
            c[j] = 1.0
            dvander[:, j] = legendre.legval(t, legendre.legder(c))
        return 2.0 * dvander @ self._coef

    @property
    def mass(self) -> np.ndarray:
        """Unit mass matrix on the reference element."""
        return _reference_matrices(self.n)[0]

    @property
    def stiffness(self) -> np.ndarray:
        """Unit stiffness matrix ``int phi_i' phi_j'`` on the reference element."""
        return _reference_matrices(self.n)[1]


def lobatto_nodes(n: int) -> np.ndarray:
    """Gauss-Lobatto points on [0, 1]: endpoints plus the roots of P_n'."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    inner = np.sort(np.real(legendre.legroots(legendre.legder(c)))) if n > 1 else np.empty(0)
    t = np.concatenate(([-1.0], inner, [1.0]))
    return 0.5 * (t + 1.0)


@lru_cache(maxsize=None)
def reference_basis(n: int) -> ReferenceBasis:
    if int(n) != n or not 1 <= n <= MAX_DEGREE:
        raise ValueError(f"degree must be an integer in [1, {MAX_DEGREE}], got {n}")
    n = int(n)
    nodes = lobatto_nodes(n)
    vander = legendre.legvander(2.0 * nodes - 1.0, n)
    coef = np.linalg.inv(vander)
    # ceil((2n+1)/2) + 1 Gauss points: exact well beyond degree 2n
    nq = (2 * n + 2) // 2 + 1
    t, w = legendre.leggauss(nq)
    return ReferenceBasis(n, nodes, coef, 0.5 * (t + 1.0), 0.5 * w)


@lru_cache(maxsize=None)
def _reference_matrices(n: int):
    b = reference_basis(n)
    phi = b.shape_values(b.quad_points)
    dphi = b.shape_derivatives(b.quad_points)
    mass = (phi * b.quad_weights[:, None]).T @ phi
    stiff = (dphi * b.quad_weights[:, None]).T @ dphi
    # exact symmetry, the quadrature only perturbs it at roundoff level
    return 0.5 * (mass + mass.T), 0.5 * (stiff + stiff.T)


def global_nodes(mesh: Mesh1D, basis: ReferenceBasis) -> np.ndarray:
    """Coordinates of the ``n_elements*n + 1`` global degrees of freedom."""
    n = basis.n
    x = np.empty(mesh.n_dofs(n))
    starts = mesh.node_coords[:-1]
    local = starts[:, None] + mesh.h * basis.nodes[None, :n]
    x[:-1] = local.ravel()
    x[-1] = mesh.right
    return x


INTERPOLATION_NODES = ("lobatto", "equispaced")


@lru_cache(maxsize=None)
def _equispaced_to_nodal(n: int) -> np.ndarray:
    basis = reference_basis(n)
    return np.linalg.inv(basis.shape_values(np.linspace(0.0, 1.0, n + 1)))


def interpolate(f, mesh: Mesh1D, basis: ReferenceBasis, nodes: str = "lobatto") -> np.ndarray:
    """Interpolant of ``f`` (vectorised callable) as a dof vector.

    ``nodes="lobatto"`` samples at the global degrees of freedom;
    ``"equispaced"`` interpolates at ``n+1`` equally spaced points per
    element instead (same polynomial space, different interpolant).
    """
    if nodes not in INTERPOLATION_NODES:
        raise ValueError(f"nodes must be one of {INTERPOLATION_NODES}, got {nodes!r}")
    x = global_nodes(mesh, basis) if nodes == "lobatto" else evaluation_grid(mesh, basis.n)
    vals = np.asarray(f(x), dtype=complex)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape).copy()
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite at every interpolation point")
    if nodes == "lobatto" or basis.n == 1:
        return vals
    n = basis.n
    local = np.lib.stride_tricks.sliding_window_view(vals, n + 1)[::n]
    coef = local @ _equispaced_to_nodal(n).T
    out = np.empty_like(vals)
    out[:-1] = coef[:, :n].ravel()
    out[-1] = coef[-1, n]
    return out


def evaluation_matrix(mesh: Mesh1D, basis: ReferenceBasis, points) -> sparse.csr_matrix:
    """Sparse matrix mapping dof vectors to field values at ``points``."""
    points = np.asarray(points, dtype=float)
    n = basis.n
    elem = mesh.element_of(points)
    xi = (points - (mesh.left + elem * mesh.h)) / mesh.h
    vals = basis.shape_values(xi)
    rows = np.repeat(np.arange(points.size), n + 1)
    cols = (elem[:, None] * n + np.arange(n + 1)[None, :]).ravel()
    return sparse.csr_matrix((vals.ravel(), (rows, cols)), shape=(points.size, mesh.n_dofs(n)))


def evaluation_grid(mesh: Mesh1D, n: int) -> np.ndarray:
    """Equispaced grid of step ``h/n`` on the closed domain."""
    return np.linspace(mesh.left, mesh.right, mesh.n_elements * n + 1)


def evaluate(u: np.ndarray, mesh: Mesh1D, basis: ReferenceBasis, points) -> np.ndarray:
    return evaluation_matrix(mesh, basis, points) @ u


@dataclass(frozen=True)
class Coefficients:
    """Elementwise-constant ``rho``, ``B``, ``V`` plus exterior constants per side."""

    hbar: float
    rho: np.ndarray
    B: np.ndarray
    V: np.ndarray
    left: tuple  # (rho, B, V) for x <= left end
    right: tuple

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        n = len(self.rho)
        if len(self.B) != n or len(self.V) != n:
            raise ValueError("rho, B and V must have one value per element")
        if np.any(np.asarray(self.rho) <= 0) or np.any(np.asarray(self.B) <= 0):
            raise ValueError("rho and B must be positive on every element")
        for side, consts, j in (("left", self.left, 0), ("right", self.right, n - 1)):
            if consts[0] <= 0 or consts[1] <= 0:
                raise ValueError(f"{side} exterior rho and B must be positive")
            inner = (self.rho[j], self.B[j], self.V[j])
            if not np.allclose(consts, inner, rtol=1e-14, atol=0.0):
                raise ValueError(
                    f"{side} exterior constants {consts} differ from the outermost "
                    f"element values {inner}; variation must be confined to the interior"
                )

    @classmethod
    def uniform(cls, mesh: Mesh1D, hbar=1.0, rho=1.0, B=1.0, V=0.0):
        ne = mesh.n_elements
        full = lambda c: np.full(ne, float(c))
        return cls(hbar, full(rho), full(B), full(V), (rho, B, V), (rho, B, V))

    @classmethod
    def piecewise(cls, mesh: Mesh1D, hbar=1.0, rho=1.0, B=1.0, V_pieces=(), V_background=0.0):
        """Constant ``rho``, ``B`` and a potential given as ``(a, b, value)`` intervals.

        Every interval endpoint inside the domain must be a mesh node.
        """
        V = np.full(mesh.n_elements, float(V_background))
        mid = mesh.node_coords[:-1] + 0.5 * mesh.h
        for a, b, value in V_pieces:
            for end in (a, b):
                if mesh.left < end < mesh.right and not mesh.is_node(end):
                    raise ValueError(
                        f"potential discontinuity at x={end} is not a mesh node (h={mesh.h})"
                    )
            V[(mid > a) & (mid < b)] = value
        ne = mesh.n_elements
        return cls(
            hbar, np.full(ne, float(rho)), np.full(ne, float(B)), V,
            (float(rho), float(B), V[0]), (float(rho), float(B), V[-1]),
        )

    @property
    def rho_min(self) -> float:
        return float(np.min(self.rho))
