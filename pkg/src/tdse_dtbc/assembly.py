"""Global mass and Hamiltonian-form matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cholesky_banded

from .mesh import Coefficients, Mesh1D, ReferenceBasis


@dataclass(frozen=True)
class BandedHermitianPair:
    """Weighted mass matrix ``(rho w, phi)`` and form ``L(w, phi)``.

    Both are real symmetric with half-bandwidth ``n`` and stored as CSR.
    """

    M_rho: sparse.csr_matrix
    L: sparse.csr_matrix
    half_bandwidth: int
    v_hat: float

    @property
    def size(self) -> int:
        return self.M_rho.shape[0]


def default_v_hat(coeffs: Coefficients) -> float:
    """Shift making ``V + v_hat * rho`` strictly positive."""
    return max(0.0, float(np.max(-np.asarray(coeffs.V) / np.asarray(coeffs.rho)))) + 1.0


def _assemble_weighted(mesh: Mesh1D, basis: ReferenceBasis, weights, local) -> sparse.csr_matrix:
    n = basis.n
    ne = mesh.n_elements
    # element e, local (i, j) -> global (e*n + i, e*n + j)
    base = np.arange(ne)[:, None, None] * n
    rows = np.broadcast_to(base + np.arange(n + 1)[None, :, None], (ne, n + 1, n + 1))
    cols = np.broadcast_to(base + np.arange(n + 1)[None, None, :], (ne, n + 1, n + 1))
    vals = np.asarray(weights, dtype=float)[:, None, None] * local[None, :, :]
    size = mesh.n_dofs(n)
    return sparse.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)
    ).tocsr()


def assemble(mesh: Mesh1D, basis: ReferenceBasis, coeffs: Coefficients, v_hat=None) -> BandedHermitianPair:
    """Assemble ``M_rho`` and ``L = (hbar^2/2)(B Dw, Dphi) + (V w, phi)`` exactly.

    Coefficients are constant per element, so the reference mass and
    stiffness matrices scaled by ``h`` and ``1/h`` give the exact integrals.
    """
    if len(coeffs.rho) != mesh.n_elements:
        raise ValueError("coefficients do not match the mesh element count")
    h = mesh.h
    Me = basis.mass * h
    Se = basis.stiffness / h
    rho = np.asarray(coeffs.rho)
    kin = 0.5 * coeffs.hbar**2 * np.asarray(coeffs.B)
    M_rho = _assemble_weighted(mesh, basis, rho, Me)
    L = _assemble_weighted(mesh, basis, kin, Se) + _assemble_weighted(mesh, basis, coeffs.V, Me)
    if v_hat is None:
        v_hat = default_v_hat(coeffs)
    return BandedHermitianPair(M_rho, L.tocsr(), basis.n, float(v_hat))


def to_band(A, bw: int, extra_rows: int = 0) -> np.ndarray:
    """LAPACK general-band layout: ``ab[extra + bw + i - j, j] = A[i, j]``."""
    A = A.tocoo()
    size = A.shape[0]
    ab = np.zeros((extra_rows + 2 * bw + 1, size), dtype=np.result_type(A.dtype, complex))
    keep = np.abs(A.row - A.col) <= bw
    if not np.all(keep):
        raise ValueError("matrix has entries outside the declared band")
    np.add.at(ab, (extra_rows + bw + A.row - A.col, A.col), A.data)
    return ab


def energy_norm(u: np.ndarray, pair: BandedHermitianPair, v_hat=None) -> float:
    """``sqrt(u^H L u + v_hat u^H M_rho u)``."""
    v_hat = pair.v_hat if v_hat is None else v_hat
    q = np.vdot(u, pair.L @ u).real + v_hat * np.vdot(u, pair.M_rho @ u).real
    if q < -1e-12 * max(1.0, abs(v_hat) * np.vdot(u, pair.M_rho @ u).real):
        raise ValueError(f"shifted form is indefinite for v_hat={v_hat}: u^H A u = {q}")
    return float(np.sqrt(max(q, 0.0)))


def rho_norm(u: np.ndarray, pair: BandedHermitianPair) -> float:
    """``||sqrt(rho) u||`` in the exact L2 inner product of the finite element space."""
    return float(np.sqrt(max(np.vdot(u, pair.M_rho @ u).real, 0.0)))


def check_energy_positive(pair: BandedHermitianPair, v_hat=None) -> None:
    """Raise unless ``L + v_hat*M_rho`` admits a Cholesky factorisation."""
    v_hat = pair.v_hat if v_hat is None else v_hat
    A = (pair.L + v_hat * pair.M_rho).tocoo()
    bw = pair.half_bandwidth
    ab = np.zeros((bw + 1, A.shape[0]))
    up = A.row <= A.col
    np.add.at(ab, (bw + A.row[up] - A.col[up], A.col[up]), A.data[up])
    try:
        cholesky_banded(ab)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"L + {v_hat}*M_rho is not positive definite") from exc
