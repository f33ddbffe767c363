"""Discrete transparent boundary conditions for the FEM-Crank-Nicolson scheme.

The exterior of the computational domain is a half-infinite chain of
identical elements carrying constant coefficients. Taking the Z-transform
in time (``w = 1/z``), each exterior element contributes the matrix

    E(z) = i hbar rho (1 - w)/tau * M_e - (1 + w)/2 * (hbar^2/2 B S_e + V M_e).

Eliminating element interiors leaves a symmetric 2x2 coupling ``[[a, b],
[b, a]]``; the decaying solution ``u_j = kappa^j u_0`` of the resulting
three-term recurrence gives the boundary contribution ``(a + b kappa) u_0``.
Its Laurent coefficients in ``w`` form the causal convolution kernel that
closes the truncated scheme exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.signal

from .mesh import reference_basis

UNIT_ROUNDOFF = 1e-15
_CHUNK = 1 << 15


class KernelAccuracyWarning(UserWarning):
    """Kernel synthesis could not reach the requested tolerance."""


@dataclass(frozen=True)
class ExteriorParams:
    """Data fixing the boundary symbol on one side of the domain."""

    n: int
    h: float
    tau: float
    hbar: float = 1.0
    rho: float = 1.0
    B: float = 1.0
    V: float = 0.0
    side: str = "right"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.h <= 0 or self.tau <= 0 or self.rho <= 0 or self.B <= 0 or self.hbar <= 0:
            raise ValueError("h, tau, hbar, rho and B must be positive")

    @property
    def kinetic(self) -> float:
        """Factor ``hbar^2 B / 2`` multiplying the boundary operator."""
        return 0.5 * self.hbar**2 * self.B

    @cached_property
    def _condensation(self):
        basis = reference_basis(self.n)
        Me = basis.mass * self.h
        Se = basis.stiffness / self.h
        ends = [0, self.n]
        inner = list(range(1, self.n))
        out = {"M_ee": Me[np.ix_(ends, ends)], "S_ee": Se[np.ix_(ends, ends)]}
        if inner:
            mu, vec = scipy.linalg.eigh(Se[np.ix_(inner, inner)], Me[np.ix_(inner, inner)])
            out["mu"] = mu
            out["P"] = Me[np.ix_(ends, inner)] @ vec
            out["Q"] = Se[np.ix_(ends, inner)] @ vec
        return out

    def element_coefficients(self, z):
        """Scalars ``(alpha, beta)`` with ``E(z) = alpha*M_e + beta*S_e``."""
        w = 1.0 / np.asarray(z, dtype=complex)
        alpha = 1j * self.hbar * self.rho * (1.0 - w) / self.tau - 0.5 * (1.0 + w) * self.V
        beta = -0.5 * (1.0 + w) * self.kinetic
        return alpha, beta

    def level_coefficients(self):
        """Scalars ``(alpha, beta)`` of the implicit element matrix ``A_e = alpha*M_e + beta*S_e``."""
        return 1j * self.hbar * self.rho / self.tau - 0.5 * self.V, -0.5 * self.kinetic

    def initial_symbol(self, z):
        """Symbol of the boundary response to a nonzero initial boundary value.

        The whole-line scheme started from ``Psi^0`` that vanishes beyond the
        boundary node but not at it produces, besides ``S_bd(z) Psi(z)``, the
        term ``C(z) Psi^0(X)`` with ``C = q - kappa*s - A_00``, where ``s`` and
        ``q`` collect the first exterior element's source ``A_e Psi^0``.
        Returned divided by ``hbar^2 B / 2`` like :meth:`__call__`.
        """
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for s in range(0, flat.size, _CHUNK):
            out[s : s + _CHUNK] = _initial_response(flat[s : s + _CHUNK], self)
        return out.reshape(z.shape) / self.kinetic

    def __call__(self, z):
        """Boundary symbol ``S(z) = S_bd(z) / (hbar^2 B / 2)``."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for s in range(0, flat.size, _CHUNK):
            out[s : s + _CHUNK] = exterior_dtn_symbol(flat[s : s + _CHUNK], self)[0]
        return out.reshape(z.shape) / self.kinetic


def condensed_exterior_element(z, params: ExteriorParams) -> np.ndarray:
    """Endpoint coupling of one exterior element after eliminating its interior.

    Vectorised over ``z``; returns shape ``z.shape + (2, 2)``. The interior
    block is diagonalised once by the generalised eigenproblem
    ``S_ii v = mu M_ii v`` so each ``z`` costs ``O(n)``.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) <= 1.0):
        raise ValueError("the exterior symbol is defined for |z| > 1 only")
    alpha, beta = params.element_coefficients(z)
    c = params._condensation
    a = alpha[..., None, None]
    b = beta[..., None, None]
    G = a * c["M_ee"] + b * c["S_ee"]
    if params.n > 1:
        denom = alpha[..., None] + beta[..., None] * c["mu"]
        if np.any(np.abs(denom) < 1e-300):
            raise ZeroDivisionError("singular interior block in exterior element")
        coup = a * c["P"] + b * c["Q"]
        G = G - np.einsum("...ik,...jk->...ij", coup / denom[..., None, :], coup)
    return G


def decaying_root(a, b):
    """Root of ``b k^2 + 2 a k + b = 0`` with ``|k| < 1`` (roots multiply to one)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    s = np.sqrt(a * a - b * b)
    s = np.where(np.abs(a + s) >= np.abs(a - s), s, -s)
    kappa = -b / (a + s)
    if np.any(np.abs(np.abs(kappa) - 1.0) < 1e-14):
        raise ArithmeticError("recurrence roots lie on the unit circle; no decaying mode")
    return kappa


def exterior_dtn_symbol(z, params: ExteriorParams):
    """Half-infinite Schur complement ``S_bd(z) = a + b*kappa(z)`` and ``kappa``."""
    G = condensed_exterior_element(z, params)
    a = 0.5 * (G[..., 0, 0] + G[..., 1, 1])
    b = 0.5 * (G[..., 0, 1] + G[..., 1, 0])
    kappa = decaying_root(a, b)
    return a + b * kappa, kappa


def _initial_response(z, params: ExteriorParams):
    alpha, beta = params.element_coefficients(z)
    a_lvl, b_lvl = params.level_coefficients()
    c = params._condensation
    A_ee = a_lvl * c["M_ee"] + b_lvl * c["S_ee"]
    _, kappa = exterior_dtn_symbol(z, params)
    s = np.full(z.shape, A_ee[1, 0], dtype=complex)
    q = np.zeros(z.shape, dtype=complex)
    if params.n > 1:
        denom = alpha[:, None] + beta[:, None] * c["mu"]
        src = a_lvl * c["P"][0] + b_lvl * c["Q"][0]  # eigen-coordinates of A_I0
        coup = alpha[:, None, None] * c["P"] + beta[:, None, None] * c["Q"]
        via = np.sum(coup * (src / denom)[:, None, :], axis=2)  # E_pI E_II^-1 A_I0
        q = via[:, 0]
        s = s - via[:, 1]
    return q - kappa * s - A_ee[0, 0]


@dataclass
class DtbcKernel:
    """Causal kernel ``K^0..K^M`` with ``sum_l K^l z^-l`` approximating a symbol.

    ``scale`` multiplies the kernel when it enters the discrete equations
    (``hbar^2 B / 2`` for boundary kernels, ``1`` for plain symbols).
    """

    coeffs: np.ndarray
    radius: float
    n_samples: int
    max_error_estimate: float
    scale: float = 1.0
    symbol: object = field(default=None, repr=False)
    _raw: np.ndarray = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.coeffs.size - 1

    @property
    def boundary_coeffs(self) -> np.ndarray:
        return self.scale * self.coeffs

    def evaluate(self, z, full: bool = False):
        """``sum_l K^l z^-l`` over the stored coefficients (all ``N`` when ``full``)."""
        c = self._raw if full else self.coeffs
        w = 1.0 / np.asarray(z, dtype=complex)
        return np.polynomial.polynomial.polyval(w, c)

    def round_trip_residual(self) -> float:
        """Max deviation from the symbol at the circle points halfway between samples."""
        N = self.n_samples
        theta = 2 * np.pi * (np.arange(N) + 0.5) / N
        z = self.radius * np.exp(1j * theta)
        g = self._raw * self.radius ** (-np.arange(N, dtype=float))
        # sum_l g_l e^{-i l theta_j} via one FFT of the half-sample modulated sequence
        series = scipy.fft.fft(g * np.exp(-1j * np.pi * np.arange(N) / N))
        return float(np.max(np.abs(series - self.symbol(z))))


def _sample_count(M: int) -> int:
    return 1 << int(np.ceil(np.log2(4 * (M + 1))))


def kernel_from_symbol(symbol, M: int, tol=None, radius=None, n_samples=None, scale=1.0) -> DtbcKernel:
    """Inverse Z-transform of ``symbol`` by the trapezoidal rule on ``|z| = radius``.

    With ``N`` samples the computed ``K^l`` carries an aliasing error of
    order ``radius^-N`` and a roundoff error of order ``u * radius^l``; the
    default radius balances them at ``l = M``.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    M = int(M)
    N = _sample_count(M) if n_samples is None else int(n_samples)
    if N < 2 * (M + 1):
        raise ValueError(f"need at least 2(M+1) = {2 * (M + 1)} samples, got {N}")
    lam = UNIT_ROUNDOFF ** (-1.0 / (N + M)) if radius is None else float(radius)
    if not lam > 1.0:
        raise ValueError("radius must exceed 1")
    z = lam * np.exp(2j * np.pi * np.arange(N) / N)
    S = np.asarray(symbol(z), dtype=complex)
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("symbol is not finite on the sampling circle")
    # S(z_j) = sum_l K^l lam^-l e^{-2 pi i j l/N}  =>  K^l lam^-l = ifft(S)_l
    g = scipy.fft.ifft(S)
    with np.errstate(over="ignore"):
        raw = g * lam ** np.arange(N, dtype=float)
    coeffs = raw[: M + 1].copy()
    smax = float(np.max(np.abs(S)))
    kmax = float(np.max(np.abs(coeffs)))
    alias = kmax * lam ** (-N) * lam / (lam - 1.0)
    roundoff = UNIT_ROUNDOFF * (np.log2(N) + 1.0) * smax * lam**M
    est = float(alias + roundoff)
    if tol is not None and est > tol:
        warnings.warn(
            f"kernel error estimate {est:.3e} exceeds tolerance {tol:.3e} "
            f"(M={M}, N={N}, radius={lam:.6f})",
            KernelAccuracyWarning,
            stacklevel=2,
        )
    return DtbcKernel(coeffs, lam, N, est, scale, symbol, raw)


def boundary_kernel(params: ExteriorParams, M: int, tol=None) -> DtbcKernel:
    """Kernel of the boundary operator for ``M`` time steps."""
    return kernel_from_symbol(params, M, tol=tol, scale=params.kinetic)


def initial_kernel(params: ExteriorParams, M: int, tol=None) -> DtbcKernel:
    """Kernel multiplying the initial boundary value ``Psi^0`` at each level."""
    return kernel_from_symbol(params.initial_symbol, M, tol=tol, scale=params.kinetic)


def convolve(coeffs, history, m: int) -> complex:
    """``sum_{l=0}^m K^l Phi^{m-l}``."""
    coeffs = np.asarray(coeffs)
    history = np.asarray(history)
    if history.size < m + 1 or coeffs.size < m + 1:
        raise ValueError(f"need m+1 = {m + 1} kernel and history entries")
    return complex(np.dot(coeffs[: m + 1], history[m::-1]))


class BoundaryHistory:
    """Trace history ``Phi^0..Phi^m`` with the running convolution against a kernel.

    :meth:`past_sum` returns ``sum_{l=1}^m K^l Phi^{m-l}``, the part of the
    convolution that is known before ``Phi^m`` is computed. ``mode="direct"``
    costs ``O(m)`` per step; ``mode="fft"`` accumulates completed blocks of
    the history with FFT convolutions.
    """

    def __init__(self, coeffs, mode: str = "direct", block: int | None = None):
        if mode not in ("direct", "fft"):
            raise ValueError(f"unknown convolution mode {mode!r}")
        self.coeffs = np.asarray(coeffs, dtype=complex)
        M = self.coeffs.size - 1
        self.values = np.zeros(M + 1, dtype=complex)
        self.length = 0
        self.mode = mode
        self._rev = self.coeffs[::-1].copy()
        if mode == "fft":
            self.block = block or max(32, int(np.sqrt((M + 1) * max(1.0, np.log2(M + 1)))))
            self._acc = np.zeros(M + 1, dtype=complex)

    @property
    def M(self) -> int:
        return self.coeffs.size - 1

    def append(self, value) -> None:
        j = self.length
        if j > self.M:
            raise IndexError("history is full")
        self.values[j] = value
        self.length += 1
        if self.mode == "fft" and self.length % self.block == 0:
            s = self.length - self.block
            if self.length <= self.M:
                seg = scipy.signal.fftconvolve(self.values[s : self.length], self.coeffs[: self.M - s + 1])
                self._acc[self.length :] += seg[self.block : self.M - s + 1]

    def past_sum(self, m: int) -> complex:
        if self.length < m:
            raise ValueError(f"history has {self.length} entries, step {m} needs {m}")
        if m == 0:
            return 0j
        if self.mode == "direct":
            return complex(np.dot(self.values[:m], self._rev[self.M - m : self.M]))
        s = (m // self.block) * self.block
        part = np.dot(self.values[s:m], self._rev[self.M - m + s : self.M]) if m > s else 0j
        return complex(self._acc[m] + part)

    def full_sum(self, m: int) -> complex:
        """``sum_{l=0}^m K^l Phi^{m-l}`` once ``Phi^m`` is stored."""
        if self.length < m + 1:
            raise ValueError(f"history has {self.length} entries, need {m + 1}")
        return self.past_sum(m) + self.coeffs[0] * self.values[m]
