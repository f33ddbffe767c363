"""Crank-Nicolson time stepping on the truncated domain."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.linalg import lapack

from .assembly import BandedHermitianPair, assemble, energy_norm, rho_norm, to_band
from .dtbc import BoundaryHistory, DtbcKernel, ExteriorParams, boundary_kernel, initial_kernel
from .mesh import INTERPOLATION_NODES, Coefficients, Mesh1D, interpolate, reference_basis

DTBC = "dtbc"
DIRICHLET = "dirichlet"

NORM_TOL = 1e-10

_KERNEL_CACHE: OrderedDict = OrderedDict()
_KERNEL_CACHE_SIZE = 48


class InvariantViolation(RuntimeError):
    """A stability monitor exceeded its tolerance."""


@dataclass(frozen=True)
class SchemeConfig:
    """Everything that defines one FEM-Crank-Nicolson run.

    ``initial`` is a vectorised callable ``x -> psi0(x)``. Boundary modes are
    ``"dtbc"`` or ``"dirichlet"`` per side. ``interpolation`` picks the
    points at which ``initial`` is interpolated (``"lobatto"`` or
    ``"equispaced"``); ``zero_boundary_initial`` drops the interpolant's
    boundary values. ``initial_boundary_kernel`` adds the exterior response
    to a nonzero initial boundary value, which keeps the truncated scheme
    identical to the whole-line one started from the same data.
    """

    mesh: Mesh1D
    n: int
    T: float
    M: int
    coeffs: Coefficients = field(repr=False)
    initial: Callable = field(repr=False)
    left: str = DTBC
    right: str = DTBC
    interpolation: str = "equispaced"
    zero_boundary_initial: bool = False
    initial_boundary_kernel: bool = True

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        for side in (self.left, self.right):
            if side not in (DTBC, DIRICHLET):
                raise ValueError(f"unknown boundary mode {side!r}")
        if self.interpolation not in INTERPOLATION_NODES:
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if len(self.coeffs.rho) != self.mesh.n_elements:
            raise ValueError("coefficients do not match the mesh")

    @property
    def tau(self) -> float:
        return self.T / self.M

    def with_steps(self, M: int) -> "SchemeConfig":
        return replace(self, M=int(M))

    def exterior(self, side: str) -> ExteriorParams:
        rho, B, V = self.coeffs.left if side == "left" else self.coeffs.right
        return ExteriorParams(self.n, self.mesh.h, self.tau, self.coeffs.hbar, rho, B, V, side)


def cached_kernel(params: ExteriorParams, M: int, which: str = "boundary") -> DtbcKernel:
    """Kernel with at least ``M+1`` coefficients, cached by exterior data.

    ``which`` is ``"boundary"`` (the convolution kernel) or ``"initial"``
    (the response to the initial boundary value).
    """
    key = (params, which)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None and hit.M >= M:
        _KERNEL_CACHE.move_to_end(key)
        return hit
    kernel = (boundary_kernel if which == "boundary" else initial_kernel)(params, M)
    _KERNEL_CACHE[key] = kernel
    while len(_KERNEL_CACHE) > _KERNEL_CACHE_SIZE:
        _KERNEL_CACHE.popitem(last=False)
    return kernel


def clear_kernel_cache() -> None:
    _KERNEL_CACHE.clear()


@dataclass
class PreparedSystem:
    """Factorised level-``m`` matrix and the explicit right-hand-side operator."""

    config: SchemeConfig
    pair: BandedHermitianPair
    lu: np.ndarray
    ipiv: np.ndarray
    rhs_op: sparse.csr_matrix
    kernels: dict  # side -> boundary coefficient array (scaled)
    boundary_index: dict  # side -> dof index
    A: sparse.csr_matrix = field(repr=False)
    initial_kernels: dict = field(default_factory=dict)  # side -> scaled coefficients


def system_matrix(config: SchemeConfig, pair: BandedHermitianPair, kernels: dict) -> sparse.csr_matrix:
    """``(i hbar/tau) M_rho - L/2`` with ``K^0`` on DTBC boundary diagonals and identity Dirichlet rows."""
    tau = config.tau
    hbar = config.coeffs.hbar
    A = (1j * hbar / tau) * pair.M_rho - 0.5 * pair.L
    A = A.tolil()
    last = pair.size - 1
    for side, idx in (("left", 0), ("right", last)):
        mode = config.left if side == "left" else config.right
        if mode == DIRICHLET:
            A.rows[idx] = [idx]
            A.data[idx] = [1.0 + 0j]
        else:
            A[idx, idx] = A[idx, idx] + kernels[side][0]
    return A.tocsr()


def prepare(config: SchemeConfig, pair: BandedHermitianPair | None = None) -> PreparedSystem:
    """Assemble (unless given), build kernels and factorise the time-independent matrix."""
    basis = reference_basis(config.n)
    if pair is None:
        pair = assemble(config.mesh, basis, config.coeffs)
    kernels, initial = {}, {}
    for side in ("left", "right"):
        if (config.left if side == "left" else config.right) == DTBC:
            ext = config.exterior(side)
            kernels[side] = cached_kernel(ext, config.M).boundary_coeffs[: config.M + 1]
            if config.initial_boundary_kernel:
                initial[side] = cached_kernel(ext, config.M, "initial").boundary_coeffs[: config.M + 1]
    A = system_matrix(config, pair, kernels)
    bw = pair.half_bandwidth
    ab = to_band(A, bw, extra_rows=bw)
    lu, ipiv, info = lapack.zgbtrf(ab, bw, bw)
    if info != 0:
        raise np.linalg.LinAlgError(f"banded LU failed (info={info}); system matrix is singular")
    hbar = config.coeffs.hbar
    rhs_op = ((1j * hbar / config.tau) * pair.M_rho + 0.5 * pair.L).tocsr()
    return PreparedSystem(config, pair, lu, ipiv, rhs_op, kernels, {"left": 0, "right": pair.size - 1}, A, initial)


def initial_state(config: SchemeConfig) -> np.ndarray:
    """Interpolant of the initial function, optionally with zero boundary values."""
    psi = interpolate(config.initial, config.mesh, reference_basis(config.n), config.interpolation)
    if config.zero_boundary_initial:
        psi[0] = 0.0
        psi[-1] = 0.0
    return psi


class Stepper:
    """Advance one run level by level.

    ``psi`` holds the current level ``m``; ``histories`` the boundary traces.
    """

    def __init__(self, system: PreparedSystem, psi0=None, conv_mode: str = "direct"):
        self.system = system
        cfg = system.config
        self.psi = initial_state(cfg) if psi0 is None else np.array(psi0, dtype=complex)
        if self.psi.shape != (system.pair.size,):
            raise ValueError("initial vector has the wrong size")
        self.m = 0
        self.histories = {}
        self._start = {}  # side -> (initial kernel, Psi^0 at that boundary)
        for side, k in system.kernels.items():
            self._start[side] = (system.initial_kernels.get(side), self.psi[system.boundary_index[side]])
            hist = BoundaryHistory(k, mode=conv_mode)
            hist.append(self.psi[system.boundary_index[side]])
            self.histories[side] = hist
        self._dirichlet = [
            system.boundary_index[s]
            for s, mode in (("left", cfg.left), ("right", cfg.right))
            if mode == DIRICHLET
        ]

    @property
    def M(self) -> int:
        return self.system.config.M

    def step(self) -> np.ndarray:
        if self.m >= self.M:
            raise IndexError(f"run already reached M={self.M}")
        sys_ = self.system
        m = self.m + 1
        rhs = sys_.rhs_op @ self.psi
        for side, hist in self.histories.items():
            rhs[sys_.boundary_index[side]] -= hist.past_sum(m)
            c, u0 = self._start[side]
            if c is not None and u0 != 0:
                rhs[sys_.boundary_index[side]] -= c[m] * u0
        for idx in self._dirichlet:
            rhs[idx] = 0.0
        psi, info = lapack.zgbtrs(sys_.lu, sys_.pair.half_bandwidth, sys_.pair.half_bandwidth, rhs, sys_.ipiv)
        if info != 0:
            raise np.linalg.LinAlgError(f"banded solve failed at step {m} (info={info})")
        for side, hist in self.histories.items():
            hist.append(psi[sys_.boundary_index[side]])
        self.psi = psi
        self.m = m
        return psi


def step(state: Stepper) -> np.ndarray:
    """Advance ``state`` by one level and return the new dof vector."""
    return state.step()


@dataclass
class RunResult:
    config: SchemeConfig = field(repr=False)
    times: np.ndarray = field(repr=False)
    snapshots: dict = field(repr=False)  # step index -> probe(Psi^m)
    traces: dict = field(repr=False)  # side -> Psi^m at that boundary, m = 0..M
    rho_norms: np.ndarray | None = field(default=None, repr=False)
    energy_norms: np.ndarray | None = field(default=None, repr=False)
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def _monotone_flags(values: np.ndarray, name: str, tol: float) -> list:
    jumps = np.diff(values) - tol * values[0]
    bad = np.nonzero(jumps > 0)[0]
    if bad.size:
        m = int(bad[0]) + 1
        return [f"{name} increased at step {m}: {values[m - 1]:.15e} -> {values[m]:.15e}"]
    return []


def run(
    config: SchemeConfig,
    record=(),
    probe=None,
    diagnostics: bool = True,
    conv_mode: str = "direct",
    system: PreparedSystem | None = None,
    norm_tol: float = NORM_TOL,
    strict: bool = False,
) -> RunResult:
    """Complete all ``M`` steps.

    ``record`` selects step indices to keep (``"all"`` for every level);
    ``probe`` maps a dof vector to the stored quantity (default: a copy).
    With DTBCs on both ends or Dirichlet, the monitors check that the
    rho-norm and the energy norm never increase by more than ``norm_tol``
    relative to their initial values; breaches are listed in ``flags``
    (raised when ``strict``).
    """
    system = prepare(config) if system is None else system
    stepper = Stepper(system, conv_mode=conv_mode)
    M = config.M
    keep = set(range(M + 1)) if record == "all" else {int(m) for m in record}
    if any(m < 0 or m > M for m in keep):
        raise ValueError(f"recorded steps must lie in [0, {M}]")
    probe = (lambda u: u.copy()) if probe is None else probe
    snaps = {}
    traces = {"left": np.empty(M + 1, dtype=complex), "right": np.empty(M + 1, dtype=complex)}
    rn = en = None
    if diagnostics:
        rn = np.empty(M + 1)
        en = np.empty(M + 1)

    def observe(m, psi):
        traces["left"][m] = psi[0]
        traces["right"][m] = psi[-1]
        if m in keep:
            snaps[m] = probe(psi)
        if diagnostics:
            rn[m] = rho_norm(psi, system.pair)
            en[m] = energy_norm(psi, system.pair)

    observe(0, stepper.psi)
    for m in range(1, M + 1):
        observe(m, stepper.step())
    result = RunResult(config, config.tau * np.arange(M + 1), snaps, traces, rn, en)
    if diagnostics:
        result.flags += _monotone_flags(rn, "rho-norm", norm_tol)
        result.flags += _monotone_flags(en, "energy norm", norm_tol)
        if strict and result.flags:
            raise InvariantViolation("; ".join(result.flags))
    return result
