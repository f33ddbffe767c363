"""Gaussian wave packet and the three benchmark configurations."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .mesh import Coefficients, Mesh1D
from .stepper import DIRICHLET, DTBC, SchemeConfig


@dataclass(frozen=True)
class GaussianParams:
    x0: float
    k: float
    alpha: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def gaussian_psi(x, t, params: GaussianParams):
    """Free Gaussian packet solving ``i psi_t = -psi_xx`` (``hbar = rho = 1``, ``B = 2``).

    Principal branches of the roots; ``1 + i t/alpha`` stays in the right
    half-plane for ``t >= 0`` so the value is continuous in time.
    """
    x = np.asarray(x, dtype=float)
    a, k, x0 = params.alpha, params.k, params.x0
    pref = params.amplitude / ((2 * np.pi * a) ** 0.25 * np.sqrt(1 + 1j * t / a))
    return pref * np.exp(1j * k * (x - x0 - k * t) - (x - x0 - 2 * k * t) ** 2 / (4 * (a + 1j * t)))


def gaussian_initial(x, params: GaussianParams):
    """``gaussian_psi(x, 0)`` written out directly."""
    x = np.asarray(x, dtype=float)
    a = params.alpha
    return (
        params.amplitude
        / (2 * np.pi * a) ** 0.25
        * np.exp(1j * params.k * (x - params.x0) - (x - params.x0) ** 2 / (4 * a))
    )


@dataclass(frozen=True)
class Recipe:
    n: int
    J: int
    M: int
    r: int = 4


@dataclass(frozen=True)
class ExperimentPreset:
    """A benchmark problem: physics on ``(-X, X)`` up to time ``T``.

    ``V_pieces`` lists ``(a, b, value)`` intervals of a piecewise constant
    potential (zero elsewhere). ``J`` counts the elements of a uniform
    mesh on ``(-X, X)``, so ``h = 2X/J``; ``J_multiple`` is the divisibility
    of ``J`` that puts every discontinuity on a mesh node.
    """

    name: str
    X: float
    T: float
    gaussian: GaussianParams
    hbar: float = 1.0
    rho: float = 1.0
    B: float = 2.0
    V_pieces: tuple = ()
    left: str = DTBC
    right: str = DTBC
    has_exact: bool = False
    recipe: Recipe | None = None
    J_multiple: int = 1
    interpolation: str = "equispaced"
    zero_boundary_initial: bool = False
    initial_boundary_kernel: bool = True
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if not (self.X > 0 and self.T > 0):
            raise ValueError("X and T must be positive")
        if self.has_exact and (self.V_pieces or (self.hbar, self.rho, self.B) != (1.0, 1.0, 2.0)):
            raise ValueError("the Gaussian closed form needs hbar = rho = 1, B = 2 and no potential")
        for a, b, _ in self.V_pieces:
            if not -self.X < a < b < self.X:
                raise ValueError(f"potential piece ({a}, {b}) must lie inside (-X, X)")

    def mesh(self, J: int) -> Mesh1D:
        if int(J) != J or J < 1:
            raise ValueError(f"J must be a positive integer, got {J}")
        return Mesh1D(-self.X, self.X, int(J))

    def check_J(self, J: int) -> None:
        if J % self.J_multiple:
            raise ValueError(
                f"{self.name}: J={J} misaligns the potential; J must be a multiple of {self.J_multiple}"
            )

    def coefficients(self, mesh: Mesh1D) -> Coefficients:
        return Coefficients.piecewise(mesh, self.hbar, self.rho, self.B, self.V_pieces)

    def initial(self, x):
        return gaussian_initial(x, self.gaussian)

    def exact(self, x, t):
        if not self.has_exact:
            raise ValueError(f"{self.name} has no closed-form solution")
        return gaussian_psi(x, t, self.gaussian)

    def scheme(self, n: int, J: int, M: int, mesh: Mesh1D | None = None) -> SchemeConfig:
        self.check_J(J)
        mesh = self.mesh(J) if mesh is None else mesh
        return SchemeConfig(
            mesh, n, self.T, M, self.coefficients(mesh), self.initial, self.left, self.right,
            self.interpolation, self.zero_boundary_initial, self.initial_boundary_kernel,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["V_pieces"] = [list(p) for p in self.V_pieces]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPreset":
        d = dict(d)
        d["gaussian"] = GaussianParams(**d["gaussian"])
        d["V_pieces"] = tuple(tuple(float(v) for v in p) for p in d.get("V_pieces", ()))
        if d.get("recipe") is not None:
            d["recipe"] = Recipe(**d["recipe"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def updated(self, **changes) -> "ExperimentPreset":
        return replace(self, **changes)


def _double_well(scale: float, stretch: float):
    s = stretch
    return (
        (6 * s, 6.5 * s, scale * 1.0),
        (6.5 * s, 7 * s, scale * 0.2),
        (7.5 * s, 8 * s, scale * 1.0),
    )


PRESETS = {
    "ex1": ExperimentPreset(
        "ex1", X=0.8, T=0.006, gaussian=GaussianParams(0.0, 100.0, 1 / 120),
        B=2.0, left=DIRICHLET, right=DTBC, has_exact=True,
        description="free propagation of a Gaussian packet",
    ),
    "ex2": ExperimentPreset(
        "ex2", X=1.5, T=0.09, gaussian=GaussianParams(-0.5, 30.0, 1 / 120),
        B=2.0, V_pieces=((0.5, 0.6, 800.0),), recipe=Recipe(9, 150, 36864), J_multiple=30,
        description="tunnelling through a rectangular barrier",
    ),
    "ex3": ExperimentPreset(
        "ex3", X=9.0, T=16.0, gaussian=GaussianParams(0.0, np.sqrt(7.0), 1.0),
        B=1.0, V_pieces=_double_well(12.5, 1.0), recipe=Recipe(9, 144, 8064), J_multiple=36,
        description="double barrier stepped quantum well",
    ),
    # ex3 after x -> x/9, t -> t/162: same discrete solution up to amplitude
    "ex3_scaled": ExperimentPreset(
        "ex3_scaled", X=1.0, T=16.0 / 162.0, gaussian=GaussianParams(0.0, 9 * np.sqrt(7.0), 1 / 81, 1 / 3),
        B=2.0, V_pieces=_double_well(2025.0, 1 / 9), recipe=Recipe(9, 144, 8064), J_multiple=36,
        description="ex3 in rescaled coordinates",
    ),
}


def preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def potential_eval(p: ExperimentPreset, J: int, index=None):
    """Per-element potential values on the ``J``-element mesh (alignment enforced).

    With ``index`` only that element's value (0-based from the left) is returned.
    """
    p.check_J(J)
    V = np.asarray(p.coefficients(p.mesh(J)).V)
    if index is None:
        return V
    if not 0 <= index < V.size:
        raise IndexError(f"element index {index} outside 0..{V.size - 1}")
    return float(V[index])
