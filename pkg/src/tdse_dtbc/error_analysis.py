"""Mesh norms, error series and pseudo-exact reference solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import newton_cotes

from .mesh import Mesh1D, evaluation_grid, evaluation_matrix, reference_basis
from .richardson import Member, lockstep, plan


class ResourceCapExceeded(RuntimeError):
    """A requested run is larger than the configured resource cap."""


@dataclass(frozen=True)
class ResourceCap:
    """Upper bound on ``dofs * steps`` of any single constituent run.

    The default admits the largest reference run of the benchmark
    (``n=9, J=150, M=36864``).
    """

    max_work: float = (150 * 9 + 1) * 36864

    def check(self, n_dofs: int, M: int, what: str = "run") -> None:
        if self.max_work is not None and n_dofs * M > self.max_work:
            raise ResourceCapExceeded(
                f"{what}: {n_dofs} dofs x {M} steps = {n_dofs * M:.3e} exceeds cap {self.max_work:.3e}"
            )


NO_CAP = ResourceCap(None)


@lru_cache(maxsize=None)
def _compound_weights(n: int, n_elements: int) -> np.ndarray:
    w, _ = newton_cotes(n, 1)
    out = np.zeros(n_elements * n + 1)
    for e in range(n_elements):
        out[e * n : e * n + n + 1] += w
    return out / n


def l2h_norm(f, mesh: Mesh1D, n: int) -> np.ndarray:
    """Compound closed Newton-Cotes estimate of the L2 norm on ``n`` subintervals per element.

    ``f`` is a callable or an array of values on :func:`evaluation_grid`
    (extra leading axes are kept, e.g. one row per time level).
    """
    vals = f(evaluation_grid(mesh, n)) if callable(f) else np.asarray(f)
    w = _compound_weights(n, mesh.n_elements) * mesh.h
    if vals.shape[-1] != w.size:
        raise ValueError(f"expected {w.size} grid values, got {vals.shape[-1]}")
    return np.sqrt(np.maximum(np.abs(vals) ** 2 @ w, 0.0))


def ch_norm(f, mesh: Mesh1D, n: int) -> np.ndarray:
    """Maximum modulus over the closed grid of step ``h/n``."""
    vals = f(evaluation_grid(mesh, n)) if callable(f) else np.asarray(f)
    return np.max(np.abs(vals), axis=-1)


@dataclass
class ErrorReport:
    """Absolute and relative errors per time level in both mesh norms."""

    times: np.ndarray
    abs_l2: np.ndarray
    abs_c: np.ndarray
    ref_l2: np.ndarray
    ref_c: np.ndarray

    @property
    def rel_l2(self) -> np.ndarray:
        return _safe_ratio(self.abs_l2, self.ref_l2)

    @property
    def rel_c(self) -> np.ndarray:
        return _safe_ratio(self.abs_c, self.ref_c)

    def series(self, norm: str = "l2", relative: bool = False) -> np.ndarray:
        if norm not in ("l2", "c"):
            raise ValueError(f"norm must be 'l2' or 'c', got {norm!r}")
        if relative:
            return self.rel_l2 if norm == "l2" else self.rel_c
        return self.abs_l2 if norm == "l2" else self.abs_c

    def max(self, norm: str = "l2", relative: bool = False, window=None) -> float:
        """Maximum over ``lo <= t <= hi`` (whole run by default)."""
        s = self.series(norm, relative)
        if window is not None:
            lo, hi = window
            eps = 1e-12 * max(1.0, abs(hi))
            s = s[(self.times >= lo - eps) & (self.times <= hi + eps)]
        return float(np.max(s))

    def final(self, norm: str = "l2", relative: bool = False) -> float:
        return float(self.series(norm, relative)[-1])

    def summary(self, T: float) -> dict:
        out = {}
        for norm in ("l2", "c"):
            for rel in (False, True):
                tag = f"{'rel' if rel else 'abs'}_{norm}"
                out[f"max_{tag}"] = self.max(norm, rel)
                out[f"half_{tag}"] = self.max(norm, rel, (T / 2, T))
                out[f"final_{tag}"] = self.final(norm, rel)
        return out


def _safe_ratio(num, den):
    den = np.asarray(den, dtype=float)
    out = np.full(den.shape, np.nan)
    ok = den > 0
    out[ok] = np.asarray(num)[ok] / den[ok]
    return out


class _Collector:
    def __init__(self, mesh: Mesh1D, n: int):
        self.mesh, self.n = mesh, n
        self.rows = []

    def add(self, t, values, ref):
        e = values - ref
        self.rows.append((
            t,
            l2h_norm(e, self.mesh, self.n), ch_norm(e, self.mesh, self.n),
            l2h_norm(ref, self.mesh, self.n), ch_norm(ref, self.mesh, self.n),
        ))

    def report(self) -> ErrorReport:
        cols = [np.array([r[i] for r in self.rows], dtype=float) for i in range(5)]
        return ErrorReport(*cols)


def error_series(solution, reference, mesh: Mesh1D, n: int, times) -> ErrorReport:
    """Errors of ``solution`` against ``reference`` at the given physical ``times``.

    ``solution`` is an array ``(len(times), grid)`` of values on the ``h/n``
    grid of ``mesh``. ``reference`` is either a callable ``(x, t)`` or an
    array of the same shape.
    """
    solution = np.asarray(solution)
    times = np.asarray(times, dtype=float)
    if solution.shape[0] != times.size:
        raise ValueError("solution rows do not match the time grid")
    if not callable(reference):
        reference = np.asarray(reference)
        if reference.shape != solution.shape:
            raise ValueError(f"reference shape {reference.shape} != solution shape {solution.shape}")
    x = evaluation_grid(mesh, n)
    col = _Collector(mesh, n)
    for i, t in enumerate(times):
        ref = reference(x, t) if callable(reference) else reference[i]
        col.add(t, solution[i], ref)
    return col.report()


def ratio_table(errors) -> np.ndarray:
    """Successive ratios ``E(M_q-1) / E(M_q)`` (first entry has none)."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two errors for a ratio")
    if np.any(e[1:] == 0):
        raise ZeroDivisionError("zero error in ratio denominator")
    return e[:-1] / e[1:]


def observed_orders(errors) -> np.ndarray:
    """``log2`` of :func:`ratio_table` (for step halving)."""
    return np.log2(ratio_table(errors))


# ------------------------------------------------------------ references


@dataclass
class ReferenceSolution:
    """Values of a reference field on fixed points at fixed times (fractions of ``T``)."""

    T: float
    points: np.ndarray = field(repr=False)
    times: list = field(repr=False)
    values: np.ndarray = field(repr=False)
    certificate: dict | None = None

    def __post_init__(self):
        self._index = {Fraction(t): i for i, t in enumerate(self.times)}

    def at(self, t: Fraction) -> np.ndarray:
        try:
            return self.values[self._index[Fraction(t)]]
        except KeyError:
            raise ValueError(f"reference has no level at t = {t} T") from None

    def __call__(self, x, t):
        """Callable form for :func:`error_series`; ``x`` must be the stored points."""
        frac = Fraction(float(t) / self.T).limit_denominator(10**9)
        return self.at(frac)


def exact_reference(preset, points, times) -> ReferenceSolution:
    vals = np.array([preset.exact(points, float(t) * preset.T) for t in times])
    return ReferenceSolution(preset.T, np.asarray(points), list(times), vals)


def extrapolated_reference(
    preset, n, J, M, r, points, times, cap: ResourceCap = ResourceCap(), conv_mode: str = "direct"
):
    """Psi_rR of ``preset`` at ``(n, J, M)`` evaluated at ``points`` for ``times``."""
    cfg = preset.scheme(n, J, M)
    for c in plan(r, M).constituents:
        cap.check(cfg.mesh.n_dofs(n), c.steps, f"{preset.name} n={n} J={J} M={c.steps}")
    P = evaluation_matrix(cfg.mesh, reference_basis(n), points)
    member = Member("ref", ("ref", J), cfg, r, lambda u: P @ u)
    times = sorted({Fraction(t) for t in times})
    out = {}
    for t, v in lockstep([member], times, conv_mode):
        out[t] = v["ref"]
    missing = [t for t in times if t not in out]
    if missing:
        raise ValueError(f"reference time grid (r tau = {r}/{M} T) misses requested levels, e.g. t={missing[0]} T")
    return ReferenceSolution(preset.T, np.asarray(points), times, np.array([out[t] for t in times]))


def pseudo_exact_many(
    preset,
    meshes: dict,
    target_n: int,
    times,
    certify: bool = True,
    recipe=None,
    cap: ResourceCap = ResourceCap(),
    conv_mode: str = "direct",
) -> dict:
    """:func:`pseudo_exact` for several target meshes sharing one set of runs.

    ``meshes`` maps a label (typically ``J``) to a mesh; the result maps the
    same labels to :class:`ReferenceSolution` objects.
    """
    rc = preset.recipe if recipe is None else recipe
    if rc is None:
        raise ValueError(f"{preset.name} defines no pseudo-exact recipe")
    grids = {k: evaluation_grid(m, target_n) for k, m in meshes.items()}
    keys = list(grids)
    cuts = np.cumsum([0] + [grids[k].size for k in keys])
    points = np.concatenate([grids[k] for k in keys])

    def split(ref):
        return {
            k: ReferenceSolution(preset.T, grids[k], ref.times, ref.values[:, cuts[i] : cuts[i + 1]])
            for i, k in enumerate(keys)
        }

    variants = (("M", rc.J, 4 * rc.M), ("J", 4 * rc.J, rc.M)) if certify else ()
    # fail before any work if one of the runs is too large
    for _, J, M in (("base", rc.J, rc.M),) + variants:
        dofs = preset.mesh(J).n_dofs(rc.n)
        for c in plan(rc.r, M).constituents:
            cap.check(dofs, c.steps, f"{preset.name} reference n={rc.n} J={J} M={c.steps}")
    base = split(extrapolated_reference(preset, rc.n, rc.J, rc.M, rc.r, points, times, cap, conv_mode))
    if certify:
        alts = {}
        for label, J, M in variants:
            alt = extrapolated_reference(preset, rc.n, J, M, rc.r, points, times, cap, conv_mode)
            alts[label] = (J, M, split(alt))
        for k, ref in base.items():
            ref.certificate = {}
            for label, (J, M, alt) in alts.items():
                rep = error_series(alt[k].values, ref.values, meshes[k], target_n,
                                   [float(t) * preset.T for t in ref.times])
                ref.certificate[label] = {"J": J, "M": M, **rep.summary(preset.T)}
    return base


def pseudo_exact(
    preset,
    target_mesh: Mesh1D,
    target_n: int,
    times,
    certify: bool = True,
    recipe=None,
    cap: ResourceCap = ResourceCap(),
    conv_mode: str = "direct",
) -> ReferenceSolution:
    """Refined extrapolated run standing in for the unknown exact solution.

    Evaluated on the ``h/n`` grid of ``target_mesh`` at ``times`` (fractions
    of ``T``). With ``certify`` the recipe is repeated with ``4M`` and with
    ``4J``; the maximal changes in both mesh norms (absolute, relative,
    over ``[0, T]`` and ``[T/2, T]``) are stored in ``certificate``.
    """
    return pseudo_exact_many(preset, {0: target_mesh}, target_n, times, certify, recipe, cap, conv_mode)[0]


def error_study(preset, n: int, cells, reference=None, conv_mode: str = "direct"):
    """Errors of Psi_rR for every ``(J, M, r)`` in ``cells``.

    Norms use the ``h/n`` grid of each run's own mesh. ``reference`` is
    ``None`` for presets with an exact solution, otherwise a mapping
    ``J -> ReferenceSolution`` on that grid. Returns ``{(J, M, r): ErrorReport}``.
    """
    cells = [tuple(int(v) for v in c) for c in cells]
    members, grids, collectors = [], {}, {}
    for J, M, r in cells:
        cfg = preset.scheme(n, J, M)
        if J not in grids:
            x = evaluation_grid(cfg.mesh, n)
            grids[J] = (cfg.mesh, x, evaluation_matrix(cfg.mesh, reference_basis(n), x))
        P = grids[J][2]
        members.append(Member((J, M, r), J, cfg, r, lambda u, P=P: P @ u))
        collectors[(J, M, r)] = _Collector(grids[J][0], n)
    exact_cache = {}
    for t, values in lockstep(members, conv_mode=conv_mode):
        for key, vals in values.items():
            J = key[0]
            if reference is None:
                if (J, t) not in exact_cache:
                    exact_cache[(J, t)] = preset.exact(grids[J][1], float(t) * preset.T)
                ref = exact_cache[(J, t)]
            else:
                ref = reference[J].at(t)
            collectors[key].add(float(t) * preset.T, vals, ref)
        exact_cache = {k: v for k, v in exact_cache.items() if k[1] == t}
    return {k: c.report() for k, c in collectors.items()}


def study_times(cells, preset_T=None) -> list:
    """Union of the extrapolant levels (fractions of ``T``) over ``(J, M, r)`` cells."""
    out = set()
    for _, M, r in cells:
        for j in range(M // r + 1):
            out.add(Fraction(j * r, M))
    return sorted(out)
