"""Richardson extrapolation in time over commensurate Crank-Nicolson runs."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .stepper import SchemeConfig, Stepper, clear_kernel_cache, prepare

# step multipliers c and weights w: Psi_rR = sum_i w_i Psi^(c_i tau)
_SCHEMES = {
    1: ((Fraction(1),), (Fraction(1),)),
    2: ((Fraction(1), Fraction(2)), (Fraction(4, 3), Fraction(-1, 3))),
    3: (
        (Fraction(1), Fraction(3, 2), Fraction(3)),
        (Fraction(81, 40), Fraction(-16, 15), Fraction(1, 24)),
    ),
    4: (
        (Fraction(1), Fraction(4, 3), Fraction(2), Fraction(4)),
        (Fraction(1024, 315), Fraction(-729, 280), Fraction(16, 45), Fraction(-1, 360)),
    ),
}
_MULTIPLE = {1: 1, 2: 2, 3: 6, 4: 12}


@dataclass(frozen=True)
class Constituent:
    factor: Fraction  # step size in units of tau
    steps: int
    weight: Fraction
    stride: int  # constituent steps per extrapolant time level


@dataclass(frozen=True)
class ExtrapolationPlan:
    r: int
    M: int
    constituents: tuple

    @property
    def n_levels(self) -> int:
        """Extrapolant levels ``j = 0..M/r`` at times ``t = j r tau``."""
        return self.M // self.r

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(c.weight) for c in self.constituents])

    def step_indices(self, j: int) -> list:
        return [j * c.stride for c in self.constituents]


def plan(r: int, M: int) -> ExtrapolationPlan:
    if r not in _SCHEMES:
        raise ValueError(f"extrapolation order index r must be 1, 2, 3 or 4, got {r}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    need = _MULTIPLE[r]
    if M % need:
        raise ValueError(f"for r={r}, M must be a multiple of {need} (got M={M})")
    factors, weights = _SCHEMES[r]
    cons = tuple(
        Constituent(c, int(Fraction(M) / c), w, int(Fraction(r) / c)) for c, w in zip(factors, weights)
    )
    return ExtrapolationPlan(r, int(M), cons)


def extrapolate(p: ExtrapolationPlan, states, times=None):
    """Weighted combination of constituent states taken at one physical time.

    ``times``, when given, are the constituents' physical times (in any
    common unit) and must coincide.
    """
    if len(states) != len(p.constituents):
        raise ValueError(f"plan has {len(p.constituents)} constituents, got {len(states)} states")
    if times is not None:
        t0 = times[0]
        if any(abs(t - t0) > 1e-12 * max(1.0, abs(t0)) for t in times):
            raise ValueError(f"constituent times are misaligned: {times}")
    out = float(p.constituents[0].weight) * np.asarray(states[0])
    for c, s in zip(p.constituents[1:], states[1:]):
        out = out + float(c.weight) * np.asarray(s)
    return out


@dataclass(frozen=True)
class Member:
    """One extrapolated quantity in a lockstep ensemble.

    ``family`` groups configs that differ only in ``M``; constituent runs
    with equal ``family`` and step count are shared between members.
    ``probe`` maps a dof vector to the observed values.
    """

    key: object
    family: object
    config: SchemeConfig
    r: int
    probe: object = None


def lockstep(members, times=None, conv_mode: str = "direct"):
    """Advance all constituent runs together in physical time.

    Yields ``(t, values)`` in increasing ``t`` (a ``Fraction`` of ``T``),
    where ``values`` maps the key of each member defined at ``t`` to its
    extrapolated probe output. ``times`` optionally restricts output to a
    set of fractions of ``T``. Only current states are held in memory.
    """
    plans = {s.key: plan(s.r, s.config.M) for s in members}
    steppers = {}
    for s in members:
        for c in plans[s.key].constituents:
            sk = (s.family, c.steps)
            if sk not in steppers:
                steppers[sk] = Stepper(prepare(s.config.with_steps(c.steps)), conv_mode=conv_mode)
    wanted = None if times is None else {Fraction(t) for t in times}
    events = set()
    for s in members:
        p = plans[s.key]
        for j in range(p.n_levels + 1):
            t = Fraction(j * s.r, s.config.M)
            if wanted is None or t in wanted:
                events.add(t)
    for t in sorted(events):
        values = {}
        for s in members:
            p = plans[s.key]
            if (t * s.config.M / s.r).denominator != 1:
                continue
            states = []
            for c in p.constituents:
                st = steppers[(s.family, c.steps)]
                target = t * c.steps
                while st.m < target:
                    st.step()
                states.append(st.psi)
            u = extrapolate(p, states)
            values[s.key] = u.copy() if s.probe is None else s.probe(u)
        yield t, values


@dataclass
class ExtrapolatedRun:
    plan: ExtrapolationPlan
    times: np.ndarray  # physical times of the levels
    values: np.ndarray  # (levels, probe size)


def run_extrapolated(config: SchemeConfig, r: int, probe=None, levels=None, conv_mode: str = "direct"):
    """Psi_rR at levels ``t = j r tau`` (all levels unless ``levels`` is given)."""
    p = plan(r, config.M)
    times = None
    if levels is not None:
        times = [Fraction(j * r, config.M) for j in levels]
    member = Member("u", "base", config, r, probe)
    ts, vals = [], []
    for t, v in lockstep([member], times, conv_mode):
        ts.append(float(t) * config.T)
        vals.append(v["u"])
    return ExtrapolatedRun(p, np.array(ts), np.array(vals))


# ---------------------------------------------------------------- cost model


@dataclass(frozen=True)
class CostModel:
    """Work ``a*J*M + b*M^2`` for a single Crank-Nicolson run."""

    a: float
    b: float

    def single(self, J, M) -> float:
        return self.a * J * M + self.b * M * M


def cost_factors(r: int) -> tuple:
    """Multipliers of ``aJM`` and ``bM^2`` for the whole extrapolation."""
    factors, _ = _SCHEMES[r]
    lin = sum(1 / c for c in factors)
    quad = sum(1 / c**2 for c in factors)
    return lin, quad


def cost_overhead(model: CostModel, J, M, r: int) -> float:
    """Predicted extra cost of Psi_rR over Psi^(tau), in percent."""
    lin, quad = cost_factors(r)
    a, b = model.a * J * M, model.b * M * M
    return 100.0 * (float(lin) * a + float(quad) * b - (a + b)) / (a + b)


def fit_cost_model(samples) -> CostModel:
    """Least-squares fit of ``(J, M, seconds)`` samples."""
    samples = np.asarray(samples, dtype=float)
    J, M, t = samples.T
    A = np.column_stack([J * M, M * M])
    coef, *_ = np.linalg.lstsq(A, t, rcond=None)
    a, b = coef
    if a <= 0 or b <= 0:
        raise ValueError(f"cost fit produced non-positive constants a={a:.3e}, b={b:.3e}")
    return CostModel(float(a), float(b))


def time_run(config: SchemeConfig, r: int = 1, repeats: int = 1) -> float:
    """Wall time of computing Psi_rR from scratch (kernels and factorisations included)."""
    best = math.inf
    p = plan(r, config.M)
    for _ in range(repeats):
        clear_kernel_cache()
        t0 = time.perf_counter()
        for c in p.constituents:
            st = Stepper(prepare(config.with_steps(c.steps)))
            for _ in range(c.steps):
                st.step()
        best = min(best, time.perf_counter() - t0)
    return best
