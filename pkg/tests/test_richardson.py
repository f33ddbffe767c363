from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import eigh

from tdse_dtbc.mesh import Coefficients, Mesh1D
from tdse_dtbc.richardson import (
    CostModel,
    Member,
    cost_factors,
    cost_overhead,
    extrapolate,
    fit_cost_model,
    lockstep,
    plan,
    run_extrapolated,
)
from tdse_dtbc.stepper import DIRICHLET, DTBC, SchemeConfig, Stepper, prepare, run


def small_config(M, n=3, ne=16):
    mesh = Mesh1D(-1.0, 1.0, ne)
    f = lambda x: np.exp(4j * x - x**2 / 0.04)
    return SchemeConfig(mesh, n, 0.05, M, Coefficients.uniform(mesh, B=2.0, V=5.0), f, DTBC, DTBC)


def test_constituent_step_counts():
    assert [c.steps for c in plan(2, 600).constituents] == [600, 300]
    assert [c.steps for c in plan(4, 504).constituents] == [504, 378, 252, 126]
    assert [c.steps for c in plan(3, 12).constituents] == [12, 8, 4]
    assert plan(1, 7).n_levels == 7


@pytest.mark.parametrize("r, M", [(3, 604), (2, 3), (4, 18), (5, 60), (0, 60), (2, 0)])
def test_invalid_plans(r, M):
    with pytest.raises(ValueError):
        plan(r, M)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_weights_cancel_even_powers(r):
    p = plan(r, 12)
    assert sum(c.weight for c in p.constituents) == 1
    for k in range(1, r):
        assert sum(c.weight * c.factor ** (2 * k) for c in p.constituents) == 0
    if r < 4:
        assert sum(c.weight * c.factor ** (2 * r) for c in p.constituents) != 0


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_extrapolate_polynomial_model(r, rng):
    p = plan(r, 12)
    exact = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    coef = [rng.standard_normal(5) for _ in range(r)]
    tau = 0.01
    states = [exact + sum(coef[k] * (float(c.factor) * tau) ** (2 * k + 2) for k in range(r - 1))
              for c in p.constituents]
    assert np.allclose(extrapolate(p, states), exact, atol=1e-14, rtol=0)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_scalar_crank_nicolson_order(r):
    lam = -2.0 + 5.0j
    T = 1.0

    def cn(tau, steps):
        return ((1 + lam * tau / 2) / (1 - lam * tau / 2)) ** steps

    errs = []
    for M in (24, 48):
        p = plan(r, M)
        states = [cn(float(c.factor) * T / M, c.steps) for c in p.constituents]
        errs.append(abs(extrapolate(p, states) - np.exp(lam * T)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2 * r, abs=0.35)


def test_extrapolate_checks():
    p = plan(2, 4)
    with pytest.raises(ValueError):
        extrapolate(p, [np.zeros(2)])
    with pytest.raises(ValueError):
        extrapolate(p, [np.zeros(2), np.zeros(2)], times=[1.0, 1.1])


def test_cost_limits():
    assert [cost_overhead(CostModel(1.0, 0.0), 1, 1, r) for r in (2, 3, 4)] == pytest.approx([50, 100, 150])
    assert [cost_overhead(CostModel(0.0, 1.0), 1, 1, r) for r in (2, 3, 4)] == pytest.approx(
        [25, 500 / 9, 87.5])
    assert cost_overhead(CostModel(1.0, 1.0), 10, 10, 1) == 0
    lin, quad = cost_factors(3)
    assert (lin, quad) == (Fraction(2), Fraction(14, 9))


def test_cost_overhead_moves_between_limits():
    m = CostModel(1.0, 1.0)
    vals = [cost_overhead(m, 100, M, 3) for M in (1, 100, 10_000)]
    assert 55.5 < vals[2] < vals[1] < vals[0] < 100


def test_fit_cost_model():
    samples = [(J, M, 2e-6 * J * M + 3e-8 * M * M) for J in (30, 90) for M in (300, 900)]
    m = fit_cost_model(samples)
    assert m.a == pytest.approx(2e-6) and m.b == pytest.approx(3e-8)
    with pytest.raises(ValueError):
        fit_cost_model([(1, 1, -1.0), (2, 1, -2.0), (1, 2, -3.0)])


def test_r1_equals_plain_run():
    cfg = small_config(40)
    ext = run_extrapolated(cfg, 1)
    ref = run(cfg, record="all")
    assert ext.values.shape[0] == 41
    for m in range(41):
        assert np.array_equal(ext.values[m], ref.snapshots[m])


def test_r2_matches_manual_combination():
    cfg = small_config(40)
    ext = run_extrapolated(cfg, 2)
    fine = run(cfg, record="all").snapshots
    coarse = run(cfg.with_steps(20), record="all").snapshots
    for j in range(21):
        manual = 4 / 3 * fine[2 * j] - 1 / 3 * coarse[j]
        assert np.allclose(ext.values[j], manual, atol=1e-14, rtol=0)
    assert np.allclose(ext.times, np.arange(21) * 2 * cfg.T / 40)


def test_lockstep_shares_runs_and_filters_times():
    members = [Member(("a", r), "fam", small_config(24), r) for r in (1, 2, 3)]
    out = dict(lockstep(members, times=[Fraction(1, 2), Fraction(1)]))
    assert sorted(out) == [Fraction(1, 2), Fraction(1)]
    assert set(out[Fraction(1)]) == {("a", 1), ("a", 2), ("a", 3)}


def test_time_order_on_discrete_modes():
    # data in the span of low discrete modes: exact semi-discrete solution known
    mesh = Mesh1D(-1.0, 1.0, 12)
    cfg = SchemeConfig(mesh, 4, 0.05, 24, Coefficients.uniform(mesh, B=2.0, V=5.0),
                       lambda x: 0 * x, DIRICHLET, DIRICHLET)
    pair = prepare(cfg).pair
    inner = slice(1, pair.size - 1)
    mu, vec = eigh(pair.L.toarray()[inner, inner], pair.M_rho.toarray()[inner, inner])
    coef = np.array([1.0, 0.5j, -0.3, 0.2, 0.1j, 0.05])
    u0 = np.zeros(pair.size, complex)
    exact = np.zeros(pair.size, complex)
    u0[inner] = vec[:, :6] @ coef
    exact[inner] = vec[:, :6] @ (coef * np.exp(-1j * mu[:6] * cfg.T))
    for r in (1, 2, 3, 4):
        errs = []
        for M in (24, 48):
            p = plan(r, M)
            states = []
            for c in p.constituents:
                st = Stepper(prepare(cfg.with_steps(c.steps)), psi0=u0)
                for _ in range(c.steps):
                    st.step()
                states.append(st.psi)
            errs.append(np.linalg.norm(extrapolate(p, states) - exact))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2 * r, abs=0.3)
