import numpy as np
import pytest
from scipy.integrate import quad

from tdse_dtbc.cases import (
    PRESETS,
    ExperimentPreset,
    GaussianParams,
    gaussian_initial,
    gaussian_psi,
    potential_eval,
    preset,
)
from tdse_dtbc.stepper import DIRICHLET, DTBC


@pytest.mark.parametrize("g", [GaussianParams(0.0, 100.0, 1 / 120), GaussianParams(0.3, -4.0, 0.5, 2.0)])
def test_gaussian_norm_and_initial(g):
    for t in (0.0, 0.01, 0.3):
        c, sd = g.x0 + 2 * g.k * t, np.sqrt(g.alpha + t**2 / g.alpha)
        f = lambda x: abs(gaussian_psi(x, t, g)) ** 2
        total = quad(f, c - 20 * sd, c + 20 * sd, points=[c], limit=2000, epsabs=0, epsrel=1e-12)[0]
        assert total == pytest.approx(g.amplitude**2, rel=1e-9)
    x = np.linspace(-2, 2, 101)
    assert np.allclose(gaussian_psi(x, 0.0, g), gaussian_initial(x, g), rtol=1e-14, atol=0)


def test_gaussian_solves_free_equation():
    g = GaussianParams(-0.2, 7.0, 0.05)
    x = np.linspace(-1, 1, 41)
    t, dt, dx = 0.02, 1e-7, 1e-4
    psi_t = (gaussian_psi(x, t + dt, g) - gaussian_psi(x, t - dt, g)) / (2 * dt)
    psi_xx = (gaussian_psi(x + dx, t, g) - 2 * gaussian_psi(x, t, g) + gaussian_psi(x - dx, t, g)) / dx**2
    scale = np.max(np.abs(psi_xx))
    assert np.max(np.abs(1j * psi_t + psi_xx)) < 1e-6 * scale


def test_gaussian_continuous_in_time():
    g = GaussianParams(0.0, 0.0, 0.01)
    ts = np.linspace(0, 1, 10001)
    vals = np.array([gaussian_psi(0.0, t, g) for t in ts])
    assert np.max(np.abs(np.diff(vals))) < 0.05 * np.max(np.abs(vals))


def test_gaussian_rejects_bad_alpha():
    with pytest.raises(ValueError):
        GaussianParams(0.0, 1.0, 0.0)


@pytest.mark.parametrize("name, bound", [("ex1", 1e-8), ("ex2", 1e-12), ("ex3", 1e-8), ("ex3_scaled", 1e-8)])
def test_initial_tails_at_boundary(name, bound):
    p = preset(name)
    assert max(abs(p.initial(-p.X)), abs(p.initial(p.X))) < bound


def test_preset_values():
    e1, e2, e3 = preset("ex1"), preset("ex2"), preset("ex3")
    assert (e1.X, e1.T, e1.left, e1.right, e1.has_exact) == (0.8, 0.006, DIRICHLET, DTBC, True)
    assert (e1.gaussian.k, e1.gaussian.alpha) == (100.0, 1 / 120)
    assert (e2.X, e2.T, e2.V_pieces, e2.left, e2.right) == (1.5, 0.09, ((0.5, 0.6, 800.0),), DTBC, DTBC)
    assert (e2.recipe.n, e2.recipe.J, e2.recipe.M, e2.recipe.r) == (9, 150, 36864, 4)
    assert (e3.X, e3.T, e3.B) == (9.0, 16.0, 1.0)
    assert e3.gaussian.k == pytest.approx(np.sqrt(7))
    assert (e3.recipe.J, e3.recipe.M) == (144, 8064)


def test_ex2_barrier_is_one_element_at_J30():
    V = potential_eval(preset("ex2"), 30)
    assert V.size == 30
    assert np.count_nonzero(V) == 1 and V[20] == 800.0
    assert np.count_nonzero(potential_eval(preset("ex2"), 60)) == 2


def test_ex3_well_values_at_J36():
    p = preset("ex3")
    assert [potential_eval(p, 36, i) for i in (30, 31, 32, 33)] == [12.5, 2.5, 0.0, 12.5]
    assert np.count_nonzero(potential_eval(p, 36)) == 3
    with pytest.raises(IndexError):
        potential_eval(p, 36, 36)


@pytest.mark.parametrize("name, J", [("ex2", 45), ("ex3", 30), ("ex3", 72 + 1)])
def test_misaligned_J_rejected(name, J):
    with pytest.raises(ValueError):
        preset(name).scheme(3, J, 10)


def test_ex3_scaled_matches_ex3_potential_pattern():
    a = potential_eval(preset("ex3"), 72)
    b = potential_eval(preset("ex3_scaled"), 72)
    assert np.allclose(b, 162 * a)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_json_round_trip(name):
    p = preset(name)
    q = ExperimentPreset.from_dict(__import__("json").loads(p.to_json()))
    assert q == p


def test_validation():
    g = GaussianParams(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ExperimentPreset("x", 1.0, 1.0, g, V_pieces=((0.1, 0.2, 1.0),), has_exact=True)
    with pytest.raises(ValueError):
        ExperimentPreset("x", 1.0, 1.0, g, B=1.0, has_exact=True)
    with pytest.raises(ValueError):
        ExperimentPreset("x", 1.0, 1.0, g, V_pieces=((0.5, 1.5, 1.0),))
    with pytest.raises(ValueError):
        ExperimentPreset("x", -1.0, 1.0, g)
    with pytest.raises(ValueError):
        preset("ex9")
    with pytest.raises(ValueError):
        preset("ex2").exact(0.0, 0.0)
    with pytest.raises(ValueError):
        preset("ex1").mesh(0)


def test_scheme_carries_preset_options():
    p = preset("ex2").updated(interpolation="lobatto", initial_boundary_kernel=False)
    cfg = p.scheme(3, 30, 12)
    assert (cfg.interpolation, cfg.initial_boundary_kernel, cfg.mesh.n_elements) == ("lobatto", False, 30)
    assert cfg.mesh.h == pytest.approx(0.1)
