import numpy as np
import pytest

from tdse_dtbc.mesh import Coefficients, Mesh1D
from tdse_dtbc.stepper import DIRICHLET, SchemeConfig, Stepper, prepare


def enlarged_mismatch(cfg: SchemeConfig, right_factor=4.0, left_factor=1.0) -> float:
    """Max dof difference between ``cfg`` and a zero-Dirichlet run on an enlarged domain.

    The enlarged mesh keeps the element size and the interior nodes of
    ``cfg.mesh``; the initial data is the truncated scheme's own vector,
    padded with zeros.
    """
    m = cfg.mesh
    h = m.h
    X = m.X
    extra_left = int(round((left_factor - 1.0) * X / h)) if left_factor > 1 else 0
    extra_right = int(round((right_factor * X - m.right) / h))
    big = Mesh1D(m.left - extra_left * h, m.right + extra_right * h, m.n_elements + extra_left + extra_right)
    c = cfg.coeffs
    ne = big.n_elements
    pad = lambda arr, lv, rv: np.concatenate([np.full(extra_left, lv), arr, np.full(extra_right, rv)])
    coeffs = Coefficients(
        c.hbar, pad(c.rho, c.left[0], c.right[0]), pad(c.B, c.left[1], c.right[1]),
        pad(c.V, c.left[2], c.right[2]), c.left, c.right,
    )
    assert len(coeffs.rho) == ne
    small = Stepper(prepare(cfg))
    big_cfg = SchemeConfig(big, cfg.n, cfg.T, cfg.M, coeffs, cfg.initial, DIRICHLET, DIRICHLET)
    u0 = np.zeros(big.n_dofs(cfg.n), dtype=complex)
    off = extra_left * cfg.n
    u0[off : off + small.psi.size] = small.psi
    large = Stepper(prepare(big_cfg), psi0=u0)
    worst = 0.0
    for _ in range(cfg.M):
        a = small.step()
        b = large.step()[off : off + a.size]
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """Record one ``PASS``/``FAIL``/``WARN`` line per acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, status: str, detail: str) -> None:
        line = f"criterion {number}: {status} | {detail}"
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
