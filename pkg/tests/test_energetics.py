import numpy as np
import pytest

from semivirial.eigen import EigenPair, WindowQuery, solve_lowest, solve_window
from semivirial.energetics import (
    BranchTooShortError,
    energy_balance,
    homogeneous_ratios,
    kato_derivative_check,
    kinetic_energy,
    potential_energy,
)
from semivirial.grid import Grid, build_grid, inner, laplacian_apply
from semivirial.potentials import make_power_well, make_user_potential


def test_kinetic_energy_is_the_laplacian_quadratic_form(rng):
    g = Grid.box([-1, -2], [1, 1], [15, 18])
    psi = rng.standard_normal(g.shape)
    assert kinetic_energy(g, 0.3, psi) == pytest.approx(-0.09 * inner(g, laplacian_apply(g, psi), psi),
                                                        rel=1e-12)


def test_kinetic_energy_scales_with_hbar_squared(rng):
    g = Grid.box([0.0], [1.0], 40)
    psi = rng.standard_normal(g.shape)
    assert kinetic_energy(g, 0.4, psi) == pytest.approx(4 * kinetic_energy(g, 0.2, psi), rel=1e-14)


def test_free_box_ground_state():
    m = 50
    g = Grid.box([0.0], [1.0], m)
    x = g.axes[0]
    psi = np.sin(np.pi * x)
    psi /= np.sqrt(inner(g, psi, psi))
    h = g.h[0]
    stencil = 4.0 / h**2 * np.sin(np.pi * h / 2) ** 2
    assert kinetic_energy(g, 0.5, psi) == pytest.approx(0.25 * stencil, rel=1e-12)


def test_potential_energy_zero_where_v_vanishes():
    v = make_user_potential(1, lambda p: np.where(np.abs(p[:, 0]) < 0.5, 0.0, 1.0))
    g = Grid.box([-1.0], [1.0], 99)
    psi = np.where(np.abs(g.axes[0]) < 0.4, 1.0, 0.0)
    assert potential_energy(g, v, psi) == 0.0


@pytest.mark.parametrize("alpha", [2.0, 4.0])
def test_homogeneous_balance(alpha):
    v = make_power_well(1, alpha)
    hbar = 0.1
    g = build_grid(v, 1.0, 0.4, hbar)
    sol = solve_window(g, v, hbar, WindowQuery.around(1.0, 0.4))
    assert len(sol) > 0
    k_target, u_target = homogeneous_ratios(alpha)
    for p in sol:
        b = energy_balance(g, v, hbar, p)
        assert b.closure_ok()
        assert b.K >= 0 and b.U >= 0
        assert b.k_ratio == pytest.approx(k_target, abs=1e-3)
        assert b.u_ratio == pytest.approx(u_target, abs=1e-3)


def test_homogeneous_ratios_values():
    assert homogeneous_ratios(2.0) == (0.5, 0.5)
    k, u = homogeneous_ratios(4.0)
    assert k == pytest.approx(2 / 3) and u == pytest.approx(1 / 3)


def _branch(v, hbars, level=0):
    g = build_grid(v, 0.5, 0.2, min(hbars))
    return [(h, solve_lowest(g, v, h, level + 1)[level]) for h in hbars]


def test_kato_harmonic_branch():
    rows = kato_derivative_check(_branch(make_power_well(1, 2.0), [0.11, 0.10, 0.09]))
    assert len(rows) == 1
    assert rows[0].lhs == pytest.approx(1.0, rel=1e-4)
    assert rows[0].gap < 1e-4 and not rows[0].one_sided


def test_kato_quartic_branch():
    rows = kato_derivative_check(_branch(make_power_well(1, 4.0), [0.105, 0.1, 0.095]))
    assert rows[0].gap < 1e-3


def test_kato_endpoints_are_flagged():
    rows = kato_derivative_check(_branch(make_power_well(1, 2.0), [0.11, 0.10, 0.09]),
                                 include_endpoints=True)
    assert [r.one_sided for r in rows] == [True, False, True]


def test_kato_short_branch_and_constant_branch():
    v = make_power_well(1, 2.0)
    with pytest.raises(BranchTooShortError):
        kato_derivative_check(_branch(v, [0.11, 0.1]))
    g = Grid.box([0.0], [1.0], 20)
    flat = np.zeros(g.shape)
    flat[5] = 1.0
    const = [(h, EigenPair(1.0, flat * 0.0 + (1e-8 if h == 0.1 else 0.0), 0.0, h, g))
             for h in (0.11, 0.1, 0.09)]
    row = kato_derivative_check(const)[0]
    assert row.lhs == 0.0 and row.kinetic_vanishing
