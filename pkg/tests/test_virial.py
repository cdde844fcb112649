import numpy as np
import pytest

from semivirial.eigen import WindowQuery, solve_lowest, solve_window
from semivirial.grid import Grid, build_grid
from semivirial.potentials import make_double_well, make_power_well, make_separable_power
from semivirial.regions import OverlapError, decompose
from semivirial.virial import (
    REDUCTION_FACTOR,
    CutoffBump,
    VirialMultiplier,
    build_well_multiplier,
    bump_quadratic_multiplier,
    classic_virial_residual,
    constant_multiplier,
    generalized_virial_residual,
    localized_virial_defect,
    quadratic_multiplier,
    smoothstep,
    virial_energy_identity_residual,
)


def test_smoothstep_boundary_behaviour():
    s = smoothstep(6)
    assert s(0.0) == pytest.approx(0.0) and s(1.0) == pytest.approx(1.0)
    for k in range(1, 7):
        assert s.deriv(k)(0.0) == pytest.approx(0.0, abs=1e-9)
        assert s.deriv(k)(1.0) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("dim", [1, 2])
def test_bump_multiplier_derivatives(dim, rng):
    c = np.zeros(dim)
    m = bump_quadratic_multiplier(CutoffBump(tuple(c), 0.8, 1.6))
    pts = rng.uniform(-1.7, 1.7, size=(40, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        np.testing.assert_allclose(m.grad(pts)[:, j],
                                   (m.a(pts + 1e-6 * e) - m.a(pts - 1e-6 * e)) / 2e-6, atol=1e-6)
        np.testing.assert_allclose(m.hessian(pts)[:, :, j],
                                   (m.grad(pts + 1e-6 * e) - m.grad(pts - 1e-6 * e)) / 2e-6,
                                   rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("dim", [1, 2])
def test_bilaplacian_matches_finite_differences(dim, rng):
    m = bump_quadratic_multiplier(CutoffBump((0.0,) * dim, 0.8, 1.6))
    pts = rng.uniform(0.85, 1.5, size=(20, dim)) / np.sqrt(dim)

    def lap(p):
        return np.trace(m.hessian(p), axis1=1, axis2=2)

    h = 1e-4
    fd = np.zeros(len(pts))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        fd += (lap(pts + e) - 2 * lap(pts) + lap(pts - e)) / h**2
    np.testing.assert_allclose(m.bilaplacian(pts), fd, rtol=1e-4, atol=1e-4)


def test_constant_multiplier_gives_zero_identity(harmonic):
    g = Grid.box([-4.0], [4.0], 200)
    pair = solve_lowest(g, harmonic, 0.3, 1)[0]
    assert generalized_virial_residual(g, harmonic, 0.3, pair.psi, constant_multiplier(1)) == 0.0


def test_quadratic_multiplier_reduces_to_classic_form(harmonic_sweep):
    for hbar, (g, sol) in harmonic_sweep.items():
        v = make_power_well(1, 2.0)
        for p in sol:
            gen = generalized_virial_residual(g, v, hbar, p.psi, quadratic_multiplier(1))
            cls = classic_virial_residual(g, v, hbar, p.psi)
            assert abs(gen / REDUCTION_FACTOR - cls) <= 1e-12


def test_reduction_holds_for_arbitrary_fields_in_2d(rng):
    v = make_separable_power(4.0, 2.0)
    g = Grid.box([-2, -2], [2, 2], [30, 30])
    psi = rng.standard_normal(g.shape)
    psi /= np.sqrt(g.weight * np.sum(psi * psi))
    gen = generalized_virial_residual(g, v, 0.3, psi, quadratic_multiplier(2))
    cls = classic_virial_residual(g, v, 0.3, psi)
    assert gen / REDUCTION_FACTOR == pytest.approx(cls, rel=1e-12, abs=1e-12)


def test_quartic_multiplier_identity(harmonic):
    a = VirialMultiplier(
        1,
        lambda p: p[:, 0] ** 4,
        lambda p: 4 * p ** 3,
        lambda p: (12 * p[:, 0] ** 2)[:, None, None],
        lambda p: np.full(len(p), 24.0),
        bounded=False,
    )
    hbar = 0.1
    g = build_grid(harmonic, 1.0, 0.2, hbar)
    for p in solve_window(g, harmonic, hbar, WindowQuery.around(1.0, 0.2)):
        assert abs(generalized_virial_residual(g, harmonic, hbar, p.psi, a)) < 1e-4


@pytest.mark.parametrize("name,lam0,hbar", [("harmonic", 1.0, 0.1), ("double", 0.5, 0.1)])
def test_well_multiplier_residual_converges(name, lam0, hbar):
    v = make_power_well(1, 2.0) if name == "harmonic" else make_double_well()
    g = build_grid(v, lam0, 0.2, hbar)
    res = []
    for grid in (g, g.refined()):
        mult = build_well_multiplier(decompose(grid, v, lam0 + 0.2))
        sol = solve_window(grid, v, hbar, WindowQuery.around(lam0, 0.2))
        res.append(generalized_virial_residual(grid, v, hbar, sol[0].psi, mult))
    assert abs(res[0]) < 1e-3
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_well_multiplier_geometry_and_overlap():
    v = make_double_well()
    g = build_grid(v, 0.5, 0.2, 0.1)
    dec = decompose(g, v, 0.7)
    mult = build_well_multiplier(dec)
    wells = mult.params["wells"]
    assert len(wells) == 2
    half = 0.5 * abs(wells[1]["center"][0] - wells[0]["center"][0])
    for w in wells:
        assert w["r_out"] <= 0.95 * half + 1e-12
        assert w["r_out"] - w["r_in"] >= 0.25 * w["r_in"]
    # a = |x - x_n|^2 inside each well
    pts = np.array([[-1.1], [0.9]])
    np.testing.assert_allclose(mult.a(pts), [(-1.1 - wells[0]["center"][0]) ** 2,
                                             (0.9 - wells[1]["center"][0]) ** 2])
    # wells too close for non-overlapping supports
    close = make_double_well(gap=0.3, scale=40.0)
    gc = Grid.box([-1.5], [1.5], 2000)
    with pytest.raises(OverlapError):
        build_well_multiplier(decompose(gc, close, 0.3))


def test_energy_identity_and_localized_defect(harmonic_sweep):
    v = make_power_well(1, 2.0)
    for hbar, (g, sol) in harmonic_sweep.items():
        dec = decompose(g, v, 1.2)
        for p in sol:
            assert abs(virial_energy_identity_residual(g, v, hbar, p)) < 1e-5
            assert abs(localized_virial_defect(g, v, hbar, p.psi, dec)) < 0.5
