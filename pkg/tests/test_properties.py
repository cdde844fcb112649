"""Property suites: summation by parts, mask partition and nesting,
determinism, the localization inequality per pair, orthonormality."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semivirial.eigen import WindowQuery, orthogonality_defect, solve_window
from semivirial.grid import (
    Grid,
    gradient_apply,
    inner,
    laplacian_apply,
    potential_on_grid,
)
from semivirial.potentials import make_double_well, make_power_well
from semivirial.regions import allowed_mask, lemma_l1_margin

SETTINGS = settings(max_examples=40, deadline=None)

grids = st.one_of(
    st.builds(lambda a, b, m: Grid.box([-a], [b], m),
              st.floats(0.5, 5), st.floats(0.5, 5), st.integers(8, 200)),
    st.builds(lambda a, b, m, n: Grid.box([-a, -b], [a, b], [m, n]),
              st.floats(0.5, 5), st.floats(0.5, 5), st.integers(8, 40), st.integers(8, 40)),
)

potentials = st.sampled_from([
    make_power_well(1, 2.0),
    make_power_well(1, 4.0),
    make_double_well(),
])


@SETTINGS
@given(grids, st.integers(0, 2**32 - 1))
def test_summation_by_parts_exact(grid, seed):
    f = np.random.default_rng(seed).standard_normal(grid.shape)
    lhs = inner(grid, -laplacian_apply(grid, f), f)
    rhs = grid.weight * sum(float(np.sum(g * g)) for g in gradient_apply(grid, f))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@SETTINGS
@given(grids, st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_laplacian_symmetric(grid, s1, s2):
    f = np.random.default_rng(s1).standard_normal(grid.shape)
    g = np.random.default_rng(s2).standard_normal(grid.shape)
    a, b = inner(grid, laplacian_apply(grid, f), g), inner(grid, f, laplacian_apply(grid, g))
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


@SETTINGS
@given(potentials, st.floats(0.05, 2.0), st.floats(0.0, 1.0))
def test_masks_partition_and_nest(v, level, gap):
    grid = Grid.box([-4.0], [4.0], 301)
    low = allowed_mask(grid, v, level).mask
    high = allowed_mask(grid, v, level + gap).mask
    forbidden = potential_on_grid(grid, v) >= level
    assert not np.any(low & forbidden)
    assert np.all(low | forbidden)
    assert np.all(high[low])


def _solve(v, hbar, lam0=1.0, eps0=0.4, m=600, seed=0):
    grid = Grid.box([-3.0], [3.0], m)
    return grid, solve_window(grid, v, hbar, WindowQuery.around(lam0, eps0), seed=seed)


@settings(max_examples=10, deadline=None)
@given(potentials, st.floats(0.05, 0.12), st.integers(0, 1000))
def test_eigenpairs_orthonormal_and_deterministic(v, hbar, seed):
    grid, a = _solve(v, hbar, seed=seed)
    _, b = _solve(v, hbar, seed=seed)
    assert a.certified and len(a) > 0
    assert len(a) == len(b)
    for p, q in zip(a, b):
        assert p.lam == q.lam
        assert np.array_equal(p.psi, q.psi)
        assert inner(grid, p.psi, p.psi) == pytest.approx(1.0, abs=1e-12)
    assert orthogonality_defect(a) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(potentials, st.floats(0.05, 0.12), st.floats(0.05, 0.5), st.floats(0.01, 0.9))
def test_localization_inequality_per_pair(v, hbar, eps, frac):
    grid, sol = _solve(v, hbar)
    assert len(sol) > 0
    vgrid = potential_on_grid(grid, v)
    h = grid.h[0]
    for p in sol:
        delta = frac * p.lam
        lhs, rhs = lemma_l1_margin(grid, v, p.psi, p.lam, eps, delta, vgrid)
        # mask bias: one cell of the level sets times the largest v inside
        bias = 2.0 * h * float(np.max(vgrid[vgrid < p.lam + eps]))
        assert lhs <= rhs + bias
