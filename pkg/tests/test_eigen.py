import numpy as np
import pytest

from semivirial import eigen
from semivirial.eigen import (
    CompletenessWarning,
    EigenSolverError,
    WindowQuery,
    count_below,
    load_pairs,
    orthogonality_defect,
    solve_lowest,
    solve_nearest,
    solve_window,
    track_branch,
)
from semivirial.grid import Grid, build_grid, hamiltonian_matrix, inner
from semivirial.potentials import make_double_well, make_power_well, make_separable_power


def test_harmonic_window_spectrum(harmonic):
    hbar = 0.1
    g = build_grid(harmonic, 1.0, 0.6, hbar)
    sol = solve_window(g, harmonic, hbar, WindowQuery(0.4, 1.6))
    exact = (2 * np.arange(2, 8) + 1) * hbar
    np.testing.assert_allclose(sol.eigenvalues, exact, rtol=1e-5)
    assert sol.status == "ok" and sol.certified
    assert all(p.residual < 1e-8 for p in sol)


def test_pairs_are_normalized_orthogonal_and_signed(harmonic):
    g = build_grid(harmonic, 1.0, 0.6, 0.1)
    sol = solve_window(g, harmonic, 0.1, WindowQuery(0.4, 1.6))
    for p in sol:
        assert inner(g, p.psi, p.psi) == pytest.approx(1.0, abs=1e-12)
        flat = p.psi.ravel()
        assert flat[np.argmax(np.abs(flat))] > 0
    assert orthogonality_defect(sol) < 1e-10


def test_methods_agree_on_small_problem(harmonic):
    # small grid: folding squares the condition number
    g = Grid.box([-4.0], [4.0], 150)
    q = WindowQuery(0.5, 2.0)
    ref = solve_window(g, harmonic, 0.3, q, method="tridiagonal").eigenvalues
    for method in ("shift-invert", "fold"):
        np.testing.assert_allclose(solve_window(g, harmonic, 0.3, q, method=method).eigenvalues,
                                   ref, rtol=1e-10)


def test_empty_window(harmonic):
    g = build_grid(harmonic, 1.0, 0.2, 0.5)
    sol = solve_window(g, harmonic, 0.5, WindowQuery.around(1.0, 0.2))
    assert sol.status == "empty" and len(sol) == 0


def test_unreachable_tolerance_raises(harmonic):
    g = Grid.box([-4.0], [4.0], 200)
    with pytest.raises(EigenSolverError) as info:
        solve_window(g, harmonic, 0.3, WindowQuery(0.2, 1.0, tol=1e-30))
    assert info.value.best_residual > 0


def test_count_mismatch_marks_uncertified(harmonic, monkeypatch):
    g = Grid.box([-4.0], [4.0], 200)
    monkeypatch.setattr(eigen, "window_count", lambda *a, **k: 3)
    with pytest.warns(CompletenessWarning):
        sol = solve_window(g, harmonic, 0.3, WindowQuery(0.2, 1.0))
    assert sol.status == "uncertified" and not sol.certified


def test_truncation_keeps_pairs_nearest_center(harmonic):
    g = build_grid(harmonic, 1.0, 0.6, 0.05)
    sol = solve_window(g, harmonic, 0.05, WindowQuery(0.4, 1.6, max_pairs=4))
    assert len(sol) == 4 and sol.meta["truncated"]
    np.testing.assert_allclose(sol.eigenvalues, [0.85, 0.95, 1.05, 1.15], rtol=1e-5)


def test_2d_inertia_matches_dense_count():
    v = make_separable_power(2.0, 2.0)
    g = Grid.box([-3, -3], [3, 3], [24, 24])
    w = np.linalg.eigvalsh(hamiltonian_matrix(g, v, 0.4).toarray())
    for shift in (0.5, 1.3, 2.9):
        assert count_below(g, v, 0.4, shift) == int(np.sum(w < shift))


def test_solve_lowest_and_nearest(double_well):
    g = build_grid(double_well, 0.5, 0.2, 0.1)
    low = solve_lowest(g, double_well, 0.1, 3)
    assert len(low) == 3 and low[0].lam < low[1].lam < low[2].lam
    near = solve_nearest(g, double_well, 0.1, low[2].lam - 1e-4)
    assert near.lam == pytest.approx(low[2].lam)


def test_solve_count_counter(harmonic):
    g = Grid.box([-4.0], [4.0], 100)
    before = eigen.SOLVE_COUNT
    solve_window(g, harmonic, 0.3, WindowQuery(0.2, 1.0))
    assert eigen.SOLVE_COUNT == before + 1


def test_branch_tracking_across_grids(harmonic):
    sweep = []
    for hbar in (0.11, 0.1, 0.09):
        g = build_grid(harmonic, 0.5, 0.2, hbar)
        sweep.append((hbar, solve_lowest(g, harmonic, hbar, 3).pairs))
    tr = track_branch(sweep)
    assert tr.labels == [[0, 1, 2]] * 3
    assert not tr.ambiguous and tr.min_overlap > 0.9


def test_pair_serialization_round_trip(tmp_path, harmonic):
    g = Grid.box([-4.0], [4.0], 120)
    sol = solve_window(g, harmonic, 0.3, WindowQuery(0.2, 1.0), seed=7)
    g2, pairs = load_pairs(eigen.save_pairs(tmp_path / "p.npz", sol.pairs))
    assert g2 == g
    for a, b in zip(sol, pairs):
        assert a.lam == b.lam and a.seed == b.seed == 7
        np.testing.assert_array_equal(a.psi, b.psi)
