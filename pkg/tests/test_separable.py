import math

import numpy as np
import pytest

from semivirial.separable import (
    FitDisagreementError,
    HbarTooLargeError,
    InvalidTargetError,
    OneDimSpectrum,
    SeparableScaling,
    SpectrumRangeError,
    UnmatchedEigenvalueError,
    balance_demo,
    bohr_sommerfeld_constant,
    cross_validate_2d,
    potential_energy_interval,
    select_quantum_numbers,
    solve_1d_power,
    split_energy,
    tensor_energies,
    weyl_constant,
    write_balance_csv,
)

# Ground state of -D^2 + x^4, frozen from our own refinement study
# (Richardson sequence converged to 1e-10; see the decisions ledger).
QUARTIC_GROUND = 1.0603620904


@pytest.fixture(scope="module")
def harmonic_spectrum():
    return solve_1d_power(2.0, 60)


def test_harmonic_spectrum(harmonic_spectrum):
    np.testing.assert_allclose(harmonic_spectrum.values, 2 * np.arange(1, 61) - 1, rtol=1e-7)
    assert np.all(harmonic_spectrum.errors < 1e-6)


def test_harmonic_ground_state_to_1e8():
    assert solve_1d_power(2.0, 1, accuracy=1e-10).values[0] == pytest.approx(1.0, abs=1e-8)


def test_quartic_ground_state():
    assert solve_1d_power(4.0, 1, accuracy=1e-10).values[0] == pytest.approx(QUARTIC_GROUND, abs=1e-8)


def test_spectrum_cache(tmp_path):
    a = solve_1d_power(3.0, 5, cache_dir=tmp_path)
    assert list(tmp_path.glob("*.npz"))
    b = solve_1d_power(3.0, 5, cache_dir=tmp_path)
    np.testing.assert_array_equal(a.values, b.values)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        OneDimSpectrum(2.0, [1.0, 1.0], [0, 0])
    with pytest.raises(ValueError):
        solve_1d_power(-1.0, 5)
    with pytest.raises(SpectrumRangeError):
        OneDimSpectrum(2.0, [1.0, 3.0], [0, 0]).a(3)


def test_bohr_sommerfeld_constants():
    assert bohr_sommerfeld_constant(2.0) == pytest.approx(2.0, rel=1e-12)
    assert bohr_sommerfeld_constant(math.inf) == pytest.approx(math.pi**2 / 4)
    assert bohr_sommerfeld_constant(400.0) == pytest.approx(math.pi**2 / 4, rel=0.02)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 3.0, 4.0])
def test_weyl_dual_method_agreement(alpha):
    spectrum = solve_1d_power(alpha, 60, accuracy=1e-6)
    c = weyl_constant(alpha, spectrum)
    assert abs(c - bohr_sommerfeld_constant(alpha)) / bohr_sommerfeld_constant(alpha) <= 0.05


def test_weyl_fit_disagreement(harmonic_spectrum):
    with pytest.raises(FitDisagreementError):
        weyl_constant(3.0, harmonic_spectrum)
    with pytest.raises(ValueError):
        weyl_constant(2.0, OneDimSpectrum(2.0, [1.0, 3.0], [0, 0]))


def test_scaling_identities():
    for alpha in (0.5, 1.0, 2.0, 7.0):
        s = SeparableScaling(alpha, 1.0)
        assert s.gamma == pytest.approx(alpha * s.beta, rel=1e-15)
        assert 0 < s.beta < 1


def test_select_quantum_numbers():
    s = SeparableScaling(2.0, 2.0)
    assert select_quantum_numbers(1.0, 1.0, 0.01, [s, s]) == (50, 50)
    assert select_quantum_numbers(1.0, 1.0, 0.005, [s, s]) == (100, 100)
    q = SeparableScaling(4.0, 2.2)
    n1 = select_quantum_numbers(0.6, 0.6, 0.001, [q, q])[0]
    n2 = select_quantum_numbers(0.6 * 2**q.gamma, 0.6, 0.001, [q, q])[0]
    assert abs(n2 - 2 * n1) <= 2
    with pytest.raises(HbarTooLargeError):
        select_quantum_numbers(1.0, 1.0, 10.0, [s, s])


def test_tensor_energies(harmonic_spectrum):
    s = SeparableScaling(2.0, 2.0)
    e = tensor_energies(0.1, 1, 1, [harmonic_spectrum] * 2, [s, s])
    assert e.lam == pytest.approx(0.2) and e.U == pytest.approx(0.1)
    assert e.lam - e.U - e.K == 0.0
    with pytest.raises(SpectrumRangeError):
        tensor_energies(0.1, 61, 1, [harmonic_spectrum] * 2, [s, s])


def test_split_energy_and_interval():
    mu = split_energy(1.0, 0.4, 4.0, 2.0)
    assert mu == pytest.approx((0.6, 0.4))
    assert potential_energy_interval(1.0, 4.0, 2.0) == pytest.approx((1 / 3, 0.5))
    assert potential_energy_interval(1.0, 2.0, 4.0) == pytest.approx((1 / 3, 0.5))
    with pytest.raises(InvalidTargetError):
        split_energy(1.0, 0.5, 4.0, 2.0)
    with pytest.raises(InvalidTargetError):
        split_energy(1.0, 0.4, 2.0, 2.0)


def test_balance_demo_and_csv(tmp_path):
    rows = balance_demo(1.0, 0.45, 4.0, 2.0, [0.1, 0.05, 0.02, 0.01])
    gaps = [r.gap_U for r in rows]
    assert gaps[-1] < gaps[0]
    for r in rows:
        assert r.lam == pytest.approx(r.U + r.K)
    text = write_balance_csv(tmp_path / "b.csv", rows).read_text().splitlines()
    assert text[0] == "hbar,n1,n2,lambda,U,K,gap_lambda,gap_U" and len(text) == 5


def test_cross_validation_large_hbar_exact_set():
    res = cross_validate_2d(0.5, (0.5, 2.2))
    # eigenvalues 0.5 (2n1 + 2n2 - 2) with n1 + n2 <= 3 : 1.0 once, 2.0 twice
    assert len(res.eigenvalues) == 3
    assert sorted((m[1], m[2]) for m in res.matches)[:1] == [(1, 1)]
    assert res.worst_gap < 1e-3


def test_cross_validation_wrong_oracle_is_reported():
    with pytest.raises(UnmatchedEigenvalueError) as info:
        cross_validate_2d(0.5, (0.5, 2.2), oracle_alphas=(4.0, 2.0))
    assert info.value.unmatched
