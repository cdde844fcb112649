"""Tensor-product oracle for separable power potentials ``|x1|^a1 + |x2|^a2``.

With unit-parameter 1D eigenvalues ``a_n`` of ``-D^2 + |x|^alpha`` the 2D
eigenvalues at Planck parameter ``hbar`` are sums ``hbar^g1 a_n1 + hbar^g2 a_n2``
with ``g = 2 alpha / (alpha + 2)``, and the potential energy of the product
state is ``b1 hbar^g1 a_n1 + b2 hbar^g2 a_n2`` with ``b = 2 / (alpha + 2)``.
Choosing the quantum numbers so that each term tends to a prescribed ``mu_j``
makes ``U`` converge to any value between ``2 lam / (a1 + 2)`` and
``2 lam / (a2 + 2)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad

from .eigen import WindowQuery, solve_window
from .grid import BudgetExceededError, Grid, ResolutionPolicy, build_grid, hamiltonian_tridiagonal
from .potentials import make_power_well, make_separable_power

log = logging.getLogger(__name__)

WEYL_TOLERANCE = 0.05


class FitDisagreementError(RuntimeError):
    pass


class HbarTooLargeError(ValueError):
    pass


class SpectrumRangeError(IndexError):
    pass


class InvalidTargetError(ValueError):
    pass


class UnmatchedEigenvalueError(RuntimeError):
    def __init__(self, message: str, unmatched: list[float], worst_gap: float):
        super().__init__(message)
        self.unmatched = unmatched
        self.worst_gap = worst_gap


@dataclass(frozen=True)
class SeparableScaling:
    alpha: float
    weyl: float

    @property
    def gamma(self) -> float:
        return 2.0 * self.alpha / (self.alpha + 2.0)

    @property
    def beta(self) -> float:
        return 2.0 / (self.alpha + 2.0)


@dataclass
class OneDimSpectrum:
    """First ``n_max`` eigenvalues ``a_1 < a_2 < ...`` at unit Planck parameter.

    ``values`` are Richardson-extrapolated from the two finest grids of a
    halving sequence; ``errors`` is the per-level change of the extrapolated
    value against the previous pair of grids.
    """

    alpha: float
    values: np.ndarray
    errors: np.ndarray
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if self.values.size and (self.values[0] <= 0 or np.any(np.diff(self.values) <= 0)):
            raise ValueError("spectrum must be positive and strictly increasing")

    @property
    def n_max(self) -> int:
        return int(self.values.size)

    def a(self, n: int) -> float:
        """``a_n`` with the 1-based index used by the quantum numbers."""
        if not 1 <= n <= self.n_max:
            raise SpectrumRangeError(f"level {n} outside the computed range 1..{self.n_max}")
        return float(self.values[n - 1])


# --- 1D reference spectra ---------------------------------------------------


def bohr_sommerfeld_constant(alpha: float) -> float:
    """``c_BS = [pi / (2 int_0^1 sqrt(1 - t^alpha) dt)]^(2 alpha / (alpha + 2))``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if math.isinf(alpha):
        return math.pi**2 / 4.0
    integral, _ = quad(lambda t: math.sqrt(max(0.0, 1.0 - t**alpha)), 0.0, 1.0, limit=200)
    return (math.pi / (2.0 * integral)) ** (2.0 * alpha / (alpha + 2.0))


def _lowest_eigenvalues(grid: Grid, alpha: float, n: int) -> np.ndarray:
    d, e = hamiltonian_tridiagonal(grid, make_power_well(1, alpha), 1.0)
    return sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, n - 1))


def _richardson(grids: Sequence[Grid], levels: Sequence[np.ndarray]) -> np.ndarray:
    # second-order error; the refined grid has (almost exactly) half the spacing
    ratio = (grids[0].h[0] / grids[1].h[0]) ** 2
    return levels[1] + (levels[1] - levels[0]) / (ratio - 1.0)


def _cache_path(cache_dir: Path, alpha: float, grid: Grid, n_max: int, accuracy: float) -> Path:
    key = json.dumps({"alpha": alpha, "grid": grid.header(), "n_max": n_max,
                      "accuracy": accuracy}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    return cache_dir / f"spectrum_a{alpha:g}_n{n_max}_{digest}.npz"


def default_cache_dir() -> Path | None:
    env = os.environ.get("SEMIVIRIAL_CACHE")
    if env == "":
        return None
    return Path(env) if env else Path.home() / ".cache" / "semivirial"


def solve_1d_power(alpha: float, n_max: int, accuracy: float = 1e-8,
                   max_points: int = 400_000, cache_dir: Path | str | None = None) -> OneDimSpectrum:
    """Lowest ``n_max`` eigenvalues of ``-D^2 + |x|^alpha``.

    The box is built for the estimated ``a_{n_max}`` with the usual margin
    and decay extension.  The grid is halved until successive Richardson
    extrapolations of every level agree to ``accuracy`` (relative to
    ``max(1, a_n)``).
    Spectra are cached on disk under ``cache_dir`` when one is given.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    c = bohr_sommerfeld_constant(alpha)
    top = 1.2 * c * n_max ** (2.0 * alpha / (alpha + 2.0)) + 1.0
    grid = build_grid(make_power_well(1, alpha), top, 0.0, 1.0,
                      ResolutionPolicy(points_per_wavelength=16, max_points=max_points))
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir)
        path = _cache_path(cache, alpha, grid, n_max, accuracy)
        if path.exists():
            with np.load(path) as data:
                return OneDimSpectrum(alpha, data["values"], data["errors"],
                                      json.loads(str(data["grid"])))
    grids = [grid, grid.refined()]
    levels = [_lowest_eigenvalues(g, alpha, n_max) for g in grids]
    previous = _richardson(grids, levels)
    while True:
        fine_grid = grids[-1].refined()
        if fine_grid.size > max_points:
            raise BudgetExceededError(fine_grid.size, max_points)
        grids = [grids[-1], fine_grid]
        levels = [levels[-1], _lowest_eigenvalues(fine_grid, alpha, n_max)]
        extrap = _richardson(grids, levels)
        err = np.abs(extrap - previous)
        if np.all(err <= accuracy * np.maximum(1.0, extrap)):
            break
        previous = extrap
    meta = {"coarse": grids[0].header(), "fine": fine_grid.header(), "accuracy": accuracy}
    spectrum = OneDimSpectrum(alpha, extrap, err, meta)
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        np.savez(path, values=spectrum.values, errors=spectrum.errors, grid=json.dumps(meta))
    return spectrum


def weyl_constant(alpha: float, spectrum: OneDimSpectrum,
                  tolerance: float = WEYL_TOLERANCE) -> float:
    """``c`` in ``a_n ~ c n^gamma`` from a pinned-slope fit on the top half of the levels.

    The fit is cross-checked against the Bohr-Sommerfeld closed form and a
    relative disagreement above ``tolerance`` raises :class:`FitDisagreementError`.
    """
    if spectrum.n_max < 50:
        raise ValueError(f"need at least 50 levels for the fit, got {spectrum.n_max}")
    gamma = 2.0 * alpha / (alpha + 2.0)
    n = np.arange(1, spectrum.n_max + 1, dtype=float)
    top = slice(spectrum.n_max // 2, None)
    fit = float(np.exp(np.mean(np.log(spectrum.values[top]) - gamma * np.log(n[top]))))
    c_bs = bohr_sommerfeld_constant(alpha)
    if abs(fit - c_bs) / c_bs > tolerance:
        raise FitDisagreementError(f"alpha={alpha}: fitted c={fit:.5g}, Bohr-Sommerfeld {c_bs:.5g}")
    return fit


def scaling_for(alpha: float, spectrum: OneDimSpectrum | None = None) -> SeparableScaling:
    c = weyl_constant(alpha, spectrum) if spectrum is not None else bohr_sommerfeld_constant(alpha)
    return SeparableScaling(alpha, c)


# --- tensor oracle ---------------------------------------------------------


def select_quantum_numbers(mu1: float, mu2: float, hbar: float,
                           scalings: Sequence[SeparableScaling]) -> tuple[int, int]:
    """``n_j = floor((mu_j / c_j)^(1/gamma_j) / hbar)``."""
    out = []
    for mu, s in zip((mu1, mu2), scalings):
        if mu <= 0:
            raise ValueError("mu_j must be positive")
        n = int(math.floor((mu / s.weyl) ** (1.0 / s.gamma) / hbar))
        if n < 1:
            raise HbarTooLargeError(f"hbar={hbar} gives n=0 for mu={mu}, alpha={s.alpha}")
        out.append(n)
    return out[0], out[1]


@dataclass(frozen=True)
class TensorEnergies:
    lam: float
    U: float
    K: float


def tensor_energies(hbar: float, n1: int, n2: int, spectra: Sequence[OneDimSpectrum],
                    scalings: Sequence[SeparableScaling]) -> TensorEnergies:
    terms = [hbar**s.gamma * sp.a(n) for n, sp, s in zip((n1, n2), spectra, scalings)]
    lam = terms[0] + terms[1]
    U = scalings[0].beta * terms[0] + scalings[1].beta * terms[1]
    return TensorEnergies(lam, U, lam - U)


def potential_energy_interval(lam: float, alpha1: float, alpha2: float) -> tuple[float, float]:
    """Open interval of reachable limits of ``U``, endpoints as ``(min, max)``."""
    a, b = 2.0 * lam / (alpha1 + 2.0), 2.0 * lam / (alpha2 + 2.0)
    return min(a, b), max(a, b)


def split_energy(lam: float, u: float, alpha1: float, alpha2: float) -> tuple[float, float]:
    """``(mu1, mu2)`` with ``mu1 + mu2 = lam`` and ``b1 mu1 + b2 mu2 = u``."""
    if alpha1 == alpha2:
        raise InvalidTargetError(f"alpha1 = alpha2 forces U/lam = {2 / (alpha1 + 2):g}; "
                                 "the interval of limits is empty")
    lo, hi = potential_energy_interval(lam, alpha1, alpha2)
    if not lo < u < hi:
        raise InvalidTargetError(f"u={u} is not inside the open interval ({lo:g}, {hi:g})")
    A = np.array([[1.0, 1.0], [2.0 / (alpha1 + 2.0), 2.0 / (alpha2 + 2.0)]])
    mu = np.linalg.solve(A, [lam, u])
    return float(mu[0]), float(mu[1])


@dataclass(frozen=True)
class BalanceRow:
    hbar: float
    n1: int
    n2: int
    lam: float
    U: float
    K: float
    gap_lambda: float
    gap_U: float


BALANCE_COLUMNS = ("hbar", "n1", "n2", "lambda", "U", "K", "gap_lambda", "gap_U")


def balance_demo(lam_target: float, u_target: float, alpha1: float, alpha2: float,
                 hbars: Sequence[float], accuracy: float = 1e-8,
                 cache_dir: Path | str | None = None) -> list[BalanceRow]:
    """Rows ``(hbar, n1, n2, lam_hbar, U, K, |lam_hbar - lam|, |U - u|)``."""
    mu = split_energy(lam_target, u_target, alpha1, alpha2)
    base = [SeparableScaling(a, bohr_sommerfeld_constant(a)) for a in (alpha1, alpha2)]
    # every level we could need, plus headroom, from the closed-form constant
    need = [select_quantum_numbers(*mu, min(hbars), base)[j] + 2 for j in range(2)]
    spectra = [solve_1d_power(a, max(n, 50), accuracy, cache_dir=cache_dir)
               for a, n in zip((alpha1, alpha2), need)]
    scalings = [scaling_for(a, sp) for a, sp in zip((alpha1, alpha2), spectra)]
    rows = []
    for hbar in hbars:
        n1, n2 = select_quantum_numbers(mu[0], mu[1], hbar, scalings)
        e = tensor_energies(hbar, n1, n2, spectra, scalings)
        rows.append(BalanceRow(hbar, n1, n2, e.lam, e.U, e.K,
                               abs(e.lam - lam_target), abs(e.U - u_target)))
    return rows


def write_balance_csv(path, rows: Sequence[BalanceRow]) -> Path:
    path = Path(path)
    lines = [",".join(BALANCE_COLUMNS)]
    for r in rows:
        lines.append(f"{r.hbar!r},{r.n1},{r.n2},{r.lam!r},{r.U!r},{r.K!r},{r.gap_lambda!r},{r.gap_U!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


# --- 2D cross-validation --------------------------------------------------


def tensor_sums(hbar: float, spectra: Sequence[OneDimSpectrum],
                scalings: Sequence[SeparableScaling], upper: float) -> list[tuple[float, int, int]]:
    """All ``(lam, n1, n2)`` with ``lam <= upper`` reachable from the given spectra."""
    e1 = [hbar ** scalings[0].gamma * a for a in spectra[0].values]
    e2 = [hbar ** scalings[1].gamma * a for a in spectra[1].values]
    out = [(x + y, i + 1, j + 1) for i, x in enumerate(e1) if x <= upper
           for j, y in enumerate(e2) if x + y <= upper]
    return sorted(out)


@dataclass
class CrossValidation:
    hbar: float
    window: tuple[float, float]
    eigenvalues: list[float]
    matches: list[tuple[float, int, int]]
    gaps: list[float]
    worst_gap: float
    grid: dict


def cross_validate_2d(hbar: float, window: tuple[float, float], alpha1: float = 2.0,
                      alpha2: float = 2.0, tolerance: float = 1e-3,
                      policy: ResolutionPolicy | None = None, seed: int = 0,
                      oracle_alphas: tuple[float, float] | None = None,
                      cache_dir: Path | str | None = None) -> CrossValidation:
    """Solve the 2D separable problem on a grid and match its window spectrum
    against tensor sums of converged 1D spectra.

    ``oracle_alphas`` lets the oracle use different exponents than the grid
    problem (a deliberately wrong oracle must fail to match).
    """
    lo, hi = window
    v = make_separable_power(alpha1, alpha2)
    lam0, eps0 = 0.5 * (lo + hi), hi - lo
    grid = build_grid(v, lam0, 0.5 * eps0, hbar, policy)
    sol = solve_window(grid, v, hbar, WindowQuery(lo, hi, max_pairs=256), seed=seed)
    oa = oracle_alphas or (alpha1, alpha2)
    spectra, scalings = [], []
    for a in oa:
        s = SeparableScaling(a, bohr_sommerfeld_constant(a))
        n = max(2, int(math.ceil((1.5 * hi / s.weyl) ** (1.0 / s.gamma) / hbar)) + 2)
        spectra.append(solve_1d_power(a, n, cache_dir=cache_dir))
        scalings.append(s)
    sums = tensor_sums(hbar, spectra, scalings, hi + 10 * tolerance + 1.0)
    if not sums:
        raise UnmatchedEigenvalueError("oracle produced no tensor sums", list(sol.eigenvalues), math.inf)
    values = np.array([s[0] for s in sums])
    matches, gaps, unmatched = [], [], []
    for lam in sol.eigenvalues:
        k = int(np.argmin(np.abs(values - lam)))
        gap = float(abs(values[k] - lam))
        matches.append(sums[k])
        gaps.append(gap)
        if gap > tolerance:
            unmatched.append(float(lam))
    worst = max(gaps, default=0.0)
    if unmatched:
        raise UnmatchedEigenvalueError(
            f"{len(unmatched)} eigenvalues in {window} have no tensor sum within {tolerance:g}",
            unmatched, worst)
    return CrossValidation(hbar, (lo, hi), [float(x) for x in sol.eigenvalues], matches,
                           gaps, worst, grid.header())
