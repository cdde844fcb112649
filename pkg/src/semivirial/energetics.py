"""Kinetic/potential energy functionals and the Kato derivative check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eigen import EigenPair
from .grid import Grid, gradient_apply, potential_on_grid
from .potentials import PotentialModel

ROUNDOFF = 1e-10


class BranchTooShortError(ValueError):
    pass


def kinetic_energy(grid: Grid, hbar: float, psi: np.ndarray) -> float:
    """``hbar^2 * sum_j ||D_j psi||^2 w`` with the summation-by-parts gradient."""
    return float(hbar * hbar * grid.weight * sum(np.sum(g * g) for g in gradient_apply(grid, psi)))


def potential_energy(grid: Grid, v: PotentialModel, psi: np.ndarray,
                     vgrid: np.ndarray | None = None) -> float:
    psi = grid.check(psi)
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    return float(grid.weight * np.sum(vgrid * psi * psi))


@dataclass(frozen=True)
class EnergyBalance:
    K: float
    U: float
    lam: float
    residual: float

    @property
    def closure(self) -> float:
        return self.K + self.U - self.lam

    @property
    def k_ratio(self) -> float:
        return self.K / self.lam

    @property
    def u_ratio(self) -> float:
        return self.U / self.lam

    def closure_ok(self) -> bool:
        return abs(self.closure) <= 10.0 * self.residual + ROUNDOFF * max(1.0, abs(self.lam))


def energy_balance(grid: Grid, v: PotentialModel, hbar: float, pair: EigenPair,
                   vgrid: np.ndarray | None = None) -> EnergyBalance:
    K = kinetic_energy(grid, hbar, pair.psi)
    U = potential_energy(grid, v, pair.psi, vgrid)
    return EnergyBalance(K, U, pair.lam, pair.residual)


def homogeneous_ratios(alpha: float) -> tuple[float, float]:
    """Exact ``(K/lam, U/lam)`` for a degree-``alpha`` homogeneous potential."""
    return alpha / (alpha + 2.0), 2.0 / (alpha + 2.0)


@dataclass(frozen=True)
class KatoRow:
    hbar: float
    lhs: float
    rhs: float
    gap: float
    one_sided: bool = False
    kinetic_vanishing: bool = False


def kato_derivative_check(branch: Sequence[tuple[float, EigenPair]],
                          include_endpoints: bool = False) -> list[KatoRow]:
    """Compare ``d lam / d hbar`` with ``2 K / hbar`` along one branch.

    Interior points use central differences.  With ``include_endpoints`` the
    two ends get one-sided differences, flagged ``one_sided``.
    """
    if len(branch) < 3:
        raise BranchTooShortError(f"need at least 3 points on the branch, got {len(branch)}")
    hb = np.array([h for h, _ in branch], dtype=float)
    lam = np.array([p.lam for _, p in branch], dtype=float)
    rows = []
    idx = range(len(branch)) if include_endpoints else range(1, len(branch) - 1)
    for k in idx:
        if k == 0:
            lhs, one = (lam[1] - lam[0]) / (hb[1] - hb[0]), True
        elif k == len(branch) - 1:
            lhs, one = (lam[k] - lam[k - 1]) / (hb[k] - hb[k - 1]), True
        else:
            lhs, one = (lam[k + 1] - lam[k - 1]) / (hb[k + 1] - hb[k - 1]), False
        hbar, pair = branch[k]
        rhs = 2.0 * kinetic_energy(pair.grid, hbar, pair.psi) / hbar
        vanishing = rhs <= 1e-12 * max(1.0, abs(pair.lam) / hbar)
        gap = abs(lhs - rhs) / abs(rhs) if not vanishing else abs(lhs - rhs)
        rows.append(KatoRow(hbar, float(lhs), float(rhs), float(gap), one, vanishing))
    return rows
