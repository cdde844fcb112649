"""Classically allowed/forbidden regions, well constants and bound verdicts.

``F(lam) = {v < lam}`` is the allowed set and ``G(lam)`` its complement.
All sets are grid masks; constants are grid infima/suprema reported with
the spacing they were measured at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .eigen import EigenPair
from .energetics import energy_balance, homogeneous_ratios, kinetic_energy
from .grid import Grid, node_gradient_squared, potential_on_grid
from .potentials import PotentialModel


class UnboundedAllowedRegionError(RuntimeError):
    pass


class EmptyRegionError(RuntimeError):
    pass


class HypothesisFailure(RuntimeError):
    """A theorem's hypothesis is not met; a verdict, not a crash."""


class OverlapError(ValueError):
    pass


@dataclass(frozen=True)
class RegionMask:
    grid: Grid
    mask: np.ndarray
    level: float

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))


def _boundary_layer(shape: tuple[int, ...]) -> np.ndarray:
    edge = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        edge[tuple(idx)] = True
        idx[ax] = -1
        edge[tuple(idx)] = True
    return edge


def allowed_mask(grid: Grid, v: PotentialModel, level: float,
                 vgrid: np.ndarray | None = None, check_boundary: bool = True) -> RegionMask:
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    mask = vgrid < level
    if check_boundary and np.any(mask & _boundary_layer(grid.shape)):
        raise UnboundedAllowedRegionError(f"allowed set F({level}) touches the box boundary")
    return RegionMask(grid, mask, level)


@dataclass(frozen=True)
class Well:
    label: int
    mask: np.ndarray
    bbox: tuple[tuple[float, ...], tuple[float, ...]]
    center: tuple[float, ...]
    center_index: int


@dataclass(frozen=True)
class WellDecomposition:
    level: float
    grid: Grid
    labels: np.ndarray
    wells: tuple[Well, ...]

    @property
    def N(self) -> int:
        return len(self.wells)

    @property
    def centers(self) -> list[tuple[float, ...]]:
        return [w.center for w in self.wells]


def well_components(region: RegionMask, v: PotentialModel | None = None,
                    vgrid: np.ndarray | None = None) -> WellDecomposition:
    """Face-connected components of the allowed mask, each centered at its grid argmin of v."""
    grid = region.grid
    if vgrid is None:
        if v is None:
            raise ValueError("need v or vgrid to place well centers")
        vgrid = potential_on_grid(grid, v)
    labels, n = ndimage.label(region.mask)
    pts = grid.points
    flat_v = vgrid.ravel()
    wells = []
    for lab in range(1, n + 1):
        comp = labels == lab
        idx = np.flatnonzero(comp)
        # argmin picks the first minimum in row-major order, i.e. the
        # lexicographically smallest point among ties.
        ci = int(idx[np.argmin(flat_v[idx])])
        cp = pts[idx]
        wells.append(Well(lab, comp, (tuple(cp.min(axis=0)), tuple(cp.max(axis=0))),
                          tuple(pts[ci]), ci))
    return WellDecomposition(region.level, grid, labels, tuple(wells))


def decompose(grid: Grid, v: PotentialModel, level: float,
              vgrid: np.ndarray | None = None) -> WellDecomposition:
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    return well_components(allowed_mask(grid, v, level, vgrid), vgrid=vgrid)


# --- hypotheses of the kinetic lower bound --------------------------------


@dataclass
class StabilityReport:
    passed: bool
    counts: dict[float, int]
    min_grad: float
    threshold: float
    witnesses: list[str] = field(default_factory=list)


def stability_check(v: PotentialModel, lam0: float, eps0: float, grid: Grid,
                    grad_threshold: float | None = None) -> StabilityReport:
    """Constant well count over ``[lam0 - eps0, lam0 + eps0]`` and a non-critical shell."""
    vgrid = potential_on_grid(grid, v)
    levels = [lam0 - eps0, lam0 - 0.5 * eps0, lam0, lam0 + 0.5 * eps0, lam0 + eps0]
    witnesses = []
    counts = {}
    for lev in levels:
        try:
            counts[lev] = decompose(grid, v, lev, vgrid).N if lev > 0 else 0
        except UnboundedAllowedRegionError as exc:
            counts[lev] = -1
            witnesses.append(str(exc))
    if len(set(counts.values())) != 1 or 0 in counts.values():
        witnesses.append(f"well count varies over the band: {counts}")
    shell = (vgrid >= lam0 - eps0) & (vgrid <= lam0 + eps0)
    if not shell.any():
        witnesses.append("no grid point in the shell")
        min_grad = math.nan
        threshold = math.nan
    else:
        grad = np.linalg.norm(v.gradient(grid.points[shell.ravel()]), axis=1)
        i = int(np.argmin(grad))
        min_grad = float(grad[i])
        threshold = grad_threshold if grad_threshold is not None else 1e-6 * float(vgrid[shell].max())
        if not min_grad > threshold:
            witnesses.append(f"|grad v| = {min_grad:.3e} at {grid.points[shell.ravel()][i]} "
                             f"is below {threshold:.3e}: critical point in the shell")
    return StabilityReport(not witnesses, counts, min_grad, threshold, witnesses)


def _shell_and_core(grid, v, lam0, eps0, decomposition, vgrid):
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    if decomposition is None:
        decomposition = decompose(grid, v, lam0 + eps0, vgrid)
    core = vgrid < lam0 - eps0
    for w in decomposition.wells:
        if not core.ravel()[w.center_index]:
            raise HypothesisFailure(f"center {w.center} of well {w.label} is not in F(lam0 - eps0)")
    return vgrid, decomposition, core


def shell_constant_c0(grid: Grid, v: PotentialModel, lam0: float, eps0: float,
                      decomposition: WellDecomposition | None = None,
                      vgrid: np.ndarray | None = None) -> float:
    """``min_n inf <x - x_n, grad v>`` over ``F_n(lam0 + eps0) ∩ G(lam0 - eps0)``."""
    vgrid, dec, core = _shell_and_core(grid, v, lam0, eps0, decomposition, vgrid)
    best = math.inf
    for w in dec.wells:
        shell = w.mask & ~core
        if not shell.any():
            continue
        pts = grid.points[shell.ravel()]
        best = min(best, float(np.min(v.radial_derivative(pts, w.center))))
    if best == math.inf:
        raise EmptyRegionError("no grid point in the shell F(lam0+eps0) \\ F(lam0-eps0); refine the grid")
    return best + 0.0  # no negative zero


def interior_constant_c1(grid: Grid, v: PotentialModel, lam0: float, eps0: float,
                         decomposition: WellDecomposition | None = None,
                         vgrid: np.ndarray | None = None) -> float:
    """``max_n sup -<x - x_n, grad v>`` over ``F_n(lam0 - eps0)``."""
    vgrid, dec, core = _shell_and_core(grid, v, lam0, eps0, decomposition, vgrid)
    best = -math.inf
    for w in dec.wells:
        inside = w.mask & core
        if not inside.any():
            continue
        pts = grid.points[inside.ravel()]
        best = max(best, float(np.max(-v.radial_derivative(pts, w.center))))
    if best == -math.inf:
        raise EmptyRegionError("F(lam0 - eps0) contains no grid point")
    return best + 0.0  # no negative zero


@dataclass(frozen=True)
class BoundConstants:
    lam0: float
    eps0: float
    c0: float
    c1: float
    c_pred: float
    supremum: float
    eps0_clamped: bool = False
    h: float = math.nan

    @property
    def c2(self) -> float:
        return self.c0 + self.c1

    @property
    def c2_short_circuit(self) -> bool:
        """``c2 <= 0``: the potential-energy bound follows without the final max-min step."""
        return self.c2 <= 0


def predicted_bound(eps0: float, c0: float, c1: float, lam0: float = math.nan,
                    h: float = math.nan, safety: float = 0.9) -> BoundConstants:
    """``c_pred = safety * eps0 c0 / (2 (1 + c0 + c1))`` with ``eps0`` clamped to 1."""
    if not c0 > 0:
        raise HypothesisFailure(f"shell constant c0 = {c0} is not positive")
    clamped = eps0 > 1
    e = min(eps0, 1.0)
    sup = 0.5 * e * c0 / (1.0 + c0 + c1)
    return BoundConstants(lam0, eps0, c0, c1, safety * sup, sup, clamped, h)


def bound_constants(grid: Grid, v: PotentialModel, lam0: float, eps0: float) -> BoundConstants:
    vgrid = potential_on_grid(grid, v)
    dec = decompose(grid, v, lam0 + eps0, vgrid)
    c0 = shell_constant_c0(grid, v, lam0, eps0, dec, vgrid)
    c1 = interior_constant_c1(grid, v, lam0, eps0, dec, vgrid)
    return predicted_bound(eps0, c0, c1, lam0, max(grid.h))


# --- localization ----------------------------------------------------------


def forbidden_mass(grid: Grid, hbar: float, psi: np.ndarray, v: PotentialModel,
                   lam: float, eps: float, vgrid: np.ndarray | None = None) -> float:
    """``∫_{G(lam+eps)} (hbar^2 |grad psi|^2 + psi^2)``."""
    psi = grid.check(psi)
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    g = vgrid >= lam + eps
    dens = hbar * hbar * node_gradient_squared(grid, psi) + psi * psi
    return float(grid.weight * np.sum(dens[g]))


def forbidden_potential_mass(grid: Grid, psi: np.ndarray, v: PotentialModel,
                             lam: float, eps: float, vgrid: np.ndarray | None = None) -> float:
    """``∫_{G(lam+eps)} v psi^2``."""
    psi = grid.check(psi)
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    g = vgrid >= lam + eps
    return float(grid.weight * np.sum((vgrid * psi * psi)[g]))


def region_mass(grid: Grid, psi: np.ndarray, mask: np.ndarray) -> float:
    return float(grid.weight * np.sum((psi * psi)[mask]))


# --- inequality margins ---------------------------------------------------


def lemma_l1_margin(grid: Grid, v: PotentialModel, psi: np.ndarray, lam: float,
                    eps: float, delta: float, vgrid: np.ndarray | None = None) -> tuple[float, float]:
    """``(∫_{F(lam+eps)} v psi^2,  lam + eps - delta ∫_{F(lam-delta)} psi^2)``."""
    psi = grid.check(psi)
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    lhs = float(grid.weight * np.sum((vgrid * psi * psi)[vgrid < lam + eps]))
    rhs = lam + eps - delta * region_mass(grid, psi, vgrid < lam - delta)
    return lhs, rhs


def lemma_vir8_margin(grid: Grid, v: PotentialModel, hbar: float, psi: np.ndarray,
                      constants: BoundConstants, vgrid: np.ndarray | None = None) -> tuple[float, float]:
    """``(2K, c0 - c2 ∫_{F(lam0-eps0)} psi^2)``; the o(1) term is left out."""
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    lhs = 2.0 * kinetic_energy(grid, hbar, psi)
    x = region_mass(grid, psi, vgrid < constants.lam0 - constants.eps0)
    return lhs, constants.c0 - constants.c2 * x


# --- verdicts --------------------------------------------------------------


@dataclass(frozen=True)
class SweepEntry:
    hbar: float
    grid: Grid
    pairs: tuple[EigenPair, ...]


@dataclass(frozen=True)
class VerdictRow:
    hbar: float
    index: int
    lam: float
    K: float
    U: float
    bound: float
    passed: bool
    dual_passed: bool


@dataclass
class Verdict:
    rows: list[VerdictRow]
    status: str  # "pass", "fail", "insufficient-data", "hypothesis-fails"
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _summarize(rows: list[VerdictRow], sweep: Sequence[SweepEntry], min_hbars: int = 3) -> str:
    hbars = sorted({e.hbar for e in sweep})
    if len(hbars) < min_hbars:
        return "insufficient-data"
    smallest = [r for r in rows if r.hbar == hbars[0]]
    if not smallest:
        return "insufficient-data"
    return "pass" if all(r.passed and r.dual_passed for r in smallest) else "fail"


def theorem33_verdict(sweep: Sequence[SweepEntry], v: PotentialModel,
                      constants: BoundConstants, min_hbars: int = 3) -> Verdict:
    """Per pair: ``K >= c_pred`` and its dual ``U <= lam - c_pred``."""
    rows = []
    c = constants.c_pred
    for e in sweep:
        vgrid = potential_on_grid(e.grid, v)
        for i, p in enumerate(e.pairs):
            b = energy_balance(e.grid, v, e.hbar, p, vgrid)
            rows.append(VerdictRow(e.hbar, i, p.lam, b.K, b.U, c, b.K >= c, b.U <= p.lam - c))
    return Verdict(rows, _summarize(rows, sweep, min_hbars))


def check_v8x(grid: Grid, v: PotentialModel, lam0: float,
              decomposition: WellDecomposition | None = None, zero_tol: float = 1e-12) -> float:
    """Smallest ``c0`` with ``<x - x_n, grad v> <= c0 v`` on every ``F_n(lam0)``; ``inf`` if none."""
    vgrid = potential_on_grid(grid, v)
    dec = decomposition or decompose(grid, v, lam0, vgrid)
    best = -math.inf
    for w in dec.wells:
        sel = w.mask.ravel()
        pts = grid.points[sel]
        num = v.radial_derivative(pts, w.center)
        den = vgrid.ravel()[sel]
        zero = den <= 0.0
        if np.any(num[zero] > zero_tol):
            return math.inf
        if np.any(~zero):
            best = max(best, float(np.max(num[~zero] / den[~zero])))
    return best + 0.0  # no negative zero


def prop37_verdict(sweep: Sequence[SweepEntry], v: PotentialModel, c0_dual: float,
                   safety: float = 0.9, min_hbars: int = 3) -> Verdict:
    """Per pair: ``U >= c lam`` with ``c = safety * 2 / (c0_dual + 2)``; dual ``K <= (1 - c) lam``."""
    if not math.isfinite(c0_dual):
        return Verdict([], "hypothesis-fails", "condition <x - x_n, grad v> <= c0 v fails")
    c = safety * 2.0 / (c0_dual + 2.0)
    rows = []
    for e in sweep:
        vgrid = potential_on_grid(e.grid, v)
        for i, p in enumerate(e.pairs):
            b = energy_balance(e.grid, v, e.hbar, p, vgrid)
            rows.append(VerdictRow(e.hbar, i, p.lam, b.K, b.U, c * p.lam,
                                   b.U >= c * p.lam, b.K <= p.lam - c * p.lam))
    return Verdict(rows, _summarize(rows, sweep, min_hbars))


@dataclass(frozen=True)
class BalanceDeviation:
    hbar: float
    index: int
    lam: float
    k_ratio: float
    deviation: float


def prop32_balance_check(sweep: Sequence[SweepEntry], v: PotentialModel,
                         alpha: float) -> list[BalanceDeviation]:
    """``|K/lam - alpha/(alpha+2)|`` for every pair of the sweep."""
    target, _ = homogeneous_ratios(alpha)
    out = []
    for e in sweep:
        vgrid = potential_on_grid(e.grid, v)
        for i, p in enumerate(e.pairs):
            b = energy_balance(e.grid, v, e.hbar, p, vgrid)
            out.append(BalanceDeviation(e.hbar, i, p.lam, b.k_ratio, abs(b.k_ratio - target)))
    return out


def non_increasing(values: Sequence[float], noise: float = 0.1, floor: float = 0.0) -> bool:
    """True if each value is at most ``(1 + noise)`` times its predecessor.

    Values at or below ``floor`` count as converged and always pass.
    """
    vals = list(values)
    return all(b <= a * (1.0 + noise) or b <= floor for a, b in zip(vals, vals[1:]))
