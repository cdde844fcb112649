"""Generalized virial identity for smooth multipliers ``a(x)``.

For an eigenfunction the integral

    ∫ 4 hbar^2 sum_jk a_jk d_k psi d_j psi - hbar^2 (Δ² a) psi^2 - 2 <grad a, grad v> psi^2

vanishes.  On the grid the diagonal second-derivative terms use the same
forward differences as the kinetic energy (with ``a_jj`` at edge midpoints),
so that ``a = |x|^2`` reproduces ``4 * (2K - ∫ <x, grad v> psi^2)`` to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .eigen import EigenPair
from .energetics import kinetic_energy
from .grid import Grid, centered_gradient, gradient_apply, node_gradient_squared, potential_on_grid
from .potentials import PotentialModel
from .regions import OverlapError, WellDecomposition


@dataclass(frozen=True)
class VirialMultiplier:
    """``a`` with gradient, Hessian and bi-Laplacian, each taking points ``(n, d)``."""

    dim: int
    a: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    bilaplacian: Callable[[np.ndarray], np.ndarray]
    bounded: bool = True
    name: str = "multiplier"
    params: dict | None = None


def smoothstep(n: int) -> Polynomial:
    """Degree ``2n+1`` smoothstep: 0 -> 1 on [0, 1], n vanishing derivatives at both ends."""
    coef = np.zeros(2 * n + 2)
    for k in range(n + 1):
        coef[n + 1 + k] = comb(n + k, k) * comb(2 * n + 1, n - k) * (-1) ** k
    return Polynomial(coef)


# C^6 transition.  With only C^4 the fifth derivative of a jumps, and the
# rectangle rule then picks up an O(h^2) error that depends on where the
# jump falls between nodes.
SMOOTHNESS = 6
SMOOTHSTEP = smoothstep(SMOOTHNESS)
_SMOOTHSTEP_DERIVS = [SMOOTHSTEP.deriv(k) for k in range(1, 5)]


@dataclass(frozen=True)
class CutoffBump:
    """Radial cutoff: 1 inside ``r_in``, 0 beyond ``r_out``, C^6 in between."""

    center: tuple[float, ...]
    r_in: float
    r_out: float

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise ValueError(f"need 0 < r_in < r_out, got {self.r_in}, {self.r_out}")

    def profile_derivatives(self, r: np.ndarray) -> list[np.ndarray]:
        """Transition profile and its first four r-derivatives."""
        width = self.r_out - self.r_in
        t = (np.asarray(r, dtype=float) - self.r_in) / width
        out = [1.0 - SMOOTHSTEP(t)]
        for k, d in enumerate(_SMOOTHSTEP_DERIVS, start=1):
            out.append(-d(t) / width**k)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1)
        out = np.where(r <= self.r_in, 1.0, 0.0)
        mid = (r > self.r_in) & (r < self.r_out)
        out[mid] = self.profile_derivatives(r[mid])[0]
        return out


def _radial_derivatives(bump: CutoffBump, r: np.ndarray):
    # g = r^2 * profile, differentiated by the Leibniz rule
    p = bump.profile_derivatives(r)
    q = [r * r, 2.0 * r, np.full_like(r, 2.0)]
    return [sum(comb(k, i) * q[i] * p[k - i] for i in range(min(k, 2) + 1)) for k in range(5)]


def bump_quadratic_multiplier(bump: CutoffBump) -> VirialMultiplier:
    """``a(x) = |x - c|^2 * bump(x)`` with all derivatives exact."""
    c = np.asarray(bump.center, dtype=float)
    d = c.size

    def split(points):
        x = np.atleast_2d(points) - c
        r = np.linalg.norm(x, axis=1)
        inner = r <= bump.r_in
        mid = (r > bump.r_in) & (r < bump.r_out)
        return x, r, inner, mid

    def a(points):
        x, r, inner, mid = split(points)
        out = np.zeros(r.shape)
        out[inner] = r[inner] ** 2
        out[mid] = _radial_derivatives(bump, r[mid])[0]
        return out

    def grad(points):
        x, r, inner, mid = split(points)
        out = np.zeros(x.shape)
        out[inner] = 2.0 * x[inner]
        if mid.any():
            g1 = _radial_derivatives(bump, r[mid])[1]
            out[mid] = (g1 / r[mid])[:, None] * x[mid]
        return out

    def hessian(points):
        x, r, inner, mid = split(points)
        out = np.zeros((x.shape[0], d, d))
        out[inner] = 2.0 * np.eye(d)
        if mid.any():
            _, g1, g2, _, _ = _radial_derivatives(bump, r[mid])
            rm = r[mid]
            xhat = x[mid] / rm[:, None]
            outer = xhat[:, :, None] * xhat[:, None, :]
            out[mid] = (g2[:, None, None] * outer
                        + (g1 / rm)[:, None, None] * (np.eye(d) - outer))
        return out

    def bilaplacian(points):
        x, r, inner, mid = split(points)
        out = np.zeros(r.shape)
        if mid.any():
            _, g1, g2, g3, g4 = _radial_derivatives(bump, r[mid])
            rm = r[mid]
            k = d - 1
            out[mid] = g4 + 2 * k * g3 / rm + k * (k - 2) * (g2 / rm**2 - g1 / rm**3)
        return out

    return VirialMultiplier(d, a, grad, hessian, bilaplacian, True, "bump_quadratic",
                            {"center": tuple(c), "r_in": bump.r_in, "r_out": bump.r_out})


def sum_multipliers(parts: Sequence[VirialMultiplier]) -> VirialMultiplier:
    def total(attr):
        return lambda p: sum(getattr(m, attr)(p) for m in parts)

    return VirialMultiplier(parts[0].dim, total("a"), total("grad"), total("hessian"),
                            total("bilaplacian"), all(m.bounded for m in parts), "well_sum",
                            {"wells": [m.params for m in parts]})


def quadratic_multiplier(dim: int, center=None) -> VirialMultiplier:
    """``a(x) = |x - c|^2`` on the whole box (unbounded; fine on a finite grid)."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    return VirialMultiplier(
        dim,
        lambda p: np.sum((np.atleast_2d(p) - c) ** 2, axis=1),
        lambda p: 2.0 * (np.atleast_2d(p) - c),
        lambda p: np.broadcast_to(2.0 * np.eye(dim), (np.atleast_2d(p).shape[0], dim, dim)).copy(),
        lambda p: np.zeros(np.atleast_2d(p).shape[0]),
        bounded=False,
        name="quadratic",
        params={"center": tuple(c)},
    )


def constant_multiplier(dim: int, value: float = 1.0) -> VirialMultiplier:
    return VirialMultiplier(
        dim,
        lambda p: np.full(np.atleast_2d(p).shape[0], value),
        lambda p: np.zeros(np.atleast_2d(p).shape),
        lambda p: np.zeros((np.atleast_2d(p).shape[0], dim, dim)),
        lambda p: np.zeros(np.atleast_2d(p).shape[0]),
        name="constant",
    )


def build_well_multiplier(decomposition: WellDecomposition) -> VirialMultiplier:
    """``a = sum_n |x - x_n|^2 phi_n`` with one radial bump per well.

    ``r_in`` is the largest distance from ``x_n`` to a point of the well plus
    one grid cell.  The transition is ``r_in`` wide when neighbouring wells
    leave room (supports stay inside 95% of half the center distance) and
    never narrower than ``max(0.25 r_in, 2 cells)``.  Bumps whose supports
    intersect raise :class:`OverlapError`.
    """
    grid = decomposition.grid
    cell = max(grid.h)
    centers = np.array(decomposition.centers, dtype=float)
    bumps = []
    for n, w in enumerate(decomposition.wells):
        pts = grid.points[w.mask.ravel()]
        r_in = float(np.max(np.linalg.norm(pts - centers[n], axis=1))) + cell
        others = np.delete(centers, n, axis=0)
        room = math.inf
        if len(others):
            room = 0.95 * 0.5 * float(np.min(np.linalg.norm(others - centers[n], axis=1))) - r_in
        width = max(0.25 * r_in, 2.0 * cell, min(r_in, room))
        bumps.append(CutoffBump(w.center, r_in, r_in + width))
    for i, b in enumerate(bumps):
        for j in range(i + 1, len(bumps)):
            o = bumps[j]
            dist = float(np.linalg.norm(np.subtract(b.center, o.center)))
            if dist < b.r_out + o.r_out:
                raise OverlapError(f"supports of wells {i + 1} and {j + 1} intersect "
                                   f"(distance {dist:.4g} < {b.r_out + o.r_out:.4g})")
    return sum_multipliers([bump_quadratic_multiplier(b) for b in bumps])


# --- identities ------------------------------------------------------------


def generalized_virial_residual(grid: Grid, v: PotentialModel, hbar: float, psi: np.ndarray,
                                mult: VirialMultiplier) -> float:
    """Discrete value of the generalized virial integral (zero for exact eigenfunctions)."""
    psi = grid.check(psi)
    w = grid.weight
    rho = (psi * psi).ravel()
    pts = grid.points
    kin = 0.0
    for ax, g in enumerate(gradient_apply(grid, psi)):
        ajj = mult.hessian(grid.edge_points(ax))[:, ax, ax]
        kin += float(np.sum(ajj * (g * g).ravel()))
    if grid.dim > 1:
        cg = [c.ravel() for c in centered_gradient(grid, psi)]
        hess = mult.hessian(pts)
        for j in range(grid.dim):
            for k in range(j + 1, grid.dim):
                kin += 2.0 * float(np.sum(hess[:, j, k] * cg[j] * cg[k]))
    kin *= 4.0 * hbar * hbar * w
    bil = hbar * hbar * w * float(np.sum(mult.bilaplacian(pts) * rho))
    drift = 2.0 * w * float(np.sum(np.einsum("ij,ij->i", mult.grad(pts), v.gradient(pts)) * rho))
    return kin - bil - drift


def classic_virial_residual(grid: Grid, v: PotentialModel, hbar: float, psi: np.ndarray) -> float:
    """``2K - ∫ <x, grad v> psi^2``."""
    psi = grid.check(psi)
    rv = v.radial_derivative(grid.points).reshape(grid.shape)
    return 2.0 * kinetic_energy(grid, hbar, psi) - grid.weight * float(np.sum(rv * psi * psi))


def virial_energy_identity_residual(grid: Grid, v: PotentialModel, hbar: float,
                                    pair: EigenPair) -> float:
    """``∫ (<x, grad v>/2 + v) psi^2 - lam``."""
    psi = grid.check(pair.psi)
    rv = v.radial_derivative(grid.points).reshape(grid.shape)
    vg = potential_on_grid(grid, v)
    return grid.weight * float(np.sum((0.5 * rv + vg) * psi * psi)) - pair.lam


def localized_virial_defect(grid: Grid, v: PotentialModel, hbar: float, psi: np.ndarray,
                            decomposition: WellDecomposition) -> float:
    """``sum_n ∫_{F_n} (2 hbar^2 |grad psi|^2 - <x - x_n, grad v> psi^2)``."""
    psi = grid.check(psi)
    kin = 2.0 * hbar * hbar * node_gradient_squared(grid, psi).ravel()
    rho = (psi * psi).ravel()
    total = 0.0
    for w in decomposition.wells:
        sel = w.mask.ravel()
        rv = v.radial_derivative(grid.points[sel], w.center)
        total += float(np.sum(kin[sel] - rv * rho[sel]))
    return total * grid.weight


REDUCTION_FACTOR = 4.0  # generalized residual with a = |x|^2 equals 4x the classic one
