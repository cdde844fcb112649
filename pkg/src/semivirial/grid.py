"""Tensor-product Dirichlet grids and finite-difference operators.

Fields are plain numpy arrays of shape ``grid.shape`` holding values at the
interior points.  The gradient is the forward difference including the
two ghost edges, so that ``D^T D = -Laplacian`` holds exactly and

    sum_j ||D_j f||^2 w  ==  <-Laplacian f, f> w

up to round-off.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .potentials import PotentialModel

MIN_POINTS = 8

# Default points per local de Broglie wavelength.  Second-order stencils need
# many points to reach the 1e-6 relative eigenvalue accuracy in 1D.
DEFAULT_PPW = {1: 800.0, 2: 64.0}


class GridMismatchError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    def __init__(self, required: int, budget: int):
        super().__init__(f"grid needs {required} points, budget is {budget}")
        self.required = required
        self.budget = budget


class UnboundedRegionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    m: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.m)):
            raise ValueError("lo, hi and m must have the same length")
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        for lo, hi, m in zip(self.lo, self.hi, self.m):
            if m < MIN_POINTS:
                raise ValueError(f"need at least {MIN_POINTS} points per axis, got {m}")
            if not hi > lo:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @classmethod
    def box(cls, lo, hi, m) -> "Grid":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        m = np.broadcast_to(np.atleast_1d(m), lo.shape)
        return cls(tuple(map(float, lo)), tuple(map(float, hi)), tuple(int(k) for k in m))

    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.m

    @property
    def size(self) -> int:
        return math.prod(self.m)

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m + 1) for lo, hi, m in zip(self.lo, self.hi, self.m))

    @property
    def weight(self) -> float:
        return math.prod(self.h)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(lo + (np.arange(m) + 1) * h for lo, m, h in zip(self.lo, self.m, self.h))

    @cached_property
    def points(self) -> np.ndarray:
        """All interior points, row-major, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    def edge_points(self, axis: int) -> np.ndarray:
        """Midpoints of the forward-difference edges along ``axis``.

        There are ``m[axis] + 1`` edges along that axis, including the two
        that touch the Dirichlet ghost points.
        """
        axes = list(self.axes)
        lo, h, m = self.lo[axis], self.h[axis], self.m[axis]
        axes[axis] = lo + (np.arange(m + 1) + 0.5) * h
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    def refined(self) -> "Grid":
        """Same box with every spacing halved."""
        return Grid(self.lo, self.hi, tuple(2 * m + 1 for m in self.m))

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != self.shape:
            if f.size == self.size and f.ndim == 1:
                return f.reshape(self.shape)
            raise GridMismatchError(f"field of shape {f.shape} does not live on grid {self.shape}")
        return f

    def header(self) -> dict:
        return {"dim": self.dim, "m": list(self.m), "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class ResolutionPolicy:
    points_per_wavelength: float | None = None
    box_margin_factor: float = 1.5
    max_points: int = 200_000
    # Minimum tunnelling exponent int sqrt(v - level)/hbar between the
    # allowed set and the box face; psi^2 at the face is ~exp(-2 * this).
    decay_exponent: float = 18.0
    samples_per_axis: int | None = None

    def __post_init__(self):
        if self.points_per_wavelength is not None and self.points_per_wavelength < 4:
            raise ValueError("points_per_wavelength must be >= 4")
        if self.box_margin_factor < 1:
            raise ValueError("box_margin_factor must be >= 1")

    def ppw(self, dim: int) -> float:
        return self.points_per_wavelength or DEFAULT_PPW[dim]


def potential_on_grid(grid: Grid, v: PotentialModel) -> np.ndarray:
    if v.dim != grid.dim:
        raise GridMismatchError(f"{v.dim}D potential on a {grid.dim}D grid")
    return v(grid.points).reshape(grid.shape)


def _sample_box(v: PotentialModel, lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([c.ravel() for c in mesh], axis=1)
    return axes, v(pts).reshape((n,) * v.dim)


def _locate_allowed(v: PotentialModel, level: float, n: int, max_doublings: int = 24):
    centers = np.array(v.well_centers, dtype=float) if v.well_centers else np.zeros((1, v.dim))
    mid = centers.mean(axis=0)
    half = max(1.0, float(np.max(np.abs(centers - mid))) * 2.0)
    for _ in range(max_doublings):
        lo, hi = mid - half, mid + half
        axes, vals = _sample_box(v, lo, hi, n)
        allowed = vals < level
        border = np.zeros_like(allowed)
        for ax in range(v.dim):
            idx = [slice(None)] * v.dim
            idx[ax] = 0
            border[tuple(idx)] = True
            idx[ax] = -1
            border[tuple(idx)] = True
        if not allowed.any():
            raise UnboundedRegionError(f"no sample with v < {level}; is level above min v = 0?")
        if not allowed[border].any():
            bbox_lo, bbox_hi = [], []
            for ax in range(v.dim):
                other = tuple(k for k in range(v.dim) if k != ax)
                hit = allowed.any(axis=other) if other else allowed
                idx = np.nonzero(hit)[0]
                step = axes[ax][1] - axes[ax][0]
                bbox_lo.append(axes[ax][idx[0]] - step)
                bbox_hi.append(axes[ax][idx[-1]] + step)
            return np.array(bbox_lo), np.array(bbox_hi)
        half *= 2.0
    raise UnboundedRegionError(f"sampling finds v < {level} on the boundary of every trial box")


def _decay_extent(v: PotentialModel, level: float, hbar: float, lo, hi, target: float, n: int):
    """Per-axis box faces past which the tunnelling exponent exceeds ``target``.

    Uses the lower envelope of v over the transverse coordinates, which bounds
    the Agmon distance from below along any path crossing the slab.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    factor = 2.0
    for _ in range(20):
        blo, bhi = mid - factor * half, mid + factor * half
        axes, vals = _sample_box(v, blo, bhi, n)
        out_lo, out_hi = [], []
        ok = True
        for ax in range(v.dim):
            other = tuple(k for k in range(v.dim) if k != ax)
            env = vals.min(axis=other) if other else vals
            t = axes[ax]
            dens = np.sqrt(np.maximum(env - level, 0.0)) / hbar
            step = t[1] - t[0]
            # Integrate outward from the allowed bounding box on each side.
            right = t >= hi[ax]
            cum = np.cumsum(dens[right]) * step
            k = np.searchsorted(cum, target)
            if k >= cum.size:
                ok = False
                break
            out_hi.append(t[right][k])
            left = t <= lo[ax]
            cum = np.cumsum(dens[left][::-1]) * step
            k = np.searchsorted(cum, target)
            if k >= cum.size:
                ok = False
                break
            out_lo.append(t[left][::-1][k])
        if ok:
            return np.array(out_lo), np.array(out_hi)
        factor *= 2.0
    raise UnboundedRegionError("could not find a box with enough decay margin")


def build_grid(v: PotentialModel, lam0: float, eps0: float, hbar: float,
               policy: ResolutionPolicy | None = None) -> Grid:
    """Box containing ``{v <= lam0 + eps0}`` resolved for Planck parameter ``hbar``.

    The box is the margin-scaled bounding box of the allowed set, enlarged
    further if needed so that eigenfunctions have decayed by
    ``exp(-policy.decay_exponent)`` at the faces.  Spacing gives at least
    ``policy.ppw`` points per local wavelength ``2 pi hbar / sqrt(lam0 + eps0)``.
    """
    policy = policy or ResolutionPolicy()
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    level = lam0 + eps0
    n = policy.samples_per_axis or (4001 if v.dim == 1 else 401)
    alo, ahi = _locate_allowed(v, level, n)
    mid = 0.5 * (alo + ahi)
    half = 0.5 * (ahi - alo) * policy.box_margin_factor
    lo, hi = mid - half, mid + half
    if policy.decay_exponent:
        dlo, dhi = _decay_extent(v, level, hbar, alo, ahi, policy.decay_exponent, n)
        lo, hi = np.minimum(lo, dlo), np.maximum(hi, dhi)
    hmax = 2.0 * math.pi * hbar / (policy.ppw(v.dim) * math.sqrt(level))
    m = [max(MIN_POINTS, int(math.ceil((b - a) / hmax)) - 1) for a, b in zip(lo, hi)]
    total = math.prod(m)
    if total > policy.max_points:
        raise BudgetExceededError(total, policy.max_points)
    return Grid.box(lo, hi, m)


# --- operators -------------------------------------------------------------


def _shift(f: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """``f`` shifted by ``offset`` along ``axis`` with zero fill (Dirichlet)."""
    out = np.zeros_like(f)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if offset > 0:
        src[axis] = slice(offset, None)
        dst[axis] = slice(None, -offset)
    else:
        src[axis] = slice(None, offset)
        dst[axis] = slice(-offset, None)
    out[tuple(dst)] = f[tuple(src)]
    return out


def laplacian_apply(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second-order central Laplacian with zero ghost values."""
    f = grid.check(f)
    out = np.zeros(f.shape, dtype=float)
    for ax, h in enumerate(grid.h):
        out += (_shift(f, ax, 1) - 2.0 * f + _shift(f, ax, -1)) / (h * h)
    return out


def gradient_apply(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    """Forward differences per axis, on the ``m_j + 1`` edges of that axis."""
    f = grid.check(f)
    out = []
    for ax, h in enumerate(grid.h):
        pad = [(0, 0)] * f.ndim
        pad[ax] = (1, 1)
        out.append(np.diff(np.pad(f, pad), axis=ax) / h)
    return out


def centered_gradient(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    """Central differences at the interior nodes (zero ghosts)."""
    f = grid.check(f)
    return [(_shift(f, ax, 1) - _shift(f, ax, -1)) / (2.0 * h) for ax, h in enumerate(grid.h)]


def node_gradient_squared(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``|grad f|^2`` at nodes: per axis, the mean of the two adjacent squared edges."""
    out = np.zeros(grid.shape)
    for ax, g in enumerate(gradient_apply(grid, f)):
        sq = g * g
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out += 0.5 * (sq[tuple(lo)] + sq[tuple(hi)])
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    return float(grid.weight * np.sum(f))


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return float(grid.weight * np.vdot(np.ravel(f), np.ravel(g)))


def hamiltonian_apply(grid: Grid, v: PotentialModel, hbar: float, f: np.ndarray,
                      vgrid: np.ndarray | None = None) -> np.ndarray:
    f = grid.check(f)
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    return -hbar * hbar * laplacian_apply(grid, f) + vgrid * f


def _second_difference(m: int, h: float) -> sp.csr_matrix:
    main = np.full(m, 2.0 / (h * h))
    off = np.full(m - 1, -1.0 / (h * h))
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def neg_laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    mats = [_second_difference(m, h) for m, h in zip(grid.m, grid.h)]
    if grid.dim == 1:
        return mats[0]
    eye = [sp.identity(m, format="csr") for m in grid.m]
    return (sp.kron(mats[0], eye[1]) + sp.kron(eye[0], mats[1])).tocsr()


def hamiltonian_matrix(grid: Grid, v: PotentialModel, hbar: float,
                       vgrid: np.ndarray | None = None) -> sp.csr_matrix:
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    return (hbar * hbar * neg_laplacian_matrix(grid) + sp.diags(vgrid.ravel())).tocsr()


def hamiltonian_tridiagonal(grid: Grid, v: PotentialModel, hbar: float,
                            vgrid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the 1D Hamiltonian."""
    if grid.dim != 1:
        raise GridMismatchError("tridiagonal form exists only in 1D")
    if vgrid is None:
        vgrid = potential_on_grid(grid, v)
    h = grid.h[0]
    k = hbar * hbar / (h * h)
    return 2.0 * k + vgrid.ravel(), np.full(grid.m[0] - 1, -k)


# --- export ----------------------------------------------------------------


def write_field_binary(path, grid: Grid, f: np.ndarray) -> Path:
    """Little-endian dump: int64 d, int64 m[d], float64 lo[d], float64 hi[d], data."""
    f = grid.check(f)
    path = Path(path)
    d = grid.dim
    with path.open("wb") as fh:
        fh.write(struct.pack(f"<q{d}q", d, *grid.m))
        fh.write(struct.pack(f"<{d}d{d}d", *grid.lo, *grid.hi))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> tuple[Grid, np.ndarray]:
    raw = Path(path).read_bytes()
    (d,) = struct.unpack_from("<q", raw, 0)
    off = 8
    m = struct.unpack_from(f"<{d}q", raw, off)
    off += 8 * d
    bounds = struct.unpack_from(f"<{2 * d}d", raw, off)
    off += 16 * d
    grid = Grid(tuple(bounds[:d]), tuple(bounds[d:]), tuple(m))
    data = np.frombuffer(raw, dtype="<f8", offset=off).reshape(grid.shape).copy()
    return grid, data


def write_field_csv(path, grid: Grid, f: np.ndarray) -> Path:
    f = grid.check(f)
    cols = [f"x{j}" for j in range(grid.dim)] + ["value"]
    data = np.column_stack([grid.points, f.ravel()])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
    return Path(path)
