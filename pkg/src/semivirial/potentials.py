"""Confining potentials with analytic gradients.

Every model is normalized so that ``min v = 0``.  Points are passed as
arrays of shape ``(n, d)``; values come back with shape ``(n,)`` and
gradients with shape ``(n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

LOG_CLAMP_RADIUS = 1e-6


class PotentialDomainError(ValueError):
    """Raised when a potential is evaluated outside its domain."""


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if dim > 1 and pts.shape[0] == dim else pts.reshape(-1, 1)
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got shape {pts.shape}")
    return pts


def fd_gradient(value: ArrayFn, points: np.ndarray) -> np.ndarray:
    """Central finite-difference gradient with step ``1e-5 * (1 + |x|)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grad = np.empty_like(points)
    step = 1e-5 * (1.0 + np.linalg.norm(points, axis=1))
    for j in range(points.shape[1]):
        fwd = points.copy()
        bwd = points.copy()
        fwd[:, j] += step
        bwd[:, j] -= step
        grad[:, j] = (value(fwd) - value(bwd)) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class PotentialModel:
    """A real potential ``v >= 0`` on R^d together with its gradient.

    ``homogeneity`` is the global degree alpha if ``v(tx) = t**alpha v(x)``.
    ``homogeneous_below`` marks a patched model which is homogeneous of
    degree ``homogeneity`` only on ``{v < homogeneous_below}``.
    """

    name: str
    dim: int
    value_fn: ArrayFn
    gradient_fn: ArrayFn | None = None
    homogeneity: float | None = None
    homogeneous_below: float = math.inf
    well_centers: tuple[tuple[float, ...], ...] = ()
    v_infinity_floor: float = math.inf
    params: Mapping[str, float] = field(default_factory=dict)
    singular_axes: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")

    def __call__(self, x) -> np.ndarray:
        return self.value_fn(_as_points(x, self.dim))

    def value(self, x) -> np.ndarray:
        return self(x)

    def gradient(self, x) -> np.ndarray:
        pts = _as_points(x, self.dim)
        if self.gradient_fn is None:
            return fd_gradient(self.value_fn, pts)
        return self.gradient_fn(pts)

    def radial_derivative(self, x, center=None) -> np.ndarray:
        """``<x - center, grad v(x)>``, i.e. ``r v_r`` about ``center``."""
        pts = _as_points(x, self.dim)
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        return np.einsum("ij,ij->i", pts - c, self.gradient(pts))

    def is_homogeneous_on(self, level: float) -> bool:
        return self.homogeneity is not None and level <= self.homogeneous_below


def _check_positive(**kwargs):
    for key, val in kwargs.items():
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"{key} must be a positive finite number, got {val!r}")


def make_power_well(d: int, alpha: float, scale: float = 1.0) -> PotentialModel:
    """``v(x) = scale * |x|**alpha``."""
    _check_positive(alpha=alpha, scale=scale)

    def value(p):
        return scale * np.linalg.norm(p, axis=1) ** alpha

    def gradient(p):
        r = np.linalg.norm(p, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0, scale * alpha * r ** (alpha - 2.0), 0.0)
        return fac[:, None] * p

    return PotentialModel(
        name="power",
        dim=d,
        value_fn=value,
        gradient_fn=gradient,
        homogeneity=float(alpha),
        well_centers=((0.0,) * d,),
        params={"alpha": alpha, "scale": scale, "dim": d},
        singular_axes=alpha < 2 and d > 1,
    )


def make_separable_power(alpha1: float, alpha2: float) -> PotentialModel:
    """``v(x) = |x1|**alpha1 + |x2|**alpha2`` in two dimensions."""
    _check_positive(alpha1=alpha1, alpha2=alpha2)
    alphas = np.array([alpha1, alpha2], dtype=float)

    def value(p):
        return np.sum(np.abs(p) ** alphas, axis=1)

    def gradient(p):
        a = np.abs(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(a > 0, alphas * a ** (alphas - 1.0), 0.0)
        return g * np.sign(p)

    return PotentialModel(
        name="separable",
        dim=2,
        value_fn=value,
        gradient_fn=gradient,
        homogeneity=float(alpha1) if alpha1 == alpha2 else None,
        well_centers=((0.0, 0.0),),
        params={"alpha1": alpha1, "alpha2": alpha2},
        singular_axes=min(alpha1, alpha2) < 2,
    )


def make_double_well(gap: float = 1.0, scale: float = 1.0) -> PotentialModel:
    """``v(x) = scale * (x**2 - gap**2)**2`` in one dimension, wells at ``±gap``."""
    _check_positive(gap=gap, scale=scale)
    g2 = gap * gap

    def value(p):
        x = p[:, 0]
        return scale * (x * x - g2) ** 2

    def gradient(p):
        x = p[:, 0]
        return (4.0 * scale * x * (x * x - g2))[:, None]

    return PotentialModel(
        name="double_well",
        dim=1,
        value_fn=value,
        gradient_fn=gradient,
        well_centers=((-gap,), (gap,)),
        params={"gap": gap, "scale": scale},
    )


def make_log_squared(v0: float = 1.0) -> PotentialModel:
    """``v(x) = v0 * ln(|x|)**2`` on R^2, clamped inside ``|x| < 1e-6``.

    Evaluating exactly at the origin raises :class:`PotentialDomainError`.
    """
    _check_positive(v0=v0)

    def _radius(p):
        r = np.linalg.norm(p, axis=1)
        if np.any(r == 0.0):
            raise PotentialDomainError("log-squared potential is undefined at the origin")
        return np.maximum(r, LOG_CLAMP_RADIUS)

    def value(p):
        return v0 * np.log(_radius(p)) ** 2

    def gradient(p):
        r_true = np.linalg.norm(p, axis=1)
        r = _radius(p)
        fac = np.where(r_true < LOG_CLAMP_RADIUS, 0.0, 2.0 * v0 * np.log(r) / r**2)
        return fac[:, None] * p

    return PotentialModel(
        name="log_squared",
        dim=2,
        value_fn=value,
        gradient_fn=gradient,
        params={"v0": v0},
    )


def make_patched_power(d: int, alpha: float, radius: float, curvature: float = 1.0) -> PotentialModel:
    """``|x|**alpha`` for ``|x| <= radius``, continued outside by a C^1 quadratic.

    For ``r > radius`` the value is ``R^a + a R^(a-1) (r - R) + curvature (r - R)^2``,
    so the model is homogeneous only on ``{v < radius**alpha}``.
    """
    _check_positive(alpha=alpha, radius=radius, curvature=curvature)
    vr = radius**alpha
    slope = alpha * radius ** (alpha - 1.0)

    def profile(r):
        s = r - radius
        return np.where(r <= radius, r**alpha, vr + slope * s + curvature * s * s)

    def dprofile(r):
        s = r - radius
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(r > 0, alpha * r ** (alpha - 1.0), 0.0)
        return np.where(r <= radius, inner, slope + 2.0 * curvature * s)

    def value(p):
        return profile(np.linalg.norm(p, axis=1))

    def gradient(p):
        r = np.linalg.norm(p, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0, dprofile(r) / r, 0.0)
        return fac[:, None] * p

    return PotentialModel(
        name="patched_power",
        dim=d,
        value_fn=value,
        gradient_fn=gradient,
        homogeneity=float(alpha),
        homogeneous_below=vr,
        well_centers=((0.0,) * d,),
        params={"alpha": alpha, "radius": radius, "curvature": curvature, "dim": d},
    )


def make_user_potential(dim: int, value: ArrayFn, gradient: ArrayFn | None = None,
                        name: str = "user", **meta) -> PotentialModel:
    """Wrap a user callable; the gradient falls back to central differences."""
    return PotentialModel(name=name, dim=dim, value_fn=value, gradient_fn=gradient, **meta)


CATALOG: dict[str, Callable[..., PotentialModel]] = {
    "power": make_power_well,
    "separable": make_separable_power,
    "double_well": make_double_well,
    "log_squared": make_log_squared,
    "patched_power": make_patched_power,
}

_ALIASES = {"d": "d", "dim": "d", "alpha": "alpha", "a1": "alpha1", "a2": "alpha2"}


def make_potential(name: str, params: Mapping[str, float] | None = None) -> PotentialModel:
    """Construct a catalog potential from its name and a parameter map."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {sorted(CATALOG)}") from None
    kwargs = {_ALIASES.get(k, k): v for k, v in dict(params or {}).items()}
    if "d" in kwargs:
        kwargs["d"] = int(kwargs["d"])
    return factory(**kwargs)


def allowed_interval_count(v: PotentialModel, level: float, lo: float, hi: float,
                           samples: int = 20001) -> int:
    """Number of connected components of ``{v < level}`` on a 1D sample of [lo, hi]."""
    if v.dim != 1:
        raise ValueError("allowed_interval_count is for one-dimensional potentials")
    x = np.linspace(lo, hi, samples)
    inside = v(x[:, None]) < level
    edges = np.diff(inside.astype(int))
    return int(np.count_nonzero(edges == 1) + (1 if inside[0] else 0))


def sample_points(v: PotentialModel, lo: Sequence[float], hi: Sequence[float],
                  n: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lo + (hi - lo) * rng.random((n, v.dim))
