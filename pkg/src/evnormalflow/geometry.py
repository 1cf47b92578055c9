"""Calibrated-camera geometry: interaction matrices, epipolar terms, and
the normal-flow constraint residual.

All quantities live in calibrated (focal-length-normalized) coordinates.
A point x = (x, y) denotes the projection (X/Z, Y/Z); xhat = (x, y, 1).
The instantaneous motion field of a camera moving with linear velocity nu
and angular velocity omega over depth Z(x) is

    u(x) = A(x) nu / Z + B(x) omega,

and a normal flow vector n (the projection of u onto the local image
gradient direction) satisfies  n . u = |n|^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDepth, OutOfBounds

# Calibrated coordinates beyond this magnitude correspond to rays >71deg
# off-axis; no supported sensor reaches them and the interaction matrices
# grow quadratically, so reject instead of silently extrapolating.
FOV_LIMIT = 3.0


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics with sensor size in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the sensor")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")


@dataclass(frozen=True)
class CalibratedPoint:
    """Image point in calibrated coordinates."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("calibrated point must be finite")
        if max(abs(self.x), abs(self.y)) > FOV_LIMIT:
            raise ValueError(f"calibrated point outside |x|,|y| <= {FOV_LIMIT}")

    @property
    def xy(self):
        return np.array([self.x, self.y])

    @property
    def xhat(self):
        return np.array([self.x, self.y, 1.0])


@dataclass(frozen=True)
class Velocity:
    """Camera linear velocity nu (m/s) and angular velocity omega (rad/s)."""

    nu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float).reshape(3)
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(omega))):
            raise ValueError("velocity components must be finite")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class DiffHomography:
    """Differential homography H_d = -([omega]_x + nu N^T / d)."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(h)):
            raise ValueError("homography entries must be finite")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class NormalFlowObs:
    """One normal flow measurement: calibrated location, flow n (units/s),
    event timestamp, and the cached squared magnitude n.n."""

    x: CalibratedPoint
    n: np.ndarray
    t: float
    mag2: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float).reshape(2)
        if not np.all(np.isfinite(n)):
            raise ValueError("normal flow must be finite")
        object.__setattr__(self, "n", n)

    @classmethod
    def make(cls, x, y, nx, ny, t):
        n = np.array([nx, ny], dtype=float)
        return cls(x=CalibratedPoint(float(x), float(y)), n=n, t=float(t),
                   mag2=float(n @ n))


def obs_arrays(observations):
    """Stack a sequence of NormalFlowObs into (xy, n, t, mag2) arrays."""
    xy = np.array([[o.x.x, o.x.y] for o in observations], dtype=float)
    n = np.array([o.n for o in observations], dtype=float)
    t = np.array([o.t for o in observations], dtype=float)
    mag2 = np.array([o.mag2 for o in observations], dtype=float)
    return xy.reshape(-1, 2), n.reshape(-1, 2), t, mag2


def skew(v):
    """3x3 cross-product matrix [v]_x with [v]_x b = v x b."""
    v = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def vee(m):
    """Inverse of skew() applied to the antisymmetric part of m."""
    m = np.asarray(m, dtype=float)
    s = 0.5 * (m - m.T)
    return np.array([s[2, 1], s[0, 2], s[1, 0]])


def matrix_a(x, y):
    """Translational interaction matrix A(x), shape (..., 2, 3).

    A(x) = [[-1, 0, x], [0, -1, y]]
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zero = np.zeros(np.broadcast(x, y).shape)
    one = np.ones_like(zero)
    row1 = np.stack([-one, zero, x + zero], axis=-1)
    row2 = np.stack([zero, -one, y + zero], axis=-1)
    return np.stack([row1, row2], axis=-2)


def matrix_b(x, y):
    """Rotational interaction matrix B(x), shape (..., 2, 3).

    B(x) = [[x y, -(1 + x^2), y], [1 + y^2, -x y, -x]]
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    row1 = np.stack([x * y, -(1.0 + x * x), y + 0.0 * x], axis=-1)
    row2 = np.stack([1.0 + y * y, -x * y, -x + 0.0 * y], axis=-1)
    return np.stack([row1, row2], axis=-2)


def matrix_c(x, y):
    """Homography interaction matrix C(x), shape (..., 2, 9), such that
    C(x) vec(H) equals the homography flow (I - xhat e3^T) H xhat for
    row-major vec(H)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zero = np.zeros(np.broadcast(x, y).shape)
    one = np.ones_like(zero)
    x = x + zero
    y = y + zero
    row1 = np.stack([x, y, one, zero, zero, zero, -x * x, -x * y, -x], axis=-1)
    row2 = np.stack([zero, zero, zero, x, y, one, -x * y, -y * y, -y], axis=-1)
    return np.stack([row1, row2], axis=-2)


def matrix_d(x, y, z):
    """Six-dof interaction matrix D(x) = [A(x)/Z | B(x)], shape (..., 2, 6).

    Depth must be strictly positive.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DegenerateDepth("depth must be positive to form D(x)")
    a = matrix_a(x, y) / z[..., None, None]
    b = matrix_b(x, y)
    return np.concatenate([a, b], axis=-1)


def epipolar_terms(v):
    """Return ([nu]_x, s) for the differential epipolar constraint

        uhat^T [nu]_x xhat - xhat^T s xhat = 0,
        s = 1/2 ([nu]_x [omega]_x + [omega]_x [nu]_x).

    s is symmetric by construction.
    """
    nu_cross = skew(v.nu)
    omega_cross = skew(v.omega)
    s = 0.5 * (nu_cross @ omega_cross + omega_cross @ nu_cross)
    return nu_cross, s


def nf_residual(obs, u):
    """Normal-flow constraint residual n . u - |n|^2.

    `obs` may be a NormalFlowObs or a bare 2-vector n.
    """
    if isinstance(obs, NormalFlowObs):
        n, mag2 = obs.n, obs.mag2
    else:
        n = np.asarray(obs, dtype=float).reshape(2)
        mag2 = float(n @ n)
    u = np.asarray(u, dtype=float).reshape(2)
    return float(n @ u - mag2)


def motion_field(x, y, z, v):
    """Instantaneous image motion u = A(x) nu / Z + B(x) omega, (..., 2)."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DegenerateDepth("depth must be positive")
    ut = matrix_a(x, y) @ v.nu / z[..., None]
    ur = matrix_b(x, y) @ v.omega
    return ut + ur


def homography_flow(h, x, y):
    """Flow of a differential homography: first two components of
    (I - xhat e3^T) H xhat, shape (..., 2)."""
    h = h.h if isinstance(h, DiffHomography) else np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zero = np.zeros(np.broadcast(x, y).shape)
    xhat = np.stack([x + zero, y + zero, 1.0 + zero], axis=-1)
    w = xhat @ h.T
    return w[..., :2] - xhat[..., :2] * w[..., 2:3]


def pixel_to_calibrated(point_px, intr, gradient_px=None):
    """Convert a pixel location (and optionally a time-surface gradient in
    s/px) to calibrated coordinates.

    Points map contravariantly, ((px - c) / f); gradients of a scalar field
    map covariantly, (fx gx, fy gy), so that gradient-derived flows stay
    consistent with the calibrated motion field.
    """
    p = np.asarray(point_px, dtype=float).reshape(2)
    if not (0 <= p[0] < intr.width and 0 <= p[1] < intr.height):
        raise OutOfBounds(f"pixel {tuple(p)} outside {intr.width}x{intr.height}")
    point = CalibratedPoint((p[0] - intr.cx) / intr.fx, (p[1] - intr.cy) / intr.fy)
    if gradient_px is None:
        return point
    g = np.asarray(gradient_px, dtype=float).reshape(2)
    return point, np.array([intr.fx * g[0], intr.fy * g[1]])


def calibrated_to_pixel(point, intr):
    """Inverse of pixel_to_calibrated for locations."""
    if isinstance(point, CalibratedPoint):
        x, y = point.x, point.y
    else:
        x, y = np.asarray(point, dtype=float).reshape(2)
    return np.array([x * intr.fx + intr.cx, y * intr.fy + intr.cy])
