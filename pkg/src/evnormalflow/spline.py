"""Continuous-time motion trajectories as uniform cubic B-splines.

A trajectory with control points c_0..c_{n-1}, knot origin t0 and spacing
dt evaluates at s = (t - t0) / dt inside segment j = floor(s) - 1 as

    theta(t) = sum_m B_m(u) c_{j+m},   u = s - floor(s),

with the uniform cubic basis

    B(u) = 1/6 [(1-u)^3, 3u^3 - 6u^2 + 4, -3u^3 + 3u^2 + 3u + 1, u^3].

Full cubic support exists on [t0 + dt, t0 + (n-2) dt).  The normal-flow
constraint is linear in the control points, so trajectory fitting is one
sparse linear least-squares problem, optionally robustified by Huber
iteratively-reweighted least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain, SolverDegeneracy, UnderDetermined
from .geometry import obs_arrays
from .solvers import ModelKind, RansacConfig, build_rows, ransac_estimate

DEFAULT_KNOT_SPACING = 0.05

_SPLINE_KINDS = (ModelKind.ANGULAR_VELOCITY, ModelKind.SIX_DOF)


def basis_weights(u):
    """Uniform cubic B-spline weights for local coordinate(s) u in [0, 1)."""
    u = np.asarray(u, dtype=float)
    u2 = u * u
    u3 = u2 * u
    return np.stack([
        (1.0 - u) ** 3 / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ], axis=-1)


@dataclass(frozen=True)
class SplineTrajectory:
    """control_points has shape (n_ctrl, dim), n_ctrl >= 4."""

    control_points: np.ndarray
    t0: float
    dt: float

    def __post_init__(self):
        cp = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        if cp.shape[0] < 4:
            raise ValueError("need at least 4 control points")
        if self.dt <= 0:
            raise ValueError("knot spacing must be positive")
        object.__setattr__(self, "control_points", cp)

    @property
    def n_ctrl(self):
        return self.control_points.shape[0]

    @property
    def dim(self):
        return self.control_points.shape[1]

    @property
    def n_segments(self):
        return self.n_ctrl - 3

    @property
    def domain(self):
        return (self.t0 + self.dt, self.t0 + (self.n_ctrl - 2) * self.dt)


def _locate(traj, t):
    """Map times to (segment index, local u); raises OutOfDomain."""
    t = np.asarray(t, dtype=float)
    s = (t - traj.t0) / traj.dt
    # Snap away float rounding so the advertised domain bounds behave as
    # written (inclusive below, exclusive above).
    snap = np.rint(s)
    tol = 32.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(snap))
    s = np.where(np.abs(s - snap) <= tol, snap, s)
    lo, hi = 1.0, traj.n_ctrl - 2.0
    if np.any(s < lo) or np.any(s >= hi):
        bad = t[(s < lo) | (s >= hi)]
        raise OutOfDomain(
            f"t={np.atleast_1d(bad)[0]} outside [{traj.domain[0]}, {traj.domain[1]})")
    base = np.floor(s)
    return base.astype(int) - 1, s - base


def evaluate(traj, t):
    """Evaluate the trajectory; returns (dim,) for scalar t, else (T, dim)."""
    scalar = np.ndim(t) == 0
    seg, u = _locate(traj, np.atleast_1d(t))
    w = basis_weights(u)                                   # (T, 4)
    idx = seg[:, None] + np.arange(4)                      # (T, 4)
    vals = np.einsum("tm,tmd->td", w, traj.control_points[idx])
    return vals[0] if scalar else vals


def trajectory_covering(t_min, t_max, dt):
    """(t0, n_ctrl) of the smallest uniform spline whose evaluable domain
    contains [t_min, t_max]."""
    if t_max < t_min:
        raise ValueError("t_max < t_min")
    span = t_max - t_min
    # Domain is [t_min, t_min + (n-3) dt); floor + 4 is the smallest n with
    # (n-3) dt strictly above the span.
    n_ctrl = int(math.floor(span / dt + 1e-12)) + 4
    return t_min - dt, n_ctrl


@dataclass(frozen=True)
class SplineFitProblem:
    """Observations plus the model kind evaluated along the trajectory.

    Only ANGULAR_VELOCITY (dim 3) and SIX_DOF (dim 6, needs per-observation
    depths) vary meaningfully within an event window.
    """

    observations: tuple
    kind: ModelKind
    depths: np.ndarray | None = None
    robust: bool = True
    huber_scale: float | None = None
    max_rounds: int = 10
    reg_weight: float = 1e-6

    def __post_init__(self):
        if self.kind not in _SPLINE_KINDS:
            raise ValueError(f"spline fitting supports {_SPLINE_KINDS}, got {self.kind}")
        object.__setattr__(self, "observations", tuple(self.observations))
        if self.depths is not None:
            d = np.asarray(self.depths, dtype=float).reshape(-1)
            if d.size != len(self.observations):
                raise ValueError("depths length must match observations")
            object.__setattr__(self, "depths", d)


@dataclass
class SplineFitReport:
    rms: float
    segment_counts: np.ndarray
    starved_segments: list
    starved_control_points: list
    irls_rounds: int
    objective_history: list


def _sorted_problem(problem):
    """Fixed accumulation order: sort by (t, x, y) so results do not depend
    on how the caller ordered the observations."""
    key = sorted(range(len(problem.observations)),
                 key=lambda i: (problem.observations[i].t,
                                problem.observations[i].x.x,
                                problem.observations[i].x.y))
    obs = [problem.observations[i] for i in key]
    depths = problem.depths[key] if problem.depths is not None else None
    return obs, depths


def _design(obs, depths, kind, traj):
    """Sparse-by-structure dense design matrix over flattened control points.

    Rows are scaled by 1/|n|: noise on the flow components produces
    constraint noise proportional to the flow magnitude, so this is the
    inverse-variance weighting.  It also keeps slow- and fast-motion spans
    of a trajectory equally constrained per observation.
    """
    rows, rhs = build_rows(obs, kind, depths=depths)
    _, n, _, _ = obs_arrays(obs)
    inv = 1.0 / np.maximum(np.linalg.norm(n, axis=1), 1e-12)
    rows = rows * inv[:, None]
    rhs = rhs * inv
    t = np.array([o.t for o in obs])
    seg, u = _locate(traj, t)
    w = basis_weights(u)                                   # (K, 4)
    k = len(obs)
    n_ctrl, dim = traj.n_ctrl, traj.dim
    a = np.zeros((k, n_ctrl * dim))
    cols = (np.arange(dim)[None, None, :]
            + (seg[:, None, None] + np.arange(4)[None, :, None]) * dim)
    np.put_along_axis(a, cols.reshape(k, -1),
                      (w[:, :, None] * rows[:, None, :]).reshape(k, -1), axis=1)
    return a, rhs, seg


def _starved(seg_counts, n_ctrl):
    """Control points all of whose supporting segments are empty."""
    n_seg = seg_counts.size
    starved = []
    for i in range(n_ctrl):
        segs = range(max(0, i - 3), min(n_seg, i + 1))
        if all(seg_counts[j] == 0 for j in segs):
            starved.append(i)
    return starved


def _regularization_rows(starved, n_ctrl, dim, weight):
    rows = []
    for i in starved:
        row = np.zeros(n_ctrl)
        if 0 < i < n_ctrl - 1:
            row[i - 1], row[i], row[i + 1] = -0.5, 1.0, -0.5
        elif i == 0:
            row[0], row[1] = 1.0, -1.0
        else:
            row[i], row[i - 1] = 1.0, -1.0
        rows.append(row * weight)
    if not rows:
        return np.zeros((0, n_ctrl * dim))
    base = np.array(rows)
    return np.kron(base, np.eye(dim))


def _huber_objective(r, delta):
    a = np.abs(r)
    quad = a <= delta
    return float(np.sum(np.where(quad, 0.5 * r * r, delta * a - 0.5 * delta * delta)))


def fit(problem, init):
    """Refine an initial trajectory against the normal-flow constraint.

    Plain linear least squares over control points, or Huber IRLS when
    problem.robust: weights w_i = min(1, delta/|r_i|) with delta frozen
    during each sweep of reweighted solves, so every solve can only
    decrease the Huber objective.  With the automatic scale (3x the median
    absolute residual, in the flow units produced by _design), the scale is
    re-frozen from the converged residuals and the sweep repeated while
    that keeps shrinking; lowering delta at fixed parameters also lowers
    the objective, so the recorded history stays monotone across sweeps.
    An explicit problem.huber_scale is honoured as-is (single sweep).
    """
    obs, depths = _sorted_problem(problem)
    n_ctrl, dim = init.n_ctrl, init.dim
    if dim != problem.kind.param_dim:
        raise ValueError(f"init dim {dim} != model dim {problem.kind.param_dim}")
    if len(obs) < n_ctrl * dim:
        raise UnderDetermined(
            f"{len(obs)} observations < {n_ctrl * dim} unknowns")

    a, rhs, seg = _design(obs, depths, problem.kind, init)
    seg_counts = np.bincount(seg, minlength=n_ctrl - 3)
    starved_cp = _starved(seg_counts, n_ctrl)
    row_scale = float(np.median(np.linalg.norm(a, axis=1))) or 1.0
    reg = _regularization_rows(starved_cp, n_ctrl, dim,
                               problem.reg_weight * row_scale)
    reg_rhs = np.zeros(len(reg))

    theta = init.control_points.reshape(-1).copy()
    r = a @ theta - rhs
    history = []
    if not problem.robust:
        full_a = np.concatenate([a, reg]) if len(reg) else a
        full_b = np.concatenate([rhs, reg_rhs]) if len(reg) else rhs
        theta, *_ = np.linalg.lstsq(full_a, full_b, rcond=None)
        rounds = 1
    else:
        auto_scale = problem.huber_scale is None
        delta = (3.0 * float(np.median(np.abs(r))) if auto_scale
                 else problem.huber_scale)
        if delta <= 0:
            delta = np.inf
        history.append(_huber_objective(r, delta)
                       + 0.5 * float(np.sum((reg @ theta) ** 2)))
        rounds = 0
        for _sweep in range(6 if auto_scale else 1):
            for _ in range(problem.max_rounds):
                wts = np.minimum(1.0, delta / np.maximum(np.abs(r), 1e-300))
                sw = np.sqrt(wts)
                full_a = np.concatenate([a * sw[:, None], reg]) if len(reg) else a * sw[:, None]
                full_b = np.concatenate([rhs * sw, reg_rhs]) if len(reg) else rhs * sw
                theta_new, *_ = np.linalg.lstsq(full_a, full_b, rcond=None)
                rounds += 1
                r = a @ theta_new - rhs
                obj = _huber_objective(r, delta) + 0.5 * float(np.sum((reg @ theta_new) ** 2))
                history.append(obj)
                theta = theta_new
                if len(history) >= 2 and history[-2] - obj <= 1e-12 * max(1.0, obj):
                    break
            if not auto_scale:
                break
            new_delta = 3.0 * float(np.median(np.abs(r)))
            if not 0.0 < new_delta < 0.9 * delta:
                break
            delta = new_delta
            history.append(_huber_objective(r, delta)
                           + 0.5 * float(np.sum((reg @ theta) ** 2)))
    r = a @ theta - rhs
    traj = SplineTrajectory(theta.reshape(n_ctrl, dim), t0=init.t0, dt=init.dt)
    report = SplineFitReport(
        rms=float(np.sqrt(np.mean(r ** 2))), segment_counts=seg_counts,
        starved_segments=[int(j) for j in np.nonzero(seg_counts == 0)[0]],
        starved_control_points=starved_cp, irls_rounds=rounds,
        objective_history=history)
    return traj, report


@dataclass
class SplineInitReport:
    segment_estimates: np.ndarray
    good_segments: list
    filled_segments: list


def init_from_linear(observations, kind, dt=DEFAULT_KNOT_SPACING, cfg=None,
                     depths=None, t0=None, n_ctrl=None):
    """Initial trajectory from independent per-knot-interval RANSAC fits.

    Each segment's observations get a linear RANSAC fit; degenerate or
    empty segments are filled by averaging the nearest good neighbours and
    flagged.  Control points then come from a small regularized system
    asking the spline to pass through the segment estimates at segment
    midpoints (for constant motion this reproduces the single linear
    estimate at every control point).
    """
    if kind not in _SPLINE_KINDS:
        raise ValueError(f"spline fitting supports {_SPLINE_KINDS}, got {kind}")
    if not observations:
        raise UnderDetermined("no observations")
    cfg = cfg or RansacConfig()
    t = np.array([o.t for o in observations])
    if t0 is None or n_ctrl is None:
        t0, n_ctrl = trajectory_covering(float(t.min()), float(t.max()), dt)
    dim = kind.param_dim
    n_seg = n_ctrl - 3
    depths = None if depths is None else np.asarray(depths, dtype=float)

    s = (t - t0) / dt
    seg = np.clip(np.floor(s).astype(int) - 1, 0, n_seg - 1)
    estimates = np.full((n_seg, dim), np.nan)
    good = []
    for j in range(n_seg):
        idx = np.nonzero(seg == j)[0]
        if idx.size >= 2 * kind.minimal_samples:
            try:
                report = ransac_estimate(
                    [observations[i] for i in idx], kind, cfg,
                    depths=None if depths is None else depths[idx])
                estimates[j] = report.theta
                good.append(j)
            except SolverDegeneracy:
                pass
    if not good:
        raise UnderDetermined("no segment supported a linear fit")
    filled = [j for j in range(n_seg) if j not in good]
    good_arr = np.array(good)
    for j in filled:
        below = good_arr[good_arr < j]
        above = good_arr[good_arr > j]
        neighbours = [estimates[below[-1]]] if below.size else []
        neighbours += [estimates[above[0]]] if above.size else []
        estimates[j] = np.mean(neighbours, axis=0)

    # Interpolation rows: spline(segment midpoint) = estimate.
    w_mid = basis_weights(0.5)
    a = np.zeros((n_seg, n_ctrl))
    for j in range(n_seg):
        a[j, j:j + 4] = w_mid
    lam = 1e-6
    d1 = np.diff(np.eye(n_ctrl), axis=0)
    d2 = np.diff(np.eye(n_ctrl), n=2, axis=0)
    full = np.concatenate([a, lam * d1, lam * d2])
    rhs = np.concatenate([estimates,
                          np.zeros((len(d1) + len(d2), dim))])
    cp, *_ = np.linalg.lstsq(full, rhs, rcond=None)
    traj = SplineTrajectory(cp, t0=t0, dt=dt)
    return traj, SplineInitReport(segment_estimates=estimates,
                                  good_segments=good, filled_segments=filled)
