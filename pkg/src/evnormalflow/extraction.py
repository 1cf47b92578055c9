"""Normal flow extraction from time surfaces.

The time surface stores when each pixel last fired; where the surface is
locally planar, its spatial gradient g (s/px) is the reciprocal of the
image speed along the gradient direction, so the normal flow in pixel
units is n = g / |g|^2.  Local planes are fit with a small RANSAC to
reject neighbouring pixels belonging to other structures.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (BelowMinGradient, DegenerateConfiguration,
                     InsufficientSupport)
from .geometry import NormalFlowObs, pixel_to_calibrated

FLOWS_HEADER = ["t", "x_px", "y_px", "nx_cal", "ny_cal", "inliers", "rms"]


@dataclass(frozen=True)
class ExtractionConfig:
    """Tuning for plane fitting and gradient-to-flow conversion.

    spatial_window   side of the square fit neighbourhood, pixels (odd)
    temporal_window  events older than this are ignored, seconds
    plane_thresh     RANSAC inlier threshold on |t - plane(x, y)|, seconds
    plane_iters      RANSAC iterations per pixel
    min_support      minimum fired pixels and minimum consensus size
    max_flow         flows faster than this are rejected, px/s
    min_gradient     gradients flatter than this are rejected, s/px
    seed             base seed; each pixel derives its own substream
    """

    spatial_window: int = 7
    temporal_window: float = 0.04
    plane_thresh: float = 1e-5
    plane_iters: int = 50
    min_support: int = 10
    max_flow: float = 1e4
    min_gradient: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.spatial_window < 3 or self.spatial_window % 2 == 0:
            raise ValueError("spatial_window must be odd and >= 3")
        for name in ("temporal_window", "plane_thresh", "max_flow", "min_gradient"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.plane_iters < 1 or self.min_support < 3:
            raise ValueError("plane_iters >= 1 and min_support >= 3 required")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def gradient_floor(self):
        return max(self.min_gradient, 1.0 / self.max_flow)


@dataclass(frozen=True)
class PlaneFit:
    """Local plane t(q) ~ gradient . (q - center) + offset, gradient in s/px."""

    gradient: np.ndarray
    offset: float
    inlier_count: int
    rms: float


@dataclass(frozen=True)
class FlowRecord:
    """One emitted flow: pixel location, calibrated flow, fit diagnostics."""

    t: float
    x_px: float
    y_px: float
    nx_cal: float
    ny_cal: float
    inliers: int
    rms: float


@dataclass
class ExtractionStats:
    candidates: int = 0
    emitted: int = 0
    insufficient_support: int = 0
    degenerate_configuration: int = 0
    below_min_gradient: int = 0

    def to_dict(self):
        return dict(self.__dict__)


def fit_local_plane(ts, center_px, cfg):
    """RANSAC-fit t = a x + b y + c over fired pixels near center_px.

    Returns a PlaneFit whose gradient is (a, b) in s/px.  Raises
    InsufficientSupport when too few pixels fired recently (or consensus is
    below min_support) and DegenerateConfiguration when the support pixels
    are collinear.
    """
    px, py = int(center_px[0]), int(center_px[1])
    h, w = ts.shape
    half = cfg.spatial_window // 2
    x0, x1 = max(0, px - half), min(w, px + half + 1)
    y0, y1 = max(0, py - half), min(h, py + half + 1)
    patch = ts.timestamps[y0:y1, x0:x1]
    recent = patch > ts.t_ref - cfg.temporal_window
    ys, xs = np.nonzero(recent)
    k = ys.size
    if k < cfg.min_support:
        raise InsufficientSupport(f"{k} recent pixels < {cfg.min_support}")
    # Centered coordinates keep the 3x3 solves well conditioned.
    dx = xs + x0 - px
    dy = ys + y0 - py
    t = patch[ys, xs] - ts.t_ref
    design = np.stack([dx, dy, np.ones(k)], axis=1).astype(float)
    if np.linalg.matrix_rank(design, tol=1e-9) < 3:
        raise DegenerateConfiguration("support pixels are collinear")

    rng = np.random.default_rng([cfg.seed, py, px])
    # Distinct index triples for every iteration at once.
    order = np.argsort(rng.random((cfg.plane_iters, k)), axis=1)[:, :3]
    a3 = design[order]                      # (iters, 3, 3)
    b3 = t[order]                           # (iters, 3)
    dets = np.linalg.det(a3)
    ok = np.abs(dets) > 1e-12
    best_count, best_inliers = 0, None
    if np.any(ok):
        coefs = np.linalg.solve(a3[ok], b3[ok][..., None])[..., 0]  # (m, 3)
        resid = np.abs(design @ coefs.T - t[:, None])    # (k, m)
        inlier_mask = resid <= cfg.plane_thresh
        counts = inlier_mask.sum(axis=0)
        best = int(np.argmax(counts))                    # first max: lowest iter
        best_count = int(counts[best])
        best_inliers = inlier_mask[:, best]
    if best_count < cfg.min_support:
        raise InsufficientSupport(
            f"best consensus {best_count} < {cfg.min_support}")

    coef, *_ = np.linalg.lstsq(design[best_inliers], t[best_inliers], rcond=None)
    res = design[best_inliers] @ coef - t[best_inliers]
    rms = float(np.sqrt(np.mean(res ** 2)))
    return PlaneFit(gradient=coef[:2].copy(), offset=float(coef[2] + ts.t_ref),
                    inlier_count=best_count, rms=rms)


def normal_flow_from_gradient(gradient, gradient_floor):
    """n = g / |g|^2; rejects gradients below the resolvable floor."""
    g = np.asarray(gradient, dtype=float).reshape(2)
    norm2 = float(g @ g)
    if np.sqrt(norm2) < gradient_floor:
        raise BelowMinGradient(
            f"|gradient| {np.sqrt(norm2):.3g} below floor {gradient_floor:.3g}")
    return g / norm2


def _extract_chunk(ts, intr, cfg, pixels):
    records = []
    stats = ExtractionStats()
    floor = cfg.gradient_floor
    for px, py in pixels:
        stats.candidates += 1
        try:
            fit = fit_local_plane(ts, (px, py), cfg)
        except InsufficientSupport:
            stats.insufficient_support += 1
            continue
        except DegenerateConfiguration:
            stats.degenerate_configuration += 1
            continue
        try:
            normal_flow_from_gradient(fit.gradient, floor)
        except BelowMinGradient:
            stats.below_min_gradient += 1
            continue
        _, g_cal = pixel_to_calibrated((px, py), intr, gradient_px=fit.gradient)
        n_cal = g_cal / (g_cal @ g_cal)
        records.append(FlowRecord(
            t=float(ts.timestamps[py, px]), x_px=float(px), y_px=float(py),
            nx_cal=float(n_cal[0]), ny_cal=float(n_cal[1]),
            inliers=fit.inlier_count, rms=fit.rms))
        stats.emitted += 1
    return records, stats


def extract_normal_flows(ts, intr, cfg=None, n_jobs=1):
    """Extract calibrated normal flows from every recently fired pixel.

    Per-pixel failures are skipped and counted, never raised.  Output is
    ordered by pixel index (row-major) and is independent of n_jobs: each
    pixel's RANSAC uses a substream derived from (seed, pixel).
    """
    cfg = cfg or ExtractionConfig()
    if (intr.height, intr.width) != ts.shape:
        raise ValueError("intrinsics sensor size does not match surface shape")
    recent = ts.timestamps > ts.t_ref - cfg.temporal_window
    ys, xs = np.nonzero(recent)
    pixels = list(zip(xs.tolist(), ys.tolist()))
    if n_jobs <= 1 or len(pixels) < 2 * n_jobs:
        return _extract_chunk(ts, intr, cfg, pixels)
    chunks = np.array_split(np.arange(len(pixels)), n_jobs)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(
            lambda idx: _extract_chunk(ts, intr, cfg, [pixels[i] for i in idx]),
            chunks))
    records = [r for part, _ in parts for r in part]
    stats = ExtractionStats()
    for _, s in parts:
        for key, val in s.__dict__.items():
            setattr(stats, key, getattr(stats, key) + val)
    return records, stats


def records_to_obs(records, intr):
    """Rebuild NormalFlowObs (calibrated location + flow) from FlowRecords."""
    obs = []
    for r in records:
        point = pixel_to_calibrated((r.x_px, r.y_px), intr)
        n = np.array([r.nx_cal, r.ny_cal])
        obs.append(NormalFlowObs(x=point, n=n, t=r.t, mag2=float(n @ n)))
    return obs


def _fmt(v):
    return f"{v:.9g}"


def write_flows_csv(path, records, depths=None):
    """Write flows as CSV with 9 significant digits; optional depth column."""
    header = list(FLOWS_HEADER)
    if depths is not None:
        if len(depths) != len(records):
            raise ValueError("depths length must match records")
        header.append("Z")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, r in enumerate(records):
            row = [_fmt(r.t), _fmt(r.x_px), _fmt(r.y_px), _fmt(r.nx_cal),
                   _fmt(r.ny_cal), str(int(r.inliers)), _fmt(r.rms)]
            if depths is not None:
                row.append(_fmt(depths[i]))
            writer.writerow(row)


def read_flows_csv(path):
    """Read a flows CSV; returns (records, depths) with depths None when
    the file has no Z column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:7]] != FLOWS_HEADER:
            raise ValueError(f"unrecognized flows CSV header in {path}")
        has_z = len(header) > 7 and header[7].strip() in ("Z", "depth")
        records, depths = [], []
        for row in reader:
            if not row:
                continue
            records.append(FlowRecord(
                t=float(row[0]), x_px=float(row[1]), y_px=float(row[2]),
                nx_cal=float(row[3]), ny_cal=float(row[4]),
                inliers=int(row[5]), rms=float(row[6])))
            if has_z:
                depths.append(float(row[7]))
    return records, (np.array(depths) if has_z else None)
