"""Event-stream parsing and time-surface construction.

Events arrive as text lines "t x y p" with timestamps in seconds and
polarity tokens 0 (off, mapped to -1) and 1 (on, mapped to +1).  A time
surface holds, per pixel, the timestamp of the latest event inside a
temporal window ending at the reference time.
"""
from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, EventOrderError, ParseError

# Timestamps may regress by at most this much (sensor arbitration jitter)
# before the stream is considered corrupt.
JITTER_BUDGET = 1e-6

UNFIRED = -np.inf


@dataclass(frozen=True)
class Event:
    t: float
    x: int
    y: int
    p: int


def parse_event_stream(lines, width=None, height=None):
    """Yield Events from an iterable of "t x y p" lines.

    Blank lines and lines starting with '#' are skipped.  Malformed lines
    raise ParseError with the 1-based line number; out-of-range pixels
    raise BoundsError when sensor bounds are given.
    """
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", line_no)
        try:
            t = float(parts[0])
            x = int(parts[1])
            y = int(parts[2])
            p_tok = int(parts[3])
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        if not np.isfinite(t):
            raise ParseError(f"non-finite timestamp {parts[0]}", line_no)
        if p_tok == 0 or p_tok == -1:
            p = -1
        elif p_tok == 1:
            p = 1
        else:
            raise ParseError(f"polarity token must be 0 or 1, got {p_tok}", line_no)
        if width is not None and not (0 <= x < width):
            raise BoundsError(f"line {line_no}: x={x} outside [0, {width})")
        if height is not None and not (0 <= y < height):
            raise BoundsError(f"line {line_no}: y={y} outside [0, {height})")
        yield Event(t=t, x=x, y=y, p=p)


def read_events(path, width=None, height=None):
    """Read an event file (plain text or gzip) into a list of Events."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        return list(parse_event_stream(fh, width=width, height=height))


@dataclass
class TimeSurface:
    """Per-pixel latest event timestamp within (t_ref - window, t_ref].

    timestamps: (H, W) float64, -inf where no event fired.
    polarity:   (H, W) int8, sign of the latest event, 0 where unfired.
    """

    timestamps: np.ndarray
    polarity: np.ndarray
    t_ref: float
    temporal_window: float

    @property
    def shape(self):
        return self.timestamps.shape

    def fired_mask(self):
        return np.isfinite(self.timestamps)


def build_time_surface(events, t_ref, temporal_window, shape,
                       polarity=None, jitter=JITTER_BUDGET):
    """Fold an event sequence into a TimeSurface of the given (H, W) shape.

    Events outside (t_ref - temporal_window, t_ref] are skipped.  Streams
    must be time-ordered up to `jitter`; within the budget, out-of-order
    events are applied max-wise so the result is order-independent.
    `polarity` of +1/-1 restricts the surface to one polarity; the default
    folds both.
    """
    if temporal_window <= 0:
        raise ValueError("temporal window must be positive")
    h, w = shape
    ts = np.full((h, w), UNFIRED)
    pol = np.zeros((h, w), dtype=np.int8)
    t_lo = t_ref - temporal_window
    t_prev = -np.inf
    for ev in events:
        if ev.t < t_prev - jitter:
            raise EventOrderError(
                f"timestamp {ev.t} regresses more than {jitter}s past {t_prev}")
        t_prev = max(t_prev, ev.t)
        if polarity is not None and ev.p != polarity:
            continue
        if not (t_lo < ev.t <= t_ref):
            continue
        if not (0 <= ev.x < w and 0 <= ev.y < h):
            raise BoundsError(f"event pixel ({ev.x}, {ev.y}) outside {w}x{h}")
        if ev.t >= ts[ev.y, ev.x]:
            ts[ev.y, ev.x] = ev.t
            pol[ev.y, ev.x] = ev.p
    return TimeSurface(timestamps=ts, polarity=pol, t_ref=float(t_ref),
                       temporal_window=float(temporal_window))
