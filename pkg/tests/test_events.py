"""Event parsing and time-surface construction."""
import gzip

import numpy as np
import pytest

from evnormalflow import (BoundsError, Event, EventOrderError, ParseError,
                          build_time_surface, parse_event_stream, read_events)
from evnormalflow.events import JITTER_BUDGET, UNFIRED


def test_parse_single_line():
    events = list(parse_event_stream(["0.001 120 84 1"]))
    assert events == [Event(t=0.001, x=120, y=84, p=1)]


def test_parse_polarity_mapping():
    events = list(parse_event_stream(["0.1 0 0 0", "0.2 0 0 1", "0.3 0 0 -1"]))
    assert [e.p for e in events] == [-1, 1, -1]


def test_parse_missing_field():
    with pytest.raises(ParseError) as err:
        list(parse_event_stream(["0.001 120 84"]))
    assert "4 fields" in str(err.value)
    assert err.value.line_no == 1


def test_parse_error_reports_line_number():
    lines = ["0.1 1 1 1", "# comment", "", "garbage here x y"]
    with pytest.raises(ParseError) as err:
        list(parse_event_stream(lines))
    assert err.value.line_no == 4


def test_parse_empty_input():
    assert list(parse_event_stream([])) == []
    assert list(parse_event_stream(["# only a comment", "   "])) == []


def test_parse_bounds_check():
    with pytest.raises(BoundsError):
        list(parse_event_stream(["0.1 240 0 1"], width=240, height=180))
    with pytest.raises(BoundsError):
        list(parse_event_stream(["0.1 0 -1 1"], width=240, height=180))


def test_parse_bad_polarity_token():
    with pytest.raises(ParseError):
        list(parse_event_stream(["0.1 0 0 7"]))


def test_read_events_gzip(tmp_path):
    path = tmp_path / "events.txt.gz"
    with gzip.open(path, "wt") as fh:
        fh.write("# header\n0.5 3 4 1\n0.6 3 4 0\n")
    events = read_events(path)
    assert len(events) == 2 and events[1].p == -1


def test_surface_single_event():
    surface = build_time_surface([Event(1.0, 5, 5, 1)], t_ref=1.0,
                                 temporal_window=0.04, shape=(10, 10))
    assert surface.timestamps[5, 5] == 1.0
    assert surface.polarity[5, 5] == 1
    mask = surface.fired_mask()
    assert mask.sum() == 1
    assert surface.timestamps[0, 0] == UNFIRED


def test_surface_overwrite_same_pixel():
    events = [Event(0.99, 5, 5, 1), Event(1.0, 5, 5, -1)]
    surface = build_time_surface(events, 1.0, 0.04, (10, 10))
    assert surface.timestamps[5, 5] == 1.0
    assert surface.polarity[5, 5] == -1


def test_surface_window_excludes_old_events():
    surface = build_time_surface([Event(0.95, 5, 5, 1)], 1.0, 0.04, (10, 10))
    assert not surface.fired_mask().any()


def test_surface_polarity_filter():
    events = [Event(0.99, 1, 1, 1), Event(0.995, 2, 2, -1)]
    pos = build_time_surface(events, 1.0, 0.04, (5, 5), polarity=1)
    neg = build_time_surface(events, 1.0, 0.04, (5, 5), polarity=-1)
    assert pos.fired_mask().sum() == 1 and pos.timestamps[1, 1] == 0.99
    assert neg.fired_mask().sum() == 1 and neg.timestamps[2, 2] == 0.995


def test_surface_jitter_tolerated_and_order_independent():
    # a regression inside the budget is accepted and applied max-wise
    events = [Event(1.0, 5, 5, 1), Event(1.0 - 0.5 * JITTER_BUDGET, 5, 5, -1)]
    surface = build_time_surface(events, 1.0, 0.04, (10, 10))
    assert surface.timestamps[5, 5] == 1.0
    assert surface.polarity[5, 5] == 1


def test_surface_jitter_budget_enforced():
    events = [Event(1.0, 5, 5, 1), Event(0.9, 6, 6, 1)]
    with pytest.raises(EventOrderError):
        build_time_surface(events, 1.0, 0.04, (10, 10))


def test_surface_rejects_out_of_bounds_event():
    with pytest.raises(BoundsError):
        build_time_surface([Event(1.0, 12, 0, 1)], 1.0, 0.04, (10, 10))


def test_surface_idempotent_rebuild():
    rng = np.random.default_rng(11)
    events = [Event(t=float(t), x=int(x), y=int(y), p=int(p))
              for t, x, y, p in zip(np.sort(rng.uniform(0.9, 1.0, 200)),
                                    rng.integers(0, 20, 200),
                                    rng.integers(0, 20, 200),
                                    rng.choice([-1, 1], 200))]
    a = build_time_surface(events, 1.0, 0.1, (20, 20))
    b = build_time_surface(events, 1.0, 0.1, (20, 20))
    assert np.array_equal(a.timestamps, b.timestamps)
    assert np.array_equal(a.polarity, b.polarity)


def test_surface_append_monotone():
    rng = np.random.default_rng(12)
    events = [Event(t=float(t), x=int(x), y=int(y), p=1)
              for t, x, y in zip(np.sort(rng.uniform(0.9, 0.99, 100)),
                                 rng.integers(0, 20, 100),
                                 rng.integers(0, 20, 100))]
    base = build_time_surface(events, 1.0, 0.1, (20, 20))
    extended = build_time_surface(events + [Event(0.995, 3, 3, 1)], 1.0, 0.1,
                                  (20, 20))
    assert np.all(extended.timestamps >= base.timestamps)


def test_surface_timestamps_bounded_by_t_ref():
    events = [Event(0.99, 1, 1, 1), Event(1.0, 2, 2, 1), Event(1.01, 3, 3, 1)]
    surface = build_time_surface(events, 1.0, 0.04, (5, 5))
    fired = surface.timestamps[surface.fired_mask()]
    assert np.all(fired <= surface.t_ref)
    assert not np.isfinite(surface.timestamps[3, 3])  # future event skipped


def test_surface_requires_positive_window():
    with pytest.raises(ValueError):
        build_time_surface([], 1.0, 0.0, (5, 5))
