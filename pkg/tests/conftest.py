"""Shared fixtures: hand-built flux series and small synthetic events."""

from datetime import datetime, timezone

import numpy as np
import pytest

from sepseq.catalog import CADENCE, Channel, EventRecord, FluxSeries, SClass
from sepseq.synthetic import synth_event_set

T0 = datetime(2001, 6, 1, 0, 0, tzinfo=timezone.utc)


def flux_csv(values, start=T0, step_s=300):
    """Render a timestamp,flux CSV string from plain values."""
    lines = ["timestamp,flux"]
    for k, v in enumerate(values):
        t = start + k * CADENCE * (step_s // 300)
        lines.append(f"{t.strftime('%Y-%m-%dT%H:%M:%SZ')},{v}")
    return "\n".join(lines) + "\n"


def build_event(
    duration_steps=40,
    margin=300,
    peak=120.0,
    background=3.0,
    with_xray=True,
    event_id="ev-test",
    s_class=SClass.S2,
    seed=0,
):
    """A tent-shaped (in log space) event with exact margins, no noise."""
    rng = np.random.default_rng(seed)
    n = margin + duration_steps + 1 + margin
    values = np.full(n, background)
    onset_idx = margin
    end_idx = margin + duration_steps
    half = duration_steps / 2
    for j in range(duration_steps + 1):
        frac = 1.0 - abs(j - half) / max(half, 1)
        log_level = np.log10(12.0) + frac * (np.log10(peak) - np.log10(12.0))
        values[onset_idx + j] = 10.0 ** log_level
    proton = FluxSeries(Channel.PROTON, T0, values)
    xray = None
    if with_xray:
        xvals = 1e-7 * (values / background) ** 0.5 * (1 + 0.01 * rng.random(n))
        xray = FluxSeries(Channel.XRAY, T0, xvals)
    return EventRecord(
        id=event_id,
        s_class=s_class,
        flare_peak=T0 + (margin - 24) * CADENCE,
        onset=proton.time_at(onset_idx),
        end=proton.time_at(end_idx),
        proton=proton,
        xray=xray,
    )


@pytest.fixture
def tent_event():
    return build_event()


@pytest.fixture(scope="session")
def small_synth_events():
    """Four quick events (one per class) reused across test modules."""
    return synth_event_set(
        4,
        {SClass.S1: 1, SClass.S2: 1, SClass.S3: 1, SClass.S4: 1},
        seed=5,
        duration_range_s=(2 * 3600.0, 3 * 3600.0),
    )
