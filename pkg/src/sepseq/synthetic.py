"""Synthetic well-connected proton events with controllable class mix.

The noiseless pulse is a Weibull-density shape scaled to a requested peak on
top of a constant background, with multiplicative log-normal noise per
sample. The X-ray channel is a compressed, time-advanced copy of the pulse in
raw W/m^2 units so that the standard preprocessing (divide by 0.7, multiply
by 1e7, log) lands it in a proton-like dynamic range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np
from scipy.optimize import brentq

from .catalog import (
    CADENCE,
    CADENCE_S,
    CONTEXT_SAMPLES,
    Channel,
    EventCatalog,
    CatalogEntry,
    EventRecord,
    FluxSeries,
    SClass,
    SPE_THRESHOLD_PFU,
    detect_onset_end,
    validate_event,
    write_catalog,
    write_flux_csv,
)
from .errors import InvalidMix, InvalidParams, NoEvent, OnsetMismatch

MARGIN_PAD = 12  # extra samples beyond the 288 required, absorbs noise jitter

XRAY_BACKGROUND = 5e-8     # W/m^2, quiet-sun level
XRAY_COMPRESSION = 0.6     # exponent compressing the pulse's dynamic range


@dataclass(frozen=True)
class SynthProfileParams:
    peak: float                      # pfu, noiseless pulse maximum above background
    rise_scale_s: float              # Weibull time scale tau, seconds
    shape: float                     # Weibull shape k > 1
    onset_time: datetime             # pulse start t0 (flux leaves the background)
    duration_s: float                # pulse window after t0; must contain the decay below 10 pfu
    background: float = 0.1          # pfu
    noise_sigma: float = 0.05        # log10 units
    xray_peak: float = 5e-5          # W/m^2
    xray_lead_s: float = 7200.0      # X-ray peak leads the proton peak

    def __post_init__(self):
        if self.peak <= SPE_THRESHOLD_PFU:
            raise InvalidParams(f"peak must exceed {SPE_THRESHOLD_PFU} pfu")
        if self.shape <= 1.0:
            raise InvalidParams("shape must be > 1 for a rise-then-decay pulse")
        if self.noise_sigma < 0.0:
            raise InvalidParams("noise_sigma must be >= 0")
        if self.background <= 0.0 or self.background >= SPE_THRESHOLD_PFU:
            raise InvalidParams("background must sit in (0, threshold)")
        if self.rise_scale_s <= 0.0 or self.duration_s <= 0.0:
            raise InvalidParams("rise_scale and duration must be positive")
        if self.xray_peak <= 0.0 or self.xray_lead_s < 0.0:
            raise InvalidParams("x-ray parameters must be positive")


def _pulse(u: np.ndarray, shape: float) -> np.ndarray:
    """Weibull-density shape w(u) = u^(k-1) exp(-u^k) for u > 0, else 0."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    pos = u > 0.0
    up = u[pos]
    out[pos] = up ** (shape - 1.0) * np.exp(-(up**shape))
    return out


def pulse_peak_position(shape: float) -> float:
    """Analytic maximizer u* = ((k-1)/k)^(1/k) of the pulse shape."""
    return ((shape - 1.0) / shape) ** (1.0 / shape)


def threshold_crossings(shape: float, ratio: float) -> tuple[float, float]:
    """(u_up, u_down) where the unit-peak pulse crosses ``ratio`` in (0, 1)."""
    if not 0.0 < ratio < 1.0:
        raise InvalidParams(f"crossing ratio {ratio} outside (0, 1)")
    u_star = pulse_peak_position(shape)
    w_star = float(_pulse(np.array([u_star]), shape)[0])

    def g(u: float) -> float:
        return float(_pulse(np.array([u]), shape)[0]) / w_star - ratio

    hi = u_star
    while g(hi) >= 0.0:
        hi *= 2.0
    u_down = brentq(g, u_star, hi)
    lo = u_star * 1e-9
    while g(lo) >= 0.0:  # extremely shallow shapes
        lo *= 0.5
    u_up = brentq(g, lo, u_star)
    return float(u_up), float(u_down)


def synth_profile(
    params: SynthProfileParams, seed: int
) -> tuple[FluxSeries, FluxSeries]:
    """Generate (proton, xray) series on the 5-minute grid around one pulse.

    The grid spans ``CONTEXT_SAMPLES + MARGIN_PAD`` samples before
    ``onset_time`` and the same margin after ``onset_time + duration``; the
    noiseless profile must decay below the SPE threshold within ``duration``
    so a detected event always keeps full margins.
    """
    tau = params.rise_scale_s
    ratio = (SPE_THRESHOLD_PFU - params.background) / params.peak
    _, u_down = threshold_crossings(params.shape, ratio)
    if u_down * tau > params.duration_s:
        raise InvalidParams(
            f"profile stays above {SPE_THRESHOLD_PFU} pfu for {u_down * tau:.0f} s, "
            f"longer than duration {params.duration_s:.0f} s"
        )

    margin = CONTEXT_SAMPLES + MARGIN_PAD
    n_event = math.ceil(params.duration_s / CADENCE_S)
    n = margin + n_event + margin + 1
    start = params.onset_time - margin * CADENCE
    offsets = np.arange(n) * float(CADENCE_S) - margin * CADENCE_S  # seconds from t0

    u = offsets / tau
    u_star = pulse_peak_position(params.shape)
    w_star = float(_pulse(np.array([u_star]), params.shape)[0])
    proton_clean = params.background + params.peak * _pulse(u, params.shape) / w_star

    u_x = (offsets + params.xray_lead_s) / tau
    xray_clean = XRAY_BACKGROUND + params.xray_peak * (
        _pulse(u_x, params.shape) / w_star
    ) ** XRAY_COMPRESSION

    rng = np.random.default_rng(seed)
    proton = proton_clean * 10.0 ** (params.noise_sigma * rng.standard_normal(n))
    xray = xray_clean * 10.0 ** (params.noise_sigma * rng.standard_normal(n))
    return (
        FluxSeries(Channel.PROTON, start, proton),
        FluxSeries(Channel.XRAY, start, xray),
    )


# --- event sets ---------------------------------------------------------------

CLASS_DECADES = {
    SClass.S1: (1.0, 2.0),
    SClass.S2: (2.0, 3.0),
    SClass.S3: (3.0, 4.0),
    SClass.S4: (4.0, 5.0),
}


def s_class_for_peak(peak_pfu: float) -> SClass:
    """NOAA S-scale decade of a peak flux (S4 covers everything >= 1e4)."""
    if peak_pfu < 10.0:
        raise NoEvent(f"peak {peak_pfu} pfu is below the SPE threshold")
    decade = min(int(math.log10(peak_pfu)), 4)
    return {1: SClass.S1, 2: SClass.S2, 3: SClass.S3, 4: SClass.S4}[decade]


_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


def synth_event_set(
    n: int,
    class_mix: dict[SClass, int],
    seed: int,
    duration_range_s: tuple[float, float] = (3 * 3600.0, 16 * 3600.0),
    noise_sigma: float = 0.05,
    id_prefix: str = "synth",
) -> list[EventRecord]:
    """Generate ``n`` validated events with the requested per-class counts."""
    counts = {SClass(k): int(v) for k, v in class_mix.items()}
    if any(v < 0 for v in counts.values()) or sum(counts.values()) != n:
        raise InvalidMix(f"class mix {class_mix} does not sum to {n}")

    rng = np.random.default_rng(seed)
    events: list[EventRecord] = []
    index = 0
    for s_class in (SClass.S1, SClass.S2, SClass.S3, SClass.S4):
        lo_dec, hi_dec = CLASS_DECADES[s_class]
        for _ in range(counts.get(s_class, 0)):
            record = None
            for _attempt in range(50):
                # keep S1 peaks clear of the threshold so noise cannot erase the event
                log_peak = rng.uniform(lo_dec + 0.15 if s_class is SClass.S1 else lo_dec, hi_dec)
                peak = 10.0**log_peak
                shape = rng.uniform(1.6, 3.2)
                above_s = rng.uniform(*duration_range_s)
                background = rng.uniform(2.5, 6.0)
                xray_peak = 10.0 ** rng.uniform(-5.0, -3.7)
                lead_s = rng.uniform(1.0, 4.0) * 3600.0
                profile_seed = int(rng.integers(0, 2**63 - 1))

                ratio = (SPE_THRESHOLD_PFU - background) / peak
                u_up, u_down = threshold_crossings(shape, ratio)
                tau = above_s / (u_down - u_up)
                params = SynthProfileParams(
                    peak=peak,
                    rise_scale_s=tau,
                    shape=shape,
                    onset_time=_EPOCH + timedelta(days=7 * index),
                    duration_s=tau * u_down + 1800.0,
                    background=background,
                    noise_sigma=noise_sigma,
                    xray_peak=xray_peak,
                    xray_lead_s=lead_s,
                )
                proton, xray = synth_profile(params, profile_seed)
                try:
                    onset, end = detect_onset_end(proton)
                    record = validate_event(
                        EventRecord(
                            id=f"{id_prefix}-{index:03d}",
                            s_class=s_class,
                            flare_peak=xray.time_at(int(np.argmax(xray.values))),
                            onset=onset,
                            end=end,
                            proton=proton,
                            xray=xray,
                        )
                    )
                    break
                except (NoEvent, OnsetMismatch):
                    record = None  # noise collapsed the excursion; redraw
            if record is None:
                raise InvalidParams(
                    f"could not generate a valid {s_class.value} event after 50 draws"
                )
            events.append(record)
            index += 1
    return events


def write_event_set(events: list[EventRecord], out_dir) -> EventCatalog:
    """Write catalog.csv plus per-event flux CSVs in the catalog formats."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for event in events:
        proton_file = f"{event.id}_proton.csv"
        xray_file = f"{event.id}_xray.csv" if event.xray is not None else None
        with open(out_dir / proton_file, "w", encoding="utf-8") as fh:
            write_flux_csv(event.proton, fh)
        if xray_file:
            with open(out_dir / xray_file, "w", encoding="utf-8") as fh:
                write_flux_csv(event.xray, fh)
        entries.append(
            CatalogEntry(
                id=event.id,
                s_class=event.s_class,
                flare_peak=event.flare_peak,
                onset=event.onset,
                end=event.end,
                proton_file=proton_file,
                xray_file=xray_file,
            )
        )
    catalog = EventCatalog(entries)
    write_catalog(catalog, out_dir / "catalog.csv")
    return catalog
