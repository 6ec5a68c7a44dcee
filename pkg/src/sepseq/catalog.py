"""Flux-file and event-catalog ingestion.

Flux files are two-column CSVs (``timestamp,flux``, ISO-8601 UTC, one channel
per file) at a nominal 5-minute cadence. The catalog CSV lists one row per
event: ``id,s_class,flare_peak,onset,end,proton_file,xray_file`` where
``xray_file`` may be empty and empty ``onset``/``end`` mean "detect from the
proton series". Loading validates everything into immutable EventRecords.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import (
    ChannelMismatch,
    EmptySeries,
    GapTooLong,
    InsufficientContext,
    MalformedRow,
    NoEvent,
    NonMonotonicTime,
    NonPositiveFlux,
    OffGridTimestamp,
    OnsetMismatch,
)

CADENCE_S = 300
CADENCE = timedelta(seconds=CADENCE_S)
SPE_THRESHOLD_PFU = 10.0
CONTEXT_SAMPLES = 288  # 24 h of margin required on both sides of an event


class Channel(str, Enum):
    PROTON = "proton_ge10MeV"  # pfu
    XRAY = "xray_0p1_0p8nm"    # W m^-2


class SClass(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"


def parse_instant(text: str) -> datetime:
    """ISO-8601 UTC instant; accepts a trailing 'Z'."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_instant(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class RawFluxSeries:
    """Parsed flux rows before grid alignment: explicit timestamps."""

    channel: Channel
    timestamps: tuple[datetime, ...]
    values: np.ndarray


@dataclass(frozen=True)
class FluxSeries:
    """One channel on an exact 300 s grid; values linear, finite, positive."""

    channel: Channel
    start: datetime
    values: np.ndarray
    cadence_s: int = CADENCE_S

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.cadence_s != CADENCE_S:
            raise ChannelMismatch(f"cadence must be {CADENCE_S} s, got {self.cadence_s}")
        if values.ndim != 1 or values.size == 0:
            raise EmptySeries("flux series needs at least one sample")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise NonPositiveFlux("flux values must be finite and > 0")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end(self) -> datetime:
        return self.start + (len(self) - 1) * CADENCE

    def time_at(self, index: int) -> datetime:
        return self.start + index * CADENCE

    def index_at(self, instant: datetime) -> int:
        """Grid index of an on-grid instant inside the series."""
        delta = (instant - self.start).total_seconds()
        if delta % self.cadence_s != 0:
            raise OffGridTimestamp(f"{format_instant(instant)} is off the 300 s grid")
        idx = int(delta // self.cadence_s)
        if not 0 <= idx < len(self):
            raise OffGridTimestamp(f"{format_instant(instant)} outside the series")
        return idx

    def slice(self, i0: int, i1: int) -> "FluxSeries":
        """Sub-series covering grid indices [i0, i1] inclusive."""
        return FluxSeries(self.channel, self.time_at(i0), self.values[i0 : i1 + 1])


@dataclass(frozen=True)
class EventRecord:
    """A validated solar proton event with 24 h of context on both sides."""

    id: str
    s_class: SClass
    flare_peak: datetime
    onset: datetime
    end: datetime
    proton: FluxSeries
    xray: FluxSeries | None = None

    @property
    def onset_index(self) -> int:
        return self.proton.index_at(self.onset)

    @property
    def end_index(self) -> int:
        return self.proton.index_at(self.end)

    @property
    def duration_steps(self) -> int:
        return self.end_index - self.onset_index


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    s_class: SClass
    flare_peak: datetime
    onset: datetime | None
    end: datetime | None
    proton_file: str
    xray_file: str | None


@dataclass
class EventCatalog:
    entries: list[CatalogEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise MalformedRow("catalog ids must be unique")


# --- flux files --------------------------------------------------------------

def parse_flux_csv(stream: TextIO | str, channel: Channel) -> RawFluxSeries:
    """Parse a ``timestamp,flux`` CSV into a raw (ungridded) series."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptySeries("flux file has no header") from None
    if [h.strip() for h in header] != ["timestamp", "flux"]:
        raise MalformedRow(f"expected header 'timestamp,flux', got {header!r}")

    timestamps: list[datetime] = []
    values: list[float] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedRow(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            ts = parse_instant(row[0])
        except ValueError:
            raise MalformedRow(f"line {lineno}: bad timestamp {row[0]!r}") from None
        try:
            flux = float(row[1])
        except ValueError:
            raise MalformedRow(f"line {lineno}: bad flux {row[1]!r}") from None
        if not np.isfinite(flux) or flux <= 0.0:
            raise NonPositiveFlux(f"line {lineno}: flux {flux!r} must be > 0")
        timestamps.append(ts)
        values.append(flux)

    if not timestamps:
        raise EmptySeries("flux file has no data rows")
    return RawFluxSeries(channel, tuple(timestamps), np.asarray(values))


def write_flux_csv(series: FluxSeries, stream: TextIO) -> None:
    stream.write("timestamp,flux\n")
    for k, value in enumerate(series.values):
        # repr of a Python float round-trips the 64-bit value exactly
        stream.write(f"{format_instant(series.time_at(k))},{float(value)!r}\n")


def resample_to_cadence(raw: RawFluxSeries, max_gap: int = 6) -> FluxSeries:
    """Align a raw series to the exact 300 s grid anchored at its first row.

    Interior runs of at most ``max_gap`` missing samples are filled by linear
    interpolation in log10 space; longer runs reject the series. Timestamps
    must already sit on the grid (within 1 s).
    """
    n = len(raw.timestamps)
    if n == 0:
        raise EmptySeries("cannot resample an empty series")
    t0 = raw.timestamps[0]
    slots = np.empty(n, dtype=np.int64)
    for i, ts in enumerate(raw.timestamps):
        offset = (ts - t0).total_seconds()
        slot = round(offset / CADENCE_S)
        if abs(offset - slot * CADENCE_S) > 1.0:
            raise OffGridTimestamp(f"{format_instant(ts)} is off the 300 s grid")
        slots[i] = slot
    if np.any(np.diff(slots) <= 0):
        raise NonMonotonicTime("timestamps must be strictly increasing")

    total = int(slots[-1]) + 1
    grid = np.full(total, np.nan)
    grid[slots] = raw.values

    missing = np.isnan(grid)
    if missing.any():
        gap_starts = np.flatnonzero(missing & ~np.roll(missing, 1))
        gap_ends = np.flatnonzero(missing & ~np.roll(missing, -1))
        for a, b in zip(gap_starts, gap_ends):
            run = b - a + 1
            if run > max_gap:
                raise GapTooLong(
                    f"{run} consecutive samples missing at "
                    f"{format_instant(t0 + int(a) * CADENCE)} (max_gap={max_gap})"
                )
        log_values = np.log10(grid)
        known = np.flatnonzero(~missing)
        log_values[missing] = np.interp(
            np.flatnonzero(missing), known, log_values[known]
        )
        grid = 10.0 ** log_values

    return FluxSeries(raw.channel, t0, grid)


def load_flux_file(path: Path | str, channel: Channel, max_gap: int = 6) -> FluxSeries:
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_flux_csv(fh, channel)
    return resample_to_cadence(raw, max_gap=max_gap)


# --- event detection and assembly --------------------------------------------

def detect_onset_end(
    proton: FluxSeries, threshold: float = SPE_THRESHOLD_PFU
) -> tuple[datetime, datetime]:
    """First sample >= threshold, and the last sample of that first excursion.

    If the flux never falls back below the threshold the event runs to the end
    of the series.
    """
    above = proton.values >= threshold
    if not above.any():
        raise NoEvent(f"flux never reaches {threshold} pfu")
    onset_idx = int(np.argmax(above))
    below_after = np.flatnonzero(~above[onset_idx:])
    end_idx = len(proton) - 1 if below_after.size == 0 else onset_idx + int(below_after[0]) - 1
    return proton.time_at(onset_idx), proton.time_at(end_idx)


def validate_event(record: EventRecord, threshold: float = SPE_THRESHOLD_PFU) -> EventRecord:
    """Check every EventRecord invariant; returns the record on success."""
    if record.onset >= record.end:
        raise OnsetMismatch(f"{record.id}: onset must precede end")
    onset_idx = record.proton.index_at(record.onset)
    end_idx = record.proton.index_at(record.end)
    if record.proton.values[onset_idx] < threshold:
        raise OnsetMismatch(
            f"{record.id}: proton flux at onset is below {threshold} pfu"
        )
    if onset_idx < CONTEXT_SAMPLES:
        raise InsufficientContext(
            f"{record.id}: only {onset_idx} samples before onset, need {CONTEXT_SAMPLES}"
        )
    tail = len(record.proton) - 1 - end_idx
    if tail < CONTEXT_SAMPLES:
        raise InsufficientContext(
            f"{record.id}: only {tail} samples after end, need {CONTEXT_SAMPLES}"
        )
    if record.xray is not None:
        if (
            record.xray.start != record.proton.start
            or len(record.xray) != len(record.proton)
            or record.xray.cadence_s != record.proton.cadence_s
        ):
            raise ChannelMismatch(f"{record.id}: x-ray series must mirror the proton grid")
    return record


def load_event(
    entry: CatalogEntry,
    proton_path: Path | str,
    xray_path: Path | str | None = None,
    max_gap: int = 6,
    onset_tolerance_steps: int = 2,
) -> EventRecord:
    """Build a validated EventRecord from one catalog entry and its files."""
    proton = load_flux_file(proton_path, Channel.PROTON, max_gap=max_gap)
    xray = None
    if xray_path is not None:
        xray = load_flux_file(xray_path, Channel.XRAY, max_gap=max_gap)

    det_onset, det_end = detect_onset_end(proton)
    onset = entry.onset if entry.onset is not None else det_onset
    end = entry.end if entry.end is not None else det_end
    tol = onset_tolerance_steps * CADENCE
    if abs(onset - det_onset) > tol or abs(end - det_end) > tol:
        raise OnsetMismatch(
            f"{entry.id}: catalog onset/end ({format_instant(onset)}, "
            f"{format_instant(end)}) disagrees with detection "
            f"({format_instant(det_onset)}, {format_instant(det_end)}) "
            f"beyond {onset_tolerance_steps} samples"
        )

    record = EventRecord(
        id=entry.id,
        s_class=entry.s_class,
        flare_peak=entry.flare_peak,
        onset=onset,
        end=end,
        proton=proton,
        xray=xray,
    )
    return validate_event(record)


# --- catalog files ------------------------------------------------------------

CATALOG_HEADER = ["id", "s_class", "flare_peak", "onset", "end", "proton_file", "xray_file"]


def read_catalog(path: Path | str) -> EventCatalog:
    entries: list[CatalogEntry] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CATALOG_HEADER:
            raise MalformedRow(
                f"catalog header must be {','.join(CATALOG_HEADER)}, got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                s_class = SClass(row["s_class"].strip())
            except ValueError:
                raise MalformedRow(
                    f"line {lineno}: unknown s_class {row['s_class']!r}"
                ) from None
            try:
                entry = CatalogEntry(
                    id=row["id"].strip(),
                    s_class=s_class,
                    flare_peak=parse_instant(row["flare_peak"]),
                    onset=parse_instant(row["onset"]) if row["onset"].strip() else None,
                    end=parse_instant(row["end"]) if row["end"].strip() else None,
                    proton_file=row["proton_file"].strip(),
                    xray_file=row["xray_file"].strip() or None,
                )
            except ValueError:
                raise MalformedRow(f"line {lineno}: bad timestamp in catalog row") from None
            if not entry.id or not entry.proton_file:
                raise MalformedRow(f"line {lineno}: id and proton_file are required")
            entries.append(entry)
    return EventCatalog(entries)


def write_catalog(catalog: EventCatalog, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CATALOG_HEADER)
        for e in catalog.entries:
            writer.writerow(
                [
                    e.id,
                    e.s_class.value,
                    format_instant(e.flare_peak),
                    format_instant(e.onset) if e.onset else "",
                    format_instant(e.end) if e.end else "",
                    e.proton_file,
                    e.xray_file or "",
                ]
            )


def load_event_store(catalog_path: Path | str, max_gap: int = 6) -> list[EventRecord]:
    """Load every event referenced by a catalog, paths relative to it."""
    catalog_path = Path(catalog_path)
    base = catalog_path.parent
    catalog = read_catalog(catalog_path)
    records = []
    for entry in catalog.entries:
        xray = base / entry.xray_file if entry.xray_file else None
        records.append(load_event(entry, base / entry.proton_file, xray, max_gap=max_gap))
    return records


def events_from(source: Iterable[EventRecord] | Path | str) -> list[EventRecord]:
    """Accept either loaded records or a catalog path."""
    if isinstance(source, (str, Path)):
        return load_event_store(source)
    return list(source)
