"""Event records to model-ready samples.

Pipeline per event: optional X-ray rescale, log10 transform, optional trend
smoothing (the "trend" variant smooths every channel *and* the target), then
sliding windows centered on each in-event time step. Fold assignment is
stratified by S-class with S3/S4 merged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
import json

import numpy as np

from .catalog import CADENCE, Channel, EventRecord, FluxSeries, SClass
from .errors import InsufficientContext, MalformedRow, WrongChannel

XRAY_SCALE_DIVISOR = 0.7   # GOES guideline correction
XRAY_SCALE_FACTOR = 1e7    # aligns X-ray dynamic range with proton flux


class Features(str, Enum):
    P = "P"          # proton only
    P_XR = "P_XR"    # proton + X-ray


class Variant(str, Enum):
    ORIG = "orig"
    TREND = "trend"


@dataclass(frozen=True)
class PreprocessSpec:
    features: Features = Features.P
    variant: Variant = Variant.ORIG
    half_window: int = 6          # +-30 min at 5-minute cadence
    log_floor: float = 1e-3       # linear units, applied after any rescale
    input_len: int = 288
    output_len: int = 288

    def __post_init__(self):
        if self.half_window < 0:
            raise ValueError("half_window must be >= 0")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be > 0")
        if self.input_len < 1 or self.output_len < 1:
            raise ValueError("window lengths must be >= 1")

    @property
    def feature_count(self) -> int:
        return 2 if self.features is Features.P_XR else 1


@dataclass(frozen=True)
class Sample:
    """One training pair: input window (rows end at ``center``) and target."""

    event_id: str
    center: datetime
    input: np.ndarray   # (input_len, F), log10 flux
    target: np.ndarray  # (output_len,), log10 proton flux

    def __post_init__(self):
        if not (np.all(np.isfinite(self.input)) and np.all(np.isfinite(self.target))):
            raise ValueError("sample entries must be finite")


def normalize_xray(series: FluxSeries) -> FluxSeries:
    """Divide by 0.7, multiply by 1e7; raw W/m^2 in, dimensionless out."""
    if series.channel is not Channel.XRAY:
        raise WrongChannel(f"normalize_xray got channel {series.channel.value}")
    values = series.values / XRAY_SCALE_DIVISOR * XRAY_SCALE_FACTOR
    return FluxSeries(Channel.XRAY, series.start, values)


def log_transform(values: np.ndarray, floor: float) -> np.ndarray:
    """log10 with a positive floor removing the singularity."""
    if floor <= 0.0:
        raise ValueError("floor must be > 0")
    return np.log10(np.maximum(np.asarray(values, dtype=np.float64), floor))


def trend_smooth(values: np.ndarray, half_window: int) -> np.ndarray:
    """Centered moving average over +-half_window, truncated at the edges."""
    if half_window < 0:
        raise ValueError("half_window must be >= 0")
    values = np.asarray(values, dtype=np.float64)
    if half_window == 0 or values.size == 0:
        return values.copy()
    kernel = np.ones(2 * half_window + 1)
    sums = np.convolve(values, kernel, mode="same")
    counts = np.convolve(np.ones_like(values), kernel, mode="same")
    return sums / counts


def event_channel_matrix(event: EventRecord, spec: PreprocessSpec) -> tuple[np.ndarray, np.ndarray]:
    """(n, F) matrix of preprocessed channels and the (n,) target series."""
    proton_log = log_transform(event.proton.values, spec.log_floor)
    columns = [proton_log]
    if spec.features is Features.P_XR:
        if event.xray is None:
            raise WrongChannel(f"{event.id}: P_XR features need an X-ray channel")
        xray_log = log_transform(normalize_xray(event.xray).values, spec.log_floor)
        columns.append(xray_log)
    if spec.variant is Variant.TREND:
        columns = [trend_smooth(c, spec.half_window) for c in columns]
    target_series = columns[0]  # trend targets are the smoothed log proton flux
    return np.stack(columns, axis=1), target_series


def make_windows(event: EventRecord, spec: PreprocessSpec) -> list[Sample]:
    """One sample per cadence step in [onset, end] inclusive."""
    matrix, target_series = event_channel_matrix(event, spec)
    onset_idx = event.onset_index
    end_idx = event.end_index
    n = matrix.shape[0]
    if onset_idx - (spec.input_len - 1) < 0:
        raise InsufficientContext(
            f"{event.id}: {onset_idx} samples before onset, need {spec.input_len - 1}"
        )
    if end_idx + spec.output_len > n - 1:
        raise InsufficientContext(
            f"{event.id}: {n - 1 - end_idx} samples after end, need {spec.output_len}"
        )
    samples = []
    for center in range(onset_idx, end_idx + 1):
        samples.append(
            Sample(
                event_id=event.id,
                center=event.proton.time_at(center),
                input=matrix[center - spec.input_len + 1 : center + 1],
                target=target_series[center + 1 : center + 1 + spec.output_len],
            )
        )
    return samples


# --- stratified folds ----------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def fold_of(self, event_id: str) -> int:
        return self.assignment[event_id]

    def members(self, fold: int) -> list[str]:
        return sorted(eid for eid, f in self.assignment.items() if f == fold)

    def split(self, events: list[EventRecord], fold: int) -> tuple[list[EventRecord], list[EventRecord]]:
        train = [e for e in events if self.assignment[e.id] != fold]
        test = [e for e in events if self.assignment[e.id] == fold]
        return train, test


def stratified_folds(events: list[EventRecord], k: int = 4, seed: int = 0) -> FoldPlan:
    """Deal shuffled strata round-robin; S4 events go first, to distinct folds.

    Strata are {S1}, {S2}, {S3 u S4}. Events are sorted by id before the
    seeded shuffle, so the plan depends only on (ids, classes, seed).
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(events) < k:
        raise ValueError(f"need at least {k} events, got {len(events)}")
    rng = np.random.default_rng(seed)

    def shuffled(ids: list[str]) -> list[str]:
        ids = sorted(ids)
        return [ids[i] for i in rng.permutation(len(ids))]

    s1 = [e.id for e in events if e.s_class is SClass.S1]
    s2 = [e.id for e in events if e.s_class is SClass.S2]
    s3 = [e.id for e in events if e.s_class is SClass.S3]
    s4 = [e.id for e in events if e.s_class is SClass.S4]

    # each stratum deals round-robin over its own permuted fold order, so
    # remainders do not pile onto low-numbered folds
    assignment: dict[str, int] = {}
    for ids in (shuffled(s1), shuffled(s2)):
        fold_order = [int(f) for f in rng.permutation(k)]
        for i, eid in enumerate(ids):
            assignment[eid] = fold_order[i % k]
    merged = shuffled(s4) + shuffled(s3)  # S4 first => distinct folds
    fold_order = [int(f) for f in rng.permutation(k)]
    for i, eid in enumerate(merged):
        assignment[eid] = fold_order[i % k]
    return FoldPlan(k=k, assignment=assignment, seed=seed)


# --- sample store ---------------------------------------------------------------

STORE_MAGIC = "sepseq-samples"
STORE_VERSION = 1


def save_samples(samples: list[Sample], spec: PreprocessSpec, path: Path | str) -> None:
    """Binary per-event store: one JSON manifest line, then raw float64.

    Per sample the blob holds the input matrix (row-major) followed by the
    target vector, little-endian.
    """
    if not samples:
        raise ValueError("no samples to save")
    event_ids = {s.event_id for s in samples}
    if len(event_ids) != 1:
        raise ValueError("a sample store holds one event")
    manifest = {
        "magic": STORE_MAGIC,
        "version": STORE_VERSION,
        "event_id": samples[0].event_id,
        "F": spec.feature_count,
        "count": len(samples),
        "input_len": spec.input_len,
        "output_len": spec.output_len,
        "centers": [s.center.strftime("%Y-%m-%dT%H:%M:%SZ") for s in samples],
        "spec": {
            "features": spec.features.value,
            "variant": spec.variant.value,
            "half_window": spec.half_window,
            "log_floor": spec.log_floor,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for s in samples:
            fh.write(s.input.astype("<f8").tobytes())
            fh.write(s.target.astype("<f8").tobytes())


def load_samples(path: Path | str) -> tuple[list[Sample], PreprocessSpec]:
    from .catalog import parse_instant

    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    manifest = json.loads(header.decode("utf-8"))
    if manifest.get("magic") != STORE_MAGIC or manifest.get("version") != STORE_VERSION:
        raise MalformedRow(f"{path}: not a sample store")
    spec = PreprocessSpec(
        features=Features(manifest["spec"]["features"]),
        variant=Variant(manifest["spec"]["variant"]),
        half_window=manifest["spec"]["half_window"],
        log_floor=manifest["spec"]["log_floor"],
        input_len=manifest["input_len"],
        output_len=manifest["output_len"],
    )
    per_sample = spec.input_len * spec.feature_count + spec.output_len
    expected = manifest["count"] * per_sample * 8
    if len(blob) != expected:
        raise MalformedRow(f"{path}: blob holds {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    samples = []
    for i in range(manifest["count"]):
        base = i * per_sample
        inp = flat[base : base + spec.input_len * spec.feature_count]
        tgt = flat[base + spec.input_len * spec.feature_count : base + per_sample]
        samples.append(
            Sample(
                event_id=manifest["event_id"],
                center=parse_instant(manifest["centers"][i]),
                input=inp.reshape(spec.input_len, spec.feature_count),
                target=tgt.copy(),
            )
        )
    return samples, spec


def windows_for_events(events: list[EventRecord], spec: PreprocessSpec) -> list[Sample]:
    samples: list[Sample] = []
    for event in events:
        samples.extend(make_windows(event, spec))
    return samples
