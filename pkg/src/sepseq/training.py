"""Mini-batch training loop and checkpoint files."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import CorruptCheckpoint, NonFiniteLoss, ShapeMismatch, VersionMismatch
from .model import Mode, ModelConfig, forward_batch, init_params, param_shapes
from .optim import AdamState, ParameterStore, adam_step, clip_grads
from .preprocess import Features, Sample, Variant

CHECKPOINT_FORMAT = "sepseq-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainSpec:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0
    clip_norm: float | None = None
    teacher_forcing: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def _batched(samples: list[Sample], order: np.ndarray, size: int):
    for lo in range(0, len(order), size):
        yield [samples[i] for i in order[lo : lo + size]]


def train(
    samples: list[Sample],
    config: ModelConfig,
    spec: TrainSpec,
    log_path: Path | str | None = None,
) -> tuple[ParameterStore, TrainHistory]:
    """Train from scratch; returns final-epoch parameters and the loss curve.

    The shuffle for epoch ``i`` is a pure function of (spec.seed, i), so one
    (data, config, spec) triple always yields bit-identical parameters.
    """
    if not samples:
        raise ValueError("no training samples")
    for s in samples:
        if s.input.shape != (config.input_len, config.feature_count):
            raise ShapeMismatch(
                f"sample {s.event_id}@{s.center}: input {s.input.shape} does not "
                f"match config ({config.input_len}, {config.feature_count})"
            )

    params = init_params(config, spec.seed)
    state = AdamState.for_params(params, lr=spec.lr)
    history = TrainHistory()
    log_fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        for epoch in range(spec.epochs):
            t_start = time.monotonic()
            order = np.random.default_rng([spec.seed, epoch]).permutation(len(samples))
            total, count = 0.0, 0
            for batch_no, batch in enumerate(_batched(samples, order, spec.batch_size)):
                inputs = np.stack([s.input for s in batch])
                targets = np.stack([s.target for s in batch])
                teacher = None
                if config.mode is Mode.AR and spec.teacher_forcing:
                    teacher = targets
                params.zero_grads()
                pred = forward_batch(inputs, params, config, teacher)
                loss = ad.mse_loss(pred, targets)
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteLoss(
                        f"loss became {value} at epoch {epoch}, batch {batch_no}"
                    )
                loss.backward()
                grads = params.grads()
                if spec.clip_norm is not None:
                    clip_grads(grads, spec.clip_norm)
                adam_step(params, grads, state)
                total += value * len(batch)
                count += len(batch)
            mean_loss = total / count
            history.losses.append(mean_loss)
            if log_fh is not None:
                record = {
                    "epoch": epoch,
                    "mean_loss": mean_loss,
                    "wall_time_s": time.monotonic() - t_start,
                }
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
    finally:
        if log_fh is not None:
            log_fh.close()
    return params, history


# --- checkpoints -------------------------------------------------------------------

def _config_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["features"] = config.features.value
    d["variant"] = config.variant.value
    d["mode"] = config.mode.value
    return d


def _config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        hidden=d["hidden"],
        embed=d["embed"],
        features=Features(d["features"]),
        variant=Variant(d["variant"]),
        mode=Mode(d["mode"]),
        input_len=d["input_len"],
        output_len=d["output_len"],
    )


def save_checkpoint(
    params: ParameterStore,
    config: ModelConfig,
    spec: TrainSpec,
    meta: dict,
    path: Path | str,
) -> None:
    """Single file: one sorted-key JSON manifest line, then the parameter blob
    (little-endian float64, lexicographic parameter order)."""
    blob = params.to_blob()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": _config_dict(config),
        "train_spec": asdict(spec),
        "meta": meta,
        "param_shapes": {k: list(v) for k, v in params.shapes().items()},
        "blob_bytes": len(blob),
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)
    tmp.replace(path)


def load_checkpoint(path: Path | str) -> tuple[ParameterStore, ModelConfig, TrainSpec, dict]:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorruptCheckpoint(f"{path}: manifest is not valid JSON") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path}: not a checkpoint file")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: version {manifest.get('version')} (supported: {CHECKPOINT_VERSION})"
        )
    config = _config_from_dict(manifest["config"])

    expected_shapes = param_shapes(config)
    declared = {k: tuple(v) for k, v in manifest["param_shapes"].items()}
    if declared != expected_shapes:
        raise CorruptCheckpoint(f"{path}: parameter shapes do not match the config")
    expected_bytes = 8 * sum(int(np.prod(s)) for s in expected_shapes.values())
    if manifest["blob_bytes"] != expected_bytes or len(blob) != expected_bytes:
        raise CorruptCheckpoint(
            f"{path}: blob holds {len(blob)} bytes, config needs {expected_bytes}"
        )
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")

    params = ParameterStore.from_blob(blob, declared)
    spec = TrainSpec(**manifest["train_spec"])
    return params, config, spec, manifest["meta"]
