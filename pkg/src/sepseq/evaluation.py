"""Metrics, fold-wise evaluation, cross-validation and grid tables.

RMSE and percentage error are computed on log10 flux. A fold's value pools
every time point of every test window of every test event into one flat
residual vector before reducing. Aggregation over folds reports the mean and
the population (divide-by-k) standard deviation.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .catalog import EventRecord
from .errors import NearZeroReference, ShapeMismatch
from .model import ModelConfig, forward_batch, strategy_name
from .optim import ParameterStore
from .preprocess import FoldPlan, PreprocessSpec, Sample, make_windows
from .training import TrainSpec, train

PCT_REFERENCE_FLOOR = 0.1  # |log10 flux| below this makes relative error meaningless


def rmse_log(pred: np.ndarray, obs: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape or pred.size == 0:
        raise ShapeMismatch(f"rmse_log: {pred.shape} vs {obs.shape}")
    diff = pred - obs
    return float(np.sqrt(np.mean(diff * diff)))


def pct_error(pred: np.ndarray, obs: np.ndarray) -> float:
    """100 * mean(|pred - obs| / |obs|) on log10 values."""
    pred = np.asarray(pred, dtype=np.float64)
    obs = np.asarray(obs, dtype=np.float64)
    if pred.shape != obs.shape or pred.size == 0:
        raise ShapeMismatch(f"pct_error: {pred.shape} vs {obs.shape}")
    if np.any(np.abs(obs) < PCT_REFERENCE_FLOOR):
        raise NearZeroReference(
            f"observed |log flux| < {PCT_REFERENCE_FLOOR}; percentage error undefined"
        )
    return float(100.0 * np.mean(np.abs(pred - obs) / np.abs(obs)))


def preprocess_spec_for(config: ModelConfig, half_window: int = 6, log_floor: float = 1e-3) -> PreprocessSpec:
    return PreprocessSpec(
        features=config.features,
        variant=config.variant,
        half_window=half_window,
        log_floor=log_floor,
        input_len=config.input_len,
        output_len=config.output_len,
    )


def predict_samples(
    samples: list[Sample],
    params: ParameterStore,
    config: ModelConfig,
    batch_size: int = 64,
) -> np.ndarray:
    """(n_samples, output_len) free-running predictions."""
    preds = []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        inputs = np.stack([s.input for s in chunk])
        preds.append(forward_batch(inputs, params, config).data)
    return np.concatenate(preds, axis=0)


def evaluate_fold(
    events_test: list[EventRecord],
    params: ParameterStore,
    config: ModelConfig,
    batch_size: int = 64,
) -> tuple[float, float]:
    """Pooled (rmse, pct_error) over all windows of the test events."""
    if not events_test:
        raise ValueError("empty test fold")
    spec = preprocess_spec_for(config)
    pred_pool, obs_pool = [], []
    for event in events_test:
        samples = make_windows(event, spec)
        preds = predict_samples(samples, params, config, batch_size)
        pred_pool.append(preds.ravel())
        obs_pool.append(np.stack([s.target for s in samples]).ravel())
    pred = np.concatenate(pred_pool)
    obs = np.concatenate(obs_pool)
    return rmse_log(pred, obs), pct_error(pred, obs)


# --- aggregation -----------------------------------------------------------------

def aggregate_folds(values: list[float] | np.ndarray) -> tuple[float, float]:
    """(mean, population standard deviation) over the fold values."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    return mean, std


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    structure: str
    fold_rmse: tuple[float, ...]
    fold_pct: tuple[float, ...]
    rmse_mean: float
    rmse_std: float
    pct_mean: float
    pct_std: float

    def __post_init__(self):
        if len(self.fold_rmse) != len(self.fold_pct):
            raise ShapeMismatch("fold vectors must have equal length")
        for stored, (mean, std) in (
            ((self.rmse_mean, self.rmse_std), aggregate_folds(self.fold_rmse)),
            ((self.pct_mean, self.pct_std), aggregate_folds(self.fold_pct)),
        ):
            if abs(stored[0] - mean) > 1e-12 or abs(stored[1] - std) > 1e-12:
                raise ValueError("stored mean/std disagree with the fold values")

    @classmethod
    def from_folds(
        cls, strategy: str, structure: str, fold_rmse, fold_pct
    ) -> "MetricsReport":
        rmse_mean, rmse_std = aggregate_folds(fold_rmse)
        pct_mean, pct_std = aggregate_folds(fold_pct)
        return cls(
            strategy=strategy,
            structure=structure,
            fold_rmse=tuple(float(v) for v in fold_rmse),
            fold_pct=tuple(float(v) for v in fold_pct),
            rmse_mean=rmse_mean,
            rmse_std=rmse_std,
            pct_mean=pct_mean,
            pct_std=pct_std,
        )

    @property
    def k(self) -> int:
        return len(self.fold_rmse)

    def cell(self) -> str:
        return f"{self.rmse_mean:.3f} // {self.pct_mean:.2f}%"


def _fold_train_spec(spec: TrainSpec, fold: int) -> TrainSpec:
    derived = int(np.random.SeedSequence([spec.seed, fold]).generate_state(1)[0])
    return replace(spec, seed=derived)


def cross_validate(
    events: list[EventRecord],
    config: ModelConfig,
    spec: TrainSpec,
    fold_plan: FoldPlan,
    batch_size_eval: int = 64,
    checkpoint_dir=None,
) -> MetricsReport:
    """Train on each fold's complement, evaluate on the fold, aggregate.

    With ``checkpoint_dir`` set, each fold's final parameters are saved as
    ``fold<i>.ckpt`` there.
    """
    missing = [e.id for e in events if e.id not in fold_plan.assignment]
    if missing:
        raise ValueError(f"fold plan does not cover events {missing}")
    pre = preprocess_spec_for(config)
    fold_rmse, fold_pct = [], []
    for fold in range(fold_plan.k):
        train_events, test_events = fold_plan.split(events, fold)
        samples = []
        for event in train_events:
            samples.extend(make_windows(event, pre))
        fold_spec = _fold_train_spec(spec, fold)
        params, history = train(samples, config, fold_spec)
        if checkpoint_dir is not None:
            from pathlib import Path
            from .training import save_checkpoint

            meta = {"fold": fold, "seed": fold_spec.seed, "final_loss": history.final_loss}
            save_checkpoint(
                params, config, fold_spec, meta, Path(checkpoint_dir) / f"fold{fold}.ckpt"
            )
        rmse, pct = evaluate_fold(test_events, params, config, batch_size_eval)
        fold_rmse.append(rmse)
        fold_pct.append(pct)
    return MetricsReport.from_folds(
        strategy_name(config), config.structure, fold_rmse, fold_pct
    )


# --- grid reporting -----------------------------------------------------------------

GRID_CSV_HEADER = ["strategy", "structure", "fold", "rmse", "pct"]


@dataclass
class GridReport:
    """Formatter over {(strategy, structure): MetricsReport}."""

    results: dict[tuple[str, str], MetricsReport]
    highlight_threshold: float = 0.310

    def strategies(self) -> list[str]:
        return sorted({key[0] for key in self.results})

    def structures(self) -> list[str]:
        def sort_key(text: str) -> tuple[int, int]:
            h, e = text.split("-")
            return (-int(h), -int(e))

        return sorted({key[1] for key in self.results}, key=sort_key)

    def long_rows(self) -> list[list[str]]:
        """grid.csv rows: k per-fold rows plus one 'mean' row per cell."""
        rows = []
        for (strategy, structure) in sorted(self.results):
            report = self.results[(strategy, structure)]
            for fold, (rmse, pct) in enumerate(zip(report.fold_rmse, report.fold_pct), 1):
                rows.append([strategy, structure, str(fold), f"{rmse:.6f}", f"{pct:.4f}"])
            rows.append(
                [strategy, structure, "mean", f"{report.rmse_mean:.6f}", f"{report.pct_mean:.4f}"]
            )
        return rows

    def to_grid_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(GRID_CSV_HEADER)
        writer.writerows(self.long_rows())
        return buf.getvalue()

    def strategy_table(self) -> str:
        """Structures x strategies table; '*' flags cells under the threshold."""
        strategies = self.strategies()
        structures = self.structures()
        width = 20
        lines = [
            "RMSE // percentage error, averaged over folds "
            f"(* marks RMSE < {self.highlight_threshold:.3f})",
            "",
            "structure".ljust(12) + "".join(s.center(width) for s in strategies),
        ]
        for structure in structures:
            cells = []
            for strategy in strategies:
                report = self.results.get((strategy, structure))
                if report is None:
                    cells.append("-".center(width))
                    continue
                mark = "*" if report.rmse_mean < self.highlight_threshold else " "
                cells.append(f"{mark}{report.cell()}".center(width))
            lines.append(structure.ljust(12) + "".join(cells))
        return "\n".join(lines) + "\n"

    def foldwise_table(self) -> str:
        """Per-strategy best structure with fold-by-fold cells and mean +- std."""
        lines = [
            "Fold-wise RMSE // percentage error for the best structure per strategy",
            "",
        ]
        k = max((r.k for r in self.results.values()), default=0)
        header = (
            "strategy".ljust(16)
            + "structure".ljust(11)
            + "mean (std)".center(30)
            + "".join(f"CV{i}".center(18) for i in range(1, k + 1))
        )
        lines.append(header)
        for strategy in self.strategies():
            candidates = [r for (s, _), r in self.results.items() if s == strategy]
            best = min(candidates, key=lambda r: r.rmse_mean)
            summary = (
                f"{best.rmse_mean:.3f} // {best.pct_mean:.2f}% "
                f"({best.rmse_std:.3f} // {best.pct_std:.2f})"
            )
            cells = "".join(
                f"{rmse:.3f} // {pct:.2f}%".center(18)
                for rmse, pct in zip(best.fold_rmse, best.fold_pct)
            )
            lines.append(strategy.ljust(16) + best.structure.ljust(11) + summary.center(30) + cells)
        return "\n".join(lines) + "\n"

    def best_cell(self) -> tuple[str, str]:
        """(strategy, structure) with the lowest mean RMSE."""
        key = min(self.results, key=lambda k: self.results[k].rmse_mean)
        return key


def write_grid_reports(report: GridReport, out_dir) -> None:
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in (
        ("grid.csv", report.to_grid_csv()),
        ("table2.txt", report.strategy_table()),
        ("table3.txt", report.foldwise_table()),
    ):
        tmp = out_dir / (name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(out_dir / name)
