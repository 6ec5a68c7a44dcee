"""Metric arithmetic, fold aggregation and grid-table rendering."""

import numpy as np
import pytest

from sepseq.errors import NearZeroReference, ShapeMismatch
from sepseq.evaluation import (
    GridReport,
    MetricsReport,
    aggregate_folds,
    cross_validate,
    evaluate_fold,
    pct_error,
    preprocess_spec_for,
    rmse_log,
    write_grid_reports,
)
from sepseq.model import Mode, ModelConfig, init_params
from sepseq.preprocess import Features, make_windows, stratified_folds
from sepseq.training import TrainSpec

from conftest import build_event


class TestRmseLog:
    def test_zero_on_equal(self):
        v = np.linspace(1, 3, 17)
        assert rmse_log(v, v) == 0.0

    def test_uniform_offset(self):
        v = np.linspace(1, 3, 17)
        assert rmse_log(v + 0.3, v) == pytest.approx(0.3, abs=1e-12)

    def test_hand_value(self):
        assert rmse_log([1, 2, 3], [1, 2, 5]) == pytest.approx(np.sqrt(4 / 3), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            rmse_log(np.ones(3), np.ones(4))

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        pred, obs = rng.normal(2, 0.5, 40), rng.normal(2, 0.5, 40)
        perm = rng.permutation(40)
        assert rmse_log(pred, obs) == pytest.approx(rmse_log(pred[perm], obs[perm]), rel=1e-12)
        assert pct_error(pred, obs) == pytest.approx(pct_error(pred[perm], obs[perm]), rel=1e-12)

    def test_pooling_associativity(self):
        # pooled rmse equals rmse over the concatenated residual vectors
        rng = np.random.default_rng(1)
        parts = [(rng.normal(2, 0.3, n), rng.normal(2, 0.3, n)) for n in (7, 31, 12)]
        pred = np.concatenate([p for p, _ in parts])
        obs = np.concatenate([o for _, o in parts])
        pooled_sq = np.concatenate([(p - o) ** 2 for p, o in parts])
        assert rmse_log(pred, obs) == pytest.approx(np.sqrt(pooled_sq.mean()), rel=1e-12)


class TestPctError:
    def test_zero_on_equal(self):
        v = np.full(9, 2.0)
        assert pct_error(v, v) == 0.0

    def test_ten_percent(self):
        assert pct_error(np.full(5, 2.2), np.full(5, 2.0)) == pytest.approx(10.0, rel=1e-12)

    def test_hand_mean(self):
        assert pct_error(np.array([1.1, 1.8]), np.array([1.0, 2.0])) == pytest.approx(10.0, rel=1e-12)

    def test_near_zero_reference(self):
        with pytest.raises(NearZeroReference):
            pct_error(np.array([1.0, 1.0]), np.array([1.0, 0.05]))


class TestAggregation:
    def test_paper_table_row_rmse(self):
        mean, std = aggregate_folds([0.289, 0.313, 0.363, 0.323])
        assert mean == pytest.approx(0.322, abs=5e-4)
        assert std == pytest.approx(0.027, abs=5e-4)

    def test_paper_table_row_pct(self):
        mean, std = aggregate_folds([10.10, 12.37, 11.22, 13.34])
        assert mean == pytest.approx(11.76, abs=5e-3)
        assert std == pytest.approx(1.22, abs=5e-3)

    def test_population_convention(self):
        # divide-by-k: four equal deviations d give std exactly d
        mean, std = aggregate_folds([1.0, 3.0, 1.0, 3.0])
        assert mean == 2.0
        assert std == 1.0

    def test_identical_folds_zero_std(self):
        _, std = aggregate_folds([0.5, 0.5, 0.5, 0.5])
        assert std == 0.0

    def test_metrics_report_consistency_checked(self):
        report = MetricsReport.from_folds("P_orig_AR", "512-1",
                                          [0.289, 0.313, 0.363, 0.323],
                                          [10.10, 12.37, 11.22, 13.34])
        assert report.rmse_mean == pytest.approx(0.322, abs=5e-4)
        with pytest.raises(ValueError):
            MetricsReport(
                strategy="s", structure="8-1",
                fold_rmse=(0.1, 0.2), fold_pct=(1.0, 2.0),
                rmse_mean=0.9, rmse_std=0.0, pct_mean=1.5, pct_std=0.5,
            )


class OracleParams:
    """Stand-in 'model' whose predictions are the target plus an offset."""

    def __init__(self, offset):
        self.offset = offset


class TestEvaluateFold:
    def _events(self, n=2):
        return [
            build_event(duration_steps=10, event_id=f"ev{i}", with_xray=False)
            for i in range(n)
        ]

    def _config(self):
        return ModelConfig(
            hidden=8, embed=2, features=Features.P, mode=Mode.OS,
            input_len=12, output_len=12,
        )

    def test_oracle_predictor(self, monkeypatch):
        config = self._config()
        events = self._events()

        def fake_predict(samples, params, config, batch_size=64):
            return np.stack([s.target for s in samples]) + params.offset

        monkeypatch.setattr("sepseq.evaluation.predict_samples", fake_predict)
        rmse, pct = evaluate_fold(events, OracleParams(0.0), config)
        assert rmse == 0.0 and pct == 0.0
        rmse, pct = evaluate_fold(events, OracleParams(0.3), config)
        assert rmse == pytest.approx(0.3, abs=1e-12)

    def test_empty_fold_rejected(self):
        with pytest.raises(ValueError):
            evaluate_fold([], init_params(self._config(), 0), self._config())

    def test_real_params_finite(self):
        config = self._config()
        params = init_params(config, seed=0)
        rmse, pct = evaluate_fold(self._events(), params, config)
        assert np.isfinite(rmse) and np.isfinite(pct)


class TestCrossValidate:
    def test_tiny_run_produces_report(self):
        events = [
            build_event(duration_steps=8, event_id=f"cv{i}", with_xray=False)
            for i in range(4)
        ]
        config = ModelConfig(
            hidden=8, embed=2, features=Features.P, mode=Mode.OS,
            input_len=12, output_len=12,
        )
        plan = stratified_folds(events, k=4, seed=0)
        report = cross_validate(events, config, TrainSpec(epochs=1, batch_size=8, seed=0), plan)
        assert report.k == 4
        assert report.strategy == "P_orig_OS"
        assert report.structure == "8-2"
        assert all(np.isfinite(v) for v in report.fold_rmse)


def _fake_results():
    results = {}
    rng = np.random.default_rng(3)
    for strategy in ("P_orig_AR", "P_orig_OS"):
        for structure in ("64-4", "32-8"):
            folds = rng.uniform(0.28, 0.40, size=4)
            pcts = rng.uniform(10, 16, size=4)
            results[(strategy, structure)] = MetricsReport.from_folds(
                strategy, structure, folds, pcts
            )
    return results


class TestGridReport:
    def test_cell_format(self):
        report = MetricsReport.from_folds(
            "P_orig_OS", "512-8",
            [0.303, 0.303, 0.303, 0.303], [11.03, 11.03, 11.03, 11.03],
        )
        assert report.cell() == "0.303 // 11.03%"

    def test_threshold_flags(self):
        low = MetricsReport.from_folds("s", "8-1", [0.305] * 4, [11.0] * 4)
        high = MetricsReport.from_folds("s", "8-2", [0.315] * 4, [11.0] * 4)
        grid = GridReport({("s", "8-1"): low, ("s", "8-2"): high}, highlight_threshold=0.310)
        table = grid.strategy_table()
        lines = {line.split()[0]: line for line in table.splitlines() if line.startswith("8-")}
        assert "*0.305" in lines["8-1"]
        assert "*" not in lines["8-2"]

    def test_missing_cells_render_blank(self):
        results = _fake_results()
        del results[("P_orig_AR", "32-8")]
        table = GridReport(results).strategy_table()
        row = [l for l in table.splitlines() if l.startswith("32-8")][0]
        assert "-" in row

    def test_long_rows_count(self):
        grid = GridReport(_fake_results())
        rows = grid.long_rows()
        assert len(rows) == 2 * 2 * (4 + 1)

    def test_argmin_invariant_under_constant_shift(self):
        results = _fake_results()
        grid = GridReport(results)
        best = grid.best_cell()
        shifted = {
            key: MetricsReport.from_folds(
                key[0], key[1],
                [v + 0.5 for v in rep.fold_rmse], rep.fold_pct,
            )
            for key, rep in results.items()
        }
        assert GridReport(shifted).best_cell() == best

    def test_written_files(self, tmp_path):
        grid = GridReport(_fake_results())
        write_grid_reports(grid, tmp_path)
        assert (tmp_path / "grid.csv").exists()
        assert (tmp_path / "table2.txt").exists()
        assert (tmp_path / "table3.txt").exists()
        csv_lines = (tmp_path / "grid.csv").read_text().splitlines()
        assert csv_lines[0] == "strategy,structure,fold,rmse,pct"
        assert len(csv_lines) == 1 + 2 * 2 * 5
