"""Normalization, smoothing, windowing, folds and the sample store."""

from collections import Counter

import numpy as np
import pytest

from sepseq.catalog import CADENCE, Channel, FluxSeries, SClass
from sepseq.errors import InsufficientContext, WrongChannel
from sepseq.preprocess import (
    Features,
    FoldPlan,
    PreprocessSpec,
    Variant,
    event_channel_matrix,
    load_samples,
    log_transform,
    make_windows,
    normalize_xray,
    save_samples,
    stratified_folds,
    trend_smooth,
)

from conftest import T0, build_event


class TestNormalizeXray:
    def test_stated_constants(self):
        series = FluxSeries(Channel.XRAY, T0, np.array([7e-6, 7e-8]))
        out = normalize_xray(series)
        np.testing.assert_allclose(out.values, [100.0, 1.0], rtol=1e-12)

    def test_wrong_channel(self):
        series = FluxSeries(Channel.PROTON, T0, np.array([1.0]))
        with pytest.raises(WrongChannel):
            normalize_xray(series)


class TestLogTransform:
    def test_values(self):
        out = log_transform(np.array([10.0, 1.0, 1e-5]), floor=1e-3)
        np.testing.assert_allclose(out, [1.0, 0.0, -3.0], atol=1e-15)

    def test_floor_must_be_positive(self):
        with pytest.raises(ValueError):
            log_transform(np.array([1.0]), floor=0.0)


class TestTrendSmooth:
    def test_constant_fixed_point(self):
        values = np.full(100, 2.75)
        np.testing.assert_allclose(trend_smooth(values, 6), values, atol=1e-13)

    def test_linear_ramp_interior_fixed_point(self):
        ramp = np.linspace(0.0, 5.0, 101)
        out = trend_smooth(ramp, 6)
        np.testing.assert_allclose(out[6:-6], ramp[6:-6], atol=1e-12)

    def test_impulse_response(self):
        values = np.zeros(41)
        values[20] = 13.0
        out = trend_smooth(values, 6)
        assert out[20] == pytest.approx(1.0, abs=1e-13)

    def test_half_window_zero_is_identity(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=30)
        np.testing.assert_array_equal(trend_smooth(values, 0), values)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=64)
        y = rng.normal(size=64)
        lhs = trend_smooth(2.0 * x + 3.0 + y, 6)
        rhs = 2.0 * trend_smooth(x, 6) + 3.0 + trend_smooth(y, 6)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_padded_mean_preserved(self):
        # pad with h boundary copies: truncation vanishes, mean is exact
        rng = np.random.default_rng(2)
        h = 6
        core = rng.normal(size=50)
        padded = np.concatenate([np.full(h, core[0]), core, np.full(h, core[-1])])
        out = trend_smooth(padded, h)
        assert out[h:-h].mean() == pytest.approx(
            np.convolve(padded, np.ones(2 * h + 1) / (2 * h + 1), "valid").mean(),
            abs=1e-12,
        )


class TestMakeWindows:
    def test_window_count(self):
        event = build_event(duration_steps=287)
        spec = PreprocessSpec(features=Features.P)
        samples = make_windows(event, spec)
        assert len(samples) == 288

    def test_margin_shorter_than_window_rejected(self):
        event = build_event(duration_steps=10, margin=287)
        with pytest.raises(InsufficientContext):
            make_windows(event, PreprocessSpec(features=Features.P))

    def test_two_feature_columns(self, tent_event):
        spec = PreprocessSpec(features=Features.P_XR, input_len=48, output_len=48)
        samples = make_windows(tent_event, spec)
        assert all(s.input.shape == (48, 2) for s in samples)

    def test_missing_xray_rejected(self):
        event = build_event(with_xray=False)
        spec = PreprocessSpec(features=Features.P_XR, input_len=48, output_len=48)
        with pytest.raises(WrongChannel):
            make_windows(event, spec)

    def test_last_input_row_is_center_value(self, tent_event):
        spec = PreprocessSpec(features=Features.P, input_len=48, output_len=48)
        matrix, _ = event_channel_matrix(tent_event, spec)
        for sample in make_windows(tent_event, spec)[::7]:
            center_idx = tent_event.proton.index_at(sample.center)
            assert sample.input[-1, 0] == matrix[center_idx, 0]

    def test_target_is_next_window(self, tent_event):
        spec = PreprocessSpec(features=Features.P, input_len=48, output_len=48)
        _, target_series = event_channel_matrix(tent_event, spec)
        sample = make_windows(tent_event, spec)[0]
        idx = tent_event.proton.index_at(sample.center)
        np.testing.assert_array_equal(sample.target, target_series[idx + 1 : idx + 49])

    def test_trend_constant_log_target(self):
        # constant in-event flux: smoothing leaves the interior untouched
        event = build_event(duration_steps=30, peak=12.0, background=3.0)
        spec = PreprocessSpec(
            features=Features.P, variant=Variant.TREND, input_len=24, output_len=12
        )
        samples = make_windows(event, spec)
        assert len(samples) == 31

    def test_trend_targets_are_smoothed(self, tent_event):
        orig = PreprocessSpec(features=Features.P, input_len=48, output_len=48)
        trend = PreprocessSpec(
            features=Features.P, variant=Variant.TREND, input_len=48, output_len=48
        )
        s_orig = make_windows(tent_event, orig)[5]
        s_trend = make_windows(tent_event, trend)[5]
        expected = trend_smooth(
            log_transform(tent_event.proton.values, 1e-3), 6
        )
        idx = tent_event.proton.index_at(s_trend.center)
        np.testing.assert_allclose(s_trend.target, expected[idx + 1 : idx + 49], atol=1e-12)
        assert not np.array_equal(s_orig.target, s_trend.target)


def _events_with_classes(counts: dict[SClass, int]):
    events = []
    i = 0
    for s_class, count in counts.items():
        for _ in range(count):
            events.append(
                build_event(
                    duration_steps=6,
                    margin=300,
                    event_id=f"e{i:03d}",
                    s_class=s_class,
                    with_xray=False,
                )
            )
            i += 1
    return events


class TestStratifiedFolds:
    CENSUS = {SClass.S1: 20, SClass.S2: 12, SClass.S3: 6, SClass.S4: 2}

    def test_paper_census_layout(self):
        events = _events_with_classes(self.CENSUS)
        plan = stratified_folds(events, k=4, seed=0)
        by_class = {e.id: e.s_class for e in events}
        for fold in range(4):
            members = plan.members(fold)
            classes = Counter(by_class[eid] for eid in members)
            assert classes[SClass.S1] == 5
            assert classes[SClass.S2] == 3
            assert classes[SClass.S3] + classes[SClass.S4] == 2

    def test_s4_events_in_distinct_folds(self):
        events = _events_with_classes(self.CENSUS)
        for seed in range(20):
            plan = stratified_folds(events, k=4, seed=seed)
            s4_folds = [plan.fold_of(e.id) for e in events if e.s_class is SClass.S4]
            assert len(set(s4_folds)) == 2

    def test_even_split_single_stratum(self):
        events = _events_with_classes({SClass.S1: 8})
        plan = stratified_folds(events, k=4, seed=1)
        sizes = Counter(plan.assignment.values())
        assert sorted(sizes.values()) == [2, 2, 2, 2]

    def test_partition_and_determinism(self):
        events = _events_with_classes({SClass.S1: 7, SClass.S2: 5, SClass.S3: 3})
        plan_a = stratified_folds(events, k=4, seed=9)
        plan_b = stratified_folds(list(reversed(events)), k=4, seed=9)
        assert plan_a == plan_b
        assert sorted(plan_a.assignment) == sorted(e.id for e in events)
        # per-stratum sizes differ by at most one
        for stratum in ({SClass.S1}, {SClass.S2}, {SClass.S3, SClass.S4}):
            folds = Counter(
                plan_a.fold_of(e.id) for e in events if e.s_class in stratum
            )
            counts = [folds.get(f, 0) for f in range(4)]
            assert max(counts) - min(counts) <= 1

    def test_too_few_events(self):
        events = _events_with_classes({SClass.S1: 3})
        with pytest.raises(ValueError):
            stratified_folds(events, k=4, seed=0)


class TestSampleStore:
    def test_round_trip(self, tmp_path, tent_event):
        spec = PreprocessSpec(features=Features.P_XR, input_len=48, output_len=48)
        samples = make_windows(tent_event, spec)
        path = tmp_path / "ev.samples"
        save_samples(samples, spec, path)
        back, back_spec = load_samples(path)
        assert back_spec == spec
        assert len(back) == len(samples)
        for a, b in zip(samples, back):
            assert a.event_id == b.event_id
            assert a.center == b.center
            np.testing.assert_array_equal(a.input, b.input)
            np.testing.assert_array_equal(a.target, b.target)

    def test_truncated_blob_detected(self, tmp_path, tent_event):
        from sepseq.errors import MalformedRow

        spec = PreprocessSpec(features=Features.P, input_len=48, output_len=48)
        samples = make_windows(tent_event, spec)
        path = tmp_path / "ev.samples"
        save_samples(samples, spec, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(MalformedRow):
            load_samples(path)
