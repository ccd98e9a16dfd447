"""Tests for scoring, AUC, resampling, injection and experiment runs."""

import itertools
import logging
from datetime import timedelta

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from anomaly_eval import (AnomalyType, HourOfWeekStats, InjectionConfig, LabeledDataset,
                          TrainedModel, anomaly_score, auc_of_scores, evaluate_methods,
                          fit_hour_of_week_stats, ha_score, inject, inject_spatial, inject_temporal,
                          results_frame, roc_auc, run_experiment, run_sensitivity, score_dataset,
                          synth_clean_testset)
from conftest import START, random_snapshot, small_dims
from encoder import ModelVariant
from errors import ConfigError, DataError, UndefinedMetricError
from logging_config import LogCapture
from nn_core import RngStream
from od_graph import (Dataset, ODRecord, ODSnapshot, TimeContext, ZoneFeatures, build_dataset,
                      scale_weight, split_records_by_time)
from synth_city import generate_city
from training import TrainConfig, build_model_params, graph_loss


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


@pytest.fixture
def clean_dataset(scaler):
    rng = np.random.default_rng(31)
    zones = tuple(ZoneFeatures(f"z{i}") for i in range(5))
    snaps = [random_snapshot(5, rng, START + timedelta(hours=h), scaler=scaler) for h in range(100)]
    return Dataset(zones, tuple(snaps), scaler)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.1], [1, 0]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5

    def test_pairwise_example(self):
        assert roc_auc([0.8, 0.6, 0.7, 0.2], [1, 0, 1, 0]) == 1.0

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.2], [0, 0])

    def test_nan_scores(self):
        with pytest.raises(ValueError):
            roc_auc([0.1, float("nan")], [0, 1])

    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 1)), min_size=2, max_size=60)
           .filter(lambda xs: len({y for _, y in xs}) == 2))
    def test_matches_pairwise_count(self, pairs):
        scores = [s / 4.0 for s, _ in pairs]
        labels = [y for _, y in pairs]
        assert roc_auc(scores, labels) == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)

    @given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40))
    def test_increasing_transform_keeps_auc(self, values):
        scores = np.array(values, dtype=np.float64)
        labels = [i % 2 for i in range(len(scores))]
        assert roc_auc(2.0 * scores + 1.0, labels) == roc_auc(scores, labels)

    def test_unscored_snapshots_are_excluded(self):
        with LogCapture("odgae.anomaly_eval", logging.WARNING) as cap:
            auc = auc_of_scores(np.array([0.9, np.nan, 0.1]), [1, 1, 0])
        assert auc == 1.0
        assert "Excluding 1" in cap.output


class TestHistoricalStats:
    def test_population_variance(self, scaler):
        snaps = [ODSnapshot.from_edges(2, [(0, 1, 0.5)], TimeContext(8, 0), START + timedelta(weeks=k),
                                       travel_times=[tau]) for k, tau in enumerate([100.0, 300.0])]
        stats = fit_hour_of_week_stats(Dataset((ZoneFeatures("a"), ZoneFeatures("b")), tuple(snaps), scaler))
        assert stats.lookup(0, 1, TimeContext(8, 0)) == (200.0, 10000.0, 2)
        assert stats.lookup(1, 0, TimeContext(8, 0)) is None

    def test_ha_hand_arithmetic(self):
        stats = HourOfWeekStats(pd.DataFrame({
            "o": [0, 1], "d": [1, 0], "hour": [8, 8], "dow": [0, 0],
            "mean": [500.0, 700.0], "var": [0.0, 0.0], "count": [3, 3],
        }))
        exact = ODSnapshot.from_edges(2, [(0, 1, 0.5), (1, 0, 0.5)], TimeContext(8, 0), START,
                                      travel_times=[500.0, 700.0])
        off = ODSnapshot.from_edges(2, [(0, 1, 0.5), (1, 0, 0.5)], TimeContext(8, 0),
                                    START + timedelta(hours=1), travel_times=[560.0, 700.0])
        ds = Dataset((ZoneFeatures("a"), ZoneFeatures("b")), (exact, off))
        assert list(ha_score(ds, stats)) == [0.0, 1800.0]

    def test_ha_sees_shifted_rush_hour(self):
        stats = HourOfWeekStats(pd.DataFrame({
            "o": [0, 0], "d": [1, 1], "hour": [8, 20], "dow": [2, 2],
            "mean": [900.0, 400.0], "var": [0.0, 0.0], "count": [1, 1],
        }))
        rush = ODSnapshot.from_edges(2, [(0, 1, 0.5)], TimeContext(8, 2), START, travel_times=[900.0])
        shifted = rush.with_context(rush.context.shifted(12))
        ds = Dataset((ZoneFeatures("a"), ZoneFeatures("b")), (rush,))
        assert ha_score(ds, stats)[0] < ha_score(ds.with_snapshots([shifted]), stats)[0]

    def test_ha_without_cells_scores_zero(self):
        stats = HourOfWeekStats(pd.DataFrame({
            "o": [0], "d": [1], "hour": [3], "dow": [3], "mean": [100.0], "var": [0.0], "count": [1],
        }))
        snap = ODSnapshot.from_edges(2, [(0, 1, 0.5)], TimeContext(8, 0), START, travel_times=[900.0])
        with LogCapture("odgae.anomaly_eval", logging.WARNING) as cap:
            scores = ha_score(Dataset((ZoneFeatures("a"), ZoneFeatures("b")), (snap,)), stats)
        assert scores[0] == 0.0
        assert "no edge with a historical cell" in cap.output


def two_week_records():
    records = []
    for h in range(14 * 24):
        stamp = START + timedelta(hours=h)
        records.append(ODRecord("A", "B", stamp, 300.0))
        records.append(ODRecord("B", "C", stamp, 200.0 if h < 7 * 24 else 400.0))
        if stamp.hour == 3:
            records.append(ODRecord("C", "A", stamp, 150.0))
    return records


class TestCleanTestset:
    def test_complete_grid_and_missingness(self, scaler):
        clean = synth_clean_testset(two_week_records(), ["A", "B", "C"], scaler, seed=4)
        assert len(clean.snapshots) == 14 * 24
        for s in clean.snapshots:
            pairs = set(zip(s.origins.tolist(), s.dests.tolist()))
            assert ((2, 0) in pairs) == (s.context.hour == 3)
            # zero variance: the mean comes back exactly
            assert s.travel_times[list(zip(s.origins, s.dests)).index((0, 1))] == 300.0

    def test_resampled_mean(self, scaler):
        clean = synth_clean_testset(two_week_records(), ["A", "B", "C"], scaler, seed=5)
        draws = np.array([s.travel_times[list(zip(s.origins, s.dests)).index((1, 2))]
                          for s in clean.snapshots])
        assert abs(draws.mean() - 300.0) < 3 * 100.0 / np.sqrt(len(draws))

    def test_seed_controls_draws(self, scaler):
        records = two_week_records()
        a = synth_clean_testset(records, ["A", "B", "C"], scaler, seed=1)
        b = synth_clean_testset(records, ["A", "B", "C"], scaler, seed=1)
        c = synth_clean_testset(records, ["A", "B", "C"], scaler, seed=2)
        assert all(np.array_equal(x.weights, y.weights) for x, y in zip(a.snapshots, b.snapshots))
        assert not all(np.array_equal(x.weights, y.weights) for x, y in zip(a.snapshots, c.snapshots))

    def test_no_records_in_zone_set(self, scaler):
        with pytest.raises(DataError):
            synth_clean_testset([ODRecord("X", "Y", START, 100.0)], ["A", "B"], scaler)

    def test_short_period_warns(self, scaler):
        records = [r for r in two_week_records() if r.timestamp < START + timedelta(days=2)]
        with LogCapture("odgae.anomaly_eval", logging.WARNING) as cap:
            synth_clean_testset(records, ["A", "B", "C"], scaler)
        assert "less than one full week" in cap.output


class TestInjection:
    def test_gamma_sets_positive_count(self, clean_dataset):
        labeled = inject(clean_dataset, InjectionConfig(AnomalyType.SPATIAL, gamma=0.10, seed=3))
        assert labeled.positives == 10

    @pytest.mark.parametrize("gamma", [0.0, 0.004, 1.0])
    def test_both_classes_needed(self, clean_dataset, gamma):
        with pytest.raises(ConfigError):
            inject(clean_dataset, InjectionConfig(AnomalyType.TEMPORAL, gamma=gamma))

    def test_spatial_changes_only_chosen_slices(self, clean_dataset):
        cfg = InjectionConfig(AnomalyType.SPATIAL, gamma=0.2, alpha=0.5, beta=0.3, seed=8)
        labeled = inject_spatial(clean_dataset, cfg)
        for before, after, label in zip(clean_dataset.snapshots, labeled.dataset.snapshots, labeled.labels):
            ratio = after.travel_times / before.travel_times
            if label == 0:
                assert np.array_equal(before.weights, after.weights)
                assert np.array_equal(before.travel_times, after.travel_times)
            else:
                changed = ratio != 1.0
                assert changed.sum() == int(np.floor(0.5 * before.edge_count + 0.5))
                assert np.all(np.abs(ratio - 1.0) <= 0.3 + 1e-12)
                assert np.array_equal(before.weights[~changed], after.weights[~changed])

    def test_zero_beta_keeps_weights(self, clean_dataset):
        labeled = inject_spatial(clean_dataset, InjectionConfig(AnomalyType.SPATIAL, beta=0.0, seed=2))
        for before, after in zip(clean_dataset.snapshots, labeled.dataset.snapshots):
            assert np.array_equal(before.weights, after.weights)
        assert labeled.positives == 10

    def test_perturbed_travel_time_is_rescaled(self, scaler, mocker):
        snaps = tuple(ODSnapshot.from_edges(2, [(0, 1, scale_weight(scaler, 200.0))], TimeContext(h, 0),
                                            START + timedelta(hours=h), travel_times=[200.0])
                      for h in range(10))
        clean = Dataset((ZoneFeatures("a"), ZoneFeatures("b")), snaps, scaler)
        mocker.patch.object(RngStream, "uniform", return_value=np.array([0.5]))
        labeled = inject_spatial(clean, InjectionConfig(AnomalyType.SPATIAL, gamma=0.1, alpha=1.0, beta=0.6))
        t = labeled.labels.index(1)
        polluted = labeled.dataset.snapshots[t]
        assert polluted.travel_times[0] == 300.0
        assert polluted.weights[0] == scale_weight(scaler, 300.0)

    def test_spatial_needs_scaler(self, clean_dataset):
        with pytest.raises(DataError):
            inject_spatial(Dataset(clean_dataset.zones, clean_dataset.snapshots), InjectionConfig())

    def test_temporal_shifts_hour_only(self, clean_dataset):
        labeled = inject_temporal(clean_dataset, InjectionConfig(AnomalyType.TEMPORAL, gamma=0.1, seed=6))
        for before, after, label in zip(clean_dataset.snapshots, labeled.dataset.snapshots, labeled.labels):
            assert np.array_equal(before.weights, after.weights)
            assert after.context.dow == before.context.dow
            expected = (before.context.hour + 12) % 24 if label else before.context.hour
            assert after.context.hour == expected

    def test_hour_shift_examples(self):
        assert TimeContext(20, 4).shifted(12).hour == 8
        assert TimeContext(8, 4).shifted(12).hour == 20

    def test_same_seed_same_labels(self, clean_dataset):
        cfg = InjectionConfig(AnomalyType.TEMPORAL, gamma=0.2, seed=11)
        assert inject(clean_dataset, cfg).labels == inject(clean_dataset, cfg).labels

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            InjectionConfig(beta=1.0)
        with pytest.raises(ConfigError):
            InjectionConfig(kind="volumetric")
        cfg = InjectionConfig(AnomalyType.TEMPORAL, gamma=0.2, alpha=0.3, beta=0.4, seed=9)
        assert InjectionConfig.from_mapping(cfg.to_mapping()) == cfg

    def test_labels_must_match_snapshots(self, clean_dataset):
        with pytest.raises(DataError):
            LabeledDataset(clean_dataset, (0, 1))


class TestScoring:
    def test_score_equals_eval_loss(self, tiny_dataset, tiny_params):
        snap = tiny_dataset.snapshots[11]
        X = tiny_dataset.node_features()
        assert anomaly_score(snap, tiny_params, features=X) == graph_loss(snap, snap, tiny_params, features=X)

    def test_edge_order_and_repeat_invariance(self, tiny_dataset, tiny_params):
        snap = tiny_dataset.snapshots[4]
        edges = snap.edges[::-1]
        reordered = ODSnapshot.from_edges(4, edges, snap.context, snap.timestamp)
        X = tiny_dataset.node_features()
        first = anomaly_score(snap, tiny_params, features=X)
        assert anomaly_score(snap, tiny_params, features=X) == first
        assert anomaly_score(reordered, tiny_params, features=X) == first

    def test_empty_snapshot_scores_nan(self, tiny_dataset, tiny_params):
        empty = ODSnapshot.from_edges(4, [], TimeContext(0, 3), START + timedelta(days=30))
        ds = tiny_dataset.with_snapshots(tiny_dataset.snapshots[:3] + (empty,))
        with LogCapture("odgae.anomaly_eval", logging.WARNING) as cap:
            scores = score_dataset(ds, tiny_params)
        assert np.isnan(scores[3]) and not np.isnan(scores[:3]).any()
        assert "no edges to score" in cap.output

    def test_threads_give_same_scores(self, tiny_dataset, tiny_params):
        assert np.array_equal(score_dataset(tiny_dataset, tiny_params),
                              score_dataset(tiny_dataset, tiny_params, threads=4))

    def test_evaluate_methods_includes_ha(self, clean_dataset):
        params = build_model_params(small_dims(5), RngStream(1))
        labeled = inject(clean_dataset, InjectionConfig(AnomalyType.SPATIAL, gamma=0.2, beta=0.5, seed=1))
        aucs = evaluate_methods(labeled, {"con-gae": TrainedModel(params, ModelVariant())},
                                fit_hour_of_week_stats(clean_dataset))
        assert list(aucs) == ["con-gae", "ha"]
        assert all(0.0 <= v <= 1.0 for v in aucs.values())


@pytest.fixture(scope="module")
def city_split():
    records, zones = generate_city(n_zones=4, weeks=3, seed=2, missing_rate=0.2)
    train_records, test_records = split_records_by_time(records, START + timedelta(weeks=2))
    train_set = build_dataset(train_records, 4, {z.zone_id: z for z in zones})
    return train_set, test_records


def tiny_model_config(**overrides):
    base = dict(epochs=2, batch_size=16, learning_rate=5e-3, layer_dims=(6, 4), d_hour=3, d_week=3,
                d_g=5, d_e=4, p_e_drop=0.1, p_drop=0.1, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


class TestExperiments:
    def test_grid_table(self, city_split):
        train_set, test_records = city_split
        grid = [InjectionConfig(AnomalyType.SPATIAL, gamma=g, alpha=0.5, beta=0.1, seed=7)
                for g in (0.05, 0.10, 0.20)]
        rows = run_experiment(train_set, test_records, grid, repeats=2, model_cfg=tiny_model_config())
        frame = results_frame(rows)
        assert list(frame.columns) == ["anomaly_type", "alpha", "beta", "gamma", "method", "auc_mean",
                                       "auc_std", "repeats", "seed"]
        assert len(frame) == 6
        assert sorted(frame["gamma"].unique()) == [0.05, 0.10, 0.20]
        for row in rows:
            assert len(row.aucs) == 2
            assert row.auc_mean == pytest.approx(float(np.mean(row.aucs)), abs=1e-12)
            assert row.auc_std == pytest.approx(float(np.std(row.aucs, ddof=0)), abs=1e-12)

    def test_single_repeat_is_deterministic(self, city_split):
        train_set, test_records = city_split
        grid = [InjectionConfig(AnomalyType.TEMPORAL, gamma=0.1, seed=3)]
        a = run_experiment(train_set, test_records, grid, repeats=1, model_cfg=tiny_model_config(),
                           methods=("ha",))
        b = run_experiment(train_set, test_records, grid, repeats=1, model_cfg=tiny_model_config(),
                           methods=("ha",))
        assert a == b
        assert a[0].auc_std == 0.0

    def test_empty_grid(self, city_split):
        with pytest.raises(ConfigError):
            run_experiment(*city_split, grid=[])

    def test_sensitivity_labels(self, city_split):
        train_set, test_records = city_split
        rows = run_sensitivity(train_set, test_records, [{"d_g": 3}, {"layer_dims": (8, 4)}],
                               model_cfg=tiny_model_config(epochs=1), repeats=1, seed=1)
        assert [r.method for r in rows] == ["con-gae[d_g=3]", "con-gae[layer_dims=8x4]"]
        assert all((r.alpha, r.beta, r.gamma) == (0.5, 0.1, 0.1) for r in rows)
