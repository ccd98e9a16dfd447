"""Tests for the loss, its gradients and the training loop."""

from datetime import timedelta

import numpy as np
import pytest

import training
from conftest import START, random_snapshot, small_dims
from decoder import EDGE_OUT, reconstruct
from encoder import HOUR_TABLE, WEEK_TABLE, encode, variant_by_name
from errors import ConfigError, ContainerError, EmptyTargetError
from logging_config import TRACE_LEVEL_NUM, LogCapture
from nn_core import AdamState, RngStream, finite_diff_check
from od_graph import Dataset, ODSnapshot, TimeContext, ZoneFeatures, time_context
from training import (TrainConfig, Trainer, build_model_params, edge_dropout, evaluate_loss,
                      graph_loss, initial_params, load_checkpoint, loss_gradients, lr_at_epoch,
                      profile_config, save_checkpoint, snapshot_gradients, split_train_validation, train,
                      write_train_report)


def small_config(**overrides):
    base = dict(epochs=4, batch_size=4, learning_rate=5e-3, layer_dims=(6, 4), d_hour=3, d_week=3,
                d_g=5, d_e=4, p_e_drop=0.2, p_drop=0.1, seed=1, early_stop_patience=20)
    base.update(overrides)
    return TrainConfig(**base)


def checked_indices(params, rng, per_param=8, floor=1e-4):
    """Coordinates whose analytic gradient is large enough for a relative comparison."""
    chosen = []
    for p in params:
        flat = np.abs(p.grad.reshape(-1))
        candidates = np.nonzero(flat > floor)[0]
        if candidates.size:
            picks = rng.choice(candidates, size=min(per_param, candidates.size), replace=False)
            chosen.extend((p.name, int(i)) for i in picks)
    return chosen


def check_gradients(snapshot, params, variant, features, seed):
    params.zero_grad()
    loss_gradients(snapshot, params, variant, None, features, training=False)

    def f(p):
        return graph_loss(snapshot, snapshot, p, variant, features=features)

    indices = checked_indices(params, np.random.default_rng(seed))
    assert indices
    return finite_diff_check(f, params, h=1e-5, indices=indices)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.epochs, cfg.batch_size, cfg.validation_fraction) == (150, 10, 0.10)
        assert cfg.edge_hidden_dim == 150

    def test_rejects_bad_dropout(self):
        with pytest.raises(ConfigError):
            TrainConfig(p_drop=1.0)

    def test_explicit_variant_field_overrides_name(self):
        cfg = TrainConfig.from_mapping({"variant": "con-gae-sp", "use_context": "true", "epochs": "3"})
        assert cfg.variant.use_context is True
        assert cfg.epochs == 3

    def test_mapping_round_trip(self):
        cfg = small_config(variant=variant_by_name("con-gae-fc"))
        assert TrainConfig.from_mapping(cfg.to_mapping()) == cfg

    def test_profile(self):
        cfg = profile_config("nyc", epochs=7)
        assert cfg.layer_dims == (150, 50)
        assert cfg.epochs == 7
        with pytest.raises(ConfigError):
            profile_config("paris")


def test_learning_rate_schedule():
    cfg = small_config(learning_rate=1e-3, lr_decay_every_epochs=20)
    assert lr_at_epoch(cfg, 19) == 1e-3
    assert lr_at_epoch(cfg, 20) == pytest.approx(5e-4)
    assert lr_at_epoch(cfg, 45) == pytest.approx(2.5e-4)


def test_chronological_split(tiny_dataset):
    train_part, val_part = split_train_validation(tiny_dataset.snapshots, 0.10)
    assert len(val_part) == 5
    assert max(s.timestamp for s in train_part) < min(s.timestamp for s in val_part)
    with pytest.raises(ConfigError):
        split_train_validation(tiny_dataset.snapshots[:1], 0.10)


class TestEdgeDropout:
    def test_zero_probability_keeps_everything(self):
        snap = random_snapshot(5, np.random.default_rng(0))
        inp, target = edge_dropout(snap, 0.0, None)
        assert inp is snap and target is snap

    def test_kept_count_is_binomial(self):
        n = 33
        pairs = [(o, d) for o in range(n) for d in range(n) if o != d][:1000]
        snap = ODSnapshot.from_edges(n, [(o, d, 0.5) for o, d in pairs], TimeContext(0, 0), START)
        inp, target = edge_dropout(snap, 0.5, RngStream(21))
        assert 448 <= inp.edge_count <= 552
        assert target.edge_count == 1000

    def test_targets_include_hidden_edges(self, tiny_params):
        rng = np.random.default_rng(4)
        snap = random_snapshot(4, rng, density=1.0)
        inp, target = edge_dropout(snap, 0.5, RngStream(2))
        full = graph_loss(inp, target, tiny_params)
        kept = graph_loss(inp, inp, tiny_params)
        assert target.edge_count == 12
        assert full != kept or inp.edge_count == 12


class TestGraphLoss:
    def test_single_edge_untrained_output(self, tiny_params):
        tiny_params[EDGE_OUT].value[:] = 0.0
        snap = ODSnapshot.from_edges(4, [(0, 1, 1.0)], TimeContext(5, 2), START)
        assert graph_loss(snap, snap, tiny_params) == 0.25

    def test_mean_of_squared_residuals(self, tiny_dataset, tiny_params):
        X = tiny_dataset.node_features()
        snap = ODSnapshot.from_edges(4, [(0, 1, 0.2), (2, 1, 0.7), (3, 0, 0.9)], TimeContext(8, 0), START)
        h_G = encode(snap, tiny_params, features=X)
        pred = reconstruct(h_G, snap.context, [(o, d) for o, d, _ in snap.edges], tiny_params)
        expected = sum((w - p) ** 2 for (_, _, w), p in zip(snap.edges, pred)) / 3
        assert graph_loss(snap, snap, tiny_params, features=X) == pytest.approx(expected, rel=1e-12)

    def test_loss_only_reads_target_pairs(self, tiny_dataset, tiny_params, mocker):
        X = tiny_dataset.node_features()
        snap = tiny_dataset.snapshots[7]
        target = snap.subset(np.arange(snap.edge_count) % 2 == 0)
        spy = mocker.spy(training, "decode_forward")
        loss = graph_loss(snap, target, tiny_params, features=X)
        queried = list(zip(spy.call_args.args[3].tolist(), spy.call_args.args[4].tolist()))
        wanted = list(zip(target.origins.tolist(), target.dests.tolist()))
        assert queried == wanted

        # garbage predictions outside the target set leave a masked loss unchanged
        h_G = encode(snap, tiny_params, features=X)
        pairs = [(o, d) for o in range(4) for d in range(4) if o != d]
        dense = dict(zip(pairs, reconstruct(h_G, snap.context, pairs, tiny_params)))
        noise = np.random.default_rng(0)
        for pair in set(pairs) - set(wanted):
            dense[pair] += noise.uniform(-5.0, 5.0)
        masked = np.mean([(dense[(o, d)] - w) ** 2 for o, d, w in target.edges])
        assert loss == pytest.approx(masked, rel=1e-12)

    def test_empty_target(self, tiny_params):
        empty = ODSnapshot.from_edges(4, [], TimeContext(0, 0), START)
        with pytest.raises(EmptyTargetError):
            graph_loss(empty, empty, tiny_params)


class TestGradients:
    def test_four_node_snapshot(self, tiny_dataset, tiny_params):
        snap = tiny_dataset.snapshots[7]
        assert check_gradients(snap, tiny_params, variant_by_name("con-gae"),
                               tiny_dataset.node_features(), 0) <= 1e-4

    @pytest.mark.parametrize("seed", range(20))
    def test_random_snapshots(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = 4 + seed % 5
        params = build_model_params(small_dims(n), RngStream(seed))
        snap = random_snapshot(n, rng, stamp=START + timedelta(hours=int(rng.integers(0, 168))))
        X = rng.uniform(0, 1, (n, 4))
        assert check_gradients(snap, params, variant_by_name("con-gae"), X, seed) <= 1e-4

    @pytest.mark.parametrize("name", ["con-gae-sp", "con-gae-t", "con-gae-fc",
                                      "con-gae-noncontextdec", "con-gae-nonweightedenc"])
    def test_variants(self, name, tiny_dataset, tiny_params):
        assert check_gradients(tiny_dataset.snapshots[9], tiny_params, variant_by_name(name),
                               tiny_dataset.node_features(), 3) <= 1e-4

    def test_duplicated_snapshot_doubles_the_gradient(self, tiny_dataset, tiny_params):
        X = tiny_dataset.node_features()
        snap, other = tiny_dataset.snapshots[7], tiny_dataset.snapshots[9]
        _, single = snapshot_gradients(snap, tiny_params, variant_by_name("con-gae"), None, X, training=False)
        _, extra = snapshot_gradients(other, tiny_params, variant_by_name("con-gae"), None, X, training=False)
        tiny_params.zero_grad()
        for s in (snap, other, snap):
            loss_gradients(s, tiny_params, variant_by_name("con-gae"), features=X, training=False)
        for name, g in single.items():
            assert np.allclose(tiny_params[name].grad, 2.0 * g + extra[name], rtol=1e-12, atol=1e-15)
        tiny_params.zero_grad()
        for _ in range(2):
            loss_gradients(snap, tiny_params, variant_by_name("con-gae"), features=X, training=False)
        for name, g in single.items():
            assert np.array_equal(tiny_params[name].grad, 2.0 * g)

    def test_context_free_variant_leaves_tables_alone(self, tiny_dataset, tiny_params):
        tiny_params.zero_grad()
        loss_gradients(tiny_dataset.snapshots[2], tiny_params, variant_by_name("con-gae-sp"),
                       features=tiny_dataset.node_features(), training=False)
        assert not tiny_params[HOUR_TABLE].grad.any()
        assert not tiny_params[WEEK_TABLE].grad.any()

    def test_only_the_snapshot_hour_row_moves(self, tiny_dataset, tiny_params):
        snap = tiny_dataset.snapshots[7]  # Monday 07:00
        tiny_params.zero_grad()
        loss_gradients(snap, tiny_params, features=tiny_dataset.node_features(), training=False)
        rows = np.nonzero(tiny_params[HOUR_TABLE].grad.any(axis=1))[0]
        assert set(rows) <= {7}


def identical_weekly_dataset(count=20):
    rng = np.random.default_rng(17)
    pairs = [(o, d) for o in range(4) for d in range(4) if o != d]
    weights = rng.uniform(0.85, 0.95, len(pairs))
    snaps = []
    for k in range(count):
        stamp = START + timedelta(weeks=k, hours=9)
        snaps.append(ODSnapshot(4, [p[0] for p in pairs], [p[1] for p in pairs], weights,
                                time_context(stamp), stamp))
    zones = tuple(ZoneFeatures(f"z{i}", None, tuple(rng.uniform(0, 1, 4))) for i in range(4))
    return Dataset(zones, tuple(snaps))


class TestTrainer:
    def test_memorizes_repeated_snapshot(self):
        ds = identical_weekly_dataset()
        cfg = small_config(epochs=200, batch_size=10, learning_rate=1e-2, p_e_drop=0.0, p_drop=0.0,
                           early_stop_patience=200)
        _, val = split_train_validation(ds.snapshots, cfg.validation_fraction)
        start = evaluate_loss(val, initial_params(cfg, 4), cfg.variant, ds.node_features())
        _, report = train(ds, cfg)
        assert min(report.val_loss) < 0.1 * start

    def test_report_lengths_and_best_epoch(self, tiny_dataset):
        params, report = train(tiny_dataset, small_config())
        assert len(report.train_loss) == len(report.val_loss) == len(report.learning_rate) == 4
        assert report.val_loss[report.best_epoch] == min(report.val_loss)
        assert report.stopping_reason == "max_epochs"
        assert evaluate_loss(tiny_dataset.snapshots[-5:], params, small_config().variant,
                             tiny_dataset.node_features()) == min(report.val_loss)

    def test_same_seed_same_report(self, tiny_dataset):
        _, a = train(tiny_dataset, small_config(epochs=3))
        _, b = train(tiny_dataset, small_config(epochs=3))
        assert a == b

    def test_threads_do_not_change_results(self, tiny_dataset):
        pa, a = train(tiny_dataset, small_config(epochs=2))
        pb, b = train(tiny_dataset, small_config(epochs=2), threads=3)
        assert a == b
        for name, value in pa.values().items():
            assert np.array_equal(value, pb[name].value)

    def test_zero_epochs_returns_initial_params(self, tiny_dataset):
        cfg = small_config(epochs=0)
        params, report = train(tiny_dataset, cfg)
        assert report.stopping_reason == "no_epochs"
        assert report.epochs_completed == 0
        for name, value in initial_params(cfg, 4).values().items():
            assert np.array_equal(params[name].value, value)

    def test_early_stopping(self, tiny_dataset):
        _, report = train(tiny_dataset, small_config(epochs=50, learning_rate=0.5, early_stop_patience=1))
        assert report.stopping_reason == "early_stop"
        assert report.epochs_completed < 50

    def test_needs_two_usable_snapshots(self, tiny_dataset):
        with pytest.raises(ConfigError):
            Trainer(tiny_dataset.with_snapshots(tiny_dataset.snapshots[:1]), small_config())

    def test_batch_losses_logged_at_trace(self, tiny_dataset):
        with LogCapture("odgae.training", TRACE_LEVEL_NUM) as cap:
            train(tiny_dataset, small_config(epochs=1))
        assert any(m.startswith("epoch 0 batch 0 loss") for m in cap.messages_at(TRACE_LEVEL_NUM))

    def test_report_csv(self, tiny_dataset, tmp_path):
        _, report = train(tiny_dataset, small_config(epochs=2))
        write_train_report(report, tmp_path / "report.csv")
        header = (tmp_path / "report.csv").read_text().splitlines()[0]
        assert header == "epoch,train_loss,val_loss,lr"


class TestCheckpoint:
    def test_resume_matches_uninterrupted_run(self, tiny_dataset, tmp_path):
        full_params, full_report = train(tiny_dataset, small_config(epochs=6))

        first = Trainer(tiny_dataset, small_config(epochs=3))
        first.run()
        path = tmp_path / "half.ckpt"
        save_checkpoint(first.params, first.adam, first.config, path, first.progress)

        resumed = Trainer(tiny_dataset, small_config(epochs=6), resume=load_checkpoint(path))
        params, report = resumed.run()
        assert report == full_report
        for name, value in full_params.values().items():
            assert np.array_equal(params[name].value, value)

    def test_save_load_save_is_byte_identical(self, tiny_dataset, tmp_path):
        trainer = Trainer(tiny_dataset, small_config(epochs=2))
        trainer.run()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(trainer.params, trainer.adam, trainer.config, a, trainer.progress)
        ckpt = load_checkpoint(a)
        save_checkpoint(ckpt.params, ckpt.adam, ckpt.config, b, ckpt.progress)
        assert a.read_bytes() == b.read_bytes()

    def test_shape_mismatch_names_parameter(self, tiny_dataset, tmp_path):
        cfg = small_config()
        params = initial_params(cfg, 4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, AdamState.for_params(params, cfg.learning_rate), cfg, path)
        with pytest.raises(ContainerError) as exc:
            load_checkpoint(path, expected=small_config(d_g=6))
        assert exc.value.parameter == "encoder.U_G"

    def test_corrupt_payload_is_rejected(self, tiny_dataset, tmp_path):
        trainer = Trainer(tiny_dataset, small_config(epochs=1))
        trainer.run()
        path = tmp_path / "model.ckpt"
        save_checkpoint(trainer.params, trainer.adam, trainer.config, path, trainer.progress)
        text = path.read_text()
        marker = text.index('"data":"') + len('"data":"')
        swapped = "B" if text[marker] != "B" else "C"
        path.write_text(text[:marker] + swapped + text[marker + 1:])
        with pytest.raises(ContainerError, match="digest"):
            load_checkpoint(path)

    def test_resume_with_other_dims_is_refused(self, tiny_dataset, tmp_path):
        trainer = Trainer(tiny_dataset, small_config(epochs=1))
        trainer.run()
        path = tmp_path / "model.ckpt"
        save_checkpoint(trainer.params, trainer.adam, trainer.config, path, trainer.progress)
        with pytest.raises(ConfigError):
            Trainer(tiny_dataset, small_config(epochs=2, d_hour=4), resume=load_checkpoint(path))

    def test_best_params_are_kept(self, tiny_dataset, tmp_path):
        trainer = Trainer(tiny_dataset, small_config(epochs=3))
        best, report = trainer.run()
        path = tmp_path / "model.ckpt"
        save_checkpoint(trainer.params, trainer.adam, trainer.config, path, trainer.progress)
        restored = load_checkpoint(path).best_params()
        for name, value in best.values().items():
            assert np.array_equal(restored[name].value, value)