import numpy as np
import pytest

from heavecast.data import NormalizationConstants, WindowSpec, build_folds, samples_to_arrays, window_case
from heavecast.errors import ConfigError, DataError, StructuralError
from heavecast.forecaster import (
    ArchitectureSpec,
    ModelCheckpoint,
    TrainSpec,
    build_model,
    checkpoint_from_network,
    load_checkpoint,
    pooled_ev,
    predict_deterministic,
    save_checkpoint,
    train_arrays,
    train_fold,
)
from heavecast.nn import Adam, mse_loss
from heavecast.oracle import OracleSpec, make_case
from heavecast.waves import SeaStateSpec

TINY = ArchitectureSpec(
    num_lstm_layers=2, lstm_hidden=8, num_fc_blocks=2, fc_width=6, dropout_p=0.315, m=5, lstm_shortcuts=True
)
UNIT_NORM = NormalizationConstants(mean_motion=0.0, std_motion=1.0, mean_wave=0.0, std_wave=1.0)


@pytest.fixture(scope="module")
def micro_fold():
    """Four short cases in two folds plus two test cases."""
    oracle = OracleSpec(natural_period=19.0, damping_ratio=0.3, rao_scale=0.6)
    tags, records = {}, {}
    for i, (hs, tp) in enumerate([(15.0, 14.2), (17.4, 15.9)]):
        for s in range(2):
            cid = f"case{i * 2 + s:02d}"
            sea = SeaStateSpec(hs=hs, tp=tp, seed=s, duration=300.0)
            records[cid] = make_case(sea, oracle, trim_seconds=30.0, case_id=cid)
            tags[cid] = (hs, tp)
    for j, (hs, tp) in enumerate([(16.2, 15.3), (18.0, 16.5)]):
        cid = f"case{4 + j:02d}"
        sea = SeaStateSpec(hs=hs, tp=tp, seed=100 + j, duration=300.0)
        records[cid] = make_case(sea, oracle, trim_seconds=30.0, case_id=cid)
        tags[cid] = (hs, tp)
    return build_folds(tags, n_folds=2), records


@pytest.fixture(scope="module")
def micro_checkpoint(micro_fold):
    layout, records = micro_fold
    ckpt, curve = train_fold(
        TINY,
        WindowSpec(m=5),
        TrainSpec(max_epochs=25, batch_size=64, seed=3),
        layout,
        0,
        records,
        noise_level=0.0,
    )
    return ckpt, curve, layout, records


def test_arch_defaults_match_reference_table():
    arch = ArchitectureSpec()
    assert (arch.num_lstm_layers, arch.lstm_hidden) == (2, 200)
    assert (arch.num_fc_blocks, arch.fc_width) == (5, 80)
    assert arch.dropout_p == 0.315
    assert arch.lstm_shortcuts


def test_default_capacity_output_width():
    net = build_model(ArchitectureSpec(m=20), seed=0)
    y = net.forward(np.zeros((3, 60, 2)))
    assert y.shape == (3, 20)


def test_output_width_80_when_built_for_80():
    net = build_model(ArchitectureSpec(num_lstm_layers=1, lstm_hidden=4, num_fc_blocks=1, fc_width=4, m=80), seed=0)
    assert net.forward(np.zeros((2, 240, 2))).shape == (2, 80)


def test_no_fc_blocks_is_direct_readout():
    arch = ArchitectureSpec(num_lstm_layers=1, lstm_hidden=6, num_fc_blocks=0, fc_width=4, m=3, dropout_p=0.0)
    net = build_model(arch, seed=0)
    assert [layer.name for layer in net.fc_layers] == []
    assert net.readout.input_size == 6
    assert net.forward(np.zeros((2, 9, 2))).shape == (2, 3)


def test_parameter_count_against_shape_audit():
    # independent closed-form audit: 4h(i+h+1) per LSTM layer, o(i+1) per dense
    arch = ArchitectureSpec(num_lstm_layers=2, lstm_hidden=200, num_fc_blocks=5, fc_width=80, m=20)
    net = build_model(arch, seed=0)
    h, f, m = 200, 80, 20
    expected = 4 * h * (2 + h + 1)  # first LSTM layer
    expected += 4 * h * (h + h + 1)  # second LSTM layer
    expected += f * (h + 1)  # first dense block
    expected += 4 * (f * (f + 1))  # remaining dense blocks
    expected += m * (f + 1)  # readout
    assert net.param_count() == expected


def test_malformed_input_shapes_are_structural_errors():
    net = build_model(TINY, seed=0)
    with pytest.raises(StructuralError):
        net.forward(np.zeros((4, 15, 3)))
    with pytest.raises(StructuralError):
        net.load_parameters({"nope": np.zeros(3)})


def test_forward_deterministic_without_masks():
    net = build_model(TINY, seed=0)
    x = np.random.default_rng(0).standard_normal((4, 15, 2))
    np.testing.assert_array_equal(net.forward(x), net.forward(x))


def test_mask_plan_reproduces_forward():
    net = build_model(TINY, seed=0)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 15, 2))
    masks = net.sample_masks(4, np.random.default_rng(11))
    a = net.forward(x, masks=masks)
    b = net.forward(x, masks=masks)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, net.forward(x))


def test_overfit_sanity_default_capacity():
    # the full-size network must drive 50 fixed samples to an MSE below 1e-3
    # with dropout disabled, within 500 epochs
    arch = ArchitectureSpec(m=20)
    net = build_model(arch, seed=0)
    rng = np.random.default_rng(42)
    x = rng.standard_normal((50, 60, 2))
    y = rng.standard_normal((50, 20))
    params = net.parameters()
    adam = Adam(params)
    final = None
    for epoch in range(500):
        pred, cache = net.forward(x, keep_cache=True)
        loss, d_pred = mse_loss(pred, y)
        grads = net.backward(d_pred, cache)
        adam.step(params, grads, lr=0.01)
        final = loss
        if loss < 1e-3:
            break
    assert final < 1e-3


def test_train_arrays_runs_and_early_stops(micro_fold):
    layout, records = micro_fold
    from heavecast.data import compute_norm

    norm = compute_norm([records[c] for c in layout.all_fold_cases()])
    spec = WindowSpec(m=5)
    train = [s for c in layout.training_cases(0) for s in window_case(records[c], spec, norm)]
    val = [s for c in layout.validation_cases(0) for s in window_case(records[c], spec, norm)]
    x_train, y_train = samples_to_arrays(train)
    x_val, y_val = samples_to_arrays(val)
    net = build_model(TINY, seed=0)
    tspec = TrainSpec(max_epochs=40, batch_size=64, early_stopping_patience=3, seed=0)
    best, curve, info = train_arrays(net, x_train, y_train, x_val, y_val, tspec)
    # patience: the run never continues more than patience epochs past the best
    assert info["epochs_run"] - 1 - info["best_epoch"] <= tspec.early_stopping_patience
    assert all(np.isfinite(v) for v in curve.val_mse)
    assert info["best_val_mse"] == pytest.approx(min(curve.val_mse))


def test_training_curve_csv(tmp_path, micro_checkpoint):
    _, curve, _, _ = micro_checkpoint
    path = tmp_path / "curve.csv"
    curve.write_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "epoch,lr,train_mse,val_mse,val_ev"
    from heavecast.tables import read_table

    table = read_table(path)
    assert [int(e) for e in table["epoch"]] == curve.epochs
    assert [float(v) for v in table["val_ev"]] == curve.val_ev


def test_fold_isolation_no_leakage_anomaly(micro_fold, micro_checkpoint):
    # single-fold train/val EV gaps carry case-difficulty luck, so average
    # the gap over both folds; a leak would push it negative on every fold
    layout, records = micro_fold
    ckpt0, _, _, _ = micro_checkpoint
    assert ckpt0.metadata["fold_id"] == 0
    ckpt1, _ = train_fold(
        TINY, WindowSpec(m=5), TrainSpec(max_epochs=25, batch_size=64, seed=3), layout, 1, records
    )
    gaps = []
    for ckpt, fold in ((ckpt0, 0), (ckpt1, 1)):
        net = ckpt.build_network()

        def pooled(case_ids):
            samples = [s for c in case_ids for s in window_case(records[c], ckpt.window, ckpt.norm)]
            x, y = samples_to_arrays(samples)
            return pooled_ev(y, net.forward(x))

        gaps.append(pooled(layout.training_cases(fold)) - pooled(layout.validation_cases(fold)))
    assert np.mean(gaps) >= -0.02


def test_checkpoint_round_trip_bytes(tmp_path, micro_checkpoint):
    ckpt, _, _, _ = micro_checkpoint
    p1 = tmp_path / "a.wmck"
    p2 = tmp_path / "b.wmck"
    save_checkpoint(ckpt, p1)
    loaded = load_checkpoint(p1)
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.arch == ckpt.arch
    assert loaded.window == ckpt.window
    assert loaded.norm == ckpt.norm
    assert loaded.metadata["rng_algorithm"] == "numpy-PCG64"


def test_checkpoint_prediction_survives_round_trip(tmp_path, micro_checkpoint):
    ckpt, _, layout, records = micro_checkpoint
    samples = window_case(records[layout.test_cases[0]], ckpt.window, ckpt.norm)
    x = samples[7].x
    before = predict_deterministic(ckpt, x)
    path = tmp_path / "ck.wmck"
    save_checkpoint(ckpt, path)
    after = predict_deterministic(load_checkpoint(path), x)
    np.testing.assert_array_equal(before, after)


def test_checkpoint_rejects_tampering(tmp_path, micro_checkpoint):
    ckpt, _, _, _ = micro_checkpoint
    path = tmp_path / "ck.wmck"
    save_checkpoint(ckpt, path)
    raw = bytearray(path.read_bytes())
    raw[:5] = b"XXXXX"
    bad = tmp_path / "bad.wmck"
    bad.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        load_checkpoint(bad)
    # version bump is rejected explicitly
    raw = bytearray(path.read_bytes())
    raw[5] = 99
    bad.write_bytes(bytes(raw))
    with pytest.raises(DataError) as err:
        load_checkpoint(bad)
    assert "version" in str(err.value)


def test_predict_deterministic_is_repeatable_and_denormalizes(micro_checkpoint):
    ckpt, _, layout, records = micro_checkpoint
    samples = window_case(records[layout.test_cases[0]], ckpt.window, ckpt.norm)
    x = samples[0].x
    a = predict_deterministic(ckpt, x)
    b = predict_deterministic(ckpt, x)
    np.testing.assert_array_equal(a, b)
    raw = predict_deterministic(ckpt, x, denormalize=True)
    np.testing.assert_allclose(raw, ckpt.norm.denormalize_motion(a))


def test_noise_level_recorded_in_metadata(micro_fold):
    layout, records = micro_fold
    ckpt, _ = train_fold(
        ArchitectureSpec(num_lstm_layers=1, lstm_hidden=4, num_fc_blocks=1, fc_width=4, m=5),
        WindowSpec(m=5),
        TrainSpec(max_epochs=2, batch_size=256, seed=0),
        layout,
        1,
        records,
        noise_level=0.2,
    )
    assert ckpt.metadata["train_noise_level"] == 0.2
    assert ckpt.metadata["fold_id"] == 1


def test_train_fold_validates_fold_index(micro_fold):
    layout, records = micro_fold
    with pytest.raises(ConfigError):
        train_fold(TINY, WindowSpec(m=5), TrainSpec(max_epochs=1, seed=0), layout, 5, records)
