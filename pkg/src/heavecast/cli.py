"""Command-line entry point: data synthesis, training, inference, metrics.

Subcommands: ``synth``, ``train``, ``predict``, ``eval``, ``noise-sweep``,
``gradcheck``.  All commands share one run directory (``--out``): synth
populates ``cases/``, train populates ``models/``, predict and eval write
``predictions/`` and ``metrics/``.  Every command drops a resolved
configuration snapshot next to its outputs; re-running with that snapshot
and the same seed reproduces every artifact byte for byte (single-threaded
mode).  Plots are out of scope: all figure-ready numbers land in CSVs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig, resolve_config, write_snapshot
from .data import WindowSpec, build_folds, inject_noise, samples_to_arrays, window_case
from .errors import (
    ArtifactExistsError,
    ConfigError,
    DataError,
    DomainError,
    HeavecastError,
    NumericError,
    StructuralError,
    UndefinedScoreError,
    UsageError,
)
from .forecaster import (
    ArchitectureSpec,
    TrainSpec,
    build_model,
    load_checkpoint,
    predict_deterministic,
    save_checkpoint,
    train_fold,
)
from .nn import finite_difference_check, mse_loss
from .oracle import OracleSpec, make_case, transfer_function
from .tables import write_table
from .uncertainty import (
    ci_coverage,
    dominant_period,
    ensemble_covariance,
    explained_variance,
    gaussianity_report,
    mc_predict,
    spacing_dispersion,
    write_replica_container,
)
from .waves import SeaStateSpec, estimate_psd, jonswap_density, read_record_csv, write_record_csv

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


# --- shared helpers ----------------------------------------------------------


def _prepare_dir(path: str, force: bool) -> str:
    os.makedirs(path, exist_ok=True)
    if os.listdir(path) and not force:
        raise ArtifactExistsError(f"output directory {path!r} is not empty; pass --force to overwrite")
    return path


def _sea_specs(cfg: RunConfig) -> tuple[list[tuple[str, SeaStateSpec]], list[tuple[str, SeaStateSpec]]]:
    """Case list mirroring the fold layout: per training state one case per
    seed, then one case per held-out test state."""
    common = dict(
        gamma=cfg["gamma"],
        n_components=cfg["n_components"],
        dt=cfg["dt"],
        duration=cfg["duration"],
    )
    train_states = list(zip(cfg["train_hs"], cfg["train_tp"]))
    test_states = list(zip(cfg["test_hs"], cfg["test_tp"]))
    if len(test_states) != 2:
        raise ConfigError(f"exactly 2 test sea states are required, got {len(test_states)}")
    if set(test_states) & set(train_states):
        raise ConfigError("test sea states must differ from every training state")
    cases = []
    idx = 0
    for hs, tp in train_states:
        for seed_offset in range(cfg["seeds_per_state"]):
            spec = SeaStateSpec(hs=hs, tp=tp, seed=cfg["seed"] + seed_offset, **common)
            cases.append((f"case{idx:02d}", spec))
            idx += 1
    tests = []
    for j, (hs, tp) in enumerate(test_states):
        spec = SeaStateSpec(hs=hs, tp=tp, seed=cfg["test_seed_base"] + j, **common)
        tests.append((f"case{idx:02d}", spec))
        idx += 1
    return cases, tests


def _oracle_spec(cfg: RunConfig) -> OracleSpec:
    return OracleSpec(
        natural_period=cfg["natural_period"],
        damping_ratio=cfg["damping_ratio"],
        rao_scale=cfg["rao_scale"],
        phase_lag_mode=cfg["phase_lag_mode"],
        nonlinearity=cfg["nonlinearity"],
    )


def _arch_spec(cfg: RunConfig, m: int) -> ArchitectureSpec:
    return ArchitectureSpec(
        num_lstm_layers=cfg["num_lstm_layers"],
        lstm_hidden=cfg["lstm_hidden"],
        num_fc_blocks=cfg["num_fc_blocks"],
        fc_width=cfg["fc_width"],
        dropout_p=cfg["dropout_p"],
        m=m,
        lstm_shortcuts=cfg["lstm_shortcuts"],
    )


def _train_spec(cfg: RunConfig) -> TrainSpec:
    return TrainSpec(
        max_epochs=cfg["max_epochs"],
        batch_size=cfg["batch_size"],
        early_stopping_patience=cfg["early_stopping_patience"],
        early_stopping_min_delta=cfg["early_stopping_min_delta"],
        seed=cfg["seed"],
    )


def _load_manifest(out_dir: str) -> dict:
    path = os.path.join(out_dir, "cases", "folds.json")
    if not os.path.exists(path):
        raise DataError(f"no case manifest at {path}; run 'synth' first")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_records(out_dir: str, case_ids) -> dict:
    records = {}
    for case_id in case_ids:
        path = os.path.join(out_dir, "cases", f"{case_id}.csv")
        if not os.path.exists(path):
            raise DataError(f"missing case file {path}")
        records[case_id] = read_record_csv(path, case_id=case_id)
    return records


def model_filename(m: int, noise_level: float, fold: int) -> str:
    return f"ckpt_m{m:03d}_nl{noise_level!r}_fold{fold}.wmck"


def _checkpoint_path(out_dir: str, m: int, noise_level: float, fold: int) -> str:
    return os.path.join(out_dir, "models", model_filename(m, noise_level, fold))


def _test_windows(manifest: dict, records: dict, ckpt) -> tuple[np.ndarray, np.ndarray]:
    samples = [
        s
        for case_id in manifest["test_cases"]
        for s in window_case(records[case_id], ckpt.window, ckpt.norm)
    ]
    return samples_to_arrays(samples)


def _per_window_ev(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    return np.array([explained_variance(y_true[i], y_pred[i]) for i in range(len(y_true))])


def _predict_batched(net, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    return np.concatenate([net.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)])


# --- synth -------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out_dir: str, force: bool) -> int:
    cases_dir = _prepare_dir(os.path.join(out_dir, "cases"), force)
    oracle = _oracle_spec(cfg)
    train_cases, test_cases = _sea_specs(cfg)
    tags = {}
    case_meta = {}
    for case_id, sea in train_cases + test_cases:
        record = make_case(sea, oracle, trim_seconds=cfg["trim_seconds"], case_id=case_id)
        write_record_csv(record, os.path.join(cases_dir, f"{case_id}.csv"))
        tags[case_id] = (sea.hs, sea.tp)
        case_meta[case_id] = {"hs": sea.hs, "tp": sea.tp, "seed": sea.seed}
        # spectral sanity artifact: estimated vs target densities
        seg = min(256, record.n_samples // 4)
        psd_eta = estimate_psd(record, "eta", segment_length=seg)
        psd_heave = estimate_psd(record, "heave", segment_length=seg)
        interior = psd_eta.omegas > 0
        omegas = psd_eta.omegas[interior]
        target_eta = jonswap_density(sea, omegas)
        target_heave = np.abs(transfer_function(oracle, omegas)) ** 2 * target_eta
        write_table(
            os.path.join(cases_dir, f"{case_id}_psd.csv"),
            ["omega", "psd_eta", "psd_eta_target", "psd_heave", "psd_heave_target"],
            zip(
                omegas.tolist(),
                psd_eta.densities[interior].tolist(),
                target_eta.tolist(),
                psd_heave.densities[interior].tolist(),
                target_heave.tolist(),
            ),
        )
    layout = build_folds(tags, n_folds=len(train_cases) // 2)
    manifest = {
        "folds": [list(f) for f in layout.folds],
        "test_cases": list(layout.test_cases),
        "cases": case_meta,
        "dt": cfg["dt"],
        "trim_seconds": cfg["trim_seconds"],
        "rng_algorithm": "numpy-PCG64",
    }
    with open(os.path.join(cases_dir, "folds.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_snapshot(cfg, os.path.join(cases_dir, "synth.config"))
    print(f"synth: wrote {len(train_cases)} fold cases + {len(test_cases)} test cases to {cases_dir}")
    return EXIT_OK


# --- train -------------------------------------------------------------------


def _train_one(job) -> tuple:
    (m, fold_index, noise_level, cfg_values, out_dir) = job
    cfg = RunConfig(values=cfg_values)
    manifest = _load_manifest(out_dir)
    layout = build_folds(
        {cid: (meta["hs"], meta["tp"]) for cid, meta in manifest["cases"].items()},
        n_folds=len(manifest["folds"]),
    )
    records = _load_records(out_dir, layout.all_fold_cases())
    ckpt, curve = train_fold(
        _arch_spec(cfg, m),
        WindowSpec(m=m),
        _train_spec(cfg),
        layout,
        fold_index,
        records,
        noise_level=noise_level,
    )
    ckpt_path = _checkpoint_path(out_dir, m, noise_level, fold_index)
    save_checkpoint(ckpt, ckpt_path)
    curve.write_csv(os.path.join(out_dir, "models", f"curve_m{m:03d}_nl{noise_level!r}_fold{fold_index}.csv"))
    return (m, fold_index, noise_level, ckpt.metadata)


def cmd_train(cfg: RunConfig, out_dir: str, force: bool, threads: int) -> int:
    models_dir = _prepare_dir(os.path.join(out_dir, "models"), force)
    manifest = _load_manifest(out_dir)
    n_folds = len(manifest["folds"])
    folds = cfg["folds"] if cfg["folds"] else tuple(range(n_folds))
    for f in folds:
        if not (0 <= f < n_folds):
            raise ConfigError(f"fold {f} outside [0, {n_folds})")
    m_values = cfg["m_list"] if cfg["m_list"] else (cfg["m"],)
    noise_level = cfg["train_noise_level"]
    jobs = [(m, f, noise_level, cfg.values, out_dir) for m in m_values for f in folds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(job) for job in jobs]
    rows = [
        (m, fold, nl, meta["epochs_run"], meta["best_epoch"], meta["best_val_mse"], meta["best_val_ev"])
        for (m, fold, nl, meta) in sorted(results, key=lambda r: (r[0], r[1]))
    ]
    write_table(
        os.path.join(models_dir, "train_summary.csv"),
        ["m", "fold", "train_noise_level", "epochs_run", "best_epoch", "best_val_mse", "best_val_ev"],
        rows,
    )
    write_snapshot(cfg, os.path.join(models_dir, "train.config"))
    for row in rows:
        print(f"train: m={row[0]} fold={row[1]} nl={row[2]} epochs={row[3]} best_val_mse={row[5]:.6g} best_val_ev={row[6]:.4f}")
    return EXIT_OK


# --- predict -----------------------------------------------------------------


def cmd_predict(
    cfg: RunConfig,
    out_dir: str,
    force: bool,
    checkpoint_path: str,
    case_id: str,
    anchor: str,
    write_replicas: bool,
) -> int:
    pred_dir = _prepare_dir(os.path.join(out_dir, "predictions"), force)
    ckpt = load_checkpoint(checkpoint_path)
    records = _load_records(out_dir, [case_id])
    record = records[case_id]
    spec = ckpt.window
    count = spec.sample_count(record.n_samples)
    if count == 0:
        raise DataError(f"case {case_id} is too short for n={spec.n}, m={spec.m}, w={spec.w}")
    lo, hi = spec.n, spec.n + count - 1
    if anchor == "random":
        p = int(np.random.default_rng([cfg["seed"], 0x616E63]).integers(lo, hi + 1))
    else:
        p = int(anchor)
        if not (lo <= p <= hi):
            raise DataError(f"anchor {p} inadmissible for case {case_id}; admissible range [{lo}, {hi}]")
    samples = window_case(record, spec, ckpt.norm)
    sample = samples[p - spec.n]
    assert sample.origin == (case_id, p)
    dist = mc_predict(ckpt, sample.x, b=cfg["mc_replicas"], seed=cfg["seed"], level=cfg["ci_level"])
    det = predict_deterministic(ckpt, sample.x)
    norm = ckpt.norm
    write_table(
        os.path.join(pred_dir, "prediction_mc.csv"),
        ["point", "mean", "std", "ci_lo", "ci_hi"],
        [
            (
                i,
                float(norm.denormalize_motion(dist.mean[i])),
                float(dist.std[i] * norm.std_motion),
                float(norm.denormalize_motion(dist.ci_lower[i])),
                float(norm.denormalize_motion(dist.ci_upper[i])),
            )
            for i in range(dist.m)
        ],
    )
    write_table(
        os.path.join(pred_dir, "prediction_point.csv"),
        ["point", "deterministic", "truth"],
        [
            (i, float(norm.denormalize_motion(det[i])), float(norm.denormalize_motion(sample.y[i])))
            for i in range(spec.m)
        ],
    )
    ev_det = explained_variance(sample.y, det)
    ev_mc = explained_variance(sample.y, dist.mean)
    write_table(
        os.path.join(pred_dir, "prediction_metrics.csv"),
        ["case_id", "anchor", "b", "level", "ev_deterministic", "ev_mc_mean"],
        [(case_id, p, dist.b, dist.level, ev_det, ev_mc)],
    )
    if write_replicas:
        write_replica_container(os.path.join(pred_dir, "replicas.wmmc"), dist)
    write_snapshot(cfg, os.path.join(pred_dir, "predict.config"))
    print(f"predict: case={case_id} anchor={p} ev_mc={ev_mc:.4f} ev_det={ev_det:.4f}")
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def cmd_eval(cfg: RunConfig, out_dir: str, force: bool) -> int:
    metrics_dir = _prepare_dir(os.path.join(out_dir, "metrics"), force)
    manifest = _load_manifest(out_dir)
    records = _load_records(out_dir, manifest["test_cases"])
    m_values = cfg["m_list"] if cfg["m_list"] else (cfg["m"],)
    fold = cfg["eval_fold"]
    nl = cfg["train_noise_level"]
    missing = [
        _checkpoint_path(out_dir, m, nl, fold)
        for m in m_values
        if not os.path.exists(_checkpoint_path(out_dir, m, nl, fold))
    ]
    if missing:
        raise DataError("missing checkpoints: " + ", ".join(missing))
    rng = np.random.default_rng([cfg["seed"], 0x6576])
    ev_rows = []
    coverage_rows = []
    for m in m_values:
        ckpt = load_checkpoint(_checkpoint_path(out_dir, m, nl, fold))
        net = ckpt.build_network()
        x_test, y_test = _test_windows(manifest, records, ckpt)
        pred = _predict_batched(net, x_test)
        evs = _per_window_ev(y_test, pred)
        ev_rows.append((m, float(evs.mean()), float(evs.std()), len(evs)))
        stride = max(1, cfg["coverage_window_stride"])
        coverage = ci_coverage(
            ckpt,
            x_test[::stride],
            y_test[::stride],
            b=cfg["coverage_replicas"],
            level=cfg["ci_level"],
            seed=cfg["seed"],
        )
        coverage_rows.append((m, cfg["ci_level"], cfg["coverage_replicas"], stride, float(coverage)))
    write_table(metrics_dir + "/ev_vs_horizon.csv", ["m", "mean_ev", "std_ev", "n_windows"], ev_rows)
    write_table(
        metrics_dir + "/coverage.csv",
        ["m", "level", "b", "window_stride", "coverage"],
        coverage_rows,
    )

    # CI time-series examples on randomly selected test windows (first m)
    ckpt = load_checkpoint(_checkpoint_path(out_dir, m_values[0], nl, fold))
    x_test, y_test = _test_windows(manifest, records, ckpt)
    norm = ckpt.norm
    n_examples = min(3, len(x_test))
    picks = rng.choice(len(x_test), size=n_examples, replace=False)
    ci_rows = []
    for w_idx, idx in enumerate(picks):
        dist = mc_predict(ckpt, x_test[idx], b=cfg["mc_replicas"], seed=cfg["seed"] + w_idx, level=cfg["ci_level"])
        ev = explained_variance(y_test[idx], dist.mean)
        for i in range(dist.m):
            ci_rows.append(
                (
                    w_idx,
                    int(idx),
                    i,
                    float(norm.denormalize_motion(dist.mean[i])),
                    float(dist.std[i] * norm.std_motion),
                    float(norm.denormalize_motion(dist.ci_lower[i])),
                    float(norm.denormalize_motion(dist.ci_upper[i])),
                    float(norm.denormalize_motion(y_test[idx][i])),
                    ev,
                )
            )
    write_table(
        metrics_dir + "/ci_timeseries.csv",
        ["window", "test_index", "point", "mean", "std", "ci_lo", "ci_hi", "truth", "window_ev"],
        ci_rows,
    )

    # replica-count stability of the per-point distribution
    idx = int(rng.integers(0, len(x_test)))
    points = sorted(int(v) for v in rng.choice(ckpt.arch.m, size=min(4, ckpt.arch.m), replace=False))
    gauss_rows = []
    for b in (50, 100, 500):
        dist = mc_predict(ckpt, x_test[idx], b=b, seed=cfg["seed"], level=cfg["ci_level"])
        for point in points:
            rep = gaussianity_report(dist, point)
            gauss_rows.append(
                (
                    b,
                    point,
                    rep["mean"],
                    rep["std"],
                    "" if rep["skewness"] is None else rep["skewness"],
                    "" if rep["excess_kurtosis"] is None else rep["excess_kurtosis"],
                )
            )
    write_table(
        metrics_dir + "/gaussianity_by_replicas.csv",
        ["b", "point", "mean", "std", "skewness", "excess_kurtosis"],
        gauss_rows,
    )

    # ensemble covariance of the largest-horizon model
    ckpt = load_checkpoint(_checkpoint_path(out_dir, m_values[-1], nl, fold))
    x_test, y_test = _test_windows(manifest, records, ckpt)
    idx = int(rng.integers(0, len(x_test)))
    dist = mc_predict(ckpt, x_test[idx], b=cfg["mc_replicas"], seed=cfg["seed"], level=cfg["ci_level"])
    summary = ensemble_covariance(dist)
    write_table(
        metrics_dir + "/covariance_matrix.csv",
        [f"c{j}" for j in range(summary.normalized.shape[1])],
        [tuple(float(v) for v in row) for row in summary.normalized],
    )
    disp = {row["lag"]: row for row in spacing_dispersion(summary.cov)}
    spacing_rows = []
    var0 = summary.spacing_curve[0] if summary.spacing_curve[0] != 0 else 1.0
    for lag, value in enumerate(summary.spacing_curve):
        d = disp.get(lag)
        spacing_rows.append(
            (
                lag,
                float(value),
                float(value / var0),
                "" if d is None else d["cv"],
                "" if d is None else d["flagged"],
            )
        )
    write_table(
        metrics_dir + "/covariance_spacing.csv",
        ["lag", "cov", "cov_normalized", "cv", "flagged"],
        spacing_rows,
    )
    test_tp = manifest["cases"][manifest["test_cases"][0]]["tp"]
    period = dominant_period(summary.spacing_curve)
    write_table(
        metrics_dir + "/covariance_summary.csv",
        ["m", "dominant_period_samples", "tp_samples", "degenerate_rows"],
        [(m_values[-1], float(period), float(test_tp / manifest["dt"]), len(summary.degenerate_rows))],
    )
    write_snapshot(cfg, os.path.join(metrics_dir, "eval.config"))
    for m, mean_ev, std_ev, n_win in ev_rows:
        print(f"eval: m={m} mean_ev={mean_ev:.4f} std_ev={std_ev:.4f} windows={n_win}")
    print(f"eval: coverage={coverage_rows[0][4]:.3f} at level={cfg['ci_level']}")
    return EXIT_OK


# --- noise sweep ---------------------------------------------------------------


def cmd_noise_sweep(cfg: RunConfig, out_dir: str, force: bool) -> int:
    metrics_dir = _prepare_dir(os.path.join(out_dir, "noise_sweep"), force)
    manifest = _load_manifest(out_dir)
    records = _load_records(out_dir, manifest["test_cases"])
    m_values = cfg["m_list"] if cfg["m_list"] else (cfg["m"],)
    fold = cfg["eval_fold"]
    rows = []
    for m in m_values:
        for train_nl in cfg["train_noise_levels"]:
            path = _checkpoint_path(out_dir, m, train_nl, fold)
            if not os.path.exists(path):
                raise DataError(f"missing checkpoint for train noise level {train_nl}: {path}")
            ckpt = load_checkpoint(path)
            net = ckpt.build_network()
            samples = [
                s
                for case_id in manifest["test_cases"]
                for s in window_case(records[case_id], ckpt.window, ckpt.norm)
            ]
            _, y_test = samples_to_arrays(samples)
            for k, test_nl in enumerate(cfg["test_noise_levels"]):
                noisy = inject_noise(samples, test_nl, seed=cfg["seed"] + 31 * k)
                x_noisy, _ = samples_to_arrays(noisy)
                pred = _predict_batched(net, x_noisy)
                evs = _per_window_ev(y_test, pred)
                rows.append((train_nl, float(test_nl), m, float(evs.mean()), float(evs.std()), len(evs)))
    write_table(
        metrics_dir + "/noise_sweep.csv",
        ["train_noise_level", "test_noise_level", "m", "mean_ev", "std_ev", "n_windows"],
        rows,
    )
    write_snapshot(cfg, os.path.join(metrics_dir, "noise-sweep.config"))
    for row in rows:
        print(f"noise-sweep: train_nl={row[0]} test_nl={row[1]} m={row[2]} mean_ev={row[3]:.4f}")
    return EXIT_OK


# --- gradient check ------------------------------------------------------------


def cmd_gradcheck(cfg: RunConfig) -> int:
    arch = ArchitectureSpec(
        num_lstm_layers=2,
        lstm_hidden=4,
        num_fc_blocks=2,
        fc_width=4,
        dropout_p=cfg["dropout_p"],
        m=3,
        lstm_shortcuts=True,
    )
    net = build_model(arch, seed=cfg["seed"])
    rng = np.random.default_rng([cfg["seed"], 0x6763])
    x = rng.uniform(-0.5, 0.5, (2, 6, 2))
    y = rng.uniform(-0.5, 0.5, (2, arch.m))
    params = net.parameters()
    for value in params.values():
        value[...] = rng.uniform(-0.5, 0.5, value.shape)
    masks = net.sample_masks(2, np.random.default_rng([cfg["seed"], 0x6D61736B]))

    def loss_and_grads():
        pred, cache = net.forward(x, masks=masks, keep_cache=True)
        loss, d_pred = mse_loss(pred, y)
        return loss, net.backward(d_pred, cache)

    worst, per_block = finite_difference_check(loss_and_grads, params)
    for name in sorted(per_block):
        print(f"gradcheck: {name}: max rel err {per_block[name]:.3e}")
    print(f"gradcheck: overall max rel err {worst:.3e}")
    if worst >= 1e-4:
        raise NumericError(f"gradient check failed: max relative error {worst:.3e} >= 1e-4")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--out", default="runs/default", help="run directory (default: runs/default)")
    common.add_argument("--force", action="store_true", help="overwrite non-empty output directories")
    common.add_argument("--desk-profile", action="store_true", help="small laptop-scale configuration")
    common.add_argument("--threads", type=int, default=None, help="max parallel training workers")
    common.add_argument(
        "-O",
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )

    parser = argparse.ArgumentParser(prog="heavecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="synthesize wave/heave cases and the fold manifest")
    sub.add_parser("train", parents=[common], help="train checkpoints per fold and horizon")
    p_pred = sub.add_parser("predict", parents=[common], help="forecast one window with uncertainty")
    p_pred.add_argument("--checkpoint", required=True, help="checkpoint file")
    p_pred.add_argument("--case", required=True, help="case id (file <out>/cases/<id>.csv)")
    p_pred.add_argument("--anchor", default="random", help="anchor index or 'random'")
    p_pred.add_argument("--write-replicas", action="store_true", help="also write the binary replica matrix")
    sub.add_parser("eval", parents=[common], help="test-fold metrics and figure-ready CSVs")
    sub.add_parser("noise-sweep", parents=[common], help="EV grid over train/test noise levels")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every gradient")
    return parser


def _overrides_from_args(args) -> dict[str, str]:
    overrides = {}
    for item in args.override:
        if "=" not in item:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    return overrides


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = resolve_config(
        config_path=args.config,
        overrides=_overrides_from_args(args),
        desk_profile=args.desk_profile,
    )
    out_dir = args.out
    if args.command == "synth":
        return cmd_synth(cfg, out_dir, args.force)
    if args.command == "train":
        return cmd_train(cfg, out_dir, args.force, threads=cfg["threads"])
    if args.command == "predict":
        return cmd_predict(
            cfg,
            out_dir,
            args.force,
            checkpoint_path=args.checkpoint,
            case_id=args.case,
            anchor=args.anchor,
            write_replicas=args.write_replicas,
        )
    if args.command == "eval":
        return cmd_eval(cfg, out_dir, args.force)
    if args.command == "noise-sweep":
        return cmd_noise_sweep(cfg, out_dir, args.force)
    if args.command == "gradcheck":
        return cmd_gradcheck(cfg)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ConfigError, DomainError, UsageError, StructuralError) as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UndefinedScoreError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArtifactExistsError, OSError) as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return EXIT_IO
    except HeavecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
