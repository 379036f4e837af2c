"""Predictive uncertainty from stochastic-dropout inference.

Keeping dropout active at inference time and repeating the forward pass B
times turns one input into a replica matrix of forecasts.  Row statistics
of that matrix (population convention, divisor B) give the predictive mean
and variance; a z-quantile of the standard normal converts the per-point
standard deviation into confidence bounds.  The replica ensemble is also
analyzed as a stochastic process over the horizon: its covariance matrix,
the covariance as a function of point spacing, and per-point moment checks
against a Gaussian shape.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm as _std_normal

from .errors import DataError, DomainError, NumericError, UndefinedScoreError
from .forecaster import ForecastNetwork, ModelCheckpoint

REPLICA_CONTAINER_MAGIC = b"WMMC1"


def z_for_level(level: float) -> float:
    """Two-sided standard-normal quantile: 0.9 -> 1.6449 (approx. 1.645)."""
    if not (0.0 < level < 1.0):
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    return float(_std_normal.ppf(0.5 + 0.5 * level))


@dataclass
class PredictiveDistribution:
    """Replica matrix (b x m) plus its per-point summary statistics."""

    replicas: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    b: int
    level: float
    seed: int | None = None

    @classmethod
    def from_replicas(cls, replicas: np.ndarray, level: float = 0.9, seed: int | None = None):
        replicas = np.asarray(replicas, dtype=float)
        if replicas.ndim != 2 or replicas.shape[0] < 2:
            raise DomainError(f"need a (b >= 2) x m replica matrix, got shape {replicas.shape}")
        bad = np.flatnonzero(~np.all(np.isfinite(replicas), axis=1))
        if bad.size:
            raise NumericError("non-finite replica output", where=f"replica index {int(bad[0])}")
        mean = replicas.mean(axis=0)
        # divisor B (population), not B-1; columns whose replicas coincide get
        # exactly zero spread (the column mean itself can carry rounding)
        constant = np.ptp(replicas, axis=0) == 0.0
        mean = np.where(constant, replicas[0], mean)
        std = np.where(constant, 0.0, np.sqrt(np.mean((replicas - mean) ** 2, axis=0)))
        z = z_for_level(level)
        return cls(
            replicas=replicas,
            mean=mean,
            std=std,
            ci_lower=mean - z * std,
            ci_upper=mean + z * std,
            b=replicas.shape[0],
            level=level,
            seed=seed,
        )

    @property
    def m(self) -> int:
        return self.replicas.shape[1]

    def write_csv(self, path) -> None:
        """Export ``point,mean,std,ci_lo,ci_hi`` rows."""
        from .tables import write_table

        rows = [
            (i, float(self.mean[i]), float(self.std[i]), float(self.ci_lower[i]), float(self.ci_upper[i]))
            for i in range(self.m)
        ]
        write_table(path, ["point", "mean", "std", "ci_lo", "ci_hi"], rows)


def mc_predict(
    ckpt: ModelCheckpoint,
    x: np.ndarray,
    b: int = 500,
    seed: int = 0,
    level: float = 0.9,
    net: ForecastNetwork | None = None,
) -> PredictiveDistribution:
    """Run b stochastic forward passes on one input window.

    Fresh independent masks per replica, frozen weights.  The replicas are
    evaluated as one batched pass (row index = replica index), so the
    replica matrix is reproducible from the seed alone.
    """
    if b < 2:
        raise DomainError(f"replica count b must be >= 2, got {b}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DomainError(f"x must be one (n, 2) window, got shape {x.shape}")
    if net is None:
        net = ckpt.build_network()
    if net.arch.dropout_p == 0.0:
        # every replica is the same deterministic pass; tiling keeps the
        # zero-spread result exact
        replicas = np.tile(net.forward(x[None])[0], (b, 1))
    else:
        rng = np.random.default_rng([seed, 0x6D63])
        batch = np.ascontiguousarray(np.broadcast_to(x, (b, *x.shape)))
        replicas = net.forward(batch, masks=net.sample_masks(b, rng))
    return PredictiveDistribution.from_replicas(replicas, level=level, seed=seed)


def explained_variance(y_true, y_pred) -> float:
    """1 - Var[y - y*] / Var[y]; best value 1.0, lower is worse."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size < 2:
        raise DomainError(f"need two equal-length vectors (>= 2), got {y_true.shape} and {y_pred.shape}")
    var_true = float(np.var(y_true))
    if var_true == 0.0:
        raise UndefinedScoreError("explained variance undefined: Var[y] = 0")
    return 1.0 - float(np.var(y_true - y_pred)) / var_true


@dataclass
class CovarianceSummary:
    """Ensemble covariance, its row-normalized form, and the spacing curve."""

    cov: np.ndarray
    normalized: np.ndarray
    spacing_curve: np.ndarray
    degenerate_rows: tuple[int, ...] = ()


def ensemble_covariance(dist: PredictiveDistribution) -> CovarianceSummary:
    """Covariance of the replica ensemble over horizon points.

    COV_ij = E[(X_i - E X_i)(X_j - E X_j)] with expectation over replicas
    (divisor b).  Each row of the normalized matrix is divided by its
    diagonal term; zero-variance rows are flagged and left at zero.  The
    spacing curve holds the mean of COV_ij over all pairs with j - i = l.
    """
    centered = dist.replicas - dist.mean
    cov = centered.T @ centered / dist.b
    cov = 0.5 * (cov + cov.T)  # enforce exact symmetry against rounding
    diag = np.diag(cov).copy()
    degenerate = tuple(int(i) for i in np.flatnonzero(diag == 0.0))
    safe = np.where(diag == 0.0, 1.0, diag)
    normalized = cov / safe[:, None]
    for i in degenerate:
        normalized[i, :] = 0.0
    m = cov.shape[0]
    spacing = np.array([np.mean(np.diagonal(cov, offset=l)) for l in range(m)])
    return CovarianceSummary(cov=cov, normalized=normalized, spacing_curve=spacing, degenerate_rows=degenerate)


def spacing_dispersion(cov: np.ndarray, max_lag: int = 10) -> list[dict]:
    """Per-lag spread of COV_ij along each off-diagonal.

    For a stationary ensemble the covariance depends on the spacing only,
    so the coefficient of variation along each diagonal should stay small;
    rows with |cv| > 0.5 at short lags are flagged for the report.
    """
    rows = []
    for lag in range(min(max_lag, cov.shape[0])):
        diag = np.diagonal(cov, offset=lag)
        mean = float(np.mean(diag))
        std = float(np.std(diag))
        cv = abs(std / mean) if mean != 0.0 else math.inf
        rows.append({"lag": lag, "mean": mean, "std": std, "cv": cv, "flagged": cv > 0.5})
    return rows


def dominant_period(curve: np.ndarray, pad_factor: int = 16) -> float:
    """Dominant oscillation period of a short curve, in samples.

    Demeans the curve and reads the peak of its zero-padded spectrum; the
    padding interpolates the spectrum finely enough to resolve fractional
    periods on curves only a few cycles long.
    """
    curve = np.asarray(curve, dtype=float)
    if curve.size < 4:
        raise DomainError(f"need at least 4 points, got {curve.size}")
    x = curve - curve.mean()
    nfft = pad_factor * (1 << (curve.size - 1).bit_length())
    spectrum = np.abs(np.fft.rfft(x, nfft))
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    if k == 0:
        raise DataError("curve has no oscillatory component")
    return nfft / k


def ci_coverage(
    ckpt: ModelCheckpoint,
    x_windows: np.ndarray,
    y_windows: np.ndarray,
    b: int = 100,
    level: float = 0.9,
    seed: int = 0,
    chunk: int = 64,
) -> float:
    """Fraction of (window, horizon-point) pairs inside the level-CI.

    Every window gets its own b-replica ensemble; replicas for many windows
    are batched together for speed.
    """
    x_windows = np.asarray(x_windows, dtype=float)
    y_windows = np.asarray(y_windows, dtype=float)
    if len(x_windows) == 0:
        raise DataError("ci_coverage needs at least one window")
    net = ckpt.build_network()
    z = z_for_level(level)
    rng = np.random.default_rng([seed, 0x636F76])
    n_windows = len(x_windows)
    hits = 0
    total = 0
    for start in range(0, n_windows, chunk):
        xs = x_windows[start : start + chunk]
        k = len(xs)
        if net.arch.dropout_p == 0.0:
            mean = net.forward(xs)
            std = np.zeros_like(mean)
        else:
            tiled = np.repeat(xs, b, axis=0)  # rows: window-major, replica-minor
            out = net.forward(tiled, masks=net.sample_masks(k * b, rng)).reshape(k, b, -1)
            mean = out.mean(axis=1)
            std = np.sqrt(np.mean((out - mean[:, None, :]) ** 2, axis=1))
        truth = y_windows[start : start + chunk]
        inside = np.abs(truth - mean) <= z * std
        hits += int(inside.sum())
        total += inside.size
    return hits / total


def moment_summary(values: np.ndarray) -> dict:
    """Sample mean/std/skewness/excess kurtosis with degenerate guards.

    Constant input yields None markers for the shape moments instead of
    NaN.
    """
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if np.ptp(values) == 0.0:  # constant input: the mean itself may carry rounding
        return {"mean": float(values[0]), "std": 0.0, "skewness": None, "excess_kurtosis": None}
    centered = values - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return {"mean": mean, "std": 0.0, "skewness": None, "excess_kurtosis": None}
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    return {
        "mean": mean,
        "std": math.sqrt(m2),
        "skewness": m3 / m2**1.5,
        "excess_kurtosis": m4 / m2**2 - 3.0,
    }


def gaussianity_report(dist: PredictiveDistribution, point: int, bins: int = 20) -> dict:
    """Moment summary plus histogram for one horizon point's replicas."""
    if dist.b < 30:
        raise DomainError(f"need at least 30 replicas for a moment summary, got {dist.b}")
    if not (0 <= point < dist.m):
        raise DomainError(f"point {point} outside horizon [0, {dist.m})")
    values = dist.replicas[:, point]
    summary = moment_summary(values)
    counts, edges = np.histogram(values, bins=bins)
    summary["histogram_counts"] = counts.tolist()
    summary["histogram_edges"] = edges.tolist()
    summary["point"] = point
    summary["b"] = dist.b
    return summary


def write_replica_container(path, dist: PredictiveDistribution) -> None:
    """Binary replica matrix: magic ``WMMC1``, b, m, float64 LE payload."""
    with open(path, "wb") as fh:
        fh.write(REPLICA_CONTAINER_MAGIC)
        fh.write(struct.pack("<QQ", dist.b, dist.m))
        fh.write(np.ascontiguousarray(dist.replicas, dtype="<f8").tobytes())


def read_replica_container(path, level: float = 0.9) -> PredictiveDistribution:
    with open(path, "rb") as fh:
        magic = fh.read(len(REPLICA_CONTAINER_MAGIC))
        if magic != REPLICA_CONTAINER_MAGIC:
            raise DataError(f"{path}: not a {REPLICA_CONTAINER_MAGIC.decode()} replica container")
        b, m = struct.unpack("<QQ", fh.read(16))
        payload = fh.read(8 * b * m)
    if len(payload) != 8 * b * m:
        raise DataError(f"{path}: truncated replica payload")
    replicas = np.frombuffer(payload, dtype="<f8").reshape(b, m).copy()
    return PredictiveDistribution.from_replicas(replicas, level=level)
