"""Irregular sea-surface synthesis and spectral estimation.

The sea surface is modelled as a superposition of sinusoidal components with
random phases,

    eta(t) = sum_i zeta_i * cos(omega_i * t + eps_i),

where the amplitudes zeta_i = sqrt(2 * S(omega_i) * d_omega) are fixed by a
JONSWAP spectral density S and only the phases are random.  Under this
linear random-phase model eta(t) is a stationary, approximately Gaussian
process whose variance equals Hs^2 / 16.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ConfigError, DataError, DomainError

TWO_PI = 2.0 * math.pi

#: Name of the pseudo-random generator backing every seeded draw in this
#: package; recorded in config snapshots and checkpoints.
RNG_ALGORITHM = "numpy-PCG64"


@dataclass(frozen=True)
class SeaStateSpec:
    """Complete recipe for one irregular-wave realization.

    ``hs`` [m] and ``tp`` [s] set the sea-state severity and peak period,
    ``gamma`` the peak enhancement.  The spectrum is discretized into
    ``n_components`` equally spaced frequency bins over
    [``omega_min``, ``omega_max``] (rad/s); both band edges default to
    0.4 and 4 times the peak frequency, which captures essentially all
    JONSWAP energy at gamma near 2.4.  ``seed`` fixes the random phases,
    so an identical spec reproduces the identical series.
    """

    hs: float
    tp: float
    gamma: float = 2.4
    n_components: int = 256
    omega_min: float | None = None
    omega_max: float | None = None
    seed: int = 0
    dt: float = 0.775
    duration: float = 1800.0

    def __post_init__(self):
        if self.hs < 0:
            raise ConfigError(f"hs must be >= 0, got {self.hs}")
        for name in ("tp", "gamma", "dt", "duration"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_components < 2:
            raise ConfigError(f"n_components must be >= 2, got {self.n_components}")
        lo, hi = self.band
        if not (0.0 < lo < hi):
            raise ConfigError(f"frequency band must satisfy 0 < omega_min < omega_max, got [{lo}, {hi}]")
        nyquist = math.pi / self.dt
        if hi >= nyquist:
            raise ConfigError(
                f"omega_max={hi:.4f} rad/s is not below the Nyquist frequency {nyquist:.4f} rad/s for dt={self.dt}"
            )
        if not (lo <= self.omega_p <= hi):
            raise ConfigError(f"peak frequency {self.omega_p:.4f} rad/s lies outside the band [{lo:.4f}, {hi:.4f}]")

    @property
    def omega_p(self) -> float:
        return TWO_PI / self.tp

    @property
    def band(self) -> tuple[float, float]:
        lo = 0.4 * self.omega_p if self.omega_min is None else self.omega_min
        hi = 4.0 * self.omega_p if self.omega_max is None else self.omega_max
        return lo, hi

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration / self.dt))


@dataclass
class SpectrumCurve:
    """One-sided spectral density S(omega) on an ascending frequency grid."""

    omegas: np.ndarray
    densities: np.ndarray

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.densities = np.asarray(self.densities, dtype=float)
        if self.omegas.shape != self.densities.shape or self.omegas.ndim != 1:
            raise ConfigError("omegas and densities must be 1-d arrays of equal length")
        if np.any(np.diff(self.omegas) <= 0):
            raise ConfigError("omegas must be strictly increasing")
        if np.any(self.densities < 0):
            raise ConfigError("spectral densities must be non-negative")

    def integral(self) -> float:
        """Total power: the integral of S over the stored grid."""
        return float(np.trapezoid(self.densities, self.omegas))

    def peak_omega(self) -> float:
        return float(self.omegas[int(np.argmax(self.densities))])


@dataclass
class TimeSeriesRecord:
    """Uniformly sampled named channels ("eta" wave elevation, optionally
    "heave" motion), all in meters."""

    dt: float
    channels: dict[str, np.ndarray]
    t0: float = 0.0
    case_id: str = ""

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.channels:
            raise ConfigError("record needs at least one channel")
        lengths = {name: len(v) for name, v in self.channels.items()}
        if len(set(lengths.values())) != 1:
            raise DataError(f"channels differ in length: {lengths}")
        if self.n_samples < 2:
            raise DataError("channels must hold at least 2 samples")
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise DataError(f"record {self.case_id!r} has no channel {name!r}; available: {sorted(self.channels)}")
        return self.channels[name]

    def trimmed(self, n_leading: int) -> "TimeSeriesRecord":
        """Drop the first ``n_leading`` samples from every channel."""
        if n_leading < 0 or n_leading >= self.n_samples - 1:
            raise DataError(f"cannot trim {n_leading} samples from a record of {self.n_samples}")
        return TimeSeriesRecord(
            dt=self.dt,
            channels={k: v[n_leading:].copy() for k, v in self.channels.items()},
            t0=self.t0 + n_leading * self.dt,
            case_id=self.case_id,
        )


def _jonswap_shape(omega, omega_p: float, gamma: float):
    """Unnormalized JONSWAP shape.

    tau switches from 0.09 below the peak to 0.07 above it; at omega_p the
    gamma exponent is exactly 1 either way, so the curve stays continuous.
    """
    omega = np.asarray(omega, dtype=float)
    tau = np.where(omega > omega_p, 0.07, 0.09)
    peak_arg = np.exp(-((omega - omega_p) ** 2) / (2.0 * tau**2 * omega_p**2))
    return (omega**-5.0 / omega_p**-4.0) * np.exp(-1.25 * (omega / omega_p) ** -4.0) * gamma**peak_arg


def _band_alpha(spec: SeaStateSpec, quad_points: int = 20001) -> float:
    """Normalization constant making the band-integral of S equal Hs^2/16.

    Independent of hs: the density is alpha * hs^2 * shape, so alpha only
    depends on the shape integral over the configured band.
    """
    lo, hi = spec.band
    grid = np.linspace(lo, hi, quad_points)
    shape_integral = float(np.trapezoid(_jonswap_shape(grid, spec.omega_p, spec.gamma), grid))
    return 1.0 / (16.0 * shape_integral)


def jonswap_density(spec: SeaStateSpec, omega):
    """JONSWAP spectral density S(omega) in m^2 s, normalized so that the
    integral over the spec's frequency band equals hs^2 / 16.

    Accepts a scalar or an array of angular frequencies (rad/s, > 0).
    """
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr <= 0):
        raise DomainError("jonswap_density requires omega > 0")
    alpha = _band_alpha(spec)
    out = alpha * spec.hs**2 * _jonswap_shape(omega_arr, spec.omega_p, spec.gamma)
    return float(out) if np.isscalar(omega) else out


def component_grid(spec: SeaStateSpec) -> tuple[np.ndarray, float]:
    """Equally spaced component frequencies (bin centers) and bin width."""
    lo, hi = spec.band
    d_omega = (hi - lo) / spec.n_components
    omegas = lo + (np.arange(spec.n_components) + 0.5) * d_omega
    return omegas, d_omega


def component_amplitudes(spec: SeaStateSpec) -> np.ndarray:
    """Deterministic component amplitudes zeta_i = sqrt(2 S(omega_i) d_omega)."""
    omegas, d_omega = component_grid(spec)
    if spec.hs == 0.0:
        return np.zeros(spec.n_components)
    return np.sqrt(2.0 * jonswap_density(spec, omegas) * d_omega)


def synthesize_wave(spec: SeaStateSpec, case_id: str = "") -> TimeSeriesRecord:
    """Generate one wave-elevation record from the spectral recipe.

    The random phase vector is drawn uniformly in [0, 2*pi) from a PCG64
    generator seeded with ``spec.seed``, so the function is a pure map from
    spec to series.
    """
    omegas, _ = component_grid(spec)
    zeta = component_amplitudes(spec)
    rng = np.random.default_rng(spec.seed)
    eps = rng.uniform(0.0, TWO_PI, spec.n_components)
    t = spec.dt * np.arange(spec.n_samples)
    eta = np.cos(np.outer(t, omegas) + eps) @ zeta
    return TimeSeriesRecord(dt=spec.dt, channels={"eta": eta}, t0=0.0, case_id=case_id)


def estimate_psd(
    record: TimeSeriesRecord,
    channel: str = "eta",
    segment_length: int = 256,
    overlap: float = 0.5,
) -> SpectrumCurve:
    """Welch-averaged power spectral density of one channel.

    Returns the one-sided density on an angular-frequency grid, scaled so
    that its integral over omega approximates the channel variance.
    """
    x = record.channel(channel)
    if segment_length < 8 or segment_length > len(x):
        raise ConfigError(f"segment_length={segment_length} is degenerate for a record of {len(x)} samples")
    if not (0.0 <= overlap < 1.0):
        raise ConfigError(f"overlap must lie in [0, 1), got {overlap}")
    fs = 1.0 / record.dt
    freqs, pxx = signal.welch(
        x,
        fs=fs,
        window="hann",
        nperseg=segment_length,
        noverlap=int(segment_length * overlap),
        detrend="constant",
    )
    # convert density per Hz to density per rad/s
    return SpectrumCurve(omegas=TWO_PI * freqs, densities=pxx / TWO_PI)


# --- CSV interchange -------------------------------------------------------

#: channel order used by the CSV layout ``t,eta[,heave]``
_CSV_CHANNEL_ORDER = ("eta", "heave")


def write_record_csv(record: TimeSeriesRecord, path) -> None:
    """Write a record as ``t,eta[,heave]`` CSV (UTF-8, LF line endings).

    Floats use shortest round-trip formatting so a read-back is exact.
    """
    names = [c for c in _CSV_CHANNEL_ORDER if c in record.channels]
    extra = sorted(set(record.channels) - set(names))
    names += extra
    t = record.times()
    cols = [record.channels[name] for name in names]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t," + ",".join(names) + "\n")
        for i in range(record.n_samples):
            fh.write(repr(float(t[i])) + "," + ",".join(repr(float(c[i])) for c in cols) + "\n")


def read_record_csv(path, case_id: str | None = None) -> TimeSeriesRecord:
    """Read a ``t,eta[,heave]`` CSV back into a record.

    The time column must be uniform; dt and t0 are recovered from it.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = header.split(",")
        if not names or names[0] != "t":
            raise DataError(f"{path}: expected a header starting with 't', got {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 samples")
    data = np.array([[float(v) for v in row] for row in rows])
    if data.shape[1] != len(names):
        raise DataError(f"{path}: row width {data.shape[1]} does not match header {names}")
    t = data[:, 0]
    steps = np.diff(t)
    dt = float(steps[0])
    if dt <= 0 or np.any(np.abs(steps - dt) > 1e-9 * max(1.0, abs(dt))):
        raise DataError(f"{path}: time column is not uniformly sampled")
    channels = {name: data[:, j + 1] for j, name in enumerate(names[1:])}
    if "eta" not in channels:
        raise DataError(f"{path}: CSV must carry an 'eta' column")
    if case_id is None:
        import os

        case_id = os.path.splitext(os.path.basename(str(path)))[0]
    return TimeSeriesRecord(dt=dt, channels=channels, t0=float(t[0]), case_id=case_id)


# --- flat key=value configs ------------------------------------------------

def parse_keyvalue_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


_SEA_FIELDS = {
    "hs": float,
    "tp": float,
    "gamma": float,
    "n_components": int,
    "omega_min": float,
    "omega_max": float,
    "seed": int,
    "dt": float,
    "duration": float,
}


def sea_state_from_mapping(kv: dict[str, str]) -> SeaStateSpec:
    """Build a SeaStateSpec from string key=value pairs (extra keys rejected)."""
    kwargs = {}
    for key, raw in kv.items():
        if key not in _SEA_FIELDS:
            raise ConfigError(f"unknown sea-state key {key!r}")
        kwargs[key] = _SEA_FIELDS[key](raw)
    if "hs" not in kwargs or "tp" not in kwargs:
        raise ConfigError("sea-state config requires at least hs and tp")
    return SeaStateSpec(**kwargs)


def read_sea_state_config(path) -> SeaStateSpec:
    return sea_state_from_mapping(parse_keyvalue_file(path))
