"""Synthetic platform dynamics: wave elevation in, heave motion out.

A single-degree-of-freedom oscillator stands in for the floating platform.
Its frequency response

    H(omega) = rao_scale * wn^2 / (wn^2 - omega^2 + 2i * zeta * wn * omega)

acts as the ground-truth generator for every training and evaluation run,
so all accuracy statements in this package are self-consistent against it.
An optional cubic-stiffness term turns the linear oscillator into a
Duffing-type one integrated by fixed-step RK4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .waves import SeaStateSpec, TimeSeriesRecord, synthesize_wave

PHASE_LAG_MODES = ("minimum-phase", "zero-phase")


@dataclass(frozen=True)
class OracleSpec:
    """One-DOF heave response model.

    natural_period [s] and damping_ratio (fraction of critical) place the
    resonance; rao_scale is the low-frequency response amplitude ratio.
    nonlinearity > 0 adds a cubic restoring term and switches the solver
    from frequency-domain filtering to time stepping.
    """

    natural_period: float = 19.0
    damping_ratio: float = 0.08
    rao_scale: float = 0.6
    phase_lag_mode: str = "minimum-phase"
    nonlinearity: float = 0.0

    def __post_init__(self):
        if self.natural_period <= 0:
            raise ConfigError(f"natural_period must be > 0, got {self.natural_period}")
        if not (0.0 < self.damping_ratio < 1.0):
            raise ConfigError(f"damping_ratio must lie in (0, 1), got {self.damping_ratio}")
        if self.rao_scale <= 0:
            raise ConfigError(f"rao_scale must be > 0, got {self.rao_scale}")
        if self.phase_lag_mode not in PHASE_LAG_MODES:
            raise ConfigError(f"phase_lag_mode must be one of {PHASE_LAG_MODES}, got {self.phase_lag_mode!r}")
        if self.nonlinearity < 0:
            raise ConfigError(f"nonlinearity must be >= 0, got {self.nonlinearity}")

    @property
    def omega_n(self) -> float:
        return 2.0 * math.pi / self.natural_period


def transfer_function(spec: OracleSpec, omega) -> np.ndarray:
    """Complex frequency response H(omega) of the linear path."""
    omega = np.asarray(omega, dtype=float)
    wn = spec.omega_n
    return spec.rao_scale * wn**2 / (wn**2 - omega**2 + 2j * spec.damping_ratio * wn * omega)


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1)).bit_length()


def _linear_heave(eta: np.ndarray, dt: float, spec: OracleSpec) -> np.ndarray:
    # steady-state filtering on a zero-padded FFT grid, then truncation
    n = len(eta)
    nfft = _next_pow2(n)
    spectrum = np.fft.rfft(eta, nfft)
    omega = 2.0 * math.pi * np.fft.rfftfreq(nfft, dt)
    h = transfer_function(spec, omega)
    if spec.phase_lag_mode == "zero-phase":
        h = np.abs(h)
    heave = np.fft.irfft(spectrum * h, nfft)[:n]
    return heave


def _duffing_heave(eta: np.ndarray, dt: float, spec: OracleSpec) -> np.ndarray:
    # x'' + 2 zeta wn x' + wn^2 (x + kappa x^3) = wn^2 rao eta(t), RK4 at dt
    # with the forcing linearly interpolated at half steps.
    wn = spec.omega_n
    two_zw = 2.0 * spec.damping_ratio * wn
    wn2 = wn * wn
    kappa = spec.nonlinearity
    force = wn2 * spec.rao_scale * eta

    def accel(x, v, f):
        return f - two_zw * v - wn2 * (x + kappa * x**3)

    n = len(eta)
    out = np.empty(n)
    x = 0.0
    v = 0.0
    out[0] = x
    for k in range(n - 1):
        f0 = force[k]
        f1 = force[k + 1]
        fh = 0.5 * (f0 + f1)
        a1 = accel(x, v, f0)
        x2 = x + 0.5 * dt * v
        v2 = v + 0.5 * dt * a1
        a2 = accel(x2, v2, fh)
        x3 = x + 0.5 * dt * v2
        v3 = v + 0.5 * dt * a2
        a3 = accel(x3, v3, fh)
        x4 = x + dt * v3
        v4 = v + dt * a3
        a4 = accel(x4, v4, f1)
        x = x + dt * (v + 2.0 * v2 + 2.0 * v3 + v4) / 6.0
        v = v + dt * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
        if not (math.isfinite(x) and math.isfinite(v)):
            raise NumericError("heave integration diverged", where=f"first non-finite state at step {k + 1}")
        out[k + 1] = x
    return out


def simulate_heave(wave: TimeSeriesRecord, spec: OracleSpec) -> TimeSeriesRecord:
    """Return a copy of ``wave`` with a synthetic "heave" channel added."""
    eta = wave.channel("eta")
    if spec.nonlinearity > 0:
        heave = _duffing_heave(eta, wave.dt, spec)
    else:
        heave = _linear_heave(eta, wave.dt, spec)
    channels = {k: v.copy() for k, v in wave.channels.items()}
    channels["heave"] = heave
    return TimeSeriesRecord(dt=wave.dt, channels=channels, t0=wave.t0, case_id=wave.case_id)


def make_case(
    sea: SeaStateSpec,
    oracle: OracleSpec,
    trim_seconds: float = 120.0,
    case_id: str = "",
) -> TimeSeriesRecord:
    """Synthesize a wave, run it through the oscillator, drop the start-up.

    The leading ``trim_seconds`` (floor(trim/dt) samples) of both channels
    are removed so the retained record is free of setting-up effects.
    """
    if trim_seconds < 0:
        raise ConfigError(f"trim_seconds must be >= 0, got {trim_seconds}")
    if trim_seconds >= sea.duration:
        raise ConfigError(f"trim_seconds={trim_seconds} must be shorter than duration={sea.duration}")
    if not case_id:
        case_id = f"hs{sea.hs:g}_tp{sea.tp:g}_seed{sea.seed}"
    wave = synthesize_wave(sea, case_id=case_id)
    record = simulate_heave(wave, oracle)
    n_trim = int(math.floor(trim_seconds / sea.dt))
    if n_trim == 0:
        return record
    return record.trimmed(n_trim)
