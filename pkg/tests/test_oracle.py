import numpy as np
import pytest

from heavecast.errors import ConfigError, DataError, NumericError
from heavecast.oracle import OracleSpec, make_case, simulate_heave, transfer_function
from heavecast.waves import SeaStateSpec, TimeSeriesRecord, estimate_psd, jonswap_density, synthesize_wave

DESK = dict(natural_period=19.0, damping_ratio=0.08, rao_scale=0.6)


def test_spec_validation():
    with pytest.raises(ConfigError):
        OracleSpec(damping_ratio=0.0)
    with pytest.raises(ConfigError):
        OracleSpec(damping_ratio=1.0)
    with pytest.raises(ConfigError):
        OracleSpec(rao_scale=-1.0)
    with pytest.raises(ConfigError):
        OracleSpec(phase_lag_mode="acausal")
    with pytest.raises(ConfigError):
        OracleSpec(nonlinearity=-0.1)


def test_zero_wave_gives_zero_heave():
    record = TimeSeriesRecord(dt=0.5, channels={"eta": np.zeros(512)})
    out = simulate_heave(record, OracleSpec(**DESK))
    assert np.all(out.channel("heave") == 0.0)
    out_nl = simulate_heave(record, OracleSpec(**DESK, nonlinearity=0.5))
    assert np.all(out_nl.channel("heave") == 0.0)


def test_missing_wave_channel():
    record = TimeSeriesRecord(dt=0.5, channels={"heave": np.zeros(16)})
    with pytest.raises(DataError):
        simulate_heave(record, OracleSpec(**DESK))


@pytest.mark.parametrize("mode", ["minimum-phase", "zero-phase"])
def test_resonant_gain_matches_closed_form(mode):
    # a monochromatic wave at the natural frequency is amplified by
    # rao_scale / (2 * damping_ratio) in steady state
    spec = OracleSpec(**DESK, phase_lag_mode=mode)
    dt = 0.25
    t = np.arange(int(4000 / dt)) * dt
    record = TimeSeriesRecord(dt=dt, channels={"eta": np.cos(spec.omega_n * t)})
    heave = simulate_heave(record, spec).channel("heave")
    mid = heave[len(heave) // 3 : 2 * len(heave) // 3]
    amplitude = 0.5 * (mid.max() - mid.min())
    expected = spec.rao_scale / (2.0 * spec.damping_ratio)
    assert amplitude == pytest.approx(expected, rel=0.02)


def test_linear_path_psd_transfer():
    # heave spectrum must equal |H|^2 times the wave spectrum, bin by bin,
    # over the band that carries the wave energy
    sea = SeaStateSpec(hs=3.0, tp=12.0, dt=0.5, duration=4 * 3600.0, seed=2)
    oracle = OracleSpec(**DESK)
    record = simulate_heave(synthesize_wave(sea), oracle)
    psd_eta = estimate_psd(record, "eta", segment_length=512)
    psd_heave = estimate_psd(record, "heave", segment_length=512)
    s_peak = psd_eta.densities.max()
    energetic = psd_eta.densities > 0.10 * s_peak
    h2 = np.abs(transfer_function(oracle, psd_eta.omegas[energetic])) ** 2
    expected = h2 * psd_eta.densities[energetic]
    np.testing.assert_allclose(psd_heave.densities[energetic], expected, rtol=0.10)


def test_linearity_doubling():
    sea = SeaStateSpec(hs=2.0, tp=10.0, dt=0.5, duration=600.0, seed=4)
    oracle = OracleSpec(**DESK)
    record = synthesize_wave(sea)
    single = simulate_heave(record, oracle).channel("heave")
    doubled_record = TimeSeriesRecord(dt=record.dt, channels={"eta": 2.0 * record.channel("eta")})
    doubled = simulate_heave(doubled_record, oracle).channel("heave")
    np.testing.assert_allclose(doubled, 2.0 * single, rtol=0, atol=1e-12)


def test_heave_stays_gaussian_for_linear_path():
    sea = SeaStateSpec(hs=17.4, tp=15.9, duration=1800.0, seed=6)
    heave = simulate_heave(synthesize_wave(sea), OracleSpec(**DESK)).channel("heave")
    z = heave - heave.mean()
    m2 = np.mean(z**2)
    skew = np.mean(z**3) / m2**1.5
    kurt = np.mean(z**4) / m2**2 - 3.0
    assert abs(skew) < 0.1
    assert abs(kurt) < 0.3


def test_energy_bound():
    sea = SeaStateSpec(hs=5.0, tp=11.0, dt=0.5, duration=3600.0, seed=8)
    oracle = OracleSpec(**DESK)
    record = simulate_heave(synthesize_wave(sea), oracle)
    gain = oracle.rao_scale / (2.0 * oracle.damping_ratio)
    assert np.var(record.channel("heave")) <= gain**2 * np.var(record.channel("eta"))


def test_duffing_small_amplitude_matches_linear_path():
    # with a tiny cubic term the RK4 route must agree with the independent
    # frequency-domain route once the start-up transient decays
    sea = SeaStateSpec(hs=0.5, tp=12.0, dt=0.25, duration=2400.0, seed=3)
    wave = synthesize_wave(sea)
    linear = simulate_heave(wave, OracleSpec(**DESK)).channel("heave")
    duffing = simulate_heave(wave, OracleSpec(**DESK, nonlinearity=1e-6)).channel("heave")
    n0 = len(linear) // 3
    scale = np.std(linear[n0:])
    assert np.max(np.abs(duffing[n0:] - linear[n0:])) < 0.05 * scale


def test_duffing_divergence_names_the_step():
    record = TimeSeriesRecord(dt=0.5, channels={"eta": np.array([0.0, np.nan, 0.0, 0.0])})
    with pytest.raises(NumericError) as err:
        simulate_heave(record, OracleSpec(**DESK, nonlinearity=1.0))
    assert "step" in str(err.value)


def test_zero_phase_mode_changes_phase_not_magnitude():
    sea = SeaStateSpec(hs=2.0, tp=10.0, dt=0.5, duration=3600.0, seed=5)
    wave = synthesize_wave(sea)
    minimum = simulate_heave(wave, OracleSpec(**DESK, phase_lag_mode="minimum-phase")).channel("heave")
    zero = simulate_heave(wave, OracleSpec(**DESK, phase_lag_mode="zero-phase")).channel("heave")
    assert not np.allclose(minimum, zero)
    assert np.var(zero) == pytest.approx(np.var(minimum), rel=0.02)


def test_make_case_trim_arithmetic():
    sea = SeaStateSpec(hs=2.0, tp=10.0, duration=600.0, seed=1)
    oracle = OracleSpec(**DESK)
    untrimmed = make_case(sea, oracle, trim_seconds=0.0)
    assert untrimmed.n_samples == int(np.floor(600.0 / 0.775))
    trimmed = make_case(sea, oracle, trim_seconds=120.0)
    # floor(120 / 0.775) = 154 leading samples removed
    assert untrimmed.n_samples - trimmed.n_samples == 154
    assert trimmed.case_id == "hs2_tp10_seed1"
    with pytest.raises(ConfigError):
        make_case(sea, oracle, trim_seconds=600.0)


def test_trimmed_head_matches_untrimmed_tail():
    sea = SeaStateSpec(hs=2.0, tp=10.0, duration=600.0, seed=1)
    oracle = OracleSpec(**DESK)
    untrimmed = make_case(sea, oracle, trim_seconds=0.0)
    trimmed = make_case(sea, oracle, trim_seconds=120.0)
    np.testing.assert_array_equal(trimmed.channel("heave"), untrimmed.channel("heave")[154:])
