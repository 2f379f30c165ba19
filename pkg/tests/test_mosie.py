import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import exp1, i0e, i1e

from sgenhance.mosie import (
    GAIN_CEILING,
    MosieParams,
    PRESETS,
    apply_estimator,
    format_sweep_tsv,
    gain_curve_sweep,
    mosie_gain,
    preset,
)
from sgenhance.psd_track import PsdTrack
from sgenhance.stft import Spectrogram, StftConfig

GRID_DB = np.array([-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0])


def db(x):
    return 10.0 ** (np.asarray(x) / 10.0)


def stsa_oracle(xi, gamma):
    nu = xi * gamma / (1.0 + xi)
    # exp(-nu/2) I_k(nu/2) == i_ke(nu/2)
    return np.sqrt(np.pi) / 2.0 * np.sqrt(nu) / gamma * ((1.0 + nu) * i0e(nu / 2.0) + nu * i1e(nu / 2.0))


def lsa_oracle(xi, gamma):
    nu = xi * gamma / (1.0 + xi)
    return xi / (1.0 + xi) * np.exp(0.5 * exp1(nu))


def grid():
    xi, gamma = np.meshgrid(db(GRID_DB), db(GRID_DB), indexing="ij")
    return xi, gamma


def test_stsa_limit():
    xi, gamma = grid()
    got = mosie_gain(xi, gamma, MosieParams(1.0, 1.0), clamp=False)
    assert np.max(np.abs(got - stsa_oracle(xi, gamma))) <= 1e-6


def test_lsa_limit():
    xi, gamma = grid()
    got = mosie_gain(xi, gamma, MosieParams(1.0, 0.001), clamp=False)
    assert np.max(np.abs(got - lsa_oracle(xi, gamma))) <= 1e-3


def test_mu_ordering_at_low_gamma():
    gammas = db(np.arange(-10.0, 0.5, 1.0))
    gains = [mosie_gain(db(10.0), gammas, MosieParams(mu, 0.25), clamp=False) for mu in (0.1, 0.25, 0.5, 1.0)]
    for lo, hi in zip(gains, gains[1:]):
        assert np.all(lo < hi)


def test_beta_ordering_at_low_gamma():
    gammas = db(np.arange(-10.0, 0.5, 1.0))
    gains = [mosie_gain(db(-5.0), gammas, MosieParams(0.25, b), clamp=False) for b in (0.001, 0.25, 0.5, 1.0)]
    for lo, hi in zip(gains, gains[1:]):
        assert np.all(lo < hi)


def test_beta_continuity():
    xi, gamma = grid()
    for mu in (0.1, 0.2, 0.5, 1.0):
        g1 = mosie_gain(xi, gamma, MosieParams(mu, 0.001), clamp=False)
        g2 = mosie_gain(xi, gamma, MosieParams(mu, 0.01), clamp=False)
        assert np.max(np.abs(g1 - g2)) <= 0.01


def test_clamp_and_zero_gamma():
    p = MosieParams(0.2, 1.0)
    assert mosie_gain(1.0, 0.0, p) == pytest.approx(p.gain_floor)
    assert mosie_gain(1e-6, 1e-3, p) == pytest.approx(p.gain_floor)
    assert mosie_gain(1e6, 1e-8, p) <= GAIN_CEILING
    with pytest.raises(ValueError):
        mosie_gain(np.nan, 1.0, p)


def test_presets():
    assert set(PRESETS) == {"gauss-stsa", "gauss-lsa", "sg-stsa", "sg-lsa"}
    assert preset("sg-stsa") == MosieParams(0.2, 1.0)
    assert preset("gauss-lsa").compression_beta == 0.001
    with pytest.raises(ValueError):
        preset("nope")
    with pytest.raises(ValueError):
        MosieParams(0.0, 1.0)


def _random_spec(rng, frames=6):
    cfg = StftConfig()
    coeffs = rng.standard_normal((cfg.n_bins, frames)) + 1j * rng.standard_normal((cfg.n_bins, frames))
    return Spectrogram(coeffs, cfg, frames * cfg.hop)


def test_apply_estimator_phase_and_gain_recovery():
    rng = np.random.default_rng(3)
    spec = _random_spec(rng)
    noise = np.full(spec.coeffs.shape, 1.5)
    speech = rng.uniform(0.01, 5.0, spec.coeffs.shape)
    track = PsdTrack.from_psds(spec.power(), speech, noise)
    out, gains = apply_estimator(spec, track, MosieParams(0.5, 0.5))
    np.testing.assert_allclose(np.angle(out.coeffs), np.angle(spec.coeffs), atol=1e-12)
    np.testing.assert_allclose(np.abs(out.coeffs) / np.abs(spec.coeffs), gains, atol=1e-12)


def test_apply_estimator_zero_bin_gets_floor():
    rng = np.random.default_rng(4)
    spec = _random_spec(rng)
    spec.coeffs[10, 2] = 0.0
    track = PsdTrack.from_psds(spec.power(), np.ones(spec.coeffs.shape), np.ones(spec.coeffs.shape))
    p = MosieParams(1.0, 1.0)
    _, gains = apply_estimator(spec, track, p)
    assert gains[10, 2] == pytest.approx(p.gain_floor)
    with pytest.raises(ValueError):
        apply_estimator(spec, PsdTrack.from_psds(np.ones((3, 3)), np.ones((3, 3)), np.ones((3, 3))), p)


def test_sweep_stsa_monotone_and_tsv():
    table = gain_curve_sweep(MosieParams(1.0, 1.0), xi_db=-5.0)
    assert table[0, 0] == -10.0 and table[-1, 0] == 20.0
    # the gain is monotone in the same direction as the closed-form oracle
    # (decreasing); the amplitude estimate G * sqrt(gamma) increases
    oracle = stsa_oracle(db(-5.0), db(table[:, 0]))
    assert np.all(np.sign(np.diff(table[:, 1])) == np.sign(np.diff(oracle)))
    assert np.all(np.diff(table[:, 1]) < 0)
    assert np.all(np.diff(table[:, 1] * np.sqrt(db(table[:, 0]))) > 0)
    text = format_sweep_tsv(table)
    assert text.splitlines()[0] == "snr_db\tgain"
    assert len(text.splitlines()) == table.shape[0] + 1


def test_sweep_shapes():
    t = gain_curve_sweep(MosieParams(0.25, 0.25), xi_db=10.0, sweep_range_db=(0.0, 10.0), step_db=10.0)
    assert t[0, 1] < t[1, 1]
    low = gain_curve_sweep(MosieParams(0.1, 0.25), gamma_db=0.0, sweep_range_db=(-20.0, 20.0))
    high = gain_curve_sweep(MosieParams(1.0, 0.25), gamma_db=0.0, sweep_range_db=(-20.0, 20.0))
    assert np.all(low[:, 1] < 1.1)
    assert np.max(high[:, 1]) > 1.1
    with pytest.raises(ValueError):
        gain_curve_sweep(MosieParams(1.0, 1.0))


@settings(max_examples=80, deadline=None)
@given(
    xi_db=st.floats(-30.0, 40.0),
    gamma_db=st.floats(-30.0, 60.0),
    mu=st.floats(0.05, 2.0),
    beta=st.floats(0.001, 2.0),
)
def test_gain_positive_finite(xi_db, gamma_db, mu, beta):
    g = mosie_gain(db(xi_db), db(gamma_db), MosieParams(mu, beta), clamp=False)
    assert np.isfinite(g) and g > 0


@settings(max_examples=40, deadline=None)
@given(xi_db=st.floats(-20.0, 20.0), gamma_db=st.floats(-10.0, 0.0), beta=st.floats(0.001, 1.0))
def test_gain_nondecreasing_in_mu_at_low_gamma(xi_db, gamma_db, beta):
    gains = [mosie_gain(db(xi_db), db(gamma_db), MosieParams(mu, beta), clamp=False) for mu in (0.1, 0.25, 0.5, 1.0)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(gains, gains[1:]))
