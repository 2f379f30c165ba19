import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgenhance.errors import ModelError
from sgenhance.nmf import (
    NmfModel,
    infer_activations,
    is_cost,
    is_divergence,
    nmf_psd,
    stack_context,
    train_bases,
    update_activations,
)
from sgenhance.signal_io import AudioBuffer
from sgenhance.stft import analyze


def test_stack_context_examples():
    rng = np.random.default_rng(0)
    P = rng.uniform(size=(4, 9))
    np.testing.assert_array_equal(stack_context(P, 1), P)
    one = P[:, :1]
    np.testing.assert_array_equal(stack_context(one, 3), np.vstack([one, one, one]))
    S = stack_context(P, 7)
    assert S.shape == (28, 9)
    np.testing.assert_array_equal(S[:, 4], np.concatenate([P[:, j] for j in range(1, 8)]))
    # edge replication
    np.testing.assert_array_equal(S[:4, 0], P[:, 0])
    np.testing.assert_array_equal(S[-4:, 8], P[:, 8])
    with pytest.raises(ValueError):
        stack_context(P, 4)


def test_is_cost_examples():
    rng = np.random.default_rng(1)
    W, H = rng.uniform(0.1, 1, (5, 3)), rng.uniform(0.1, 1, (3, 4))
    assert is_cost(W @ H, W, H, 0.0) == pytest.approx(0.0, abs=1e-12)
    Y = rng.uniform(0.1, 2, (5, 4))
    assert is_cost(Y, W, H, 10.0) - 10.0 * H.sum() == pytest.approx(is_divergence(Y, W @ H), rel=1e-12)
    V = W @ H
    mpmath.mp.dps = 40
    ref = mpmath.fsum(
        mpmath.mpf(Y[i, j]) / mpmath.mpf(V[i, j]) - mpmath.log(mpmath.mpf(Y[i, j]) / mpmath.mpf(V[i, j])) - 1
        for i in range(5)
        for j in range(4)
    )
    assert is_cost(Y, W, H, 0.0) == pytest.approx(float(ref), rel=1e-12)


def test_fixed_point():
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    H = np.array([[2.0], [3.0]])
    np.testing.assert_allclose(update_activations(W @ H, W, H, 0.0), H, rtol=1e-15)


def test_rank_one_exact_reaches_zero():
    rng = np.random.default_rng(2)
    w, h = rng.uniform(0.5, 2, (20, 1)), rng.uniform(0.5, 2, (1, 10))
    Y = w @ h
    H = rng.uniform(0.1, 1.1, (1, 10))
    for _ in range(200):
        H = update_activations(Y, w, H, 0.0)
    assert is_cost(Y, w, H, 0.0) < 1e-6


def test_monotone_trace_random_instance():
    rng = np.random.default_rng(3)
    Y, W = rng.uniform(0.01, 3, (20, 10)), rng.uniform(0.01, 1, (20, 4))
    H = rng.uniform(0.1, 1.1, (4, 10))
    costs = [is_cost(Y, W, H, 10.0)]
    for _ in range(200):
        H = update_activations(Y, W, H, 10.0)
        costs.append(is_cost(Y, W, H, 10.0))
    assert np.all(np.diff(costs) <= 1e-9)


def test_infer_activations_per_column():
    rng = np.random.default_rng(4)
    W = rng.uniform(0.01, 1, (12, 3))
    Y = W @ rng.uniform(0.5, 2, (3, 6))
    H, iters = infer_activations(Y, W, 0.0, max_iters=200, tol=1e-10)
    assert H.shape == (3, 6) and np.all(iters >= 1) and np.all(iters <= 200)
    # column independence: a column inferred alone matches
    H0, _ = infer_activations(Y[:, :1], W, 0.0, max_iters=200, tol=1e-10, seed=0)
    assert is_cost(Y[:, :1], W, H0, 0.0) < 1e-3


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_train_bases_one_hot_columns(seed):
    # small B: multiplicative updates reach the global minimum from these starts
    B = 3
    data = np.eye(B)
    W, trace = train_bases([data], B, context=1, nu=0.0, max_iters=2000, seed=seed, tol=1e-12)
    Y = np.maximum(data, 1e-12)
    H, _ = infer_activations(Y, W, 0.0, max_iters=2000, tol=1e-14)
    assert is_cost(Y, W, H, 0.0) < 1e-4
    assert np.all(np.diff(trace) <= 1e-9 * np.abs(trace[:-1]))
    np.testing.assert_allclose(W.sum(axis=0), 1.0)


def test_disjoint_supports_do_not_cross():
    rng = np.random.default_rng(5)
    a = np.full((10, 30), 1e-9)
    b = np.full((10, 30), 1e-9)
    a[:5] = rng.uniform(0.5, 2, (5, 30))
    b[5:] = rng.uniform(0.5, 2, (5, 30))
    Wa, _ = train_bases([a], 3, context=1, nu=0.0, seed=1)
    Wb, _ = train_bases([b], 3, context=1, nu=0.0, seed=2)
    H, _ = infer_activations(a, np.hstack([Wa, Wb]), 0.0)
    assert H[3:].sum() <= 1e-3 * H.sum()


def test_train_bases_deterministic_and_errors():
    rng = np.random.default_rng(6)
    spectra = [rng.uniform(0.1, 1, (6, 20)), rng.uniform(0.1, 1, (6, 15))]
    W1, t1 = train_bases(spectra, 3, context=3, max_iters=20, seed=9)
    W2, t2 = train_bases(spectra, 3, context=3, max_iters=20, seed=9)
    assert np.array_equal(W1, W2) and np.array_equal(t1, t2)
    assert W1.shape == (18, 3) and np.all(W1 >= 0)
    with pytest.raises(ValueError):
        train_bases(spectra, 100, context=3)
    with pytest.raises(ValueError):
        train_bases([], 3)


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    m = NmfModel(rng.uniform(size=(21, 4)), rng.uniform(size=(21, 2)), context=7, nu=10.0, noise_type="pink",
                 geometry={"frame_len": 6, "hop": 3, "sample_rate": 16000})
    m.save(tmp_path / "m.npz")
    back = NmfModel.load(tmp_path / "m.npz")
    assert np.array_equal(back.speech_basis, m.speech_basis) and np.array_equal(back.noise_basis, m.noise_basis)
    assert (back.context, back.nu, back.max_iters, back.noise_type, back.geometry) == (7, 10.0, 200, "pink", m.geometry)
    with pytest.raises(ModelError):
        NmfModel.load(tmp_path / "missing.npz")
    (tmp_path / "bad.npz").write_bytes(b"garbage")
    with pytest.raises(ModelError):
        NmfModel.load(tmp_path / "bad.npz")
    np.savez(tmp_path / "other.npz", x=np.zeros(2))
    with pytest.raises(ModelError):
        NmfModel.load(tmp_path / "other.npz")
    with pytest.raises(ModelError):
        NmfModel(-np.ones((21, 2)), np.ones((21, 2)))


def test_noise_only_input(desk):
    noise = desk.test_noise["pink"]
    spec = analyze(AudioBuffer(noise.samples[:3 * 16000] * 0.3, 16000), desk.stft)
    track = nmf_psd(spec, desk.nmf["pink"])
    assert track.speech_psd.sum() <= 0.1 * track.noise_psd.sum()


def test_speech_only_input(desk):
    utt = desk.test_corpus[0]
    track = nmf_psd(analyze(utt.audio, desk.stft), desk.nmf["pink"])
    assert track.noise_psd.sum() <= 0.1 * (track.noise_psd.sum() + track.speech_psd.sum())


def test_reconstruction_beats_constant_model(desk):
    model = desk.nmf["pink"]
    spec = analyze(desk.mixture(0, "pink", 5.0)[0], desk.stft)
    Y = np.maximum(stack_context(spec.power(), model.context), 1e-12)
    scale = Y.sum(axis=0).mean()
    H, _ = infer_activations(Y / scale, model.basis, model.nu)
    per_entry = is_divergence(Y, model.basis @ H * scale) / Y.size
    const = is_divergence(Y, np.full_like(Y, Y.mean())) / Y.size
    assert per_entry < const


def test_scale_invariance(desk):
    spec = analyze(desk.mixture(1, "pink", 5.0)[0], desk.stft)
    a = nmf_psd(spec, desk.nmf["pink"])
    b = nmf_psd(spec.with_coeffs(spec.coeffs * 7.0), desk.nmf["pink"])
    np.testing.assert_allclose(b.xi, a.xi, rtol=1e-8)
    np.testing.assert_allclose(b.speech_psd, 49.0 * a.speech_psd, rtol=1e-8)


def test_geometry_mismatch(desk):
    from sgenhance.stft import StftConfig

    spec = analyze(AudioBuffer(np.ones(2000), 16000), StftConfig(256, 128, 256))
    with pytest.raises(ModelError):
        nmf_psd(spec, desk.nmf["pink"])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), nu=st.sampled_from([0.0, 0.1, 10.0]))
def test_h_update_monotone_property(seed, nu):
    rng = np.random.default_rng(seed)
    m, n, r = rng.integers(2, 20, size=3)
    Y = rng.uniform(0.01, 5, (m, n))
    W = rng.uniform(0.01, 1, (m, r))
    H = rng.uniform(0.1, 1.1, (r, n))
    prev = is_cost(Y, W, H, nu)
    for _ in range(30):
        H = update_activations(Y, W, H, nu)
        assert np.all(H >= 0) and np.all(np.isfinite(H))
        cost = is_cost(Y, W, H, nu)
        assert cost <= prev + 1e-9
        prev = cost
