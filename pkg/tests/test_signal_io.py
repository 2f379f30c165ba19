import wave

import numpy as np
import pytest
import scipy.io.wavfile
from hypothesis import given, settings
from hypothesis import strategies as st

from sgenhance.errors import (
    AudioFormatError,
    DegenerateInputError,
    MultichannelError,
    NoiseTooShortError,
    SampleRateMismatchError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from sgenhance.signal_io import (
    AnnotatedUtterance,
    AudioBuffer,
    MixSpec,
    active_frame_mask,
    mix_at_snr,
    peak_normalize,
    read_annotation,
    read_wav,
    write_annotation,
    write_wav,
)


def test_buffer_validation():
    with pytest.raises(ValueError):
        AudioBuffer([0.0, np.inf], 16000)
    with pytest.raises(ValueError):
        AudioBuffer([0.0], 0)
    with pytest.raises(MultichannelError):
        AudioBuffer(np.zeros((2, 2)), 16000)


def test_read_silence(tmp_path):
    scipy.io.wavfile.write(tmp_path / "s.wav", 16000, np.zeros(16000, np.int16))
    buf = read_wav(tmp_path / "s.wav")
    assert buf.sample_rate == 16000 and len(buf) == 16000 and not buf.samples.any()


def test_round_trip_16bit(tmp_path):
    x = np.random.default_rng(0).uniform(-0.99, 0.99, 4000)
    write_wav(tmp_path / "x.wav", AudioBuffer(x, 8000))
    y = read_wav(tmp_path / "x.wav")
    assert y.sample_rate == 8000
    assert np.max(np.abs(y.samples - x)) <= 2.0 ** -15


def test_round_trip_float(tmp_path):
    x = np.random.default_rng(1).uniform(-1, 1, 1000)
    write_wav(tmp_path / "x.wav", AudioBuffer(x, 16000), bits=32)
    np.testing.assert_allclose(read_wav(tmp_path / "x.wav").samples, x, atol=1e-7)


def test_stereo_rejected(tmp_path):
    scipy.io.wavfile.write(tmp_path / "st.wav", 16000, np.zeros((100, 2), np.int16))
    with pytest.raises(MultichannelError):
        read_wav(tmp_path / "st.wav")


def test_unsupported_and_truncated(tmp_path):
    scipy.io.wavfile.write(tmp_path / "i32.wav", 16000, np.zeros(100, np.int32))
    with pytest.raises(UnsupportedFormatError):
        read_wav(tmp_path / "i32.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "junk.wav")
    with wave.open(str(tmp_path / "t.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(np.zeros(1000, np.int16).tobytes())
    data = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "cut.wav").write_bytes(data[:-501])
    with pytest.raises(TruncatedFileError):
        read_wav(tmp_path / "cut.wav")


def test_peak_normalize_examples():
    np.testing.assert_array_equal(peak_normalize(AudioBuffer([0.5, -0.25], 1), 1.0).samples, [1.0, -0.5])
    x = AudioBuffer([0.3, -0.1], 1)
    np.testing.assert_array_equal(peak_normalize(x, 0.3).samples, x.samples)
    r = np.random.default_rng(2).standard_normal(1000)
    assert abs(np.max(np.abs(peak_normalize(AudioBuffer(r, 1), 0.9).samples)) - 0.9) <= 1e-12
    with pytest.raises(DegenerateInputError):
        peak_normalize(AudioBuffer(np.zeros(5), 1))


def _active_snr(speech, noise, sr=16000):
    mask = active_frame_mask(speech, sr)
    return 10 * np.log10(np.mean(speech[mask] ** 2) / np.mean(noise[mask] ** 2))


def test_mix_equal_signals_unit_scale():
    x = np.random.default_rng(3).standard_normal(8000)
    noisy, scaled = mix_at_snr(AudioBuffer(x, 16000), AudioBuffer(x, 16000), MixSpec(0.0, noise_offset=0))
    np.testing.assert_allclose(scaled.samples, x, rtol=1e-12)


def test_mix_vowel_white_5db():
    t = np.arange(16000) / 16000
    vowel = np.sin(2 * np.pi * 200 * t) + 0.5 * np.sin(2 * np.pi * 400 * t)
    vowel[:4000] = 0.0
    noise = np.random.default_rng(4).standard_normal(40000)
    noisy, scaled = mix_at_snr(AudioBuffer(vowel, 16000), AudioBuffer(noise, 16000), MixSpec(5.0, seed=9))
    assert abs(_active_snr(vowel, scaled.samples) - 5.0) <= 0.01
    assert np.array_equal(noisy.samples, vowel + scaled.samples)


def test_mix_high_snr_and_errors():
    x = np.random.default_rng(5).standard_normal(1000)
    _, scaled = mix_at_snr(AudioBuffer(x, 16000), AudioBuffer(x[::-1].copy(), 16000), MixSpec(300.0, noise_offset=0))
    assert np.max(np.abs(scaled.samples)) < 1e-14
    with pytest.raises(NoiseTooShortError):
        mix_at_snr(AudioBuffer(x, 16000), AudioBuffer(x[:500], 16000), MixSpec(0.0))
    with pytest.raises(NoiseTooShortError):
        mix_at_snr(AudioBuffer(x, 16000), AudioBuffer(x, 16000), MixSpec(0.0, noise_offset=10))
    with pytest.raises(SampleRateMismatchError):
        mix_at_snr(AudioBuffer(x, 16000), AudioBuffer(x, 8000), MixSpec(0.0))


def test_annotation_round_trip(tmp_path):
    labels = [(0, 100, 0), (100, 250, 3)]
    write_annotation(tmp_path / "a.lab", labels)
    assert read_annotation(tmp_path / "a.lab") == labels
    utt = AnnotatedUtterance(AudioBuffer(np.zeros(250), 16000), labels)
    utt.validate(4)
    np.testing.assert_array_equal(utt.labels_at([0, 99, 100, 249, 250]), [0, 0, 3, 3, -1])
    with pytest.raises(ValueError):
        utt.validate(3)
    with pytest.raises(ValueError):
        AnnotatedUtterance(utt.audio, [(0, 100, 0), (50, 120, 1)]).validate(4)
    with pytest.raises(ValueError):
        AnnotatedUtterance(utt.audio, [(0, 300, 0)]).validate(4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), snr=st.floats(-10, 30), n=st.integers(600, 6000))
def test_mix_exact_decomposition_and_snr(seed, snr, n):
    rng = np.random.default_rng(seed)
    speech = rng.standard_normal(n) * np.linspace(0.1, 1, n)
    noise = rng.standard_normal(n + 777)
    noisy, scaled = mix_at_snr(AudioBuffer(speech, 16000), AudioBuffer(noise, 16000), MixSpec(snr, seed=seed))
    assert np.array_equal(noisy.samples, speech + scaled.samples)
    assert abs(_active_snr(speech, scaled.samples) - snr) <= 0.01


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), target=st.floats(0.01, 1.0))
def test_peak_normalize_idempotent(seed, target):
    x = AudioBuffer(np.random.default_rng(seed).standard_normal(64), 16000)
    once = peak_normalize(x, target)
    np.testing.assert_allclose(peak_normalize(once, target).samples, once.samples, rtol=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_wav_quantization_bound(tmp_path_factory, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, 200)
    path = tmp_path_factory.mktemp("q") / "q.wav"
    write_wav(path, AudioBuffer(x, 16000))
    assert np.max(np.abs(read_wav(path).samples - x)) <= 2.0 ** -15
