"""Synthetic phone-annotated speech, noise generators, and corpus directories.

The synthetic bank has eight classes: silence, five vowel-like harmonic
sounds with distinct formant envelopes, and two fricative-like shaped noises.
Corpus directories hold ``<name>.wav`` plus a tab-separated ``<name>.lab``
with one ``start<TAB>end<TAB>phone_id`` line per phone.
"""

import os
from pathlib import Path

import numpy as np

from .errors import CorpusError
from .signal_io import AnnotatedUtterance, AudioBuffer, read_annotation, read_wav, write_annotation, write_wav

__all__ = [
    "N_SYNTH_CLASSES",
    "CLASS_NAMES",
    "VOWEL_FORMANTS",
    "vowel_segment",
    "generate_synthetic_corpus",
    "generate_noise",
    "NOISE_TYPES",
    "split_noise",
    "load_corpus",
    "save_corpus",
]

N_SYNTH_CLASSES = 8
CLASS_NAMES = ("sil", "a", "i", "u", "e", "o", "s", "sh")
SILENCE, FRICATIVE_S, FRICATIVE_SH = 0, 6, 7

# (formant Hz, bandwidth Hz)
VOWEL_FORMANTS = {
    1: ((730, 90), (1090, 110), (2440, 170)),
    2: ((270, 60), (2290, 100), (3010, 170)),
    3: ((300, 60), (870, 90), (2240, 150)),
    4: ((530, 70), (1840, 100), (2480, 160)),
    5: ((570, 80), (840, 90), (2410, 160)),
}

_SEG_MS = (150, 400)
_FADE_MS = 8.0
_SILENCE_LEVEL = 1e-3


def formant_envelope(freqs, vowel):
    env = np.zeros_like(np.asarray(freqs, dtype=np.float64))
    for i, (fc, bw) in enumerate(VOWEL_FORMANTS[vowel]):
        env += (0.55 ** i) / (1.0 + ((freqs - fc) / bw) ** 2)
    # gentle glottal tilt
    return env + 0.02 / (1.0 + freqs / 1000.0)


def vowel_segment(vowel, f0, n, sample_rate, rng):
    t = np.arange(n) / sample_rate
    n_harm = int((0.47 * sample_rate) // f0)
    h = np.arange(1, n_harm + 1)
    amps = formant_envelope(h * f0, vowel)
    phases = rng.uniform(0, 2 * np.pi, n_harm)
    x = np.sum(amps[:, None] * np.cos(2 * np.pi * f0 * h[:, None] * t[None, :] + phases[:, None]), axis=0)
    return x / np.max(np.abs(x))


def _shaped_noise(n, sample_rate, lo, hi, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = 1.0 / (1.0 + ((f - 0.5 * (lo + hi)) / (0.5 * (hi - lo))) ** 4)
    x = np.fft.irfft(spec * shape, n=n)
    return x / np.max(np.abs(x))


def _fade(n, sample_rate):
    m = min(int(sample_rate * _FADE_MS / 1000.0), n // 2)
    w = np.ones(n)
    if m > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(m) / m)
        w[:m] = ramp
        w[n - m :] = ramp[::-1]
    return w


def _phone(pid, n, f0, sample_rate, rng):
    if pid == SILENCE:
        return np.zeros(n)
    if pid in VOWEL_FORMANTS:
        return vowel_segment(pid, f0 * rng.uniform(0.97, 1.03), n, sample_rate, rng) * _fade(n, sample_rate)
    if pid == FRICATIVE_S:
        return 0.3 * _shaped_noise(n, sample_rate, 4500, 7500, rng) * _fade(n, sample_rate)
    if pid == FRICATIVE_SH:
        return 0.3 * _shaped_noise(n, sample_rate, 1800, 3800, rng) * _fade(n, sample_rate)
    raise ValueError(f"unknown synthetic phone {pid}")


def generate_synthetic_corpus(n_utts, seed, sample_rate=16000, min_phones=3, max_phones=8):
    """Deterministic list of ``n_utts`` synthetic utterances.

    Each utterance has its own fundamental frequency (100-240 Hz) and
    concatenates 3-8 phones; a low-level white floor keeps silence nonzero.
    """
    if n_utts < 1:
        raise ValueError("n_utts must be >= 1")
    rng = np.random.default_rng(seed)
    corpus = []
    for u in range(n_utts):
        f0 = rng.uniform(100.0, 240.0)
        n_ph = int(rng.integers(min_phones, max_phones + 1))
        pieces, labels, pos = [], [], 0
        prev = -1
        for _ in range(n_ph):
            pid = int(rng.integers(0, N_SYNTH_CLASSES))
            while pid == prev:
                pid = int(rng.integers(0, N_SYNTH_CLASSES))
            n = int(rng.uniform(*_SEG_MS) * sample_rate / 1000.0)
            pieces.append(_phone(pid, n, f0, sample_rate, rng))
            labels.append((pos, pos + n, pid))
            pos += n
            prev = pid
        x = np.concatenate(pieces)
        x = x + _SILENCE_LEVEL * rng.standard_normal(x.size)
        x = 0.9 * x / np.max(np.abs(x))
        corpus.append(AnnotatedUtterance(AudioBuffer(x, sample_rate), labels, name=f"utt_{u:04d}", meta={"f0": f0}))
    return corpus


def _pink(n, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.size, dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n=n)
    return x


NOISE_TYPES = ("white", "pink", "modulated-pink")


def generate_noise(kind, duration_s, sample_rate=16000, seed=0, modulation_hz=0.5, depth=0.7):
    """Stand-in noise signals, peak-scaled to 0.5."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        x = _pink(n, rng)
    elif kind == "modulated-pink":
        t = np.arange(n) / sample_rate
        x = _pink(n, rng) * (1.0 + depth * np.sin(2 * np.pi * modulation_hz * t))
    else:
        raise ValueError(f"unknown noise type {kind!r}; choose from {NOISE_TYPES}")
    return AudioBuffer(0.5 * x / np.max(np.abs(x)), sample_rate)


def split_noise(noise):
    """First half for training, second half for testing."""
    half = len(noise) // 2
    return AudioBuffer(noise.samples[:half], noise.sample_rate), AudioBuffer(noise.samples[half:], noise.sample_rate)


def save_corpus(corpus, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for utt in corpus:
        write_wav(directory / f"{utt.name}.wav", utt.audio, bits=32)
        write_annotation(directory / f"{utt.name}.lab", utt.phone_labels)


def load_corpus(directory, n_classes=None):
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"corpus directory {directory} not found")
    wavs = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".wav")
    if not wavs:
        raise CorpusError(f"no .wav files in {directory}")
    corpus = []
    for wav in wavs:
        lab = wav.with_suffix(".lab")
        labels = read_annotation(lab) if lab.exists() else []
        utt = AnnotatedUtterance(read_wav(os.fspath(wav)), labels, name=wav.stem)
        if n_classes is not None and labels:
            try:
                utt.validate(n_classes)
            except ValueError as e:
                raise CorpusError(str(e)) from e
        corpus.append(utt)
    return corpus
