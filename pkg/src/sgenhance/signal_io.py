"""Audio buffers, WAV I/O, peak normalization and SNR-controlled mixing."""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .errors import (
    DegenerateInputError,
    MultichannelError,
    NoiseTooShortError,
    SampleRateMismatchError,
    TruncatedFileError,
    UnsupportedFormatError,
)

__all__ = [
    "AudioBuffer",
    "AnnotatedUtterance",
    "MixSpec",
    "read_wav",
    "write_wav",
    "peak_normalize",
    "active_frame_mask",
    "mix_at_snr",
    "read_annotation",
    "write_annotation",
    "DEFAULT_PEAK",
]

DEFAULT_PEAK = 0.5


@dataclass
class AudioBuffer:
    """Mono signal. Samples are nominally in [-1, 1]; processed signals may exceed it."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise MultichannelError("AudioBuffer holds a single channel")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError("sample_rate must be a positive integer")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class AnnotatedUtterance:
    audio: AudioBuffer
    phone_labels: list  # (start_sample, end_sample, phone_id), end exclusive
    name: str = ""
    meta: dict = field(default_factory=dict)

    def validate(self, n_classes):
        prev_end = 0
        for start, end, pid in sorted(self.phone_labels):
            if not (0 <= start < end <= len(self.audio)):
                raise ValueError(f"{self.name}: label ({start}, {end}) outside signal bounds")
            if start < prev_end:
                raise ValueError(f"{self.name}: overlapping labels at sample {start}")
            if not 0 <= pid < n_classes:
                raise ValueError(f"{self.name}: phone id {pid} not in [0, {n_classes})")
            prev_end = end

    def labels_at(self, positions):
        """Phone id covering each sample position, -1 where unlabeled."""
        positions = np.asarray(positions)
        out = np.full(positions.shape, -1, dtype=np.int64)
        for start, end, pid in self.phone_labels:
            out[(positions >= start) & (positions < end)] = pid
        return out


@dataclass(frozen=True)
class MixSpec:
    snr_db: float
    noise_offset: int | None = None  # None: random offset drawn from ``seed``
    seed: int = 0
    speech_active_threshold_db: float = 40.0
    frame_ms: float = 32.0


def read_wav(path):
    """Read a mono 16-bit PCM or 32-bit float WAV file, scaled to [-1, 1]."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.io.wavfile.WavFileWarning)
            rate, data = scipy.io.wavfile.read(path)
    except scipy.io.wavfile.WavFileWarning as e:
        if "EOF" in str(e) or "prematurely" in str(e):
            raise TruncatedFileError(f"{path}: {e}") from e
        raise UnsupportedFormatError(f"{path}: {e}") from e
    except FileNotFoundError:
        raise
    except (ValueError, EOFError) as e:
        msg = str(e)
        if "Unknown wave file format" in msg or "Unsupported" in msg or "not a WAV" in msg or "RIFF" in msg:
            raise UnsupportedFormatError(f"{path}: {e}") from e
        raise TruncatedFileError(f"{path}: {e}") from e
    except Exception as e:  # struct.error on short headers
        raise TruncatedFileError(f"{path}: {e}") from e
    if data.ndim != 1:
        if data.ndim == 2 and data.shape[1] == 1:
            data = data[:, 0]
        else:
            raise MultichannelError(f"{path}: {data.shape[1]} channels, expected mono")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: sample type {data.dtype} not supported (16-bit PCM or 32-bit float)")
    return AudioBuffer(samples, rate)


def write_wav(path, buf, bits=16):
    """Write ``buf`` as mono WAV; values outside [-1, 1] are clipped for 16-bit output."""
    if bits == 16:
        q = np.round(np.clip(buf.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    elif bits == 32:
        q = buf.samples.astype(np.float32)
    else:
        raise UnsupportedFormatError("bits must be 16 or 32")
    scipy.io.wavfile.write(path, buf.sample_rate, q)


def peak_normalize(buf, target_peak=DEFAULT_PEAK):
    peak = np.max(np.abs(buf.samples), initial=0.0)
    if peak == 0.0:
        raise DegenerateInputError("cannot peak-normalize an all-zero signal")
    if peak == target_peak:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    return AudioBuffer(buf.samples * (target_peak / peak), buf.sample_rate)


def _frame_energies(x, frame):
    n = -(-x.size // frame)
    padded = np.zeros(n * frame)
    padded[: x.size] = x
    return np.sum(padded.reshape(n, frame) ** 2, axis=1)


def active_frame_mask(x, sample_rate, threshold_db=40.0, frame_ms=32.0):
    """Per-sample mask of non-overlapping frames within ``threshold_db`` of the loudest frame."""
    frame = int(round(sample_rate * frame_ms / 1000.0))
    energy = _frame_energies(np.asarray(x, dtype=np.float64), frame)
    peak = energy.max(initial=0.0)
    if peak == 0.0:
        return np.zeros(len(x), dtype=bool)
    active = energy >= peak * 10.0 ** (-threshold_db / 10.0)
    return np.repeat(active, frame)[: len(x)]


def mix_at_snr(speech, noise, spec):
    """Embed ``speech`` in a segment of ``noise`` at ``spec.snr_db``.

    The SNR is measured over speech-active samples only. Returns
    ``(noisy, scaled_noise)`` with ``noisy == speech + scaled_noise``.
    """
    if speech.sample_rate != noise.sample_rate:
        raise SampleRateMismatchError(f"speech at {speech.sample_rate} Hz, noise at {noise.sample_rate} Hz")
    n = len(speech)
    spare = len(noise) - n
    if spec.noise_offset is None:
        if spare < 0:
            raise NoiseTooShortError(f"noise has {len(noise)} samples, speech needs {n}")
        offset = int(np.random.default_rng(spec.seed).integers(0, spare + 1))
    else:
        offset = int(spec.noise_offset)
        if offset < 0 or offset + n > len(noise):
            raise NoiseTooShortError(f"noise segment [{offset}, {offset + n}) exceeds {len(noise)} samples")
    segment = noise.samples[offset : offset + n]
    mask = active_frame_mask(speech.samples, speech.sample_rate, spec.speech_active_threshold_db, spec.frame_ms)
    p_speech = np.mean(speech.samples[mask] ** 2) if mask.any() else 0.0
    p_noise = np.mean(segment[mask] ** 2) if mask.any() else 0.0
    if p_speech == 0.0 or p_noise == 0.0:
        raise DegenerateInputError("speech and noise must both have energy in the speech-active region")
    scale = np.sqrt(p_speech / (p_noise * 10.0 ** (spec.snr_db / 10.0)))
    if not (np.isfinite(scale) and scale > 0):
        raise DegenerateInputError(f"noise scale {scale} is not finite and positive")
    scaled = AudioBuffer(segment * scale, speech.sample_rate)
    return AudioBuffer(speech.samples + scaled.samples, speech.sample_rate), scaled


def read_annotation(path):
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected start<TAB>end<TAB>phone_id")
            labels.append((int(parts[0]), int(parts[1]), int(parts[2])))
    return labels


def write_annotation(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for start, end, pid in labels:
            fh.write(f"{int(start)}\t{int(end)}\t{int(pid)}\n")
