"""STFT analysis/synthesis with a square-root periodic Hann window at 50 % overlap.

The squared window overlap-adds to exactly one in steady state, so analysis
followed by synthesis reconstructs every sample after the first hop.
"""

from dataclasses import dataclass, field

import numpy as np

from .signal_io import AudioBuffer

__all__ = ["StftConfig", "Spectrogram", "sqrt_hann", "analyze", "synthesize", "num_frames", "format_spectrogram_tsv"]


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 512
    hop: int = 256
    fft_size: int = 512
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_len % 2:
            raise ValueError("frame_len must be a positive even number")
        if self.hop * 2 != self.frame_len:
            raise ValueError("hop must be frame_len / 2")
        if self.fft_size != self.frame_len:
            raise ValueError("fft_size must equal frame_len")
        if self.window != "sqrt_hann":
            raise ValueError("only the sqrt_hann window is supported")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    @classmethod
    def for_rate(cls, sample_rate, frame_ms=32.0):
        n = int(round(sample_rate * frame_ms / 1000.0))
        n += n % 2
        return cls(frame_len=n, hop=n // 2, fft_size=n)


@dataclass
class Spectrogram:
    coeffs: np.ndarray  # complex, [bins, frames]
    config: StftConfig
    origin_len: int
    sample_rate: int = 16000
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != self.config.n_bins:
            raise ValueError(f"coefficient matrix {self.coeffs.shape} inconsistent with {self.config.n_bins} bins")

    @property
    def n_bins(self):
        return self.coeffs.shape[0]

    @property
    def n_frames(self):
        return self.coeffs.shape[1]

    def power(self):
        return self.coeffs.real ** 2 + self.coeffs.imag ** 2

    def with_coeffs(self, coeffs):
        return Spectrogram(np.asarray(coeffs), self.config, self.origin_len, self.sample_rate)


def sqrt_hann(n):
    k = np.arange(n)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * k / n))


def num_frames(n_samples, cfg):
    # enough frames that the last sample is overlapped by two frames
    return max(1, -(-n_samples // cfg.hop))


def analyze(buf, cfg=StftConfig()):
    x = np.asarray(buf.samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot analyze an empty buffer")
    n_frames = num_frames(x.size, cfg)
    padded = np.zeros((n_frames - 1) * cfg.hop + cfg.frame_len)
    padded[: x.size] = x
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * sqrt_hann(cfg.frame_len)
    coeffs = np.fft.rfft(frames, n=cfg.fft_size, axis=1).T
    return Spectrogram(coeffs, cfg, x.size, buf.sample_rate)


def synthesize(spec):
    cfg = spec.config
    if spec.coeffs.shape[0] != cfg.n_bins:
        raise ValueError("spectrogram bin count does not match its config")
    n_frames = spec.n_frames
    if spec.origin_len > (n_frames - 1) * cfg.hop + cfg.frame_len or spec.origin_len <= 0:
        raise ValueError("origin_len inconsistent with frame count")
    frames = np.fft.irfft(spec.coeffs.T, n=cfg.fft_size, axis=1)[:, : cfg.frame_len] * sqrt_hann(cfg.frame_len)
    out = np.zeros((n_frames - 1) * cfg.hop + cfg.frame_len)
    for i in range(n_frames):
        out[i * cfg.hop : i * cfg.hop + cfg.frame_len] += frames[i]
    return AudioBuffer(out[: spec.origin_len], spec.sample_rate)


def format_spectrogram_tsv(spec):
    lines = ["bin\tframe\tre\tim"]
    c = spec.coeffs
    for f in range(c.shape[1]):
        for k in range(c.shape[0]):
            lines.append(f"{k}\t{f}\t{c[k, f].real:.9g}\t{c[k, f].imag:.9g}")
    return "\n".join(lines) + "\n"
