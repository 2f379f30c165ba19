"""Segmental SNR, speech SNR and noise reduction with shadow filtering."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .stft import Spectrogram, synthesize

__all__ = [
    "MetricsConfig",
    "segment_bounds",
    "segment_energies",
    "speech_segment_mask",
    "seg_snr",
    "seg_ssnr",
    "seg_nr",
    "shadow_filter_components",
    "EvalReport",
    "RESULTS_HEADER",
    "format_results_tsv",
    "evaluate_components",
    "harmonic_bins",
    "harmonic_contrast_db",
]


@dataclass(frozen=True)
class MetricsConfig:
    segment_ms: float = 32.0
    snr_clamp_db: tuple = (-10.0, 35.0)
    nr_clamp_db: tuple = (0.0, 35.0)
    activity_db: float = 40.0  # segments quieter than max - activity_db are not speech
    init_s: float = 2.0

    def segment_len(self, sample_rate):
        return int(round(self.segment_ms * sample_rate / 1000.0))


def _samples(x):
    return x.samples if hasattr(x, "samples") else np.asarray(x, dtype=np.float64)


def segment_bounds(n_samples, sample_rate, cfg=MetricsConfig()):
    """Start indices of the half-overlapped segments past the init period."""
    seg = cfg.segment_len(sample_rate)
    hop = seg // 2
    if n_samples < seg:
        return np.zeros(0, dtype=np.int64)
    starts = np.arange(0, n_samples - seg + 1, hop)
    return starts[starts >= int(round(cfg.init_s * sample_rate))]


def segment_energies(x, starts, seg):
    x = np.asarray(x, dtype=np.float64)
    idx = starts[:, None] + np.arange(seg)[None, :]
    return np.sum(x[idx] ** 2, axis=1)


def speech_segment_mask(energies, activity_db):
    if energies.size == 0 or energies.max() <= 0:
        return np.zeros(energies.shape, dtype=bool)
    return energies >= energies.max() * 10.0 ** (-activity_db / 10.0)


def _ratio_db(num, den):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(num) - 10.0 * np.log10(den)


def _prepare(reference, test, sample_rate, cfg):
    ref, tst = _samples(reference), _samples(test)
    if ref.size != tst.size:
        raise ValueError(f"length mismatch: {ref.size} vs {tst.size}")
    starts = segment_bounds(ref.size, sample_rate, cfg)
    if starts.size == 0:
        raise DegenerateInputError("signal too short: no segments after the init period")
    return ref, tst, starts, cfg.segment_len(sample_rate)


def seg_snr(reference, test, sample_rate=16000, cfg=MetricsConfig(), mask=None):
    """Mean clamped per-segment SNR of ``test`` against ``reference`` (dB).

    ``mask`` overrides the speech-activity mask derived from ``reference``.
    """
    ref, tst, starts, seg = _prepare(reference, test, sample_rate, cfg)
    e_ref = segment_energies(ref, starts, seg)
    e_err = segment_energies(ref - tst, starts, seg)
    if mask is None:
        mask = speech_segment_mask(e_ref, cfg.activity_db)
    if not np.any(mask):
        raise DegenerateInputError("no speech-active segments in reference")
    vals = np.clip(_ratio_db(e_ref[mask], e_err[mask]), *cfg.snr_clamp_db)
    return float(np.mean(vals))


def seg_ssnr(clean, filtered_speech, sample_rate=16000, cfg=MetricsConfig()):
    return seg_snr(clean, filtered_speech, sample_rate, cfg)


def seg_nr(scaled_noise, filtered_noise, sample_rate=16000, cfg=MetricsConfig()):
    """Mean clamped per-segment noise attenuation over all post-init segments (dB)."""
    noise, filt, starts, seg = _prepare(scaled_noise, filtered_noise, sample_rate, cfg)
    e_n = segment_energies(noise, starts, seg)
    e_f = segment_energies(filt, starts, seg)
    tiny = np.finfo(np.float64).tiny
    vals = np.clip(_ratio_db(e_n + tiny, e_f + tiny), *cfg.nr_clamp_db)
    return float(np.mean(vals))


def shadow_filter_components(clean, scaled_noise, gains):
    """Apply the mixture gains to each component and resynthesize both."""
    for spec in (clean, scaled_noise):
        if not isinstance(spec, Spectrogram):
            raise TypeError("components must be Spectrograms")
        if spec.coeffs.shape != gains.shape:
            raise ValueError(f"gain matrix {gains.shape} does not match spectrogram {spec.coeffs.shape}")
    if clean.config != scaled_noise.config or clean.origin_len != scaled_noise.origin_len:
        raise ValueError("component spectrograms have different geometry")
    return synthesize(clean.with_coeffs(gains * clean.coeffs)), synthesize(scaled_noise.with_coeffs(gains * scaled_noise.coeffs))


@dataclass
class EvalReport:
    seg_snr_imp_db: float
    seg_ssnr_db: float
    seg_nr_db: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("seg_snr_imp_db", "seg_ssnr_db", "seg_nr_db"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")


def evaluate_components(clean, noisy, enhanced, filtered_speech, filtered_noise, scaled_noise, sample_rate=16000, cfg=MetricsConfig(), **meta):
    """EvalReport for one utterance. All arguments are time-domain signals."""
    ref = _samples(clean)
    starts = segment_bounds(ref.size, sample_rate, cfg)
    if starts.size == 0:
        raise DegenerateInputError("signal too short: no segments after the init period")
    mask = speech_segment_mask(segment_energies(ref, starts, cfg.segment_len(sample_rate)), cfg.activity_db)
    improvement = seg_snr(clean, enhanced, sample_rate, cfg, mask) - seg_snr(clean, noisy, sample_rate, cfg, mask)
    return EvalReport(
        improvement,
        seg_ssnr(clean, filtered_speech, sample_rate, cfg),
        seg_nr(scaled_noise, filtered_noise, sample_rate, cfg),
        meta,
    )


RESULTS_HEADER = ("scheme", "preset", "noise", "snr_db", "dseg_snr", "seg_ssnr", "seg_nr")


def format_results_tsv(rows):
    """``rows``: iterable of dicts with the RESULTS_HEADER keys."""
    lines = ["\t".join(RESULTS_HEADER)]
    for r in rows:
        lines.append(
            f"{r['scheme']}\t{r['preset']}\t{r['noise']}\t{r['snr_db']:g}\t"
            f"{r['dseg_snr']:.4f}\t{r['seg_ssnr']:.4f}\t{r['seg_nr']:.4f}"
        )
    return "\n".join(lines) + "\n"


def harmonic_bins(f0, sample_rate, n_fft, fmax=4000.0):
    """Nearest bins of the harmonics of ``f0`` and of the midpoints between them, up to ``fmax``."""
    bin_hz = sample_rate / n_fft
    h = np.arange(1, int(fmax // f0))
    return np.round(h * f0 / bin_hz).astype(int), np.round((h + 0.5) * f0 / bin_hz).astype(int)


def harmonic_contrast_db(xi, frames, f0, sample_rate, n_fft, fmax=4000.0):
    """Mean dB difference between harmonic and inter-harmonic bins of ``xi[:, frames]``."""
    on, off = harmonic_bins(f0, sample_rate, n_fft, fmax)
    xi_db = 10.0 * np.log10(np.maximum(xi[:, frames], 1e-12))
    return float(np.mean(xi_db[on]) - np.mean(xi_db[off]))
