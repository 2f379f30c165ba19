"""Blind speech and noise PSD estimation for the non-MLSE scheme.

Noise: speech-presence-probability weighted recursive averaging. Speech:
the decision-directed a priori SNR, which needs the previous frame's clean
amplitude and therefore runs jointly with the gain (``decision_directed``).
"""

from dataclasses import dataclass

import numpy as np

from .mosie import GAMMA_MAX_DB, mosie_gain

__all__ = [
    "PSD_FLOOR",
    "PsdTrack",
    "NoiseTrackerConfig",
    "track_noise_psd",
    "estimate_speech_psd_dd",
    "dd_step",
    "decision_directed",
    "format_xi_tsv",
]

PSD_FLOOR = 1e-12


@dataclass
class PsdTrack:
    speech_psd: np.ndarray
    noise_psd: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray

    @classmethod
    def from_psds(cls, noisy_power, speech_psd, noise_psd):
        speech_psd = np.maximum(speech_psd, PSD_FLOOR)
        noise_psd = np.maximum(noise_psd, PSD_FLOOR)
        return cls(speech_psd, noise_psd, speech_psd / noise_psd, noisy_power / noise_psd)


@dataclass(frozen=True)
class NoiseTrackerConfig:
    smoothing: float = 0.8  # per-frame recursive averaging constant
    fixed_xi_db: float = 15.0  # a priori SNR hypothesis under speech presence
    prior_speech: float = 0.5
    spp_smoothing: float = 0.9
    spp_max: float = 0.99
    init_frames: int = 8


def track_noise_psd(noisy, cfg=NoiseTrackerConfig()):
    """Causal noise PSD track ``[bins, frames]`` of a noisy spectrogram.

    The first ``init_frames`` frames use the running mean periodogram.
    """
    power = noisy.power()
    n_bins, n_frames = power.shape
    lam = cfg.smoothing
    xi_h1 = 10.0 ** (cfg.fixed_xi_db / 10.0)
    glr_factor = (1.0 - cfg.prior_speech) / cfg.prior_speech * (1.0 + xi_h1)
    glr_exp = xi_h1 / (1.0 + xi_h1)

    out = np.empty_like(power)
    est = np.zeros(n_bins)
    smooth_p = np.zeros(n_bins)
    for ell in range(n_frames):
        y2 = power[:, ell]
        if ell < cfg.init_frames:
            est = est + (y2 - est) / (ell + 1)
        else:
            ratio = y2 / np.maximum(est, PSD_FLOOR)
            p = 1.0 / (1.0 + glr_factor * np.exp(-np.minimum(ratio * glr_exp, 700.0)))
            smooth_p = cfg.spp_smoothing * smooth_p + (1.0 - cfg.spp_smoothing) * p
            p = np.where(smooth_p > cfg.spp_max, np.minimum(p, cfg.spp_max), p)
            est = lam * est + (1.0 - lam) * ((1.0 - p) * y2 + p * est)
        est = np.maximum(est, PSD_FLOOR)
        out[:, ell] = est
    return out


def dd_step(gamma, noise_psd, prev_clean_amp, alpha_dd):
    """One decision-directed a priori SNR update; ``prev_clean_amp=None`` on the first frame."""
    ml = np.maximum(gamma - 1.0, 0.0)
    if prev_clean_amp is None:
        return ml
    return alpha_dd * prev_clean_amp ** 2 / noise_psd + (1.0 - alpha_dd) * ml


def estimate_speech_psd_dd(noisy, noise_psd, prev_clean_amps, alpha_dd):
    """Speech PSD from given clean amplitude estimates.

    ``prev_clean_amps[:, l]`` is the clean amplitude estimate of frame ``l``;
    frame ``l`` uses column ``l - 1``. Frame 0 takes the ML term only.
    """
    if not 0.0 <= alpha_dd < 1.0:
        raise ValueError("alpha_dd must be in [0, 1)")
    noise_psd = np.maximum(noise_psd, PSD_FLOOR)
    gamma = noisy.power() / noise_psd
    xi = np.empty_like(gamma)
    for ell in range(gamma.shape[1]):
        prev = None if ell == 0 else prev_clean_amps[:, ell - 1]
        xi[:, ell] = dd_step(gamma[:, ell], noise_psd[:, ell], prev, alpha_dd)
    return xi * noise_psd


def decision_directed(noisy, noise_psd, params, alpha_dd=0.9, floor_feedback=True):
    """Run the decision-directed estimator jointly with the gain.

    The clean amplitude fed back is the output amplitude after the gain
    floor and ceiling; with ``floor_feedback=False`` the raw estimator
    amplitude is fed back instead. Returns the ``PsdTrack`` whose ``xi`` was
    used for each frame.
    """
    if not 0.0 <= alpha_dd < 1.0:
        raise ValueError("alpha_dd must be in [0, 1)")
    noise_psd = np.maximum(noise_psd, PSD_FLOOR)
    power = noisy.power()
    gamma = power / noise_psd
    gamma_c = np.minimum(gamma, 10.0 ** (GAMMA_MAX_DB / 10.0))
    xi = np.empty_like(gamma)
    prev = None
    speech = np.empty_like(gamma)
    for ell in range(gamma.shape[1]):
        n_ell = noise_psd[:, ell]
        speech[:, ell] = np.maximum(dd_step(gamma_c[:, ell], n_ell, prev, alpha_dd) * n_ell, PSD_FLOOR)
        xi[:, ell] = speech[:, ell] / n_ell
        g = mosie_gain(xi[:, ell], gamma[:, ell], params, clamp=floor_feedback)
        prev = g * np.sqrt(power[:, ell])
    return PsdTrack(speech, noise_psd, xi, gamma)


def format_xi_tsv(xi):
    lines = ["bin\tframe\txi_db"]
    db = 10.0 * np.log10(np.maximum(xi, PSD_FLOOR))
    for f in range(db.shape[1]):
        for k in range(db.shape[0]):
            lines.append(f"{k}\t{f}\t{db[k, f]:.4f}")
    return "\n".join(lines) + "\n"
