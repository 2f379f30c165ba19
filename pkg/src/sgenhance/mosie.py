"""Parameterized MMSE estimator of compressed speech amplitudes.

The estimator is written as a real gain ``G = |S_hat| / |Y|`` applied to the
noisy coefficient, keeping the noisy phase. With shape ``mu`` and
compression ``beta``:

    nu = gamma * xi / (mu + xi)
    G  = sqrt(xi / ((xi + mu) * gamma))
         * [Gamma(mu + beta/2) / Gamma(mu) * M(mu + beta/2, 1; nu) / M(mu, 1; nu)] ** (1/beta)

``mu = 1`` is a Gaussian speech prior (``beta = 1`` gives the STSA gain,
``beta -> 0`` the LSA gain), ``mu < 1`` is super-Gaussian.
"""

from dataclasses import dataclass

import numpy as np

from .specfun import log_gamma, log_kummer_ratio

__all__ = [
    "MosieParams",
    "PRESETS",
    "GAMMA_MAX_DB",
    "GAIN_CEILING",
    "preset",
    "mosie_gain",
    "apply_estimator",
    "gain_curve_sweep",
    "format_sweep_tsv",
    "SWEEP_PRESETS",
]

GAMMA_MAX_DB = 40.0
GAIN_CEILING = 10.0


@dataclass(frozen=True)
class MosieParams:
    shape_mu: float
    compression_beta: float
    gain_floor_db: float = -12.0

    def __post_init__(self):
        if not (np.isfinite(self.shape_mu) and self.shape_mu > 0):
            raise ValueError("shape_mu must be > 0")
        if not (np.isfinite(self.compression_beta) and self.compression_beta > 0):
            raise ValueError("compression_beta must be > 0")
        if not self.gain_floor_db <= 0:
            raise ValueError("gain_floor_db must be <= 0")

    @property
    def gain_floor(self):
        return 10.0 ** (self.gain_floor_db / 20.0)


PRESETS = {
    "gauss-stsa": (1.0, 1.0),
    "gauss-lsa": (1.0, 0.001),
    "sg-stsa": (0.2, 1.0),
    "sg-lsa": (0.2, 0.001),
}


def preset(name, gain_floor_db=-12.0):
    try:
        mu, beta = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return MosieParams(mu, beta, gain_floor_db)


def _raw_gain(xi, gamma, mu, beta):
    # gamma > 0 assumed; xi >= 0
    nu = gamma * xi / (mu + xi)
    a1 = mu + beta / 2.0
    log_bracket = log_gamma(a1) - log_gamma(mu) + log_kummer_ratio(a1, mu, nu)
    with np.errstate(divide="ignore"):
        log_pre = 0.5 * (np.log(xi) - np.log(xi + mu) - np.log(gamma))
    return np.exp(log_pre + log_bracket / beta)


def mosie_gain(xi, gamma, params, clamp=True):
    """Gain for a priori SNR ``xi`` and a posteriori SNR ``gamma`` (both linear).

    ``gamma`` is limited to 40 dB first. Bins with ``gamma == 0`` get the floor
    gain. With ``clamp`` the result is limited to ``[floor, 10]``; without it,
    the raw estimator gain is returned (``gamma == 0`` then yields 0).
    """
    xi, gamma = np.broadcast_arrays(np.asarray(xi, dtype=np.float64), np.asarray(gamma, dtype=np.float64))
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(gamma))):
        raise ValueError("xi and gamma must be finite")
    if np.any(xi < 0) or np.any(gamma < 0):
        raise ValueError("xi and gamma must be nonnegative")
    gamma = np.minimum(gamma, 10.0 ** (GAMMA_MAX_DB / 10.0))
    out = np.zeros(xi.shape)
    live = gamma > 0
    if np.any(live):
        out[live] = _raw_gain(xi[live], gamma[live], params.shape_mu, params.compression_beta)
    if clamp:
        out = np.clip(out, params.gain_floor, GAIN_CEILING)
    return out[()] if out.ndim == 0 else out


def apply_estimator(noisy, psd, params):
    """Apply the estimator gain to every bin of ``noisy``.

    Returns ``(enhanced_spectrogram, gains)``; the gains are needed later for
    shadow filtering of the clean and noise components.
    """
    if psd.gamma.shape != noisy.coeffs.shape or psd.xi.shape != noisy.coeffs.shape:
        raise ValueError(f"PSD shape {psd.xi.shape} does not match spectrogram {noisy.coeffs.shape}")
    gains = mosie_gain(psd.xi, psd.gamma, params)
    return noisy.with_coeffs(gains * noisy.coeffs), gains


def gain_curve_sweep(params, xi_db=None, gamma_db=None, sweep_range_db=(-10.0, 20.0), step_db=0.5):
    """Unclamped gain over a swept SNR with the other SNR held fixed.

    Give exactly one of ``xi_db`` (sweep the a posteriori SNR) or ``gamma_db``
    (sweep the a priori SNR). Returns an ``(n, 2)`` array ``[snr_db, gain]``.
    """
    if (xi_db is None) == (gamma_db is None):
        raise ValueError("fix exactly one of xi_db or gamma_db")
    lo, hi = sweep_range_db
    if not (hi >= lo and step_db > 0):
        raise ValueError("invalid sweep range")
    swept = np.arange(lo, hi + step_db * 1e-6, step_db)
    lin = 10.0 ** (swept / 10.0)
    if xi_db is not None:
        gains = mosie_gain(np.full_like(lin, 10.0 ** (xi_db / 10.0)), lin, params, clamp=False)
    else:
        gains = mosie_gain(lin, np.full_like(lin, 10.0 ** (gamma_db / 10.0)), params, clamp=False)
    return np.column_stack([swept, gains])


def format_sweep_tsv(table):
    lines = ["snr_db\tgain"]
    lines += [f"{s:.4f}\t{g:.10g}" for s, g in table]
    return "\n".join(lines) + "\n"


# Parameter grids of the published gain-curve figures:
#   post-*: gain over the a posteriori SNR (-10..20 dB) at a fixed a priori SNR
#   prior-*: gain over the a priori SNR (-20..20 dB) at a fixed a posteriori SNR
SWEEP_PRESETS = {
    "post-beta": dict(axis="gamma", fixed_db=(-5.0, 10.0), mu=(0.25,), beta=(1.0, 0.5, 0.25, 0.001), range_db=(-10.0, 20.0)),
    "post-mu": dict(axis="gamma", fixed_db=(-5.0, 10.0), mu=(1.0, 0.5, 0.25, 0.1), beta=(0.25,), range_db=(-10.0, 20.0)),
    "prior-beta": dict(axis="xi", fixed_db=(0.0, 10.0), mu=(0.25,), beta=(1.0, 0.5, 0.25, 0.001), range_db=(-20.0, 20.0)),
    "prior-mu": dict(axis="xi", fixed_db=(0.0, 10.0), mu=(1.0, 0.5, 0.25, 0.1), beta=(0.25,), range_db=(-20.0, 20.0)),
}
