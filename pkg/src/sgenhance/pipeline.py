"""End-to-end enhancement for the three schemes.

A scheme's front-end yields the per-bin quantities the estimator needs. The
NMF and DNN front-ends do not depend on the estimator preset, so they are
computed once and reused across presets.
"""

from dataclasses import dataclass

import numpy as np

from .dnn import dnn_enhance
from .errors import ModelError, UsageError
from .metrics import MetricsConfig, evaluate_components, shadow_filter_components
from .mosie import apply_estimator
from .nmf import nmf_psd
from .psd_track import PSD_FLOOR, NoiseTrackerConfig, decision_directed, track_noise_psd
from .stft import analyze, synthesize

__all__ = ["SCHEMES", "FrontEnd", "front_end", "apply_scheme", "enhance_spectrogram", "enhance_mixture", "check_model_geometry"]

SCHEMES = ("non-mlse", "nmf", "dnn")


@dataclass
class FrontEnd:
    scheme: str
    noisy: object  # Spectrogram
    noise_psd: np.ndarray
    track: object = None  # PsdTrack for nmf
    posteriors: np.ndarray = None  # dnn
    dnn_model: object = None


def check_model_geometry(scheme, stft_cfg, nmf_model=None, dnn_model=None, n_classes=None):
    """Reject MLSE models whose bin count, context or class count disagree with the run."""
    if scheme == "nmf":
        if nmf_model is None:
            raise ModelError("scheme nmf needs an NMF model")
        if nmf_model.n_bins != stft_cfg.n_bins:
            raise ModelError(f"NMF model has {nmf_model.n_bins} bins, STFT config gives {stft_cfg.n_bins}")
        g = nmf_model.geometry
        if g.get("frame_len", stft_cfg.frame_len) != stft_cfg.frame_len or g.get("hop", stft_cfg.hop) != stft_cfg.hop:
            raise ModelError("NMF model frame geometry disagrees with STFT config")
    elif scheme == "dnn":
        if dnn_model is None:
            raise ModelError("scheme dnn needs a DNN model")
        if dnn_model.stft != stft_cfg:
            raise ModelError(f"DNN model STFT geometry {dnn_model.stft} disagrees with {stft_cfg}")
        if n_classes is not None and dnn_model.n_classes != n_classes:
            raise ModelError(f"DNN model has {dnn_model.n_classes} classes, config expects {n_classes}")
    elif scheme != "non-mlse":
        raise UsageError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def front_end(noisy, scheme, nmf_model=None, dnn_model=None, tracker=NoiseTrackerConfig(), seed=0):
    check_model_geometry(scheme, noisy.config, nmf_model, dnn_model)
    if scheme == "nmf":
        track = nmf_psd(noisy, nmf_model, seed=seed)
        return FrontEnd(scheme, noisy, track.noise_psd, track=track)
    noise_psd = track_noise_psd(noisy, tracker)
    if scheme == "dnn":
        posteriors = dnn_model.mlp.posteriors(dnn_model.features(noisy.power()))
        return FrontEnd(scheme, noisy, noise_psd, posteriors=posteriors, dnn_model=dnn_model)
    return FrontEnd(scheme, noisy, noise_psd)


def apply_scheme(fe, params, alpha_dd=0.9):
    """Returns ``(enhanced_spectrogram, gains, xi)``.

    ``xi`` is the a priori SNR the estimator saw; for the DNN scheme it is
    the posterior-weighted phone PSD over the noise PSD.
    """
    if fe.scheme == "non-mlse":
        track = decision_directed(fe.noisy, fe.noise_psd, params, alpha_dd)
        enhanced, gains = apply_estimator(fe.noisy, track, params)
        return enhanced, gains, track.xi
    if fe.scheme == "nmf":
        enhanced, gains = apply_estimator(fe.noisy, fe.track, params)
        return enhanced, gains, fe.track.xi
    enhanced, gains, post = dnn_enhance(fe.noisy, fe.dnn_model, fe.noise_psd, params, fe.posteriors)
    speech = np.maximum(fe.dnn_model.psd_table @ post, PSD_FLOOR)
    return enhanced, gains, speech / np.maximum(fe.noise_psd, PSD_FLOOR)


def enhance_spectrogram(noisy, scheme, params, nmf_model=None, dnn_model=None, tracker=NoiseTrackerConfig(), alpha_dd=0.9, seed=0):
    return apply_scheme(front_end(noisy, scheme, nmf_model, dnn_model, tracker, seed), params, alpha_dd)


def enhance_mixture(clean, scaled_noise, fe_or_scheme, presets, stft_cfg, metrics_cfg=MetricsConfig(), decomposition_tol=1e-10, **fe_kwargs):
    """Enhance ``clean + scaled_noise`` with every preset and score each result.

    ``presets`` maps a label to MosieParams. Returns
    ``{label: (EvalReport, enhanced_audio, max_decomposition_error)}``.
    Raises ArithmeticError if shadow-filtered components fail to add up to
    the enhanced output within ``decomposition_tol``.
    """
    alpha_dd = fe_kwargs.pop("alpha_dd", 0.9)
    noisy = clean.__class__(clean.samples + scaled_noise.samples, clean.sample_rate)
    noisy_spec = analyze(noisy, stft_cfg)
    clean_spec = analyze(clean, stft_cfg)
    noise_spec = analyze(scaled_noise, stft_cfg)
    fe = front_end(noisy_spec, fe_or_scheme, **fe_kwargs)
    out = {}
    for label, params in presets.items():
        enhanced_spec, gains, _ = apply_scheme(fe, params, alpha_dd)
        enhanced = synthesize(enhanced_spec)
        fs, fn = shadow_filter_components(clean_spec, noise_spec, gains)
        err = float(np.max(np.abs(enhanced.samples - fs.samples - fn.samples)))
        scale = max(1.0, float(np.max(np.abs(enhanced.samples))))
        if err > decomposition_tol * scale:
            raise ArithmeticError(f"shadow-filter decomposition error {err:.3g} exceeds {decomposition_tol:g}")
        report = evaluate_components(clean, noisy, enhanced, fs, fn, scaled_noise, clean.sample_rate, metrics_cfg, scheme=fe_or_scheme, preset=label)
        out[label] = (report, enhanced, err)
    return out
