"""Model training and factorial evaluation, shared by the CLI and tests."""

import numpy as np

from .corpus import split_noise
from .dnn import DnnModel, MfccConfig, MlpConfig, build_phoneme_psd_table, train_mlp
from .errors import ModelError, SampleRateMismatchError
from .metrics import MetricsConfig
from .mosie import preset
from .nmf import NmfModel, train_bases
from .pipeline import check_model_geometry, enhance_mixture
from .signal_io import AnnotatedUtterance, AudioBuffer, MixSpec, mix_at_snr, peak_normalize
from .stft import analyze

__all__ = [
    "normalize_corpus",
    "with_lead_in",
    "train_speech_basis",
    "train_nmf_model",
    "train_dnn_model",
    "condition_seed",
    "run_evaluation",
    "aggregate_rows",
]


def normalize_corpus(corpus, peak=0.5):
    return [AnnotatedUtterance(peak_normalize(u.audio, peak), u.phone_labels, u.name, dict(u.meta)) for u in corpus]


def with_lead_in(utt, lead_in_s):
    """Prepend ``lead_in_s`` seconds of silence, shifting the labels."""
    n = int(round(lead_in_s * utt.audio.sample_rate))
    audio = AudioBuffer(np.concatenate([np.zeros(n), utt.audio.samples]), utt.audio.sample_rate)
    labels = [(s + n, e + n, p) for s, e, p in utt.phone_labels]
    return AnnotatedUtterance(audio, labels, utt.name, dict(utt.meta))


def _check_rate(buf, cfg):
    if buf.sample_rate != cfg.sample_rate:
        raise SampleRateMismatchError(f"audio at {buf.sample_rate} Hz, pipeline configured for {cfg.sample_rate} Hz")


def train_speech_basis(corpus, cfg):
    stft_cfg = cfg.stft()
    spectra = []
    for utt in normalize_corpus(corpus, cfg.peak):
        _check_rate(utt.audio, cfg)
        spectra.append(analyze(utt.audio, stft_cfg).power())
    W, _ = train_bases(spectra, cfg.n_bases, cfg.context, cfg.nu, cfg.nmf_max_iters, cfg.seed, max_columns=cfg.nmf_max_columns)
    return W


def train_nmf_model(corpus, noise, noise_type, cfg, speech_basis=None):
    """Speech basis from the clean corpus, noise basis from the first half of ``noise``."""
    stft_cfg = cfg.stft()
    _check_rate(noise, cfg)
    if speech_basis is None:
        speech_basis = train_speech_basis(corpus, cfg)
    train_half, _ = split_noise(noise)
    noise_basis, _ = train_bases(
        [analyze(train_half, stft_cfg).power()], cfg.n_bases, cfg.context, cfg.nu, cfg.nmf_max_iters, cfg.seed, max_columns=cfg.nmf_max_columns
    )
    geometry = {"frame_len": stft_cfg.frame_len, "hop": stft_cfg.hop, "sample_rate": cfg.sample_rate}
    return NmfModel(speech_basis, noise_basis, cfg.context, cfg.nu, cfg.nmf_max_iters, noise_type, geometry)


def train_dnn_model(corpus, cfg, mlp_cfg=None):
    stft_cfg = cfg.stft()
    for utt in corpus:
        _check_rate(utt.audio, cfg)
        utt.validate(cfg.n_classes)
    normed = normalize_corpus(corpus, cfg.peak)
    if mlp_cfg is None:
        mlp_cfg = MlpConfig(hidden=tuple(cfg.list_of("dnn_hidden", int)), max_epochs=cfg.dnn_max_epochs)
    mlp, history = train_mlp(normed, cfg.n_classes, stft_cfg, MfccConfig(), mlp_cfg, cfg.seed, peak=cfg.peak)
    table = build_phoneme_psd_table(normed, cfg.n_classes, stft_cfg)
    return DnnModel(mlp, table, stft_cfg, cfg.sample_rate, MfccConfig(), meta={"history": history})


def condition_seed(seed, *indices):
    return int(np.random.SeedSequence([seed, *indices]).generate_state(1)[0])


def run_evaluation(test_corpus, noises, cfg, nmf_models=None, dnn_model=None, metrics_cfg=None, progress=None):
    """Full factorial grid: utterances x noises x SNRs x schemes x presets.

    ``noises`` maps a noise name to a full-length noise signal; the second
    half is used for testing. ``nmf_models`` maps noise names to models.
    Returns ``(per_utterance_rows, max_decomposition_error)``.
    """
    nmf_models = nmf_models or {}
    schemes = cfg.list_of("schemes")
    presets = {name: preset(name, cfg.gain_floor_db) for name in cfg.list_of("presets")}
    snrs = cfg.list_of("snr_list", float)
    stft_cfg = cfg.stft()
    metrics_cfg = metrics_cfg or MetricsConfig(init_s=cfg.init_s)
    for scheme in schemes:
        if scheme == "nmf":
            for name in noises:
                if name not in nmf_models:
                    raise ModelError(f"no NMF model for noise type {name!r}")
                check_model_geometry(scheme, stft_cfg, nmf_model=nmf_models[name])
        else:
            check_model_geometry(scheme, stft_cfg, dnn_model=dnn_model, n_classes=cfg.n_classes)
    test_halves = {}
    for name, noise in noises.items():
        _check_rate(noise, cfg)
        test_halves[name] = split_noise(noise)[1]

    rows, max_err = [], 0.0
    clean_utts = [with_lead_in(u, cfg.lead_in_s) for u in normalize_corpus(test_corpus, cfg.peak)]
    for u_idx, utt in enumerate(clean_utts):
        _check_rate(utt.audio, cfg)
        for n_idx, (noise_name, noise) in enumerate(test_halves.items()):
            for s_idx, snr in enumerate(snrs):
                spec = MixSpec(snr, seed=condition_seed(cfg.seed, u_idx, n_idx, s_idx))
                _, scaled = mix_at_snr(utt.audio, noise, spec)
                for scheme in schemes:
                    try:
                        results = enhance_mixture(
                            utt.audio, scaled, scheme, presets, stft_cfg, metrics_cfg,
                            nmf_model=nmf_models.get(noise_name), dnn_model=dnn_model,
                            tracker=cfg.tracker(), seed=cfg.seed, alpha_dd=cfg.alpha_dd,
                        )
                    except Exception as e:
                        e.args = (f"[{utt.name} {noise_name} {snr:g} dB {scheme}] {e}",)
                        raise
                    for label, (report, _, err) in results.items():
                        max_err = max(max_err, err)
                        rows.append({
                            "utt": utt.name, "scheme": scheme, "preset": label, "noise": noise_name, "snr_db": snr,
                            "dseg_snr": report.seg_snr_imp_db, "seg_ssnr": report.seg_ssnr_db, "seg_nr": report.seg_nr_db,
                        })
                    if progress:
                        progress(f"{utt.name} {noise_name} {snr:g} dB {scheme}")
    return rows, max_err


def aggregate_rows(rows):
    """Mean per (scheme, preset, noise, snr) condition, in first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["scheme"], r["preset"], r["noise"], r["snr_db"]), []).append(r)
    out = []
    for (scheme, label, noise, snr), rs in groups.items():
        out.append({
            "scheme": scheme, "preset": label, "noise": noise, "snr_db": snr,
            **{k: float(np.mean([r[k] for r in rs])) for k in ("dseg_snr", "seg_ssnr", "seg_nr")},
        })
    return out
