"""Phoneme-posterior envelope scheme.

An MLP maps CMVN-normalized MFCC context vectors to phone posteriors. Each
phone has a learned speech PSD (the mean clean periodogram over its frames);
the per-phone clean speech estimates are averaged with the posteriors as
weights.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ModelError
from .mosie import GAIN_CEILING, mosie_gain
from .psd_track import PSD_FLOOR
from .signal_io import peak_normalize
from .stft import StftConfig, analyze

__all__ = [
    "MfccConfig",
    "mel_filterbank",
    "mfcc_from_power",
    "extract_mfcc",
    "deltas",
    "add_deltas_and_context",
    "cmvn",
    "utterance_features",
    "frame_labels",
    "MlpConfig",
    "MlpModel",
    "fit_mlp",
    "train_mlp",
    "build_phoneme_psd_table",
    "DnnModel",
    "dnn_enhance",
    "DNN_FORMAT_VERSION",
]

DNN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MfccConfig:
    n_filters: int = 26
    n_ceps: int = 13
    fmin: float = 0.0
    fmax: float | None = None  # Nyquist when None
    delta_window: int = 2
    context: int = 7


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_fft, sample_rate, n_filters=26, fmin=0.0, fmax=None):
    """Triangular filters on the mel scale, ``[n_filters, n_fft//2 + 1]``."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_filters + 2))
    fb = np.zeros((n_filters, freqs.size))
    for j in range(n_filters):
        lo, c, hi = edges[j], edges[j + 1], edges[j + 2]
        rise = (freqs - lo) / (c - lo)
        fall = (hi - freqs) / (hi - c)
        fb[j] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


def mfcc_from_power(power, sample_rate, n_fft, cfg=MfccConfig()):
    """MFCCs ``[n_ceps, frames]`` from a one-sided power spectrogram ``[bins, frames]``."""
    fb = mel_filterbank(n_fft, sample_rate, cfg.n_filters, cfg.fmin, cfg.fmax)
    log_e = np.log(np.maximum(fb @ power, PSD_FLOOR))
    return scipy.fft.dct(log_e, type=2, axis=0, norm="ortho")[: cfg.n_ceps]


def extract_mfcc(buf, stft_cfg=StftConfig(), cfg=MfccConfig()):
    spec = analyze(buf, stft_cfg)
    return mfcc_from_power(spec.power(), buf.sample_rate, stft_cfg.fft_size, cfg)


def deltas(feat, window=2):
    """Regression deltas over ``+-window`` frames with edge replication."""
    n = feat.shape[1]
    denom = 2.0 * sum(i * i for i in range(1, window + 1))
    out = np.zeros_like(feat, dtype=np.float64)
    for i in range(1, window + 1):
        fwd = feat[:, np.minimum(np.arange(n) + i, n - 1)]
        bwd = feat[:, np.maximum(np.arange(n) - i, 0)]
        out += i * (fwd - bwd)
    return out / denom


def add_deltas_and_context(mfcc, cfg=MfccConfig()):
    d1 = deltas(mfcc, cfg.delta_window)
    d2 = deltas(d1, cfg.delta_window)
    base = np.vstack([mfcc, d1, d2])
    n = base.shape[1]
    half = cfg.context // 2
    blocks = [base[:, np.clip(np.arange(n) + off, 0, n - 1)] for off in range(-half, half + 1)]
    return np.vstack(blocks)


def cmvn(features):
    """Per-row standardization over the utterance; constant rows become 0."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] < 2:
        raise ValueError("CMVN needs at least two frames")
    mean = features.mean(axis=1, keepdims=True)
    centred = features - mean
    centred -= centred.mean(axis=1, keepdims=True)  # second pass removes rounding in the mean
    std = np.sqrt(np.mean(centred ** 2, axis=1, keepdims=True))
    scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, np.inf)
    return centred / scale


def utterance_features(power, sample_rate, n_fft, cfg=MfccConfig()):
    return cmvn(add_deltas_and_context(mfcc_from_power(power, sample_rate, n_fft, cfg), cfg))


def frame_labels(utt, n_frames, stft_cfg):
    # label of each frame is the phone covering its centre sample
    centres = np.arange(n_frames) * stft_cfg.hop + stft_cfg.frame_len // 2
    return utt.labels_at(centres)


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (512, 512)
    batch_size: int = 128
    learning_rate: float = 1e-2
    momentum: float = 0.9
    max_epochs: int = 100
    plateau_patience: int = 2  # epochs without improvement before halving the step
    stop_patience: int = 6  # epochs without improvement before stopping
    validation_fraction: float = 0.15


@dataclass
class MlpModel:
    weights: list
    biases: list

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_classes(self):
        return self.weights[-1].shape[0]

    def logits(self, features):
        h = np.asarray(features, dtype=self.weights[0].dtype)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(w @ h + b[:, None], 0.0)
        return self.weights[-1] @ h + self.biases[-1][:, None]

    def posteriors(self, features):
        """Softmax posteriors ``[classes, frames]``, computed in float64."""
        z = self.logits(features).astype(np.float64)
        z -= z.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)


def _glorot(rng, fan_out, fan_in, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_out, fan_in)).astype(dtype)


def _cross_entropy(model, X, y):
    P = model.posteriors(X)
    return float(-np.mean(np.log(np.maximum(P[y, np.arange(y.size)], 1e-300))))


def fit_mlp(X, y, n_classes, X_val=None, y_val=None, cfg=MlpConfig(), seed=0, dtype=np.float32):
    """Train on features ``X`` ``[V, N]`` and integer labels ``y``.

    Mini-batch gradient descent with momentum on the cross-entropy. The
    step is halved when the held-out loss plateaus; the parameters with the
    best held-out loss are returned together with a per-epoch history.
    Without a validation set the training loss stands in.
    """
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=dtype)
    y = np.asarray(y, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ValueError("labels out of range")
    sizes = [X.shape[0], *cfg.hidden, n_classes]
    weights = [_glorot(rng, sizes[i + 1], sizes[i], dtype) for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1], dtype=dtype) for i in range(len(sizes) - 1)]
    model = MlpModel(weights, biases)
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    if X_val is None:
        X_val, y_val = X, y
    X_val = np.asarray(X_val, dtype=dtype)
    y_val = np.asarray(y_val, dtype=np.int64)

    lr = cfg.learning_rate
    best = (np.inf, None)
    since_best = 0
    since_halve = 0
    history = []
    n = X.shape[1]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        train_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[:, idx], y[idx]
            acts = [xb]
            for w, b in zip(weights[:-1], biases[:-1]):
                acts.append(np.maximum(w @ acts[-1] + b[:, None], 0.0))
            z = weights[-1] @ acts[-1] + biases[-1][:, None]
            z = z - z.max(axis=0, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=0, keepdims=True)
            m = idx.size
            train_loss -= float(np.sum(np.log(np.maximum(p[yb, np.arange(m)], 1e-30))))
            delta = p
            delta[yb, np.arange(m)] -= 1.0
            delta /= m
            for layer in range(len(weights) - 1, -1, -1):
                gw = delta @ acts[layer].T
                gb = delta.sum(axis=1)
                if layer > 0:
                    delta = (weights[layer].T @ delta) * (acts[layer] > 0)
                vel_w[layer] = cfg.momentum * vel_w[layer] - lr * gw
                vel_b[layer] = cfg.momentum * vel_b[layer] - lr * gb
                weights[layer] += vel_w[layer]
                biases[layer] += vel_b[layer]
        val_loss = _cross_entropy(model, X_val, y_val)
        history.append((train_loss / n, val_loss, lr))
        if val_loss < best[0]:
            best = (val_loss, ([w.copy() for w in weights], [b.copy() for b in biases]))
            since_best = since_halve = 0
        else:
            since_best += 1
            since_halve += 1
            if since_halve >= cfg.plateau_patience:
                lr *= 0.5
                since_halve = 0
            if since_best >= cfg.stop_patience:
                break
    return MlpModel(*best[1]), history


def _training_frames(corpus, stft_cfg, mfcc_cfg, peak):
    feats, labels, powers = [], [], []
    for utt in corpus:
        audio = peak_normalize(utt.audio, peak)
        spec = analyze(audio, stft_cfg)
        power = spec.power()
        f = utterance_features(power, audio.sample_rate, stft_cfg.fft_size, mfcc_cfg)
        lab = frame_labels(utt, spec.n_frames, stft_cfg)
        feats.append(f)
        labels.append(lab)
        powers.append(power)
    return feats, labels, powers


def train_mlp(corpus, n_classes, stft_cfg=StftConfig(), mfcc_cfg=MfccConfig(), cfg=MlpConfig(), seed=0, peak=0.5):
    """Train the phone classifier on clean utterances.

    A seeded ``validation_fraction`` of the utterances is held out for model
    selection. Returns ``(model, history)``.
    """
    feats, labels, _ = _training_frames(corpus, stft_cfg, mfcc_cfg, peak)
    present = np.unique(np.concatenate(labels))
    missing = sorted(set(range(n_classes)) - set(present.tolist()))
    if missing:
        raise ValueError(f"phone classes {missing} absent from the training corpus")
    rng = np.random.default_rng(seed)
    n_val = int(round(cfg.validation_fraction * len(corpus))) if len(corpus) > 1 else 0
    val_idx = set(rng.choice(len(corpus), size=n_val, replace=False).tolist()) if n_val else set()

    def gather(which):
        X = [f[:, lab >= 0] for i, (f, lab) in enumerate(zip(feats, labels)) if which(i)]
        y = [lab[lab >= 0] for i, lab in enumerate(labels) if which(i)]
        return (np.hstack(X), np.concatenate(y)) if X else (None, None)

    X, y = gather(lambda i: i not in val_idx)
    X_val, y_val = gather(lambda i: i in val_idx)
    return fit_mlp(X, y, n_classes, X_val, y_val, cfg, seed)


def build_phoneme_psd_table(corpus, n_classes, stft_cfg=StftConfig()):
    """Mean clean periodogram per phone class, ``[bins, classes]``.

    The corpus is expected to be peak-normalized already.
    """
    sums = np.zeros((stft_cfg.n_bins, n_classes))
    counts = np.zeros(n_classes, dtype=np.int64)
    for utt in corpus:
        spec = analyze(utt.audio, stft_cfg)
        power = spec.power()
        lab = frame_labels(utt, spec.n_frames, stft_cfg)
        for q in range(n_classes):
            sel = lab == q
            if sel.any():
                sums[:, q] += power[:, sel].sum(axis=1)
                counts[q] += int(sel.sum())
    if np.any(counts == 0):
        raise ValueError(f"no training frames for classes {np.flatnonzero(counts == 0).tolist()}")
    return sums / counts


@dataclass
class DnnModel:
    mlp: MlpModel
    psd_table: np.ndarray  # [bins, classes]
    stft: StftConfig = StftConfig()
    sample_rate: int = 16000
    mfcc: MfccConfig = MfccConfig()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.psd_table.shape[1] != self.mlp.n_classes:
            raise ModelError(f"PSD table has {self.psd_table.shape[1]} classes, MLP has {self.mlp.n_classes}")
        if self.psd_table.shape[0] != self.stft.n_bins:
            raise ModelError("PSD table bin count disagrees with STFT geometry")

    @property
    def n_classes(self):
        return self.mlp.n_classes

    def features(self, power):
        return utterance_features(power, self.sample_rate, self.stft.fft_size, self.mfcc)

    def save(self, path):
        arrays = {f"w{i}": w for i, w in enumerate(self.mlp.weights)}
        arrays.update({f"b{i}": b for i, b in enumerate(self.mlp.biases)})
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format="sgenhance-dnn",
                version=DNN_FORMAT_VERSION,
                n_layers=len(self.mlp.weights),
                layer_sizes=np.array(self.mlp.layer_sizes),
                psd_table=self.psd_table,
                frame_len=self.stft.frame_len,
                hop=self.stft.hop,
                fft_size=self.stft.fft_size,
                sample_rate=self.sample_rate,
                mfcc_n_filters=self.mfcc.n_filters,
                mfcc_n_ceps=self.mfcc.n_ceps,
                mfcc_fmin=self.mfcc.fmin,
                mfcc_fmax=-1.0 if self.mfcc.fmax is None else self.mfcc.fmax,
                mfcc_delta_window=self.mfcc.delta_window,
                mfcc_context=self.mfcc.context,
                **arrays,
            )

    @classmethod
    def load(cls, path):
        try:
            z = np.load(path, allow_pickle=False)
        except FileNotFoundError:
            raise ModelError(f"DNN model {path} not found") from None
        except Exception as e:
            raise ModelError(f"{path}: not a DNN model container ({e})") from e
        with z:
            if "format" not in z or str(z["format"]) != "sgenhance-dnn":
                raise ModelError(f"{path}: not a DNN model container")
            if int(z["version"]) != DNN_FORMAT_VERSION:
                raise ModelError(f"{path}: unsupported DNN format version {int(z['version'])}")
            n = int(z["n_layers"])
            mlp = MlpModel([z[f"w{i}"] for i in range(n)], [z[f"b{i}"] for i in range(n)])
            fmax = float(z["mfcc_fmax"])
            mfcc = MfccConfig(
                n_filters=int(z["mfcc_n_filters"]),
                n_ceps=int(z["mfcc_n_ceps"]),
                fmin=float(z["mfcc_fmin"]),
                fmax=None if fmax < 0 else fmax,
                delta_window=int(z["mfcc_delta_window"]),
                context=int(z["mfcc_context"]),
            )
            stft = StftConfig(int(z["frame_len"]), int(z["hop"]), int(z["fft_size"]))
            return cls(mlp, z["psd_table"], stft, int(z["sample_rate"]), mfcc)


def dnn_enhance(noisy, model, noise_psd, params, posteriors=None):
    """Posterior-weighted combination of per-phone estimates.

    Returns ``(enhanced, gains, posteriors)``. The floor and ceiling are
    applied once, to the combined gain.
    """
    if noisy.n_bins != model.psd_table.shape[0]:
        raise ModelError(f"model has {model.psd_table.shape[0]} bins, spectrogram has {noisy.n_bins}")
    power = noisy.power()
    if posteriors is None:
        posteriors = model.mlp.posteriors(model.features(power))
    if posteriors.shape[0] != model.n_classes:
        raise ModelError("posterior class count disagrees with the PSD table")
    noise_psd = np.maximum(noise_psd, PSD_FLOOR)
    gamma = power / noise_psd
    combined = np.zeros_like(power)
    for q in range(model.n_classes):
        xi_q = np.maximum(model.psd_table[:, q : q + 1], PSD_FLOOR) / noise_psd
        combined += posteriors[q][None, :] * mosie_gain(xi_q, gamma, params, clamp=False)
    gains = np.clip(combined, params.gain_floor, GAIN_CEILING)
    return noisy.with_coeffs(gains * noisy.coeffs), gains, posteriors
