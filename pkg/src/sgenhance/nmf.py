"""Supervised sparse Itakura-Saito NMF for speech and noise PSD estimation.

Speech and noise bases are trained offline on context-stacked periodograms
and held fixed at test time; only activations are inferred, frame by frame.
The PSDs are read off the centre-frame rows of ``W_s H_s`` and ``W_n H_n``.

Scale convention: before any update the stacked data is divided by its mean
column L1 mass, and activations are scaled back afterwards. With L1-normalized
basis columns this keeps the sparsity weight's meaning independent of the
signal level, so the a priori SNR is exactly scale invariant.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .psd_track import PSD_FLOOR, PsdTrack

__all__ = [
    "NmfModel",
    "stack_context",
    "is_divergence",
    "is_cost",
    "update_activations",
    "update_bases",
    "infer_activations",
    "train_bases",
    "nmf_psd",
    "NMF_FORMAT_VERSION",
]

NMF_FORMAT_VERSION = 1
_INIT_LOW, _INIT_HIGH = 0.1, 1.1


def stack_context(power_spec, context):
    """Append ``(context-1)/2`` past and future frames below each frame, replicating edges."""
    if context < 1 or context % 2 == 0:
        raise ValueError("context must be a positive odd number")
    power_spec = np.asarray(power_spec)
    n_frames = power_spec.shape[1]
    half = context // 2
    blocks = []
    for off in range(-half, half + 1):
        idx = np.clip(np.arange(n_frames) + off, 0, n_frames - 1)
        blocks.append(power_spec[:, idx])
    return np.vstack(blocks)


def is_divergence(Y, V):
    R = Y / V
    return np.sum(R - np.log(R) - 1.0)


def is_cost(Y, W, H, nu):
    """Sparse IS objective ``nu * |H|_1 + sum d_IS(Y | WH)``."""
    return nu * np.sum(H) + is_divergence(Y, W @ H)


def update_activations(Y, W, H, nu):
    """One multiplicative update of ``H`` with ``W`` fixed."""
    V = W @ H
    return H * (W.T @ (Y / V ** 2)) / (W.T @ (1.0 / V) + nu)


def update_bases(Y, W, H):
    V = W @ H
    return W * ((Y / V ** 2) @ H.T) / ((1.0 / V) @ H.T)


def _column_costs(Y, W, H, nu):
    R = Y / (W @ H)
    return nu * H.sum(axis=0) + np.sum(R - np.log(R) - 1.0, axis=0)


def infer_activations(Y, W, nu, max_iters=200, tol=1e-6, seed=0):
    """Activations for each column of ``Y`` independently.

    Every column starts from its own positive random draw and iterates until
    its relative cost change falls below ``tol`` or ``max_iters`` is reached.
    Returns ``(H, iterations_per_column)``.
    """
    rng = np.random.default_rng(seed)
    H = rng.uniform(_INIT_LOW, _INIT_HIGH, (W.shape[1], Y.shape[1]))
    iters = np.zeros(Y.shape[1], dtype=np.int64)
    active = np.arange(Y.shape[1])
    Ya, Ha = Y, H.copy()
    prev = _column_costs(Ya, W, Ha, nu)
    for it in range(1, max_iters + 1):
        Ha = update_activations(Ya, W, Ha, nu)
        cost = _column_costs(Ya, W, Ha, nu)
        done = np.abs(prev - cost) <= tol * np.abs(prev)
        if it == max_iters:
            done[:] = True
        if np.any(done):
            H[:, active[done]] = Ha[:, done]
            iters[active[done]] = it
            keep = ~done
            active, Ya, Ha, cost = active[keep], Ya[:, keep], Ha[:, keep], cost[keep]
            if active.size == 0:
                break
        prev = cost
    return H, iters


def _normalize_columns(W, H):
    scale = W.sum(axis=0)
    return W / scale, H * scale[:, None]


def train_bases(spectra, n_bases, context=7, nu=10.0, max_iters=200, seed=0, tol=1e-6, max_columns=None):
    """Learn an L1-normalized basis ``[K*context, n_bases]`` from power spectrograms.

    ``spectra`` is a list of ``[K, L_i]`` periodogram matrices (one per
    utterance or noise excerpt), context-stacked separately. With
    ``max_columns`` a seeded random subset of the stacked columns is used.
    Returns ``(W, cost_trace)``.
    """
    if not spectra:
        raise ValueError("training corpus is empty")
    Y = np.hstack([stack_context(np.asarray(s, dtype=np.float64), context) for s in spectra])
    rng = np.random.default_rng(seed)
    if max_columns is not None and Y.shape[1] > max_columns:
        cols = np.sort(rng.choice(Y.shape[1], size=max_columns, replace=False))
        Y = Y[:, cols]
    if n_bases > Y.shape[1]:
        raise ValueError(f"{n_bases} bases requested but only {Y.shape[1]} training columns")
    Y = np.maximum(Y, PSD_FLOOR)
    Y = Y / Y.sum(axis=0).mean()
    W = rng.uniform(_INIT_LOW, _INIT_HIGH, (Y.shape[0], n_bases))
    H = rng.uniform(_INIT_LOW, _INIT_HIGH, (n_bases, Y.shape[1]))
    W, H = _normalize_columns(W, H)
    trace = [is_cost(Y, W, H, nu)]
    for _ in range(max_iters):
        H = update_activations(Y, W, H, nu)
        W = update_bases(Y, W, H)
        W, H = _normalize_columns(W, H)
        trace.append(is_cost(Y, W, H, nu))
        if abs(trace[-2] - trace[-1]) <= tol * abs(trace[-2]):
            break
    return W, np.array(trace)


@dataclass
class NmfModel:
    speech_basis: np.ndarray
    noise_basis: np.ndarray
    context: int = 7
    nu: float = 10.0
    max_iters: int = 200
    noise_type: str = ""
    geometry: dict = field(default_factory=dict)  # frame_len, hop, sample_rate

    def __post_init__(self):
        if self.context % 2 == 0:
            raise ModelError("NMF context must be odd")
        rows = self.speech_basis.shape[0]
        if rows % self.context or self.noise_basis.shape[0] != rows:
            raise ModelError("basis row counts inconsistent with context")
        if np.any(self.speech_basis < 0) or np.any(self.noise_basis < 0):
            raise ModelError("bases must be nonnegative")

    @property
    def n_bins(self):
        return self.speech_basis.shape[0] // self.context

    @property
    def basis(self):
        return np.hstack([self.speech_basis, self.noise_basis])

    def save(self, path):
        with open(path, "wb") as fh:
            np.savez(
                fh,
                format="sgenhance-nmf",
                version=NMF_FORMAT_VERSION,
                n_bins=self.n_bins,
                context=self.context,
                n_speech=self.speech_basis.shape[1],
                n_noise=self.noise_basis.shape[1],
                nu=self.nu,
                max_iters=self.max_iters,
                noise_type=self.noise_type,
                frame_len=self.geometry.get("frame_len", -1),
                hop=self.geometry.get("hop", -1),
                sample_rate=self.geometry.get("sample_rate", -1),
                speech_basis=self.speech_basis,
                noise_basis=self.noise_basis,
            )

    @classmethod
    def load(cls, path):
        try:
            z = np.load(path, allow_pickle=False)
        except FileNotFoundError:
            raise ModelError(f"NMF model {path} not found") from None
        except Exception as e:
            raise ModelError(f"{path}: not an NMF model container ({e})") from e
        with z:
            if "format" not in z or str(z["format"]) != "sgenhance-nmf":
                raise ModelError(f"{path}: not an NMF model container")
            if int(z["version"]) != NMF_FORMAT_VERSION:
                raise ModelError(f"{path}: unsupported NMF format version {int(z['version'])}")
            geometry = {k: int(z[k]) for k in ("frame_len", "hop", "sample_rate") if int(z[k]) >= 0}
            model = cls(
                speech_basis=z["speech_basis"],
                noise_basis=z["noise_basis"],
                context=int(z["context"]),
                nu=float(z["nu"]),
                max_iters=int(z["max_iters"]),
                noise_type=str(z["noise_type"]),
                geometry=geometry,
            )
            if model.n_bins != int(z["n_bins"]):
                raise ModelError(f"{path}: header bin count disagrees with basis shape")
        return model


def nmf_psd(noisy, model, seed=0, tol=1e-6):
    """Speech and noise PSDs of ``noisy`` from per-frame activation inference."""
    if noisy.n_bins != model.n_bins:
        raise ModelError(f"model has {model.n_bins} bins, spectrogram has {noisy.n_bins}")
    power = noisy.power()
    Y = np.maximum(stack_context(power, model.context), PSD_FLOOR)
    scale = Y.sum(axis=0).mean()
    H, _ = infer_activations(Y / scale, model.basis, model.nu, model.max_iters, tol, seed)
    H = H * scale
    b_s = model.speech_basis.shape[1]
    k = model.n_bins
    centre = slice((model.context // 2) * k, (model.context // 2 + 1) * k)
    speech = model.speech_basis[centre] @ H[:b_s]
    noise = model.noise_basis[centre] @ H[b_s:]
    track = PsdTrack.from_psds(power, speech, noise)
    return track
