"""Flat ``key = value`` pipeline configuration.

Lines starting with ``#`` are comments. Values are parsed according to the
type of the field's default. The default config file path can be set with
the ``SGENHANCE_CONFIG`` environment variable.
"""

import dataclasses
import os
from dataclasses import dataclass

from .errors import UsageError
from .mosie import PRESETS, MosieParams, preset
from .psd_track import NoiseTrackerConfig
from .stft import StftConfig

__all__ = ["PipelineConfig", "parse_config_text", "load_config", "CONFIG_ENV", "format_config"]

CONFIG_ENV = "SGENHANCE_CONFIG"


@dataclass
class PipelineConfig:
    sample_rate: int = 16000
    frame_len: int = 512
    hop: int = 256
    scheme: str = "non-mlse"
    preset: str = "gauss-stsa"  # ignored when mu and beta are both set
    mu: float | None = None
    beta: float | None = None
    gain_floor_db: float = -12.0
    alpha_dd: float = 0.9
    tracker_smoothing: float = 0.8
    tracker_xi_h1_db: float = 15.0
    tracker_prior: float = 0.5
    tracker_init_frames: int = 8
    peak: float = 0.5
    seed: int = 0
    nmf_model: str = ""
    dnn_model: str = ""
    noise_type: str = ""
    n_bases: int = 30
    context: int = 7
    nu: float = 10.0
    nmf_max_iters: int = 200
    nmf_max_columns: int = 1000
    n_classes: int = 8
    dnn_max_epochs: int = 100
    dnn_hidden: str = "512,512"
    # evaluation
    snr_list: str = "-5,0,5,10,15,20"
    noise_types: str = "pink,modulated-pink"
    schemes: str = "non-mlse,nmf,dnn"
    presets: str = "gauss-stsa,gauss-lsa,sg-stsa,sg-lsa"
    lead_in_s: float = 2.0
    init_s: float = 2.0
    noise_duration_s: float = 60.0
    n_test_utts: int = 6

    def stft(self):
        if self.frame_len != 2 * self.hop:
            raise UsageError("hop must be half of frame_len")
        return StftConfig(self.frame_len, self.hop, self.frame_len)

    def mosie_params(self):
        if (self.mu is None) != (self.beta is None):
            raise UsageError("set both mu and beta, or neither")
        if self.mu is not None:
            return MosieParams(self.mu, self.beta, self.gain_floor_db)
        return preset(self.preset, self.gain_floor_db)

    def tracker(self):
        return NoiseTrackerConfig(
            smoothing=self.tracker_smoothing,
            fixed_xi_db=self.tracker_xi_h1_db,
            prior_speech=self.tracker_prior,
            init_frames=self.tracker_init_frames,
        )

    def list_of(self, name, kind=str):
        raw = getattr(self, name)
        return [kind(v.strip()) for v in str(raw).split(",") if v.strip()]

    def validate(self):
        from .pipeline import SCHEMES

        try:
            self.stft()
            self.mosie_params()
            self.tracker()
        except ValueError as e:
            raise UsageError(str(e)) from e
        for name in [self.scheme, *self.list_of("schemes")]:
            if name not in SCHEMES:
                raise UsageError(f"unknown scheme {name!r}; choose from {SCHEMES}")
        for name in self.list_of("presets"):
            if name not in PRESETS:
                raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        try:
            self.list_of("snr_list", float)
            self.list_of("dnn_hidden", int)
        except ValueError as e:
            raise UsageError(str(e)) from e
        if not 0.0 <= self.alpha_dd < 1.0:
            raise UsageError("alpha_dd must be in [0, 1)")
        if self.peak <= 0:
            raise UsageError("peak must be positive")
        return self

    def updated(self, pairs):
        """Copy with ``{key: string_value}`` overrides applied."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        values = {}
        for key, raw in pairs.items():
            key = key.strip().replace("-", "_")
            if key not in fields:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = _coerce(key, raw, getattr(PipelineConfig, key, None), fields[key].type)
        return dataclasses.replace(self, **values)


def _coerce(key, raw, default, annotation):
    raw = str(raw).strip()
    if "None" in str(annotation) and raw.lower() in ("", "none"):
        return None
    kind = type(default) if default is not None else float
    try:
        if kind is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config_text(text, source="<config>"):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path=None, overrides=None):
    """Defaults, then the config file (``path`` or ``$SGENHANCE_CONFIG``), then overrides."""
    cfg = PipelineConfig()
    path = path or os.environ.get(CONFIG_ENV) or None
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = cfg.updated(parse_config_text(fh.read(), str(path)))
        except OSError as e:
            raise UsageError(f"cannot read config {path}: {e}") from e
    if overrides:
        cfg = cfg.updated(overrides)
    return cfg


def format_config(cfg):
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
