"""Command-line interface: ``sgenhance <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 I/O, 3 model or geometry, 4 numeric failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .config import CONFIG_ENV, load_config
from .dnn import DnnModel
from .errors import AudioFormatError, EnhanceError, ModelError, SampleRateMismatchError, UsageError
from .metrics import MetricsConfig, format_results_tsv
from .mosie import SWEEP_PRESETS, MosieParams, format_sweep_tsv, gain_curve_sweep
from .nmf import NmfModel
from .pipeline import check_model_geometry, enhance_mixture, enhance_spectrogram
from .psd_track import format_xi_tsv
from .signal_io import read_wav, write_wav
from .stft import analyze, synthesize
from .workflow import aggregate_rows, run_evaluation, train_dnn_model, train_nmf_model, train_speech_basis

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser():
    p = _Parser(prog="sgenhance", description="Single-channel speech enhancement with super-Gaussian amplitude estimators.")
    p.add_argument("--config", help=f"flat key = value config file (default: ${CONFIG_ENV})")
    p.add_argument("--set", dest="overrides", type=_kv, action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enhance", help="enhance a noisy WAV file")
    e.add_argument("input")
    e.add_argument("output")
    e.add_argument("--scheme", choices=["non-mlse", "nmf", "dnn"])
    e.add_argument("--preset")
    e.add_argument("--mu", type=float)
    e.add_argument("--beta", type=float)
    e.add_argument("--gain-floor-db", type=float)
    e.add_argument("--nmf-model")
    e.add_argument("--dnn-model")
    e.add_argument("--clean", help="clean reference; with --noise, prints an evaluation report")
    e.add_argument("--noise", help="noise reference (the scaled noise actually in the input)")
    e.add_argument("--dump-gains", metavar="TSV")
    e.add_argument("--dump-xi", metavar="TSV")
    e.add_argument("--bits", type=int, choices=[16, 32], default=16, help="output sample format (32 = float)")

    t = sub.add_parser("train-nmf", help="train speech and noise bases")
    t.add_argument("corpus", help="directory of clean .wav files")
    t.add_argument("--noise", action="append", type=_kv, required=True, metavar="TYPE=WAV", help="noise type and file; first half is used")
    t.add_argument("--out", required=True, help="model path (one noise) or output directory")

    d = sub.add_parser("train-dnn", help="train the phone classifier and phone PSD table")
    d.add_argument("corpus", help="directory of .wav files with .lab annotations")
    d.add_argument("--out", required=True)

    g = sub.add_parser("gain-curves", help="tabulate estimator gain curves")
    g.add_argument("--figure", choices=sorted(SWEEP_PRESETS), help="write every curve of a shipped parameter grid")
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=1.0)
    fix = g.add_mutually_exclusive_group()
    fix.add_argument("--fix-xi-db", type=float, help="sweep the a posteriori SNR at this a priori SNR")
    fix.add_argument("--fix-gamma-db", type=float, help="sweep the a priori SNR at this a posteriori SNR")
    g.add_argument("--range-db", type=float, nargs=2, default=None)
    g.add_argument("--step-db", type=float, default=0.5)
    g.add_argument("--out", help="output TSV (or directory with --figure); stdout otherwise")

    v = sub.add_parser("evaluate", help="factorial evaluation over SNRs, noises, schemes and presets")
    v.add_argument("corpus", help="directory of clean test utterances")
    v.add_argument("--noise", action="append", type=_kv, default=[], metavar="TYPE=WAV", help="noise file; second half is used")
    v.add_argument("--nmf-model", action="append", type=_kv, default=[], metavar="TYPE=NPZ")
    v.add_argument("--dnn-model")
    v.add_argument("--snr-list")
    v.add_argument("--schemes")
    v.add_argument("--presets")
    v.add_argument("--out", help="results TSV; stdout otherwise")
    v.add_argument("--per-utterance", help="also write unaggregated rows here")

    m = sub.add_parser("make-corpus", help="write a synthetic phone-annotated corpus and stand-in noises")
    m.add_argument("out")
    m.add_argument("--n-utts", type=int, default=60)
    m.add_argument("--noise-types", default="pink,modulated-pink,white")
    m.add_argument("--noise-duration-s", type=float)
    return p


def _config(args, extra=None):
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    for k, v in (extra or {}).items():
        if v is not None:
            overrides[k] = str(v)
    return load_config(args.config, overrides).validate()


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as e:
            raise AudioFormatError(f"cannot write {path}: {e}") from e


def _read(path):
    try:
        return read_wav(path)
    except FileNotFoundError:
        raise AudioFormatError(f"{path}: file not found") from None


def _gain_tsv(gains):
    lines = ["bin\tframe\tgain"]
    for f in range(gains.shape[1]):
        for k in range(gains.shape[0]):
            lines.append(f"{k}\t{f}\t{gains[k, f]:.8g}")
    return "\n".join(lines) + "\n"


def cmd_enhance(args):
    cfg = _config(args, {"scheme": args.scheme, "preset": args.preset, "mu": args.mu, "beta": args.beta,
                         "gain_floor_db": args.gain_floor_db, "nmf_model": args.nmf_model, "dnn_model": args.dnn_model})
    stft_cfg = cfg.stft()
    params = cfg.mosie_params()
    nmf_model = dnn_model = None
    if cfg.scheme == "nmf":
        if not cfg.nmf_model:
            raise ModelError("scheme nmf requires --nmf-model")
        nmf_model = NmfModel.load(cfg.nmf_model)
    elif cfg.scheme == "dnn":
        if not cfg.dnn_model:
            raise ModelError("scheme dnn requires --dnn-model")
        dnn_model = DnnModel.load(cfg.dnn_model)
    check_model_geometry(cfg.scheme, stft_cfg, nmf_model, dnn_model, cfg.n_classes)
    noisy = _read(args.input)
    if noisy.sample_rate != cfg.sample_rate:
        raise SampleRateMismatchError(f"{args.input}: {noisy.sample_rate} Hz, pipeline configured for {cfg.sample_rate} Hz")
    spec = analyze(noisy, stft_cfg)
    enhanced, gains, xi = enhance_spectrogram(spec, cfg.scheme, params, nmf_model, dnn_model, cfg.tracker(), cfg.alpha_dd, cfg.seed)
    out = synthesize(enhanced)
    try:
        write_wav(args.output, out, bits=args.bits)
    except OSError as e:
        raise AudioFormatError(f"cannot write {args.output}: {e}") from e
    if args.dump_gains:
        _write_text(args.dump_gains, _gain_tsv(gains))
    if args.dump_xi:
        _write_text(args.dump_xi, format_xi_tsv(xi))
    if args.clean or args.noise:
        if not (args.clean and args.noise):
            raise UsageError("--clean and --noise must be given together")
        clean, noise = _read(args.clean), _read(args.noise)
        if len(clean) != len(noisy) or len(noise) != len(noisy):
            raise UsageError("clean and noise references must match the input length")
        residual = np.max(np.abs(clean.samples + noise.samples - noisy.samples))
        if residual > 1e-3:
            raise UsageError(f"input is not clean + noise (max deviation {residual:.3g})")
        # score against the exact sum so the decomposition holds
        res = enhance_mixture(clean, noise, cfg.scheme, {"run": params}, stft_cfg, MetricsConfig(init_s=cfg.init_s),
                              nmf_model=nmf_model, dnn_model=dnn_model, tracker=cfg.tracker(), seed=cfg.seed, alpha_dd=cfg.alpha_dd)
        report = res["run"][0]
        sys.stdout.write(f"dseg_snr\t{report.seg_snr_imp_db:.4f}\nseg_ssnr\t{report.seg_ssnr_db:.4f}\nseg_nr\t{report.seg_nr_db:.4f}\n")
    return 0


def cmd_train_nmf(args):
    cfg = _config(args)
    corpus = corpus_mod.load_corpus(args.corpus)
    speech = train_speech_basis(corpus, cfg)
    noises = dict(args.noise)
    out = Path(args.out)
    single = len(noises) == 1 and out.suffix == ".npz"
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for kind, path in noises.items():
        model = train_nmf_model(corpus, _read(path), kind, cfg, speech_basis=speech)
        target = out if single else out / f"nmf-{kind}.npz"
        model.save(target)
        print(f"wrote {target}", file=sys.stderr)
    return 0


def cmd_train_dnn(args):
    cfg = _config(args)
    corpus = corpus_mod.load_corpus(args.corpus, cfg.n_classes)
    if not all(u.phone_labels for u in corpus):
        raise AudioFormatError("every training utterance needs a .lab annotation")
    try:
        model = train_dnn_model(corpus, cfg)
    except ValueError as e:
        raise UsageError(str(e)) from e
    model.save(args.out)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_gain_curves(args):
    if args.figure:
        grid = SWEEP_PRESETS[args.figure]
        out_dir = Path(args.out) if args.out else None
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
        blocks = []
        for fixed in grid["fixed_db"]:
            for mu in grid["mu"]:
                for beta in grid["beta"]:
                    kw = {"xi_db": fixed} if grid["axis"] == "gamma" else {"gamma_db": fixed}
                    table = gain_curve_sweep(MosieParams(mu, beta), sweep_range_db=grid["range_db"], step_db=args.step_db, **kw)
                    name = f"{args.figure}_fixed{fixed:g}_mu{mu:g}_beta{beta:g}"
                    if out_dir:
                        (out_dir / f"{name}.tsv").write_text(format_sweep_tsv(table), encoding="utf-8")
                    else:
                        blocks.append(f"# {name}\n" + format_sweep_tsv(table))
        if blocks:
            sys.stdout.write("\n".join(blocks))
        return 0
    try:
        params = MosieParams(args.mu, args.beta)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.fix_xi_db is None and args.fix_gamma_db is None:
        raise UsageError("give --figure, --fix-xi-db or --fix-gamma-db")
    if args.fix_xi_db is not None:
        table = gain_curve_sweep(params, xi_db=args.fix_xi_db, sweep_range_db=tuple(args.range_db or (-10.0, 20.0)), step_db=args.step_db)
    else:
        table = gain_curve_sweep(params, gamma_db=args.fix_gamma_db, sweep_range_db=tuple(args.range_db or (-20.0, 20.0)), step_db=args.step_db)
    _write_text(args.out, format_sweep_tsv(table))
    return 0


def cmd_evaluate(args):
    cfg = _config(args, {"snr_list": args.snr_list, "schemes": args.schemes, "presets": args.presets, "dnn_model": args.dnn_model})
    schemes = cfg.list_of("schemes")
    noises = {kind: _read(path) for kind, path in args.noise}
    if not noises:
        raise UsageError("evaluate needs at least one --noise TYPE=WAV")
    nmf_models = {}
    if "nmf" in schemes:
        paths = dict(args.nmf_model)
        for kind in noises:
            if kind not in paths:
                raise ModelError(f"scheme nmf needs --nmf-model {kind}=PATH")
            nmf_models[kind] = NmfModel.load(paths[kind])
    dnn_model = None
    if "dnn" in schemes:
        if not cfg.dnn_model:
            raise ModelError("scheme dnn requires --dnn-model")
        dnn_model = DnnModel.load(cfg.dnn_model)
    test = corpus_mod.load_corpus(args.corpus)
    rows, max_err = run_evaluation(test, noises, cfg, nmf_models, dnn_model)
    if args.per_utterance:
        lines = ["utt\t" + format_results_tsv(rows).split("\n", 1)[0]]
        lines += [f"{r['utt']}\t" + format_results_tsv([r]).split("\n")[1] for r in rows]
        _write_text(args.per_utterance, "\n".join(lines) + "\n")
    _write_text(args.out, format_results_tsv(aggregate_rows(rows)))
    print(f"{len(rows)} runs, max decomposition error {max_err:.3g}", file=sys.stderr)
    return 0


def cmd_make_corpus(args):
    cfg = _config(args)
    out = Path(args.out)
    utts = corpus_mod.generate_synthetic_corpus(args.n_utts, cfg.seed, cfg.sample_rate)
    corpus_mod.save_corpus(utts, out)
    duration = args.noise_duration_s or cfg.noise_duration_s
    kinds = [k.strip() for k in args.noise_types.split(",") if k.strip()]
    if kinds:
        noise_dir = out / "noise"
        noise_dir.mkdir(parents=True, exist_ok=True)
        for i, kind in enumerate(kinds):
            if kind not in corpus_mod.NOISE_TYPES:
                raise UsageError(f"unknown noise type {kind!r}; choose from {corpus_mod.NOISE_TYPES}")
            noise = corpus_mod.generate_noise(kind, duration, cfg.sample_rate, seed=cfg.seed + 1000 + i)
            write_wav(noise_dir / f"{kind}.wav", noise, bits=32)
    print(f"wrote {len(utts)} utterances to {out}", file=sys.stderr)
    return 0


COMMANDS = {
    "enhance": cmd_enhance,
    "train-nmf": cmd_train_nmf,
    "train-dnn": cmd_train_dnn,
    "gain-curves": cmd_gain_curves,
    "evaluate": cmd_evaluate,
    "make-corpus": cmd_make_corpus,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except EnhanceError as e:
        print(f"sgenhance: error: {e}", file=sys.stderr)
        return e.exit_code
    except (ArithmeticError, FloatingPointError) as e:
        print(f"sgenhance: numeric failure: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"sgenhance: I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
