"""Command-line entry point: ``vowsn-asr <subcommand>``.

Exit status: 0 on success, 2 for usage errors (bad flags, missing paths,
invalid configuration), 1 for failures while running.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .decoder import DecodeConfig, SearchGraph, viterbi_decode
from .errors import ConfigError
from .frontend import FrontendConfig, mfcc, preprocess, read_features_csv, read_wav, write_features_csv
from .metrics import read_transcripts, score_transcripts, wer, write_metric_csv
from .models import ModelBundle
from .report import comparison_markdown, read_runs_csv, write_runs_csv
from .training import train_models
from .wsn_sim import (
    ArchitectureCut,
    ChannelModel,
    CodecSpec,
    ComputeModel,
    NodeProfile,
    config_from_dict,
    run_fixture,
    run_scenario,
)

log = logging.getLogger("vowsn_asr")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


def _read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from None


def _need(path, what="input") -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _out_stream(out):
    return open(out, "w", newline="") if out else contextlib.nullcontext(sys.stdout)


def _decode_cfg(d: dict | None) -> DecodeConfig:
    d = dict(d or {})
    if d.get("beam_logwidth") in (None, "inf", "Infinity"):
        d["beam_logwidth"] = math.inf
    return config_from_dict(DecodeConfig, d)


# -- subcommands -------------------------------------------------------------

def cmd_extract(args) -> int:
    cfg = FrontendConfig(**_read_json(args.config)) if args.config else FrontendConfig()
    clip = read_wav(_need(args.input))
    if args.trim is not None:
        clip = preprocess(clip, None, args.trim)
    feats = mfcc(clip, cfg)
    with _out_stream(args.out) as fh:
        write_features_csv(fh, feats)
    log.info("%d frames x %d coefficients", feats.n_frames, feats.dim)
    return EXIT_OK


TRAIN_KEYS = {"n_states", "n_mix", "realign_iters", "em_iters", "self_loop", "variance_floor",
              "trim_threshold", "frontend", "sample_rate_hz", "seed"}


def cmd_train(args) -> int:
    params = _read_json(args.config) if args.config else {}
    for key in params:
        if key not in TRAIN_KEYS:
            raise ConfigError(key, "unknown training option")
    utts, lexicon, doc = corpus_mod.load_corpus(_need(args.corpus, "corpus"))
    frontend = FrontendConfig(**params.get("frontend", {}))
    rate = params.get("sample_rate_hz", 8000) if doc["kind"] == "audio" else None
    feats = corpus_mod.extract_corpus_features(utts, frontend, rate, params.get("trim_threshold", 0.01))
    seed = args.seed if args.seed is not None else params.get("seed", 0)
    bundle = train_models(
        feats, [u.transcript for u in utts], lexicon,
        n_states=params.get("n_states", 3), n_mix=params.get("n_mix", 2),
        realign_iters=params.get("realign_iters", 4), em_iters=params.get("em_iters", 10),
        self_loop=params.get("self_loop", 0.6), seed=seed,
        **({"variance_floor": params["variance_floor"]} if "variance_floor" in params else {}),
        frontend=frontend if doc["kind"] == "audio" else None, sample_rate_hz=rate,
    )
    out = Path(args.out or "model.json")
    if out.suffix != ".json":
        out = out / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(out)
    log.info("wrote %s", out)
    return EXIT_OK


def _decode_inputs(paths, bundle: ModelBundle):
    """Yield (id, FeatureMatrix) for WAV files, feature CSVs or corpus dirs."""
    frontend = bundle.frontend or FrontendConfig()
    for raw in paths:
        p = _need(raw)
        if p.is_dir() or p.name == "corpus.json":
            utts, _, doc = corpus_mod.load_corpus(p)
            feats = corpus_mod.extract_corpus_features(utts, frontend, bundle.sample_rate_hz)
            for u, f in zip(utts, feats):
                yield u.uid, f
        elif p.suffix.lower() == ".wav":
            yield p.stem, mfcc(preprocess(read_wav(p), bundle.sample_rate_hz), frontend)
        else:
            yield p.stem, read_features_csv(p)


def cmd_decode(args) -> int:
    bundle = ModelBundle.load(_need(args.models, "model bundle"))
    cfg = DecodeConfig(
        beam_logwidth=args.beam, lm_scale=args.lm_scale,
        word_insertion_penalty=args.penalty, max_words=args.max_words,
    )
    graph = SearchGraph(bundle, cfg.lm_scale, cfg.word_insertion_penalty)
    results = []
    for uid, feats in _decode_inputs(args.inputs, bundle):
        r = viterbi_decode(feats, bundle, cfg, graph=graph)
        d = {"id": uid, **r.to_dict()}
        if not args.timing:
            d.pop("decode_wall_time_s")
        results.append(d)
    with _out_stream(args.out) as fh:
        if args.format == "csv":
            fh.write("id,text,log_score,frames_processed\n")
            for d in results:
                fh.write(f"{d['id']},{d['text']},{d['log_score']!r},{d['frames_processed']}\n")
        else:
            for d in results:
                fh.write(json.dumps(d) + "\n")
    return EXIT_OK


def cmd_score(args) -> int:
    refs = read_transcripts(_need(args.reference, "reference transcript"))
    hyps = read_transcripts(_need(args.hypothesis, "hypothesis transcript"))
    if len(refs) != len(hyps):
        raise UsageError(f"{len(refs)} reference lines but {len(hyps)} hypothesis lines")
    per, total = score_transcripts(refs, hyps)
    if args.format == "json":
        with _out_stream(args.out) as fh:
            json.dump({"I": total.insertions, "D": total.deletions, "S": total.substitutions,
                       "N": total.ref_words, "WER": wer(total) if total.ref_words else None}, fh)
            fh.write("\n")
    else:
        with _out_stream(args.out) as fh:
            write_metric_csv(fh, per, total)
    return EXIT_OK


def _load_manifest(path, seed_override=None) -> dict:
    doc = _read_json(path)
    base = Path(path).resolve().parent
    if doc.get("format_version") != MANIFEST_VERSION:
        raise ConfigError("format_version", f"expected {MANIFEST_VERSION}")
    scenarios = doc.get("scenarios")
    if not scenarios:
        raise ConfigError("scenarios", "manifest lists no scenarios")
    for i, sc in enumerate(scenarios):
        sc.setdefault("name", f"scenario{i}")
        kind = sc.get("kind", "corpus")
        if kind == "fixture":
            config_from_dict(NodeProfile, sc.get("node"))
            continue
        if kind != "corpus":
            raise ConfigError("kind", f"unknown scenario kind {kind!r}")
        for key in ("corpus", "models"):
            if key not in sc:
                raise ConfigError(key, f"scenario {sc['name']!r} needs a {key} path")
            p = (base / sc[key]).resolve()
            if not p.exists():
                raise UsageError(f"scenario {sc['name']!r}: {key} path not found: {p}")
            sc[key] = p
        for cut in sc.get("cuts", ["NSR", "DSR", "ESR"]):
            ArchitectureCut(cut)
        config_from_dict(ChannelModel, sc.get("channel"))
        config_from_dict(NodeProfile, sc.get("node"))
        config_from_dict(CodecSpec, sc.get("codec"))
        config_from_dict(ComputeModel, sc.get("compute"))
        _decode_cfg(sc.get("decode"))
        if seed_override is not None:
            sc["seeds"] = [seed_override]
    doc["_base"] = base
    return doc


def run_manifest(manifest: dict) -> list:
    rows = []
    for sc in manifest["scenarios"]:
        if sc.get("kind") == "fixture":
            for r in run_fixture(node=config_from_dict(NodeProfile, sc.get("node")), scenario=sc["name"]):
                rows.append(r.row())
            continue
        utts, _, _ = corpus_mod.load_corpus(sc["corpus"])
        bundle = ModelBundle.load(sc["models"])
        node = config_from_dict(NodeProfile, sc.get("node"))
        codec = config_from_dict(CodecSpec, sc.get("codec"))
        compute = config_from_dict(ComputeModel, sc.get("compute"))
        dcfg = _decode_cfg(sc.get("decode"))
        for seed in sc.get("seeds", [0]):
            ch = config_from_dict(ChannelModel, {**sc.get("channel", {}), "rng_seed": seed})
            for cut in sc.get("cuts", ["NSR", "DSR", "ESR"]):
                rep = run_scenario(utts, ArchitectureCut(cut), bundle, ch, node, codec, dcfg,
                                   compute=compute, trim_threshold=sc.get("trim_threshold", 0.01),
                                   scenario=sc["name"])
                rows.append(rep.row())
                log.info("%s %s seed=%s WER=%.3f", sc["name"], cut, seed, rep.wer)
    return rows


def cmd_simulate(args) -> int:
    manifest = _load_manifest(args.config, args.seed)
    out = Path(args.out or manifest["_base"] / manifest.get("output_dir", "sim_out"))
    out.mkdir(parents=True, exist_ok=True)
    rows = run_manifest(manifest)
    if args.format == "json":
        (out / "runs.json").write_text(json.dumps(rows, indent=1) + "\n")
    else:
        write_runs_csv(out / "runs.csv", rows, include_wall_clock=not args.no_wall_clock)
    (out / "comparison.md").write_text(comparison_markdown(rows))
    print((out / "comparison.md").read_text())
    return EXIT_OK


SPEC_KEYS = {"kind", "vocab", "n_words", "vocab_seed", "utterance_count", "words_per_utterance",
             "sample_noise_sigma", "seed", "dim", "generator_seed", "separation", "sample_rate_hz",
             "synth_seed", "n_states"}


def cmd_gen_corpus(args) -> int:
    params = _read_json(args.config) if args.config else {}
    for key in params:
        if key not in SPEC_KEYS:
            raise ConfigError(key, "unknown corpus option")
    kind = params.get("kind", "features")
    if kind not in ("features", "audio"):
        raise ConfigError("kind", "must be 'features' or 'audio'")
    vocab = params.get("vocab") or corpus_mod.default_vocab(params.get("n_words", 10), seed=params.get("vocab_seed", 0))
    spec = corpus_mod.SyntheticCorpusSpec(
        vocab=vocab,
        utterance_count=params.get("utterance_count", 200),
        words_per_utterance=tuple(params.get("words_per_utterance", (1, 3))),
        sample_noise_sigma=params.get("sample_noise_sigma", 0.0),
        seed=args.seed if args.seed is not None else params.get("seed", 0),
    )
    out = Path(args.out or "corpus")
    n_states = params.get("n_states", 3)
    if kind == "features":
        gen = corpus_mod.make_generator_bundle(
            spec.lexicon, dim=params.get("dim", 4), n_states=n_states,
            separation=params.get("separation", 6.0), seed=params.get("generator_seed", 0))
        utts = corpus_mod.generate_corpus(spec, gen)
        corpus_mod.save_corpus(out, utts, spec.lexicon, {"generator_models": "generator_models.json"})
        gen.save(out / "generator_models.json")
    else:
        synth = corpus_mod.ToneSynth.for_lexicon(
            spec.lexicon, n_states=n_states, seed=params.get("synth_seed", 0),
            sample_rate_hz=params.get("sample_rate_hz", 8000))
        utts = corpus_mod.synthesize_audio_corpus(spec, synth)
        corpus_mod.save_corpus(out, utts, spec.lexicon)
    log.info("wrote %d utterances to %s", len(utts), out)
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for p in args.runs:
        rows.extend(read_runs_csv(_need(p, "runs CSV")))
    md = comparison_markdown(rows)
    with _out_stream(args.out) as fh:
        fh.write(md)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vowsn-asr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="WAV -> MFCC feature CSV")
    p.add_argument("input")
    p.add_argument("--trim", type=float, default=None, help="trim edge silence at this relative energy")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="corpus -> model bundle JSON")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", parents=[common], help="audio/features -> transcripts")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--models", required=True)
    p.add_argument("--beam", type=float, default=math.inf)
    p.add_argument("--lm-scale", type=float, default=1.0)
    p.add_argument("--penalty", type=float, default=0.0)
    p.add_argument("--max-words", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="include wall-clock decode time")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("score", parents=[common], help="reference + hypothesis -> metric CSV")
    p.add_argument("reference")
    p.add_argument("hypothesis")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", parents=[common], help="manifest -> run CSV + comparison table")
    p.add_argument("--no-wall-clock", action="store_true", help="omit wall-clock columns")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-corpus", parents=[common], help="synthetic corpus")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("report", parents=[common], help="run CSVs -> Markdown comparison")
    p.add_argument("runs", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "simulate" and args.config is None:
        print("vowsn-asr simulate: --config is required", file=sys.stderr)
        return EXIT_USAGE
    if args.format is None:
        args.format = "json" if args.command == "decode" else "csv"
    try:
        return args.func(args)
    except BrokenPipeError:
        # Output consumer went away (e.g. piped into head); stay quiet.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_RUNTIME
    except (UsageError, ConfigError) as exc:
        print(f"vowsn-asr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"vowsn-asr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
