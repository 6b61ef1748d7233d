"""Command-line entry point: ``emocond <command> [options]``.

Exit codes: 0 success, 1 numerical or runtime failure, 2 configuration error.
Every command that takes ``--out`` writes ``manifest.json`` there, on
failure as well as success.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import rng as rngmod
from .encoders import Encoder, cosine, extract_emotion, planted_image
from .errors import ConfigError, EmocondError, FormatError, NumericalError
from .gradsuite import format_table, run_suite
from .harness import TrainConfig, Variant, ablate, evaluate, run_experiment
from .harness.model import Model
from .harness.run import RunResult, final_losses, load_or_make_corpus, report_payload
from .numcore import tnsr
from .synthdata import CorpusSpec, load_corpus, make_corpus, save_corpus, split

log = logging.getLogger("emocond")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class Run:
    """Collects what a command produced, for the manifest."""

    def __init__(self, command, args):
        self.command = command
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.config: dict = {}
        self.seed = getattr(args, "seed", None)
        self.corpus_hash = ""
        self.outputs: list = []

    def add(self, *paths):
        self.outputs.extend(str(p) for p in paths)

    def manifest(self, error=None) -> dict:
        m = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "corpus_hash": self.corpus_hash,
            "tool_version": __version__,
            "outputs": sorted(self.outputs),
        }
        if error is not None:
            m["error"] = {"type": type(error).__name__, "message": str(error)}
        return m

    def write_manifest(self, error=None):
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(self.manifest(error), indent=1, sort_keys=True) + "\n")


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"{what} file not found: {path}", fields=(what,)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}", fields=(what,)) from exc


def resolve_config(args) -> TrainConfig:
    cfg = TrainConfig.from_dict(_read_json(args.config, "config")) if args.config else TrainConfig()
    overrides = list(args.set or [])
    if getattr(args, "variant", None):
        overrides.append(f"variant={json.dumps(args.variant)}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "corpus", None):
        overrides.append(f"corpus_path={json.dumps(str(args.corpus))}")
    return cfg.with_overrides(overrides).validate()


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(args, run: Run):
    spec_dict = _read_json(args.spec, "spec") if args.spec else CorpusSpec().to_dict()
    if not isinstance(spec_dict, dict):
        raise ConfigError("spec must be a JSON object", fields=("spec",))
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = CorpusSpec.from_dict(spec_dict)
    run.config, run.seed = spec.to_dict(), spec.seed
    corpus = make_corpus(spec)
    run.corpus_hash = corpus.content_hash()
    run.add(*save_corpus(corpus, run.out))
    print(f"wrote {len(corpus)} samples ({len(corpus.pairs())} pairs) to {run.out}  hash={run.corpus_hash[:12]}")


def cmd_train(args, run: Run):
    cfg = resolve_config(args)
    run.config, run.seed = cfg.to_dict(), cfg.seed
    result = run_experiment(cfg, out_dir=run.out)
    run.corpus_hash = result.corpus_hash
    run.add(run.out / "train_log.csv", run.out / "report.json")
    run.add(*result.model.save(run.out / "model"))
    (run.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    run.add(run.out / "config.json")
    _print_report(result.report)


def cmd_ablate(args, run: Run):
    cfg = resolve_config(args)
    run.config, run.seed = cfg.to_dict(), cfg.seed
    rows = ablate(cfg, out_dir=run.out)
    run.corpus_hash = rows[0]["corpus_hash"]
    run.add(run.out / "ablation.csv")
    for r in rows:
        print(f"{r['variant']}  {r['status']:<6} cross_cos={r['mean_abs_cross_cosine']!s:<22} "
              f"emo_acc={r['emotion_probe_acc']!s:<8} spk_acc={r['speaker_probe_acc']!s}")
    if any(r["status"] != "ok" for r in rows):
        raise NumericalError("one or more variants failed; see ablation.csv")


def cmd_eval(args, run: Run):
    model_dir = Path(args.model)
    cfg = TrainConfig.from_dict(_read_json(model_dir / "config.json", "config"))
    if args.corpus:
        cfg = cfg.with_overrides([f"corpus_path={json.dumps(str(args.corpus))}"])
    run.config, run.seed = cfg.to_dict(), cfg.seed
    model = Model.load(model_dir / "model", cfg)
    corpus = load_or_make_corpus(cfg)
    run.corpus_hash = corpus.content_hash()
    tr, ev = split(corpus, cfg.train_fraction, cfg.seed)
    losses = {}
    log_path = model_dir / "train_log.csv"
    if log_path.exists():
        with log_path.open() as fh:
            rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        losses = final_losses(rows)
    report = evaluate(model, tr, ev, losses, cfg.probe_ridge, cfg.eval_pairs)
    payload = report_payload(RunResult(model, [], report, run.corpus_hash, cfg))
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / "report.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    run.add(run.out / "report.json")
    _print_report(report)


def cmd_extract_emotion(args, run: Run):
    corpus = load_corpus(args.corpus)
    run.corpus_hash = corpus.content_hash()
    seed = args.seed if args.seed is not None else 0
    run.seed = seed
    spec = corpus.spec
    if args.model:
        model_dir = Path(args.model)
        if (model_dir / "model").is_dir():
            model_dir = model_dir / "model"
        w = tnsr.load(model_dir / "emotion_encoder.projection.tnsr")
        if w.shape != (spec.feature_dim, spec.embed_dim):
            raise ConfigError(f"encoder shape {w.shape} does not fit corpus ({spec.feature_dim}, {spec.embed_dim})",
                              fields=("model",))
        enc = Encoder(w, frozen=True)
        source = str(args.model)
    else:
        enc = Encoder.orthonormal(spec.feature_dim, spec.embed_dim, rngmod.stream(seed, "init"))
        source = "frozen-orthonormal"
    emotions = [args.emotion] if args.emotion is not None else list(range(1, spec.num_emotions))
    run.config = {"corpus": str(args.corpus), "n": args.n, "emotions": emotions, "encoder": source}
    run.out.mkdir(parents=True, exist_ok=True)
    for k in emotions:
        if not 1 <= k < spec.num_emotions:
            raise ConfigError(f"emotion must be in [1, {spec.num_emotions - 1}], got {k}", fields=("emotion",))
        emb = extract_emotion(enc, corpus, k, args.n)
        sidecar = {"emotion_id": k, "N": emb.num_pairs, "pair_ids": emb.pair_ids, "skipped": emb.skipped,
                   "encoder": source}
        if corpus.ground_truth is not None:
            sidecar["cosine_vs_oracle"] = cosine(emb.vector, planted_image(enc, corpus.ground_truth.emotion_directions[k]))
        vec_path, meta_path = run.out / f"emotion_{k}.tnsr", run.out / f"emotion_{k}.json"
        tnsr.save(vec_path, emb.vector)
        meta_path.write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
        run.add(vec_path, meta_path)
        cos_txt = f"{sidecar['cosine_vs_oracle']:.6f}" if "cosine_vs_oracle" in sidecar else "n/a"
        print(f"emotion {k}: N={emb.num_pairs} skipped={emb.skipped} cosine_vs_oracle={cos_txt}")


def cmd_grad_check(args, run: Run):
    seeds = tuple(args.seeds) if args.seeds else (0, 1, 2)
    run.config = {"seeds": list(seeds)}
    results = run_suite(seeds)
    print(format_table(results))
    if run.out is not None:
        run.out.mkdir(parents=True, exist_ok=True)
        path = run.out / "grad_check.json"
        path.write_text(json.dumps([{"check": r.name, "seed": r.seed, "max_rel_err": r.max_rel_err,
                                     "passed": r.passed} for r in results], indent=1) + "\n")
        run.add(path)
    failed = [r for r in results if not r.passed]
    if failed:
        raise NumericalError(f"{len(failed)} gradient check(s) failed")


def _print_report(report):
    for key, value in dataclasses.asdict(report).items():
        if key != "final_losses":
            print(f"{key:>28}: {value}")


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="u64 seed for all random streams")
    common.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    def with_config(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")
        p.add_argument("--corpus", help="corpus directory (default: generate from config)")

    parser = argparse.ArgumentParser(prog="emocond", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--spec", help="corpus spec JSON (defaults used when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train one variant and evaluate it")
    with_config(p)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", parents=[common], help="run the v1..v4 ladder")
    with_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="re-evaluate a trained model directory")
    p.add_argument("--model", required=True, help="output directory of a previous `train`")
    p.add_argument("--corpus")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract-emotion", parents=[common], help="aggregate emotion direction embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, default=10, help="number of pairs to aggregate")
    p.add_argument("--emotion", type=int, help="emotion id (default: every non-neutral emotion)")
    p.add_argument("--model", help="model directory; default is a frozen random orthonormal encoder")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_emotion)

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference check of every loss")
    p.add_argument("--seeds", type=int, nargs="*")
    p.add_argument("--out")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_grad_check)
    return parser


def _exit_code(exc) -> int:
    if isinstance(exc, (ConfigError, FormatError)):
        return EXIT_CONFIG
    return EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args.command, args)
    try:
        args.func(args, run)
    except Exception as exc:  # every failure still gets a manifest and a mapped exit code
        code = _exit_code(exc)
        try:
            run.write_manifest(exc)
        except OSError:
            pass
        if args.json_errors:
            payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
                       "fields": list(getattr(exc, "fields", ()))}
            print(json.dumps(payload), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        if not isinstance(exc, EmocondError):
            log.debug("unexpected failure", exc_info=True)
        return code
    run.write_manifest()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
