"""Command line interface.

Exit codes are part of the contract: 0 success, 1 usage error, 2 a
named input file does not exist, 3 the input exists but fails parsing
or validation (including config and checkpoint format problems), 4 a
numeric failure (gradient check failure, divergence, non-finite loss).

The training seed resolves as: --seed flag beats the XSNG_SEED
environment variable, which beats the value in the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .diagnostics import format_report, run_gradcheck_suite
from .errors import (
    ConfigError,
    ContractError,
    FormatError,
    NumericError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .frontend import Language, parse_score, score_to_sequences, shipped_lexicon
from .generator import GeneratorConfig, generator_forward, init_generator_params
from .rng import CounterRng
from .training import (
    CHECKPOINT_NAME,
    ProbeConfig,
    TrainConfig,
    load_checkpoint,
    make_synthetic_corpus,
    probe_singer_accuracy,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_FILE = 2
EXIT_INVALID_INPUT = 3
EXIT_NUMERIC = 4

SEED_ENV = "XSNG_SEED"


def _read_text(path_str: str) -> str:
    path = Path(path_str)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path.read_text(encoding="utf-8")


def _require_file(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _emit(payload: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(payload + "\n")
    else:
        Path(out).write_text(payload + "\n", encoding="utf-8")


def _score_language(score) -> Language:
    voiced = {e.language for e in score.events if not e.is_rest}
    if len(voiced) != 1:
        names = sorted(lang.value for lang in voiced)
        raise ValidationError(f"score mixes languages {names}; "
                              "one language per score")
    return voiced.pop()


def _resolve_seed(flag: int | None, config_seed: int) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return config_seed


def _load_train_config(path_str: str) -> TrainConfig:
    text = _read_text(path_str)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path_str}: not valid JSON ({exc})") from None
    return TrainConfig.from_dict(data)


def _generator_from_checkpoint(path: Path):
    state = load_checkpoint(path)
    conf = state.meta.get("config", {})
    gen_cfg = GeneratorConfig(**conf.get("generator", {}))
    seed = int(conf.get("seed", 0))
    params = init_generator_params(gen_cfg, CounterRng(seed))
    params.load_arrays({name[len("gen."):]: arr
                        for name, arr in state.tensors.items()
                        if name.startswith("gen.")})
    return state, gen_cfg, params


def _cmd_frontend(args) -> int:
    score = parse_score(_read_text(args.score))
    language = _score_language(score)
    seq = score_to_sequences(score, shipped_lexicon(), language)
    payload = {"language": language.value, "total_frames": seq.total_frames}
    payload.update(seq.to_json_dict())
    _emit(json.dumps(payload, separators=(",", ":")), args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_train_config(args.config)
    seed = _resolve_seed(args.seed, config.seed)
    if seed != config.seed:
        config.seed = seed
    resume = _require_file(args.resume) if args.resume else None

    def on_step(rec):
        if rec["step"] % args.log_every == 0 or rec["step"] == config.steps:
            sys.stdout.write(json.dumps(rec, sort_keys=True) + "\n")
            sys.stdout.flush()

    result = train(config, out_dir=args.out, resume_from=resume, on_step=on_step)
    if args.out:
        sys.stdout.write(f"checkpoint: {Path(args.out) / CHECKPOINT_NAME}\n")
    return EXIT_OK


def _cmd_synth(args) -> int:
    state, gen_cfg, params = _generator_from_checkpoint(_require_file(args.checkpoint))
    score = parse_score(_read_text(args.score))
    language = _score_language(score)
    seq = score_to_sequences(score, shipped_lexicon(), language)
    if not 0 <= args.singer < gen_cfg.singer_count:
        raise ConfigError(f"--singer must be in 0..{gen_cfg.singer_count - 1}")
    out = generator_forward(seq, language.index, args.singer, params, gen_cfg)
    mel = out.mel.data
    payload = {"shape": [int(d) for d in mel.shape],
               "data": [float(v) for v in mel.reshape(-1)]}
    _emit(json.dumps(payload, separators=(",", ":")), args.out)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    cases = run_gradcheck_suite(tolerance=args.tolerance, h=args.step,
                                seed=args.seed)
    sys.stdout.write(format_report(cases) + "\n")
    return EXIT_OK if all(c.passed for c in cases) else EXIT_NUMERIC


def _cmd_probe(args) -> int:
    state, gen_cfg, params = _generator_from_checkpoint(_require_file(args.checkpoint))
    train_conf = TrainConfig.from_dict(state.meta["config"])
    corpus = make_synthetic_corpus(train_conf.corpus, train_conf.seed,
                                   shipped_lexicon(), gen_cfg.mel_bins)
    result = probe_singer_accuracy(params, gen_cfg, corpus,
                                   ProbeConfig(steps=args.steps, seed=args.seed))
    sys.stdout.write(json.dumps({
        "accuracy": result.accuracy,
        "train_accuracy": result.train_accuracy,
        "held_out": result.held_out,
        "trained_on": result.trained_on,
    }, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xsng",
        description="Cross-lingual singing synthesis: frontend, training, "
                    "synthesis and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("frontend", help="score file to phoneme/pitch/duration JSON")
    p.add_argument("--score", required=True, help="line-oriented JSON score file")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=_cmd_frontend)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="TrainConfig as JSON")
    p.add_argument("--out", help="directory for metrics.jsonl and checkpoint")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, help=f"overrides {SEED_ENV} and the config")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("synth", help="synthesize a mel matrix from a score")
    p.add_argument("--score", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--singer", type=int, default=0)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=11)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("probe", help="singer-identification probe on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=97)
    p.set_defaults(func=_cmd_probe)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; our contract reserves 2
        # for missing files, so usage errors become 1.  --help stays 0.
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ParseError, ValidationError, ConfigError, ContractError,
            FormatError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
