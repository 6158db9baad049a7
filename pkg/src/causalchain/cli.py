"""Command-line surface over the kernel.

Machine-readable JSON/JSONL goes to stdout; human diagnostics go to
stderr. Exit codes are stable: 0 success, 1 validation failures present,
2 usage error, 3 IO or schema error. Inputs stream line by line so
corpora larger than memory work.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Iterator, Optional, TextIO

from . import analytics, datapipe
from .chainformat import ChainDocument, parse_chain
from .errors import GroupTooSmall, KernelError
from .grpo import TrainConfig, group_advantages, load_env, load_train_config, train
from .rewards import RewardConfig, composite_reward, load_reward_config
from .scm import check_structural_validity

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_IO = 3


class _CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail_io(message: str) -> "_CliFailure":
    return _CliFailure(EXIT_IO, message)


def _iter_documents(path: str, fmt: str) -> Iterator[tuple[int, ChainDocument]]:
    """Yield (ordinal, document). JSONL mode is one document per line;
    template-text mode separates documents with blank lines."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    with fh:
        if fmt == "json":
            ordinal = 0
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield ordinal, parse_chain(line, "json")
                except KernelError as exc:
                    raise _fail_io(f"line {line_no}: {exc}") from exc
                ordinal += 1
        else:
            block: list[str] = []
            ordinal = 0
            start_line = 1
            for line_no, line in enumerate(fh, start=1):
                if line.strip():
                    if not block:
                        start_line = line_no
                    block.append(line)
                    continue
                if block:
                    yield ordinal, _parse_block(block, start_line)
                    ordinal += 1
                    block = []
            if block:
                yield ordinal, _parse_block(block, start_line)


def _parse_block(block: list[str], start_line: int) -> ChainDocument:
    try:
        return parse_chain("".join(block), "template-text")
    except KernelError as exc:
        raise _fail_io(f"document starting at line {start_line}: {exc}") from exc


def _load_reward_config(path: Optional[str]) -> RewardConfig:
    if path is None:
        return RewardConfig()
    try:
        return load_reward_config(path)
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    except KernelError as exc:
        raise _fail_io(f"bad config: {exc}") from exc


def _emit(out: TextIO, obj) -> None:
    out.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


# --- subcommands ---

def cmd_validate(args, out: TextIO, err: TextIO) -> int:
    any_invalid = False
    for _, doc in _iter_documents(args.input, args.format):
        report = check_structural_validity(doc.chain)
        any_invalid = any_invalid or not report.valid
        _emit(out, report.to_json_dict())
    return EXIT_INVALID if any_invalid else EXIT_OK


def cmd_score(args, out: TextIO, err: TextIO) -> int:
    cfg = _load_reward_config(args.config)
    for ordinal, doc in _iter_documents(args.input, args.format):
        if doc.gold_label is None:
            raise _fail_io(f"record {ordinal} has no gold_label")
        _emit(out, composite_reward(doc, doc.gold_label, cfg).to_json_dict())
    return EXIT_OK


def cmd_advantage(args, out: TextIO, err: TextIO) -> int:
    try:
        fh = open(args.input, "r", encoding="utf-8")
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rewards = obj["rewards"]
                prompt_id = obj.get("prompt_id")
                if not isinstance(rewards, list):
                    raise TypeError("rewards must be an array")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise _fail_io(f"line {line_no}: {exc}") from exc
            try:
                advantages = group_advantages(rewards, args.epsilon)
            except GroupTooSmall as exc:
                raise _CliFailure(EXIT_USAGE, f"line {line_no}: {exc}") from exc
            except (TypeError, ValueError) as exc:
                raise _fail_io(f"line {line_no}: {exc}") from exc
            record = {"prompt_id": prompt_id, "advantages": advantages}
            if prompt_id is None:
                del record["prompt_id"]
            _emit(out, record)
    return EXIT_OK


def _pipeline(args) -> tuple[Iterator[datapipe.StructRecord], datapipe.FilterStats]:
    if args.generator_kind == "fixture":
        if not args.generator:
            raise _CliFailure(EXIT_USAGE, "--generator FILE is required for fixture replay")
        try:
            generator = datapipe.FixtureReplayGenerator.from_jsonl(args.generator)
        except OSError as exc:
            raise _fail_io(str(exc)) from exc
        except KernelError as exc:
            raise _fail_io(str(exc)) from exc
    else:
        generator = datapipe.SyntheticChainGenerator(
            seed=args.seed or 0,
            wrong_rate=args.wrong_rate,
            invalid_rate=args.invalid_rate,
        )
    try:
        seeds = list(datapipe.load_seed(args.seed_file))
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    except KernelError as exc:
        raise _fail_io(str(exc)) from exc
    return datapipe.build_struct_dataset(
        seeds,
        generator,
        match_mode=args.match_mode,
        require_valid_structure=not args.paper_faithful,
    )


def _write_stats(args, stats: datapipe.FilterStats, err: TextIO) -> None:
    payload = json.dumps(stats.to_json_dict(), ensure_ascii=False, separators=(",", ":"))
    if args.stats:
        try:
            with open(args.stats, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
        except OSError as exc:
            raise _fail_io(str(exc)) from exc
    else:
        err.write(payload + "\n")


def cmd_filter(args, out: TextIO, err: TextIO) -> int:
    from .chainformat import serialize_chain

    records, stats = _pipeline(args)
    for record in records:
        out.write(serialize_chain(record.chain, "json").decode("utf-8"))
    _write_stats(args, stats, err)
    return EXIT_OK


def cmd_assemble(args, out: TextIO, err: TextIO) -> int:
    records, stats = _pipeline(args)
    for record in records:
        _emit(out, datapipe.struct_record_to_json_obj(record))
    _write_stats(args, stats, err)
    return EXIT_OK


def cmd_sft_emit(args, out: TextIO, err: TextIO) -> int:
    records, stats = _pipeline(args)
    try:
        for record in records:
            instance = datapipe.make_sft_instance(record, args.prompt_template)
            _emit(out, datapipe.sft_instance_to_json_obj(instance))
    except KernelError as exc:
        raise _CliFailure(EXIT_USAGE, str(exc)) from exc
    _write_stats(args, stats, err)
    return EXIT_OK


def cmd_stats(args, out: TextIO, err: TextIO) -> int:
    corpus = [analytics.chain_stats(doc) for _, doc in _iter_documents(args.input, args.format)]
    compare = None
    if args.compare:
        compare = [
            analytics.chain_stats(doc) for _, doc in _iter_documents(args.compare, args.format)
        ]
    try:
        report = analytics.corpus_report(corpus, compare)
    except KernelError as exc:
        raise _fail_io(str(exc)) from exc
    out.write(report.to_json())
    if args.profile_csv:
        try:
            with open(args.profile_csv, "w", encoding="utf-8") as fh:
                fh.write(analytics.profile_to_csv(report.length_profile))
        except OSError as exc:
            raise _fail_io(str(exc)) from exc
    err.write(report.to_text())
    return EXIT_OK


def cmd_train_toy(args, out: TextIO, err: TextIO) -> int:
    try:
        env = load_env(args.env)
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    except (KernelError, KeyError, TypeError, ValueError) as exc:
        raise _CliFailure(EXIT_USAGE, f"bad environment: {exc}") from exc
    try:
        train_cfg = load_train_config(args.config) if args.config else TrainConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.iterations is not None:
            overrides["iterations"] = args.iterations
        if overrides:
            train_cfg = dataclasses.replace(train_cfg, **overrides)
    except OSError as exc:
        raise _fail_io(str(exc)) from exc
    except KernelError as exc:
        raise _CliFailure(EXIT_USAGE, f"bad train config: {exc}") from exc
    reward_cfg = _load_reward_config(args.reward_config)
    trace = train(env, train_cfg, reward_cfg)
    out.write(trace.to_jsonl())
    return EXIT_OK


def cmd_serve(args, out: TextIO, err: TextIO) -> int:
    from .server import serve

    serve(sys.stdin, out)
    return EXIT_OK


# --- parser wiring ---

def _add_format_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format", choices=["json", "template-text"], default="json",
        help="input format: JSONL (default) or blank-line-separated template text",
    )


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("seed_file", help="JSONL of {id, query, gold_label}")
    parser.add_argument("--generator", help="fixture JSONL of {id, document}")
    parser.add_argument(
        "--generator-kind", choices=["fixture", "synthetic"], default="fixture",
    )
    parser.add_argument("--seed", type=int, default=None, help="synthetic generator seed")
    parser.add_argument("--wrong-rate", type=float, default=0.0)
    parser.add_argument("--invalid-rate", type=float, default=0.0)
    parser.add_argument("--match-mode", choices=["exact", "fuzzy"], default="exact")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--strict", action="store_true",
        help="require structural validity in addition to answer agreement (default)",
    )
    mode.add_argument(
        "--paper-faithful", action="store_true",
        help="filter on answer agreement only, skipping the structural gate",
    )
    parser.add_argument("--stats", help="write filter stats JSON here instead of stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalchain",
        description="Reasoning-chain kernel: validation, rewards, advantages, "
        "pipeline, statistics, toy training",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="structural validity report per document")
    p.add_argument("input")
    _add_format_flag(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="composite reward breakdown per document")
    p.add_argument("input")
    p.add_argument("--config", help="reward config TOML/JSON")
    _add_format_flag(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("advantage", help="group-normalized advantages per line")
    p.add_argument("input", help="JSONL of {prompt_id, rewards}")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.set_defaults(func=cmd_advantage)

    p = sub.add_parser("filter", help="run the consistency filter, emit kept documents")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("assemble", help="filter and assemble struct records")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("sft-emit", help="filter, assemble, and emit SFT instances")
    _add_pipeline_flags(p)
    p.add_argument("--prompt-template", default="Verify the claim. {query}")
    p.set_defaults(func=cmd_sft_emit)

    p = sub.add_parser("stats", help="corpus report over chain documents")
    p.add_argument("input")
    p.add_argument("--compare", help="second corpus for Welch tests")
    p.add_argument("--profile-csv", help="write the length profile as CSV here")
    _add_format_flag(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-toy", help="GRPO on a synthetic environment")
    p.add_argument("--env", required=True, help="environment descriptor JSON")
    p.add_argument("--config", help="train config TOML/JSON")
    p.add_argument("--reward-config", help="reward config TOML/JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("serve", help="line-protocol server for bridges")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None,
         out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, out, err)
    except _CliFailure as exc:
        err.write(f"error: {exc}\n")
        return exc.code
    except KernelError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_IO
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
