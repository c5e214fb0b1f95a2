"""Command-line surface: index / retrieve / complete / eval.

Exit codes: 0 ok, 2 usage or input problem, 3 transport failure,
4 prompt budget exhausted. The SARACODER_CONFIG environment variable
names a default config file; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ENV_CONFIG_VAR, EngineConfig
from .engine import Engine
from .errors import (
    BudgetExceededError,
    ConfigError,
    IndexLoadError,
    SampleFormatError,
    SaracoderError,
    TransportError,
)
from .evaluation import load_samples, make_completer
from .store import index_repository

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRANSPORT = 3
EXIT_BUDGET = 4


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (key = value lines)")
    parser.add_argument("--index", dest="index_dir", help="index directory")
    parser.add_argument("--top-k", dest="top_k", type=int)
    parser.add_argument("--expansion-p", dest="expansion_p", type=int)
    parser.add_argument("--quantile-q", dest="quantile_q", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--mmr-lambda", dest="mmr_lambda", type=float)
    parser.add_argument("--budget", type=int)
    parser.add_argument("--provider", choices=["local", "remote"])
    parser.add_argument("--endpoint", help="embedding service base URL (remote provider)")
    parser.add_argument(
        "--disable-sad", action="store_true", help="skip the semantic filter stage"
    )
    parser.add_argument(
        "--disable-rap", action="store_true", help="skip the duplicate pruning stage"
    )
    parser.add_argument(
        "--disable-tpm", action="store_true", help="skip the structural scoring stage"
    )
    parser.add_argument(
        "--disable-dar", action="store_true", help="skip the diversity reranking stage"
    )
    parser.add_argument(
        "--disable-hf-op",
        action="store_true",
        help="disable all four refinement stages at once",
    )
    parser.add_argument(
        "--disable-eaid", action="store_true", help="drop the import-resolution prompt section"
    )
    parser.add_argument(
        "--disable-ccg",
        action="store_true",
        help="ignore graph structure when ranking (equivalent to --disable-tpm)",
    )
    parser.add_argument(
        "--print-config", action="store_true", help="print the effective config and exit"
    )


def _load_config(args: argparse.Namespace) -> EngineConfig:
    config_path = getattr(args, "config", None) or os.environ.get(ENV_CONFIG_VAR)
    config = EngineConfig.from_file(config_path) if config_path else EngineConfig()

    overrides = {}
    for key in (
        "index_dir",
        "top_k",
        "expansion_p",
        "quantile_q",
        "gamma",
        "alpha",
        "mmr_lambda",
        "budget",
        "provider",
        "endpoint",
    ):
        overrides[key] = getattr(args, key, None)
    if getattr(args, "disable_sad", False) or getattr(args, "disable_hf_op", False):
        overrides["enable_sad"] = False
    if getattr(args, "disable_rap", False) or getattr(args, "disable_hf_op", False):
        overrides["enable_rap"] = False
    if getattr(args, "disable_tpm", False) or getattr(args, "disable_hf_op", False):
        overrides["enable_tpm"] = False
    if getattr(args, "disable_dar", False) or getattr(args, "disable_hf_op", False):
        overrides["enable_dar"] = False
    if getattr(args, "disable_ccg", False):
        overrides["enable_tpm"] = False
    if getattr(args, "disable_eaid", False):
        overrides["enable_eaid"] = False
    return config.merged(overrides)


def _read_context(spec: str) -> str:
    if spec == "-":
        return sys.stdin.read()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"context file not found: {path}")
    return path.read_text(encoding="utf-8")


def _candidate_rows(engine: Engine, candidates) -> list[dict]:
    rows = []
    for cand in candidates:
        record = engine.store.get(cand.snippet_id)
        rows.append(
            {
                "snippet_id": cand.snippet_id,
                "file": record.file if record else None,
                "lexical_score": cand.lexical_score,
                "embed_sim": cand.embed_sim,
                "struct_sim": cand.struct_sim,
                "composite": cand.composite,
                "rank_trace": list(cand.rank_trace),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Subcommands


def cmd_index(args: argparse.Namespace) -> int:
    repo = Path(args.repo)
    if not repo.is_dir():
        print(f"error: repository path not found: {repo}", file=sys.stderr)
        return EXIT_INPUT
    manifest = index_repository(repo, args.out, language=args.language, h=args.hops, w=args.window)
    print(
        f"indexed {manifest.file_count} files into {args.out}: "
        f"{manifest.snippet_count} snippets, {len(manifest.skipped_files)} skipped"
    )
    for path, reason in manifest.skipped_files:
        print(f"  skipped {path}: {reason}")
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.print_config:
        print(config.to_text(), end="")
        return EXIT_OK
    context = _read_context(args.context)
    if not context.strip():
        print("error: empty context", file=sys.stderr)
        return EXIT_INPUT
    engine = Engine.open(config)
    if args.json:
        candidates = engine.retrieve(context)
        print(json.dumps({"candidates": _candidate_rows(engine, candidates)}, indent=2))
    else:
        bundle, _ = engine.build_prompt(context, current_file=args.file or "")
        print(bundle.text)
    return EXIT_OK


def cmd_complete(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.print_config:
        print(config.to_text(), end="")
        return EXIT_OK
    context = _read_context(args.context)
    if not context.strip():
        print("error: empty context", file=sys.stderr)
        return EXIT_INPUT
    engine = Engine.open(config)
    completer = make_completer(args.stub or args.completer)
    completion, bundle, _ = engine.complete(
        context, completer, current_file=args.file or "", max_tokens=args.max_tokens
    )
    if args.dump_prompt:
        Path(args.dump_prompt).write_text(bundle.text, encoding="utf-8")
    print(completion)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.print_config:
        print(config.to_text(), end="")
        return EXIT_OK
    samples = load_samples(args.samples)
    engine = Engine.open(config)
    completer = make_completer(args.stub or args.completer)
    report = engine.evaluate(samples, completer, out_path=args.out, max_tokens=args.max_tokens)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saracoder",
        description="Repository-level code completion context retrieval",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build a snippet index from a repository")
    p_index.add_argument("--repo", required=True, help="repository root")
    p_index.add_argument("--out", required=True, help="index output directory")
    p_index.add_argument("--language", default="python")
    p_index.add_argument("--hops", type=int, default=3, help="slice hop bound")
    p_index.add_argument("--window", type=int, default=20, help="slice statement window")
    p_index.set_defaults(func=cmd_index)

    p_retrieve = sub.add_parser("retrieve", help="print the assembled prompt for a context")
    p_retrieve.add_argument("--context", required=True, help="context file, or - for stdin")
    p_retrieve.add_argument("--file", help="repo-relative path of the unfinished file")
    p_retrieve.add_argument(
        "--json", action="store_true", help="print ranked candidates with per-stage scores"
    )
    _add_config_flags(p_retrieve)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_complete = sub.add_parser("complete", help="assemble a prompt and query a completer")
    p_complete.add_argument("--context", required=True, help="context file, or - for stdin")
    p_complete.add_argument("--file", help="repo-relative path of the unfinished file")
    p_complete.add_argument("--completer", default="echo", help="completer endpoint or 'echo'")
    p_complete.add_argument("--stub", choices=["echo"], help="use a built-in offline completer")
    p_complete.add_argument("--max-tokens", type=int, default=64)
    p_complete.add_argument("--dump-prompt", help="also write the prompt to this path")
    _add_config_flags(p_complete)
    p_complete.set_defaults(func=cmd_complete)

    p_eval = sub.add_parser("eval", help="run batch evaluation over a JSONL sample file")
    p_eval.add_argument("--samples", required=True, help="JSONL sample file")
    p_eval.add_argument("--completer", default="echo", help="completer endpoint or 'echo'")
    p_eval.add_argument("--stub", choices=["echo"], help="use a built-in offline completer")
    p_eval.add_argument("--out", help="per-sample results JSONL path")
    p_eval.add_argument("--max-tokens", type=int, default=64)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ConfigError, SampleFormatError, IndexLoadError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SaracoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
