"""Completion-quality metrics and the batch evaluation loop.

Metrics: exact match, edit-distance similarity, and identifier-level
exact match / multiset F1. The harness drives the full retrieval engine
over a JSONL sample file against either an HTTP completer or the echo
stub, and reports per-metric means.
"""

from __future__ import annotations

import hashlib
import io
import json
import keyword
import tokenize as pytokenize
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import SampleFormatError, SaracoderError, TransportError
from .textnorm import normalize_text

# ---------------------------------------------------------------------------
# Metrics


def _normalize_for_match(text: str) -> str:
    lines = [line.rstrip() for line in text.strip().split("\n")]
    return "\n".join(lines)


def exact_match(pred: str, truth: str) -> int:
    """1 iff the strings are equal after trimming outer whitespace and
    trailing per-line whitespace."""
    return int(_normalize_for_match(pred) == _normalize_for_match(truth))


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def edit_similarity(pred: str, truth: str) -> float:
    """1 - distance / max(len); two empty strings score 1."""
    longest = max(len(pred), len(truth))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(pred, truth) / longest


def extract_identifiers(text: str, language: str = "python") -> list[str]:
    """Identifier token sequence of a code string, keywords excluded.

    Uses the language lexer; lexing stops quietly at the first malformed
    token so partial completions still yield their leading identifiers.
    """
    if language != "python":
        raise ValueError(f"unsupported language: {language!r}")
    identifiers: list[str] = []
    reader = io.StringIO(text).readline
    try:
        for tok in pytokenize.generate_tokens(reader):
            if tok.type == pytokenize.NAME and not keyword.iskeyword(tok.string):
                identifiers.append(tok.string)
    except (pytokenize.TokenError, IndentationError, SyntaxError):
        pass
    return identifiers


def identifier_metrics(pred: str, truth: str, language: str = "python") -> tuple[int, float]:
    """(id_em, id_f1): ordered-sequence exact match and multiset F1.

    F1 uses multiset precision/recall so repeated identifiers must be
    matched count-for-count; both sides empty scores 1, one side empty
    scores 0.
    """
    pred_ids = extract_identifiers(pred, language)
    truth_ids = extract_identifiers(truth, language)
    id_em = int(pred_ids == truth_ids)
    if not pred_ids and not truth_ids:
        return id_em, 1.0
    if not pred_ids or not truth_ids:
        return id_em, 0.0
    overlap = sum((Counter(pred_ids) & Counter(truth_ids)).values())
    precision = overlap / len(pred_ids)
    recall = overlap / len(truth_ids)
    if precision + recall == 0.0:
        return id_em, 0.0
    return id_em, 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Samples and reports


@dataclass
class EvalSample:
    id: str
    context: str
    groundtruth: str
    file: str = ""
    language: str = "python"


@dataclass
class MetricReport:
    em: float
    es: float
    id_em: float
    id_f1: float
    sample_count: int
    failure_count: int = 0

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "es": self.es,
            "id_em": self.id_em,
            "id_f1": self.id_f1,
            "sample_count": self.sample_count,
            "failure_count": self.failure_count,
        }


def load_samples(path: str | Path) -> list[EvalSample]:
    """Read JSONL samples; any malformed line fails with its line number."""
    samples = []
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SampleFormatError(str(path), line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(data, dict):
                raise SampleFormatError(str(path), line_no, "expected a JSON object")
            missing = [k for k in ("id", "context", "groundtruth") if k not in data]
            if missing:
                raise SampleFormatError(str(path), line_no, f"missing keys: {', '.join(missing)}")
            if not str(data["groundtruth"]).strip():
                raise SampleFormatError(str(path), line_no, "groundtruth is empty")
            samples.append(
                EvalSample(
                    id=str(data["id"]),
                    context=str(data["context"]),
                    groundtruth=str(data["groundtruth"]),
                    file=str(data.get("file", "")),
                    language=str(data.get("language", "python")),
                )
            )
    return samples


# ---------------------------------------------------------------------------
# Completers


@dataclass
class CompletionRequest:
    prompt: str
    max_tokens: int
    context: str = ""
    top_snippet_text: str = ""
    # Source line following the top snippet in its original file; the
    # natural "what comes next" for offline stubs.
    top_snippet_next_line: str = ""


class HttpCompleter:
    """POST /complete {"prompt", "max_tokens"} -> {"completion"}."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def complete(self, request: CompletionRequest) -> str:
        try:
            response = requests.post(
                f"{self.endpoint}/complete",
                json={"prompt": request.prompt, "max_tokens": request.max_tokens},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"completer unreachable: {exc}") from exc
        if response.status_code >= 400:
            raise TransportError(f"completer returned {response.status_code}")
        try:
            return str(response.json()["completion"])
        except (ValueError, KeyError) as exc:
            raise TransportError("completer returned a malformed body") from exc


class EchoStubCompleter:
    """Offline stub: answer with the top snippet's next line.

    Preferred source is the line that follows the snippet in its
    original file; otherwise the snippet line after the one matching the
    context's final line, else the snippet's first line. Deterministic,
    which makes end-to-end fixtures reproducible without any model."""

    def complete(self, request: CompletionRequest) -> str:
        if request.top_snippet_next_line.strip():
            return request.top_snippet_next_line
        snippet_lines = [l for l in request.top_snippet_text.split("\n") if l.strip()]
        if not snippet_lines:
            return ""
        context_lines = [l for l in request.context.split("\n") if l.strip()]
        if context_lines:
            tail = normalize_text(context_lines[-1])
            for i, line in enumerate(snippet_lines[:-1]):
                if normalize_text(line) == tail:
                    return snippet_lines[i + 1]
        return snippet_lines[0]


def make_completer(spec: str):
    """'echo' or an http(s) endpoint."""
    if spec == "echo":
        return EchoStubCompleter()
    if spec.startswith(("http://", "https://")):
        return HttpCompleter(spec)
    raise ValueError(f"unknown completer: {spec!r} (expected 'echo' or an http endpoint)")


# ---------------------------------------------------------------------------
# Harness


def run_eval(
    samples: Sequence[EvalSample],
    build_request: Callable[[EvalSample], tuple],
    completer,
    out_path: str | Path | None = None,
    max_tokens: int = 64,
) -> MetricReport:
    """Score every sample with all four metrics and report the means.

    ``build_request`` maps a sample to (CompletionRequest, candidates);
    the engine provides it. Completer transport failures exclude a
    sample from the means and bump failure_count. Zero input samples is
    an error, not an empty report.
    """
    if not samples:
        raise SaracoderError("no samples to evaluate")
    rows: list[dict] = []
    sums = {"em": 0.0, "es": 0.0, "id_em": 0.0, "id_f1": 0.0}
    scored = 0
    failures = 0
    for sample in samples:
        request, candidates = build_request(sample)
        request.max_tokens = max_tokens
        try:
            completion = completer.complete(request)
        except TransportError as exc:
            failures += 1
            rows.append({"id": sample.id, "error": str(exc)})
            continue
        em = exact_match(completion, sample.groundtruth)
        es = edit_similarity(completion, sample.groundtruth)
        id_em, id_f1 = identifier_metrics(completion, sample.groundtruth, sample.language)
        sums["em"] += em
        sums["es"] += es
        sums["id_em"] += id_em
        sums["id_f1"] += id_f1
        scored += 1
        rows.append(
            {
                "id": sample.id,
                "completion": completion,
                "em": em,
                "es": es,
                "id_em": id_em,
                "id_f1": id_f1,
                "prompt_fingerprint": hashlib.md5(request.prompt.encode("utf-8")).hexdigest(),
                "candidates": [
                    {
                        "snippet_id": cand.snippet_id,
                        "lexical_score": cand.lexical_score,
                        "embed_sim": cand.embed_sim,
                        "struct_sim": cand.struct_sim,
                        "composite": cand.composite,
                        "rank_trace": list(cand.rank_trace),
                    }
                    for cand in candidates
                ],
            }
        )
    if scored == 0:
        raise SaracoderError(f"all {failures} samples failed at the completer")
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return MetricReport(
        em=sums["em"] / scored,
        es=sums["es"] / scored,
        id_em=sums["id_em"] / scored,
        id_f1=sums["id_f1"] / scored,
        sample_count=scored,
        failure_count=failures,
    )
