"""On-disk snippet index: manifest, record file, and graph file.

Layout of an index directory:

    manifest.json   human-readable summary (keys documented in README)
    records.bin     length-prefixed JSON snippet records, in scan order
    graphs.bin      length-prefixed JSON per-file statement graphs

Builds are single-writer and replace the target directory atomically
via a temp-dir rename; loaded handles are read-only.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import struct
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

from .ccg import (
    CCGEdge,
    CCGNode,
    CodeContextGraph,
    DEFAULT_HOPS,
    DEFAULT_WINDOW,
    GraphSlice,
    SnippetRecord,
    Span,
    build_ccg,
    enumerate_slices,
)
from .errors import IncompatibleIndexError, IndexLoadError, SourceParseError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.bin"
GRAPHS_NAME = "graphs.bin"

_SKIP_DIRS = {"__pycache__", "node_modules"}

_EXTENSIONS = {"python": ".py"}


@dataclass
class IndexManifest:
    repo_root: str
    language: str
    h: int
    w: int
    file_count: int
    snippet_count: int
    skipped_files: list[tuple[str, str]]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skipped_files"] = [list(item) for item in self.skipped_files]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IndexManifest":
        return cls(
            repo_root=d["repo_root"],
            language=d["language"],
            h=d["h"],
            w=d["w"],
            file_count=d["file_count"],
            snippet_count=d["snippet_count"],
            skipped_files=[(p, r) for p, r in d.get("skipped_files", [])],
            format_version=d["format_version"],
        )


# ---------------------------------------------------------------------------
# Serialization (deterministic: sorted keys, compact separators)


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def node_to_dict(node: CCGNode) -> dict:
    return {
        "id": node.id,
        "kind": node.kind,
        "text": node.text,
        "norm_hash": node.norm_hash,
        "span": [node.span.file, node.span.start_line, node.span.end_line],
    }


def node_from_dict(d: dict) -> CCGNode:
    f, s, e = d["span"]
    return CCGNode(id=d["id"], kind=d["kind"], text=d["text"], norm_hash=d["norm_hash"],
                   span=Span(f, s, e))


def slice_to_dict(sl: GraphSlice) -> dict:
    return {
        "anchor": sl.anchor,
        "core": sl.core,
        "nodes": [node_to_dict(n) for n in sl.nodes],
        "edges": [[e.src, e.dst, e.kind] for e in sl.edges],
    }


def slice_from_dict(d: dict) -> GraphSlice:
    return GraphSlice(
        anchor=d["anchor"],
        core=d["core"],
        nodes=[node_from_dict(n) for n in d["nodes"]],
        edges=[CCGEdge(s, t, k) for s, t, k in d["edges"]],
    )


def record_to_dict(rec: SnippetRecord) -> dict:
    return {
        "id": rec.id,
        "file": rec.file,
        "text": rec.text,
        "token_bag": sorted([tok, n] for tok, n in rec.token_bag.items()),
        "slice": slice_to_dict(rec.slice),
    }


def record_from_dict(d: dict) -> SnippetRecord:
    return SnippetRecord(
        id=d["id"],
        file=d["file"],
        text=d["text"],
        token_bag=Counter({tok: n for tok, n in d["token_bag"]}),
        slice=slice_from_dict(d["slice"]),
    )


def graph_to_dict(graph: CodeContextGraph) -> dict:
    return {
        "path": graph.path,
        "language": graph.language,
        "lines": list(graph.lines),
        "nodes": [node_to_dict(n) for n in graph.nodes],
        "edges": [[e.src, e.dst, e.kind] for e in graph.edges],
    }


def graph_from_dict(d: dict) -> CodeContextGraph:
    return CodeContextGraph(
        path=d["path"],
        language=d["language"],
        nodes=[node_from_dict(n) for n in d["nodes"]],
        edges=[CCGEdge(s, t, k) for s, t, k in d["edges"]],
        lines=tuple(d["lines"]),
    )


def _write_frames(path: Path, payloads: Iterator[bytes]) -> None:
    with open(path, "wb") as fh:
        for payload in payloads:
            fh.write(struct.pack(">I", len(payload)))
            fh.write(payload)


def _read_frames(path: Path) -> Iterator[bytes]:
    with open(path, "rb") as fh:
        while True:
            header = fh.read(4)
            if not header:
                return
            if len(header) != 4:
                raise IndexLoadError(f"{path}: truncated frame header")
            (length,) = struct.unpack(">I", header)
            payload = fh.read(length)
            if len(payload) != length:
                raise IndexLoadError(f"{path}: truncated frame payload")
            yield payload


# ---------------------------------------------------------------------------
# Building


def discover_source_files(root: Path, language: str = "python") -> list[Path]:
    """Source files of the language under root, hidden dirs skipped, sorted."""
    ext = _EXTENSIONS.get(language)
    if ext is None:
        raise ValueError(f"unsupported language: {language!r}")
    found = []
    for path in root.rglob(f"*{ext}"):
        if not path.is_file():
            continue
        rel_parts = path.relative_to(root).parts
        if any(part.startswith(".") or part in _SKIP_DIRS for part in rel_parts[:-1]):
            continue
        found.append(path)
    return sorted(found, key=lambda p: p.relative_to(root).as_posix())


def index_repository(
    root: str | Path,
    out_dir: str | Path,
    language: str = "python",
    h: int = DEFAULT_HOPS,
    w: int = DEFAULT_WINDOW,
) -> IndexManifest:
    """Index every source file under root into a self-contained directory.

    Per-file parse failures are recorded in the manifest and never abort
    the build. Re-running on unchanged input writes byte-identical
    record and graph files.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"repository root not found: {root}")
    out_dir = Path(out_dir)

    files = discover_source_files(root, language)
    skipped: list[tuple[str, str]] = []
    graphs: list[CodeContextGraph] = []
    records: list[SnippetRecord] = []
    for path in files:
        rel = path.relative_to(root).as_posix()
        try:
            source = path.read_bytes().decode("utf-8")
        except UnicodeDecodeError as exc:
            skipped.append((rel, f"not valid UTF-8: {exc.reason}"))
            continue
        try:
            graph = build_ccg(source, language, rel)
        except SourceParseError as exc:
            skipped.append((rel, f"parse error at line {exc.line}: {exc.message}"))
            continue
        graphs.append(graph)
        records.extend(enumerate_slices(graph, h, w))

    manifest = IndexManifest(
        repo_root=str(root.resolve()),
        language=language,
        h=h,
        w=w,
        file_count=len(graphs),
        snippet_count=len(records),
        skipped_files=skipped,
    )

    tmp_dir = out_dir.parent / (out_dir.name + ".building")
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir(parents=True)
    try:
        (tmp_dir / MANIFEST_NAME).write_text(
            json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        _write_frames(tmp_dir / RECORDS_NAME, (_dumps(record_to_dict(r)) for r in records))
        _write_frames(tmp_dir / GRAPHS_NAME, (_dumps(graph_to_dict(g)) for g in graphs))
        if out_dir.exists():
            stale = out_dir.parent / (out_dir.name + ".replaced")
            if stale.exists():
                shutil.rmtree(stale)
            os.rename(out_dir, stale)
            os.rename(tmp_dir, out_dir)
            shutil.rmtree(stale)
        else:
            out_dir.parent.mkdir(parents=True, exist_ok=True)
            os.rename(tmp_dir, out_dir)
    finally:
        if tmp_dir.exists():
            shutil.rmtree(tmp_dir)
    return manifest


# ---------------------------------------------------------------------------
# Loading


class SnippetStore:
    """Read-only handle over a loaded index; safe to share across threads."""

    def __init__(self, manifest: IndexManifest, records: list[SnippetRecord], index_dir: Path):
        self.manifest = manifest
        self._records = records
        self._by_id = {rec.id: rec for rec in records}
        self._index_dir = index_dir

    def get(self, snippet_id: str) -> SnippetRecord | None:
        """Lookup by id; returns None for unknown ids (not an error)."""
        return self._by_id.get(snippet_id)

    def __iter__(self) -> Iterator[SnippetRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def iter_graphs(self) -> Iterator[CodeContextGraph]:
        for payload in _read_frames(self._index_dir / GRAPHS_NAME):
            yield graph_from_dict(json.loads(payload.decode("utf-8")))


def load_index(path: str | Path) -> SnippetStore:
    """Load an index directory; fails loudly on version or format problems."""
    index_dir = Path(path)
    manifest_path = index_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise IndexLoadError(f"no manifest at {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest = IndexManifest.from_dict(data)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise IndexLoadError(f"corrupt manifest at {manifest_path}: {exc}") from exc
    if manifest.format_version != FORMAT_VERSION:
        raise IncompatibleIndexError(
            f"index format {manifest.format_version} does not match reader {FORMAT_VERSION}"
        )
    records = []
    try:
        for payload in _read_frames(index_dir / RECORDS_NAME):
            records.append(record_from_dict(json.loads(payload.decode("utf-8"))))
    except FileNotFoundError as exc:
        raise IndexLoadError(f"missing record file in {index_dir}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IndexLoadError(f"corrupt record file in {index_dir}: {exc}") from exc
    if len(records) != manifest.snippet_count:
        raise IndexLoadError(
            f"record count {len(records)} does not match manifest {manifest.snippet_count}"
        )
    return SnippetStore(manifest, records, index_dir)
