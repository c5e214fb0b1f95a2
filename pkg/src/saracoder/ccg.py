"""Statement-level code context graphs and program slices.

A source file parses into one graph whose nodes are its statements (in
source order) and whose edges carry control flow, data dependence, and
control dependence. Retrieval works on induced slices anchored at a
statement, bounded by a hop count ``h`` and a statement window ``w``.
"""

from __future__ import annotations

import ast
from collections import Counter, deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

from .errors import InvalidAnchorError, SourceParseError
from .textnorm import fingerprint, subtokens

CONTROL_FLOW = "control_flow"
DATA_DEP = "data_dep"
CONTROL_DEP = "control_dep"
EDGE_KINDS = (CONTROL_FLOW, DATA_DEP, CONTROL_DEP)

NODE_KINDS = (
    "assignment",
    "call",
    "branch",
    "loop",
    "return",
    "definition",
    "import",
    "other",
)

DEFAULT_HOPS = 3
DEFAULT_WINDOW = 20

# Statement fields that hold nested statement blocks rather than header
# expressions; everything else on a node belongs to its header.
_BLOCK_FIELDS = frozenset({"body", "orelse", "finalbody", "handlers", "cases"})


@dataclass(frozen=True)
class Span:
    """1-based inclusive line span of a statement within a file."""

    file: str
    start_line: int
    end_line: int


@dataclass(frozen=True)
class CCGNode:
    id: int
    kind: str
    text: str
    norm_hash: str
    span: Span


@dataclass(frozen=True)
class CCGEdge:
    src: int
    dst: int
    kind: str


@dataclass
class CodeContextGraph:
    path: str
    language: str
    nodes: list[CCGNode]
    edges: list[CCGEdge]
    lines: tuple[str, ...] = ()

    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]


@dataclass
class GraphSlice:
    """Induced subgraph anchored at one statement, re-indexed from 0.

    ``core`` is the node with the largest id; an empty slice (no nodes)
    uses -1 for both ``anchor`` and ``core``.
    """

    anchor: int
    nodes: list[CCGNode]
    edges: list[CCGEdge]
    core: int


@dataclass
class SnippetRecord:
    """One retrieval unit: a slice plus its reconstructed source text."""

    id: str
    file: str
    text: str
    token_bag: Counter
    slice: GraphSlice


def empty_slice() -> GraphSlice:
    return GraphSlice(anchor=-1, nodes=[], edges=[], core=-1)


def normalize_newlines(source: str) -> str:
    return source.replace("\r\n", "\n").replace("\r", "\n")


# ---------------------------------------------------------------------------
# Python frontend


def _iter_exprs(value) -> Iterator[ast.AST]:
    if isinstance(value, ast.AST):
        yield value
    elif isinstance(value, list):
        for item in value:
            if isinstance(item, ast.AST):
                yield item


def _own_exprs(stmt: ast.stmt) -> Iterator[ast.AST]:
    """Header expressions of a statement, excluding nested blocks."""
    for name, value in ast.iter_fields(stmt):
        if name in _BLOCK_FIELDS:
            continue
        yield from _iter_exprs(value)
    if isinstance(stmt, ast.Try):
        for handler in stmt.handlers:
            if handler.type is not None:
                yield handler.type


def _target_names(node) -> list[str]:
    """Plain names bound by an assignment-like target."""
    names: list[str] = []
    if isinstance(node, ast.Name):
        names.append(node.id)
    elif isinstance(node, (ast.Tuple, ast.List)):
        for elt in node.elts:
            names.extend(_target_names(elt))
    elif isinstance(node, ast.Starred):
        names.extend(_target_names(node.value))
    return names


def _param_names(stmt: ast.FunctionDef | ast.AsyncFunctionDef) -> list[str]:
    args = stmt.args
    names = [a.arg for a in getattr(args, "posonlyargs", [])]
    names += [a.arg for a in args.args]
    if args.vararg:
        names.append(args.vararg.arg)
    names += [a.arg for a in args.kwonlyargs]
    if args.kwarg:
        names.append(args.kwarg.arg)
    return names


def _pattern_names(pattern) -> list[str]:
    names: list[str] = []
    for node in ast.walk(pattern):
        if isinstance(node, ast.MatchAs) and node.name:
            names.append(node.name)
        elif isinstance(node, ast.MatchStar) and node.name:
            names.append(node.name)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            names.append(node.rest)
    return names


def _statement_kind(stmt: ast.stmt) -> str:
    if isinstance(stmt, (ast.Assign, ast.AugAssign, ast.AnnAssign)):
        return "assignment"
    if isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Call):
        return "call"
    if isinstance(stmt, (ast.If, ast.Match)):
        return "branch"
    if isinstance(stmt, (ast.For, ast.AsyncFor, ast.While)):
        return "loop"
    if isinstance(stmt, ast.Return):
        return "return"
    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        return "definition"
    if isinstance(stmt, (ast.Import, ast.ImportFrom)):
        return "import"
    return "other"


def _child_blocks(stmt: ast.stmt) -> list[list[ast.stmt]]:
    """Nested statement blocks of a compound statement, in source order."""
    blocks: list[list[ast.stmt]] = []
    if isinstance(stmt, (ast.If, ast.For, ast.AsyncFor, ast.While)):
        blocks.append(stmt.body)
        if stmt.orelse:
            blocks.append(stmt.orelse)
    elif isinstance(stmt, (ast.With, ast.AsyncWith)):
        blocks.append(stmt.body)
    elif isinstance(stmt, ast.Try):
        blocks.append(stmt.body)
        for handler in stmt.handlers:
            blocks.append(handler.body)
        if stmt.orelse:
            blocks.append(stmt.orelse)
        if stmt.finalbody:
            blocks.append(stmt.finalbody)
    elif isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        blocks.append(stmt.body)
    elif isinstance(stmt, ast.Match):
        for case in stmt.cases:
            blocks.append(case.body)
    return blocks


def _copy_env(env: dict[str, set[int]]) -> dict[str, set[int]]:
    return {name: set(defs) for name, defs in env.items()}


def _union_env(a: dict[str, set[int]], b: dict[str, set[int]]) -> dict[str, set[int]]:
    out = {name: set(defs) for name, defs in a.items()}
    for name, defs in b.items():
        out.setdefault(name, set()).update(defs)
    return out


class _PythonGraphBuilder:
    def __init__(self, source: str, path: str):
        self.source = source
        self.path = path
        self.lines = source.split("\n")
        self.id_of: dict[ast.stmt, int] = {}
        self.stmts: list[ast.stmt] = []
        self.blocks: list[list[ast.stmt]] = []
        self.edges: set[tuple[int, int, str]] = set()

    def build(self) -> CodeContextGraph:
        try:
            tree = ast.parse(self.source)
        except SyntaxError as exc:
            raise SourceParseError(self.path, exc.lineno or 1, exc.msg or "syntax error") from exc
        except (ValueError, RecursionError) as exc:
            raise SourceParseError(self.path, 1, str(exc)) from exc

        self._collect_block(tree.body)
        nodes = [self._make_node(stmt) for stmt in self.stmts]
        self._control_flow_edges()
        self._control_dep_edges()
        self._data_dep_edges(tree.body)
        edges = [CCGEdge(src, dst, kind) for src, dst, kind in sorted(self.edges)]
        return CodeContextGraph(
            path=self.path,
            language="python",
            nodes=nodes,
            edges=edges,
            lines=tuple(self.lines),
        )

    # -- structure --------------------------------------------------------

    def _collect_block(self, stmts: Sequence[ast.stmt]) -> None:
        stmts = list(stmts)
        self.blocks.append(stmts)
        for stmt in stmts:
            self.id_of[stmt] = len(self.stmts)
            self.stmts.append(stmt)
            for block in _child_blocks(stmt):
                self._collect_block(block)

    def _header_span(self, stmt: ast.stmt) -> tuple[int, int]:
        start = stmt.lineno
        decorators = getattr(stmt, "decorator_list", None)
        if decorators:
            start = min([d.lineno for d in decorators] + [start])
        blocks = _child_blocks(stmt)
        if not blocks:
            return start, stmt.end_lineno or start
        first_inner = min(block[0].lineno for block in blocks if block)
        end = first_inner - 1 if first_inner > stmt.lineno else stmt.lineno
        return start, max(start, end)

    def _make_node(self, stmt: ast.stmt) -> CCGNode:
        start, end = self._header_span(stmt)
        start = max(1, min(start, len(self.lines)))
        end = max(start, min(end, len(self.lines)))
        text = "\n".join(self.lines[start - 1 : end])
        return CCGNode(
            id=self.id_of[stmt],
            kind=_statement_kind(stmt),
            text=text,
            norm_hash=fingerprint(text),
            span=Span(self.path, start, end),
        )

    # -- edges -------------------------------------------------------------

    def _add_edge(self, src: int, dst: int, kind: str) -> None:
        if src != dst:
            self.edges.add((src, dst, kind))

    def _control_flow_edges(self) -> None:
        for block in self.blocks:
            for prev, nxt in zip(block, block[1:]):
                self._add_edge(self.id_of[prev], self.id_of[nxt], CONTROL_FLOW)

    def _control_dep_edges(self) -> None:
        for stmt in self.stmts:
            if not isinstance(stmt, (ast.If, ast.For, ast.AsyncFor, ast.While, ast.Match)):
                continue
            head = self.id_of[stmt]
            for block in _child_blocks(stmt):
                for governed in block:
                    self._add_edge(head, self.id_of[governed], CONTROL_DEP)

    # -- data dependence ----------------------------------------------------

    def _data_dep_edges(self, module_body: Sequence[ast.stmt]) -> None:
        self._process_block(module_body, {})

    def _stmt_uses(self, stmt: ast.stmt) -> set[str]:
        used: set[str] = set()
        for expr in _own_exprs(stmt):
            for node in ast.walk(expr):
                if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Load, ast.Del)):
                    used.add(node.id)
        if isinstance(stmt, ast.AugAssign) and isinstance(stmt.target, ast.Name):
            used.add(stmt.target.id)
        return used

    def _walrus_defs(self, stmt: ast.stmt) -> set[str]:
        bound: set[str] = set()
        for expr in _own_exprs(stmt):
            for node in ast.walk(expr):
                if isinstance(node, ast.NamedExpr) and isinstance(node.target, ast.Name):
                    bound.add(node.target.id)
        return bound

    def _simple_defs(self, stmt: ast.stmt) -> list[str]:
        names: list[str] = []
        if isinstance(stmt, ast.Assign):
            for target in stmt.targets:
                names.extend(_target_names(target))
        elif isinstance(stmt, ast.AnnAssign):
            names.extend(_target_names(stmt.target))
        elif isinstance(stmt, ast.AugAssign):
            names.extend(_target_names(stmt.target))
        elif isinstance(stmt, ast.Import):
            for alias in stmt.names:
                names.append(alias.asname or alias.name.split(".")[0])
        elif isinstance(stmt, ast.ImportFrom):
            for alias in stmt.names:
                if alias.name != "*":
                    names.append(alias.asname or alias.name)
        return names

    def _apply_uses(self, stmt: ast.stmt, nid: int, env: dict[str, set[int]]) -> None:
        for name in self._stmt_uses(stmt):
            for def_id in env.get(name, ()):
                self._add_edge(def_id, nid, DATA_DEP)

    def _bind(self, env: dict[str, set[int]], names: Iterable[str], nid: int) -> None:
        for name in names:
            env[name] = {nid}

    def _process_block(
        self, stmts: Sequence[ast.stmt], env: dict[str, set[int]]
    ) -> dict[str, set[int]]:
        for stmt in stmts:
            nid = self.id_of[stmt]
            self._apply_uses(stmt, nid, env)
            self._bind(env, self._walrus_defs(stmt), nid)

            if isinstance(stmt, ast.If):
                env_body = self._process_block(stmt.body, _copy_env(env))
                env_else = self._process_block(stmt.orelse, _copy_env(env))
                env = _union_env(env_body, env_else)
            elif isinstance(stmt, (ast.For, ast.AsyncFor)):
                head = _copy_env(env)
                self._bind(head, _target_names(stmt.target), nid)
                env_body = self._process_block(stmt.body, _copy_env(head))
                env = _union_env(env, env_body)
                if stmt.orelse:
                    env = _union_env(env, self._process_block(stmt.orelse, _copy_env(env)))
            elif isinstance(stmt, ast.While):
                env_body = self._process_block(stmt.body, _copy_env(env))
                env = _union_env(env, env_body)
                if stmt.orelse:
                    env = _union_env(env, self._process_block(stmt.orelse, _copy_env(env)))
            elif isinstance(stmt, (ast.With, ast.AsyncWith)):
                for item in stmt.items:
                    if item.optional_vars is not None:
                        self._bind(env, _target_names(item.optional_vars), nid)
                env = self._process_block(stmt.body, env)
            elif isinstance(stmt, ast.Try):
                env_body = self._process_block(stmt.body, _copy_env(env))
                after = env_body
                base = _union_env(env, env_body)
                for handler in stmt.handlers:
                    henv = _copy_env(base)
                    if handler.name:
                        self._bind(henv, [handler.name], nid)
                    after = _union_env(after, self._process_block(handler.body, henv))
                if stmt.orelse:
                    after = _union_env(after, self._process_block(stmt.orelse, _copy_env(env_body)))
                if stmt.finalbody:
                    after = self._process_block(stmt.finalbody, _union_env(env, after))
                env = _union_env(env, after)
            elif isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                self._bind(env, [stmt.name], nid)
                inner = {name: {nid} for name in _param_names(stmt)}
                self._process_block(stmt.body, inner)
            elif isinstance(stmt, ast.ClassDef):
                self._bind(env, [stmt.name], nid)
                # Class bodies read the enclosing scope but their bindings
                # become attributes, not plain names.
                self._process_block(stmt.body, _copy_env(env))
            elif isinstance(stmt, ast.Match):
                arms = []
                for case in stmt.cases:
                    cenv = _copy_env(env)
                    self._bind(cenv, _pattern_names(case.pattern), nid)
                    arms.append(self._process_block(case.body, cenv))
                for arm in arms:
                    env = _union_env(env, arm)
            elif isinstance(stmt, ast.Delete):
                for target in stmt.targets:
                    for name in _target_names(target):
                        env.pop(name, None)
            else:
                self._bind(env, self._simple_defs(stmt), nid)
        return env


class PythonFrontend:
    """Builds statement graphs for Python sources via the ``ast`` module."""

    language = "python"

    def build(self, source: str, path: str) -> CodeContextGraph:
        return _PythonGraphBuilder(normalize_newlines(source), path).build()


_FRONTENDS = {"python": PythonFrontend()}


def frontend_for(language: str):
    try:
        return _FRONTENDS[language]
    except KeyError:
        raise ValueError(f"unsupported language: {language!r}") from None


def build_ccg(source: str, language: str = "python", path: str = "<memory>") -> CodeContextGraph:
    """Parse one source file into its code context graph.

    Raises SourceParseError (with file path and first bad line) when the
    file does not parse.
    """
    return frontend_for(language).build(source, path)


def parse_lenient(source: str, language: str = "python", path: str = "<context>",
                  max_retries: int = 50) -> CodeContextGraph:
    """Parse possibly-unfinished code, trimming trailing lines until it parses.

    Falls back to an empty graph when no prefix parses within the retry
    budget. Used for query contexts, never for indexing.
    """
    lines = normalize_newlines(source).split("\n")
    for _ in range(max_retries):
        try:
            return build_ccg("\n".join(lines), language, path)
        except SourceParseError:
            while lines and not lines[-1].strip():
                lines.pop()
            if not lines:
                break
            lines.pop()
    return CodeContextGraph(path=path, language=language, nodes=[], edges=[], lines=())


# ---------------------------------------------------------------------------
# Slicing


def slice_at(graph, anchor: int, h: int = DEFAULT_HOPS, w: int = DEFAULT_WINDOW) -> GraphSlice:
    """Induced subgraph of the nodes backward-reachable from ``anchor``.

    Traversal runs against edge direction (any edge kind) for at most
    ``h`` hops and is confined to the ``w`` statements nearest the
    anchor by id (ties prefer the earlier statement); confining the
    walk itself keeps re-slicing a slice at the same (h, w) a no-op.
    Node ids are re-indexed to 0..n-1 preserving source order.
    """
    if h < 1:
        raise ValueError(f"hop bound must be >= 1, got {h}")
    if w < 1:
        raise ValueError(f"statement window must be >= 1, got {w}")
    ids = [n.id for n in graph.nodes]
    if anchor not in set(ids):
        raise InvalidAnchorError(f"anchor {anchor} is not a node of the graph")

    window = set(sorted(ids, key=lambda i: (abs(i - anchor), i))[:w])

    preds: dict[int, list[int]] = {}
    for edge in graph.edges:
        preds.setdefault(edge.dst, []).append(edge.src)

    dist = {anchor: 0}
    queue = deque([anchor])
    while queue:
        cur = queue.popleft()
        if dist[cur] >= h:
            continue
        for prev in preds.get(cur, ()):
            if prev in window and prev not in dist:
                dist[prev] = dist[cur] + 1
                queue.append(prev)

    kept = sorted(dist)
    remap = {old: new for new, old in enumerate(kept)}
    by_id = {n.id: n for n in graph.nodes}
    nodes = [replace(by_id[old], id=remap[old]) for old in kept]
    kept_set = set(kept)
    edges = sorted(
        (
            CCGEdge(remap[e.src], remap[e.dst], e.kind)
            for e in graph.edges
            if e.src in kept_set and e.dst in kept_set
        ),
        key=lambda e: (e.src, e.dst, e.kind),
    )
    return GraphSlice(anchor=remap[anchor], nodes=nodes, edges=edges, core=len(kept) - 1)


def slice_text(slice_: GraphSlice, lines: Sequence[str]) -> str:
    """Source text of a slice: the union of its spans' lines, in line order."""
    line_nos = sorted(
        {
            ln
            for node in slice_.nodes
            for ln in range(node.span.start_line, node.span.end_line + 1)
            if 1 <= ln <= len(lines)
        }
    )
    return "\n".join(lines[ln - 1] for ln in line_nos)


def enumerate_slices(
    graph: CodeContextGraph, h: int = DEFAULT_HOPS, w: int = DEFAULT_WINDOW
) -> list[SnippetRecord]:
    """One snippet record per statement acting as anchor, in anchor-id order."""
    records: list[SnippetRecord] = []
    seen_keys: dict[str, int] = {}
    for node in graph.nodes:
        sl = slice_at(graph, node.id, h, w)
        text = slice_text(sl, graph.lines)
        key = f"{graph.path}:{node.span.start_line}"
        bump = seen_keys.get(key)
        seen_keys[key] = (bump or 0) + 1
        if bump:
            key = f"{key}#{bump}"
        records.append(
            SnippetRecord(
                id=key,
                file=graph.path,
                text=text,
                token_bag=Counter(subtokens(text)),
                slice=sl,
            )
        )
    return records
