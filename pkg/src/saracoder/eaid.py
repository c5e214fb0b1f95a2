"""Import-aware identifier disambiguation.

Builds a per-file symbol table of function and class entities for a
repository, resolves the unfinished file's imports against it (dotted
and relative module paths), and renders the resolved entities plus an
external-library alias table into a prompt section.
"""

from __future__ import annotations

import ast
import logging
import textwrap
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .ccg import normalize_newlines, parse_lenient
from .store import discover_source_files

log = logging.getLogger(__name__)

STAR_IMPORT_CAP = 20
MODULE_SCOPE = "module"


@dataclass
class MethodEntity:
    identifier: str
    alias: str | None
    line_range: tuple[int, int]
    param_signature: list[tuple[str, bool]]  # (name, has_default)
    scope: str  # MODULE_SCOPE or enclosing class/function name
    body_text: str


@dataclass
class ClassEntity:
    identifier: str
    alias: str | None
    line_range: tuple[int, int]
    member_methods: list[MethodEntity]
    member_variables: list[str]
    body_text: str


Entity = Union[MethodEntity, ClassEntity]


@dataclass
class _FileSymbols:
    by_name: dict[str, Entity] = field(default_factory=dict)
    in_order: list[Entity] = field(default_factory=list)

    def module_level(self) -> list[Entity]:
        return [e for e in self.in_order if e.scope == MODULE_SCOPE]


@dataclass
class SymbolTable:
    """identifier -> entity, per repository file (paths are repo-relative)."""

    files: dict[str, _FileSymbols] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def lookup(self, file: str, identifier: str) -> Entity | None:
        symbols = self.files.get(file)
        if symbols is None:
            return None
        return symbols.by_name.get(identifier)

    def has_file(self, file: str) -> bool:
        return file in self.files


@dataclass
class ExternalRefTable:
    """canonical library name -> alias (alias = canonical when unaliased)."""

    entries: dict[str, str] = field(default_factory=dict)

    def add(self, canonical: str, alias: str) -> None:
        # First import of a library wins; no duplicate canonical names.
        self.entries.setdefault(canonical, alias)

    def items(self):
        return self.entries.items()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, canonical: str) -> bool:
        return canonical in self.entries


@dataclass
class ResolvedEntity:
    entity: Entity
    alias: str | None
    source_file: str
    import_index: int


@dataclass
class EaidResolution:
    e_lib: list[ResolvedEntity]
    t_ext: ExternalRefTable
    warnings: list[str]


# ---------------------------------------------------------------------------
# Symbol table construction


def _param_signature(node: ast.FunctionDef | ast.AsyncFunctionDef) -> list[tuple[str, bool]]:
    args = node.args
    params: list[tuple[str, bool]] = []
    positional = list(getattr(args, "posonlyargs", [])) + list(args.args)
    first_default = len(positional) - len(args.defaults)
    for i, arg in enumerate(positional):
        params.append((arg.arg, i >= first_default))
    if args.vararg:
        params.append((f"*{args.vararg.arg}", False))
    for arg, default in zip(args.kwonlyargs, args.kw_defaults):
        params.append((arg.arg, default is not None))
    if args.kwarg:
        params.append((f"**{args.kwarg.arg}", False))
    return params


def _segment(lines: Sequence[str], start: int, end: int) -> str:
    return "\n".join(lines[start - 1 : end])


def _def_lines(node) -> tuple[int, int]:
    start = node.lineno
    if getattr(node, "decorator_list", None):
        start = min([d.lineno for d in node.decorator_list] + [start])
    return start, node.end_lineno or start


def _method_entity(node, lines: Sequence[str], scope: str) -> MethodEntity:
    start, end = _def_lines(node)
    return MethodEntity(
        identifier=node.name,
        alias=None,
        line_range=(start, end),
        param_signature=_param_signature(node),
        scope=scope,
        body_text=_segment(lines, start, end),
    )


def _class_entity(node: ast.ClassDef, lines: Sequence[str]) -> ClassEntity:
    start, end = _def_lines(node)
    methods = []
    variables: list[str] = []
    for stmt in node.body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            methods.append(_method_entity(stmt, lines, scope=node.name))
        elif isinstance(stmt, ast.Assign):
            for target in stmt.targets:
                if isinstance(target, ast.Name):
                    variables.append(target.id)
        elif isinstance(stmt, ast.AnnAssign) and isinstance(stmt.target, ast.Name):
            variables.append(stmt.target.id)
    deduped = list(dict.fromkeys(variables))
    return ClassEntity(
        identifier=node.name,
        alias=None,
        line_range=(start, end),
        member_methods=methods,
        member_variables=deduped,
        body_text=_segment(lines, start, end),
    )


def _collect_entities(body: Iterable[ast.stmt], lines: Sequence[str], scope: str) -> list[Entity]:
    entities: list[Entity] = []
    for stmt in body:
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            entities.append(_method_entity(stmt, lines, scope))
            # Nested defs attach to their enclosing scope name.
            entities.extend(_collect_entities(stmt.body, lines, scope=stmt.name))
        elif isinstance(stmt, ast.ClassDef):
            entity = _class_entity(stmt, lines)
            entities.append(entity)
            entities.extend(entity.member_methods)
    return entities


def build_symbol_table(repo_root: str | Path, language: str = "python") -> SymbolTable:
    """Parse every repository file into its entity symbols.

    Files that fail to parse are registered with no symbols and a
    warning (they still count as internal modules for import
    resolution). Identifier collisions within one file resolve to the
    latest definition by line number, with a warning.
    """
    root = Path(repo_root)
    table = SymbolTable()
    for path in discover_source_files(root, language):
        rel = path.relative_to(root).as_posix()
        symbols = _FileSymbols()
        table.files[rel] = symbols
        try:
            source = normalize_newlines(path.read_bytes().decode("utf-8"))
            tree = ast.parse(source)
        except (UnicodeDecodeError, SyntaxError, ValueError) as exc:
            table.warnings.append(f"{rel}: skipped ({exc})")
            continue
        lines = source.split("\n")
        for entity in sorted(_collect_entities(tree.body, lines, MODULE_SCOPE),
                             key=lambda e: e.line_range[0]):
            symbols.in_order.append(entity)
            previous = symbols.by_name.get(entity.identifier)
            if previous is not None:
                table.warnings.append(
                    f"{rel}: identifier {entity.identifier!r} redefined at line "
                    f"{entity.line_range[0]}; keeping the latest definition"
                )
            symbols.by_name[entity.identifier] = entity
    return table


# ---------------------------------------------------------------------------
# Import resolution


def extract_import_statements(context: str, language: str = "python") -> list[str]:
    """Raw import statement texts of a (possibly unfinished) file, in order."""
    graph = parse_lenient(context, language)
    if graph.nodes:
        return [node.text for node in graph.nodes if node.kind == "import"]
    lines = normalize_newlines(context).split("\n")
    return [
        line for line in lines
        if line.strip().startswith(("import ", "from ")) and not line.strip().startswith("from:")
    ]


def _module_file(parts: Sequence[str], table: SymbolTable) -> str | None:
    """Repo file for a module path: pkg/mod.py, else pkg/mod/__init__.py."""
    if not parts or any(not p for p in parts):
        return None
    direct = "/".join(parts) + ".py"
    if table.has_file(direct):
        return direct
    package = "/".join(parts) + "/__init__.py"
    if table.has_file(package):
        return package
    return None


def _module_level_pull(
    table: SymbolTable, file: str, alias: str | None, index: int, cap: int = STAR_IMPORT_CAP
) -> list[ResolvedEntity]:
    symbols = table.files[file]
    pulled = symbols.module_level()[:cap]
    return [ResolvedEntity(entity=e, alias=alias, source_file=file, import_index=index)
            for e in pulled]


def resolve_imports(
    import_statements: Sequence[str],
    current_file: str,
    table: SymbolTable,
    repo_root: str | Path | None = None,
) -> EaidResolution:
    """Resolve each import either to repository entities or to an
    external-library alias entry.

    Dotted module names become paths joined with '/' plus '.py' (with an
    __init__.py fallback); relative imports climb one directory per
    leading dot starting from the current file. Results are ordered by
    import statement; resolution never consults filesystem iteration
    order.
    """
    del repo_root  # membership is decided by the symbol table's file set
    e_lib: list[ResolvedEntity] = []
    t_ext = ExternalRefTable()
    warnings: list[str] = []
    current_dir_parts = [p for p in Path(current_file).parent.as_posix().split("/") if p not in ("", ".")]

    for index, raw in enumerate(import_statements):
        try:
            tree = ast.parse(textwrap.dedent(raw))
        except SyntaxError:
            warnings.append(f"import statement did not parse: {raw.strip()!r}")
            continue
        for stmt in tree.body:
            if isinstance(stmt, ast.Import):
                for alias in stmt.names:
                    dotted = alias.name
                    file = _module_file(dotted.split("."), table)
                    if file is None:
                        t_ext.add(dotted, alias.asname or dotted)
                    else:
                        e_lib.extend(_module_level_pull(table, file, None, index))
            elif isinstance(stmt, ast.ImportFrom):
                base_parts, err = _from_base_parts(stmt, current_dir_parts)
                if err:
                    warnings.append(err)
                    continue
                module_file = _module_file(base_parts, table) if base_parts else None
                is_relative = stmt.level > 0
                dotted = stmt.module or ""
                for alias in stmt.names:
                    if alias.name == "*":
                        if module_file is not None:
                            e_lib.extend(_module_level_pull(table, module_file, None, index))
                        elif is_relative:
                            warnings.append(f"relative import target not found: {raw.strip()!r}")
                        else:
                            t_ext.add(dotted, dotted)
                        continue
                    resolved = False
                    if module_file is not None:
                        entity = table.lookup(module_file, alias.name)
                        if entity is not None:
                            e_lib.append(
                                ResolvedEntity(
                                    entity=entity,
                                    alias=alias.asname,
                                    source_file=module_file,
                                    import_index=index,
                                )
                            )
                            resolved = True
                    if not resolved:
                        submodule = _module_file(base_parts + [alias.name], table)
                        if submodule is not None:
                            e_lib.extend(
                                _module_level_pull(table, submodule, alias.asname, index)
                            )
                            resolved = True
                    if resolved:
                        continue
                    if module_file is not None:
                        warnings.append(
                            f"{alias.name!r} not found in {module_file} (import {index})"
                        )
                    elif is_relative:
                        warnings.append(f"relative import target not found: {raw.strip()!r}")
                    else:
                        t_ext.add(dotted, dotted)
    return EaidResolution(e_lib=e_lib, t_ext=t_ext, warnings=warnings)


def _from_base_parts(
    stmt: ast.ImportFrom, current_dir_parts: list[str]
) -> tuple[list[str], str | None]:
    module_parts = stmt.module.split(".") if stmt.module else []
    if stmt.level == 0:
        return module_parts, None
    climb = stmt.level - 1
    if climb > len(current_dir_parts):
        return [], f"relative import climbs above the repository root (level {stmt.level})"
    base = current_dir_parts[: len(current_dir_parts) - climb]
    return base + module_parts, None


# ---------------------------------------------------------------------------
# Rendering


@dataclass
class EntityBlock:
    full_text: str
    signature_text: str


@dataclass
class PromptEnhancement:
    """Structured prompt section: imports, resolved entities, externals.

    Kept structured so that prompt assembly can trim external lines or
    swap entity bodies for signatures without re-resolving anything.
    """

    import_lines: list[str] = field(default_factory=list)
    entity_blocks: list[EntityBlock] = field(default_factory=list)
    external_lines: list[str] = field(default_factory=list)

    def render(
        self,
        drop_external: int = 0,
        signature_only: int = 0,
        drop_blocks: int = 0,
        drop_imports: int = 0,
    ) -> str:
        parts: list[str] = []
        imports = self.import_lines[: len(self.import_lines) - drop_imports] if drop_imports else self.import_lines
        if imports:
            parts.append("\n".join(imports))
        blocks = self.entity_blocks[: len(self.entity_blocks) - drop_blocks] if drop_blocks else self.entity_blocks
        sig_from = len(blocks) - min(signature_only, len(blocks))
        for i, block in enumerate(blocks):
            parts.append(block.full_text if i < sig_from else block.signature_text)
        externals = (
            self.external_lines[: len(self.external_lines) - drop_external]
            if drop_external
            else self.external_lines
        )
        if externals:
            parts.append("\n".join(externals))
        return "\n\n".join(parts)

    def is_empty(self) -> bool:
        return not (self.import_lines or self.entity_blocks or self.external_lines)


def _render_entity(resolved: ResolvedEntity) -> EntityBlock:
    entity = resolved.entity
    if isinstance(entity, MethodEntity):
        first_line = entity.body_text.split("\n", 1)[0]
        return EntityBlock(full_text=entity.body_text, signature_text=first_line)
    header = entity.body_text.split("\n", 1)[0]
    lines = [header]
    if entity.member_variables:
        lines.append(f"    # variables: {', '.join(entity.member_variables)}")
    for method in entity.member_methods:
        lines.append(method.body_text)
    if len(lines) == 1 and not entity.member_methods:
        return EntityBlock(full_text=entity.body_text, signature_text=header)
    return EntityBlock(full_text="\n".join(lines), signature_text=header)


def build_enhancement(
    import_statements: Sequence[str], resolution: EaidResolution
) -> PromptEnhancement:
    """Assemble the structured prompt section from resolution output."""
    external_lines = [
        f"# external: {canonical} as {alias}" for canonical, alias in resolution.t_ext.items()
    ]
    return PromptEnhancement(
        import_lines=[line.rstrip() for line in import_statements],
        entity_blocks=[_render_entity(res) for res in resolution.e_lib],
        external_lines=external_lines,
    )


def render_pe(
    import_statements: Sequence[str],
    e_lib: list[ResolvedEntity],
    t_ext: ExternalRefTable,
) -> str:
    """Prompt text: raw imports, then entities in import order (functions
    with complete bodies, classes as a variable table plus method
    definitions), then one comment line per external library."""
    resolution = EaidResolution(e_lib=e_lib, t_ext=t_ext, warnings=[])
    return build_enhancement(import_statements, resolution).render()
