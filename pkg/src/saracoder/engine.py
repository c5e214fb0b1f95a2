"""End-to-end orchestration: context in, refined candidates and prompt out."""

from __future__ import annotations

from pathlib import Path

from .config import EngineConfig
from .eaid import (
    PromptEnhancement,
    build_enhancement,
    build_symbol_table,
    extract_import_statements,
    resolve_imports,
)
from .embedding import Embedder, LocalHashProvider, RemoteProvider
from .evaluation import CompletionRequest, EvalSample, MetricReport, run_eval
from .hf_op import run_pipeline
from .lexical import Candidate
from .prompt import PromptBundle, SnippetEntry, assemble
from .store import SnippetStore, load_index


def make_embedder(config: EngineConfig) -> Embedder:
    if config.provider == "remote":
        provider = RemoteProvider(config.endpoint)
    else:
        provider = LocalHashProvider()
    return Embedder(provider, cache_entries=config.cache_entries)


class Engine:
    """Binds a loaded index, a config, and an embedding provider."""

    def __init__(self, store: SnippetStore, config: EngineConfig, embedder: Embedder | None = None):
        self.store = store
        self.config = config
        self.embedder = embedder or make_embedder(config)
        self._symbols = None
        self._file_lines: dict[str, tuple[str, ...]] | None = None

    @classmethod
    def open(cls, config: EngineConfig) -> "Engine":
        return cls(load_index(config.index_dir), config)

    # -- retrieval -----------------------------------------------------------

    def retrieve(self, context: str) -> list[Candidate]:
        return run_pipeline(context, self.store, self.config.pipeline(), self.embedder)

    # -- import resolution -----------------------------------------------------

    def _symbol_table(self):
        if self._symbols is None:
            self._symbols = build_symbol_table(
                self.store.manifest.repo_root, self.store.manifest.language
            )
        return self._symbols

    def enhancement(self, context: str, current_file: str = "") -> PromptEnhancement:
        """Import section for the context; empty when disabled or importless."""
        if not self.config.enable_eaid:
            return PromptEnhancement()
        imports = extract_import_statements(context, self.store.manifest.language)
        if not imports:
            return PromptEnhancement()
        resolution = resolve_imports(imports, current_file, self._symbol_table())
        return build_enhancement(imports, resolution)

    # -- prompts ---------------------------------------------------------------

    def build_prompt(
        self, context: str, current_file: str = "", budget: int | None = None
    ) -> tuple[PromptBundle, list[Candidate]]:
        candidates = self.retrieve(context)
        entries = []
        for cand in candidates:
            record = self.store.get(cand.snippet_id)
            score = cand.composite if cand.composite is not None else cand.lexical_score
            entries.append(SnippetEntry(path=record.file, text=record.text, score=score))
        bundle = assemble(
            entries,
            self.enhancement(context, current_file),
            context,
            budget=self.config.budget if budget is None else budget,
            language=self.store.manifest.language,
        )
        return bundle, candidates

    def top_snippet_text(self, candidates: list[Candidate]) -> str:
        if not candidates:
            return ""
        record = self.store.get(candidates[0].snippet_id)
        return record.text if record else ""

    def _source_lines(self, file: str) -> tuple[str, ...]:
        if self._file_lines is None:
            self._file_lines = {g.path: g.lines for g in self.store.iter_graphs()}
        return self._file_lines.get(file, ())

    def top_snippet_next_line(self, candidates: list[Candidate]) -> str:
        """Source line that follows the top-ranked snippet in its file."""
        if not candidates:
            return ""
        record = self.store.get(candidates[0].snippet_id)
        if record is None or not record.slice.nodes:
            return ""
        last_line = max(node.span.end_line for node in record.slice.nodes)
        lines = self._source_lines(record.file)
        for line in lines[last_line:]:
            if line.strip():
                return line
        return ""

    def completion_request(
        self, context: str, current_file: str = "", max_tokens: int = 64
    ) -> tuple[CompletionRequest, PromptBundle, list[Candidate]]:
        bundle, candidates = self.build_prompt(context, current_file)
        request = CompletionRequest(
            prompt=bundle.text,
            max_tokens=max_tokens,
            context=context,
            top_snippet_text=self.top_snippet_text(candidates),
            top_snippet_next_line=self.top_snippet_next_line(candidates),
        )
        return request, bundle, candidates

    # -- completion --------------------------------------------------------------

    def complete(
        self, context: str, completer, current_file: str = "", max_tokens: int = 64
    ) -> tuple[str, PromptBundle, list[Candidate]]:
        request, bundle, candidates = self.completion_request(context, current_file, max_tokens)
        return completer.complete(request), bundle, candidates

    # -- evaluation ---------------------------------------------------------------

    def evaluate(
        self,
        samples: list[EvalSample],
        completer,
        out_path: str | Path | None = None,
        max_tokens: int = 64,
    ) -> MetricReport:
        def build(sample: EvalSample):
            request, _, candidates = self.completion_request(
                sample.context, sample.file, max_tokens
            )
            return request, candidates

        return run_eval(samples, build, completer, out_path=out_path, max_tokens=max_tokens)
