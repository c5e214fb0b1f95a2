"""Prompt assembly under an approximate token budget.

The final prompt concatenates three sections: retrieved snippets
(ascending similarity, each annotated with its source path), the
import-resolution section, and the unfinished context. When the budget
is tight, content is shed in a fixed priority order; the context itself
is never trimmed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .eaid import PromptEnhancement
from .errors import BudgetExceededError

DEFAULT_BUDGET = 2048

_COMMENT_PREFIX = {"python": "#", "java": "//"}


def approx_token_count(text: str) -> int:
    """Model-agnostic token estimate: ceil(characters / 4)."""
    return (len(text) + 3) // 4


@dataclass
class SnippetEntry:
    path: str
    text: str
    score: float


@dataclass
class PromptBundle:
    snippet_section: str
    pe_section: str
    context_section: str
    budget: int
    approx_tokens: int

    @property
    def text(self) -> str:
        sections = [s for s in (self.snippet_section, self.pe_section) if s]
        sections.append(self.context_section)
        return "\n\n".join(sections)


def _render_snippets(entries: Sequence[SnippetEntry], prefix: str) -> str:
    blocks = [f"{prefix} source: {entry.path}\n{entry.text}" for entry in entries]
    return "\n\n".join(blocks)


def assemble(
    snippets: Sequence[SnippetEntry],
    enhancement: PromptEnhancement | str | None,
    context: str,
    budget: int = DEFAULT_BUDGET,
    language: str = "python",
) -> PromptBundle:
    """Build the final prompt, shedding content until it fits the budget.

    Snippets are ordered ascending by score so the most similar one sits
    next to the import section and context. Shedding order: snippets
    from the least similar end, then external-library lines, then entity
    bodies (signatures stay), then whole entity blocks, then import
    lines. A context that alone exceeds the budget raises
    BudgetExceededError.
    """
    prefix = _COMMENT_PREFIX.get(language, "#")
    if isinstance(enhancement, str):
        block = enhancement.strip("\n")
        enhancement = PromptEnhancement(
            import_lines=[block] if block else [], entity_blocks=[], external_lines=[]
        )
    if enhancement is None:
        enhancement = PromptEnhancement()

    ordered = sorted(snippets, key=lambda s: (s.score, s.path, s.text))

    # Each action removes one unit of content; applying a prefix of this
    # list is monotone in the budget.
    actions: list[tuple[str, int]] = []
    actions += [("snippet", i) for i in range(len(ordered))]
    actions += [("external", i) for i in range(len(enhancement.external_lines))]
    actions += [("body", i) for i in range(len(enhancement.entity_blocks))]
    actions += [("block", i) for i in range(len(enhancement.entity_blocks))]
    actions += [("import", i) for i in range(len(enhancement.import_lines))]

    for steps in range(len(actions) + 1):
        taken = actions[:steps]
        drop_snippets = sum(1 for kind, _ in taken if kind == "snippet")
        drop_external = sum(1 for kind, _ in taken if kind == "external")
        signature_only = sum(1 for kind, _ in taken if kind == "body")
        drop_blocks = sum(1 for kind, _ in taken if kind == "block")
        drop_imports = sum(1 for kind, _ in taken if kind == "import")

        snippet_section = _render_snippets(ordered[drop_snippets:], prefix)
        pe_section = enhancement.render(
            drop_external=drop_external,
            signature_only=signature_only,
            drop_blocks=drop_blocks,
            drop_imports=drop_imports,
        )
        bundle = PromptBundle(
            snippet_section=snippet_section,
            pe_section=pe_section,
            context_section=context,
            budget=budget,
            approx_tokens=0,
        )
        used = approx_token_count(bundle.text)
        if used <= budget:
            bundle.approx_tokens = used
            return bundle

    raise BudgetExceededError(
        f"context alone needs {approx_token_count(context)} tokens, budget is {budget}"
    )
