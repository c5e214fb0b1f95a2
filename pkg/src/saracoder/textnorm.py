"""Text normalization, fingerprinting, and sub-token splitting.

Every place that hashes or tokenizes snippet text goes through these
helpers so that fingerprints and token bags stay consistent between
indexing and querying.
"""

from __future__ import annotations

import hashlib
import re

_WS_RUN = re.compile(r"\s+")
_IDENT_RUN = re.compile(r"[A-Za-z0-9_]+")
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def normalize_text(text: str) -> str:
    """Strip outer whitespace and collapse internal whitespace runs to one space."""
    return _WS_RUN.sub(" ", text.strip())


def fingerprint(text: str) -> str:
    """128-bit MD5 hex fingerprint of the normalized text.

    Stable across indentation and other formatting noise; used both as
    the statement fingerprint and as the dedup key for snippet text.
    """
    return hashlib.md5(normalize_text(text).encode("utf-8")).hexdigest()


def subtokens(text: str) -> list[str]:
    """Split text into lowercase sub-tokens.

    Identifier runs are split on non-identifier characters, then on
    snake_case underscores and camelCase boundaries. "getUserName"
    yields ["get", "user", "name"].
    """
    out: list[str] = []
    for run in _IDENT_RUN.findall(text):
        for part in run.split("_"):
            if not part:
                continue
            for piece in _CAMEL_BOUNDARY.split(part):
                if piece:
                    out.append(piece.lower())
    return out
