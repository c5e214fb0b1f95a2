"""Code encoders behind one interface: 768-dim, L2-normalized, deterministic.

Two backends:

- ``tiny-deterministic`` (default): a small transformer encoder with
  seed-pinned random weights. It is a real neural forward pass with the
  full contract (hashing subword tokenizer, 512-token truncation, masked
  mean pooling, L2 normalization) but needs no downloaded weights, which
  keeps the service self-contained and its outputs reproducible.
- any Hugging Face model id: loaded through ``transformers`` when
  installed; mean pooling over the attention mask, then L2 normalization.
"""

from __future__ import annotations

import re
import threading

import torch

EMBED_DIM = 768
MAX_TOKENS = 512

TINY_MODEL_ID = "tiny-deterministic"

_IDENT_RUN = re.compile(r"[A-Za-z0-9_]+|[^\sA-Za-z0-9_]")
_CAMEL_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")

_VOCAB_BUCKETS = 8192
_PAD_ID = 0


def _subword_ids(text: str) -> list[int]:
    """Hash subword pieces into a fixed vocabulary, 512-token truncation."""
    ids: list[int] = []
    for run in _IDENT_RUN.findall(text):
        for part in run.split("_") or [run]:
            if not part:
                continue
            for piece in _CAMEL_BOUNDARY.split(part):
                if not piece:
                    continue
                bucket = hash_bucket(piece.lower())
                ids.append(bucket)
                if len(ids) >= MAX_TOKENS:
                    return ids
    return ids


def hash_bucket(piece: str) -> int:
    import hashlib

    digest = hashlib.blake2b(piece.encode("utf-8"), digest_size=8).digest()
    # Reserve id 0 for padding.
    return 1 + int.from_bytes(digest[:4], "big") % (_VOCAB_BUCKETS - 1)


class TinyDeterministicEncoder:
    """Seed-pinned transformer encoder; identical inputs give identical
    vectors across processes and platforms with the same torch build."""

    model_id = TINY_MODEL_ID
    pooling = "mean"

    def __init__(self, seed: int = 1337):
        torch.manual_seed(seed)
        self._embed = torch.nn.Embedding(_VOCAB_BUCKETS, EMBED_DIM, padding_idx=_PAD_ID)
        self._positions = torch.nn.Embedding(MAX_TOKENS, EMBED_DIM)
        layer = torch.nn.TransformerEncoderLayer(
            d_model=EMBED_DIM,
            nhead=8,
            dim_feedforward=1024,
            dropout=0.0,
            batch_first=True,
        )
        self._encoder = torch.nn.TransformerEncoder(
            layer, num_layers=2, enable_nested_tensor=False
        )
        for module in (self._embed, self._positions, self._encoder):
            module.eval()
            for param in module.parameters():
                param.requires_grad_(False)
        self._lock = threading.Lock()

    @torch.no_grad()
    def encode(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        batch_ids = [_subword_ids(text) or [_PAD_ID] for text in texts]
        width = max(len(ids) for ids in batch_ids)
        token_tensor = torch.full((len(texts), width), _PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(texts), width), dtype=torch.bool)
        for row, ids in enumerate(batch_ids):
            token_tensor[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            mask[row, : len(ids)] = True

        with self._lock:
            hidden = self._embed(token_tensor) + self._positions.weight[:width]
            encoded = self._encoder(hidden, src_key_padding_mask=~mask)

        weights = mask.unsqueeze(-1).to(encoded.dtype)
        summed = (encoded * weights).sum(dim=1)
        counts = weights.sum(dim=1).clamp(min=1.0)
        pooled = summed / counts
        normalized = torch.nn.functional.normalize(pooled, p=2, dim=1)
        return normalized.tolist()


class HuggingFaceEncoder:
    """transformers-backed encoder: masked mean pooling + L2 normalization."""

    pooling = "mean"

    def __init__(self, model_id: str):
        from transformers import AutoModel, AutoTokenizer

        self.model_id = model_id
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModel.from_pretrained(model_id)
        self._model.eval()
        hidden = getattr(self._model.config, "hidden_size", None)
        if hidden != EMBED_DIM:
            raise ValueError(f"model {model_id!r} has hidden size {hidden}, need {EMBED_DIM}")
        self._lock = threading.Lock()

    @torch.no_grad()
    def encode(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        batch = self._tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=MAX_TOKENS,
            return_tensors="pt",
        )
        with self._lock:
            output = self._model(**batch)
        hidden = output.last_hidden_state
        mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        normalized = torch.nn.functional.normalize(pooled, p=2, dim=1)
        return normalized.tolist()


def load_encoder(model_id: str = TINY_MODEL_ID):
    if model_id == TINY_MODEL_ID:
        return TinyDeterministicEncoder()
    return HuggingFaceEncoder(model_id)
