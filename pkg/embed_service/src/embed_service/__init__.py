"""HTTP sidecar serving 768-dim neural code embeddings."""

from .app import MAX_BATCH, create_app
from .encoder import EMBED_DIM, MAX_TOKENS, TINY_MODEL_ID, load_encoder

__version__ = "0.1.0"

__all__ = [
    "EMBED_DIM",
    "MAX_BATCH",
    "MAX_TOKENS",
    "TINY_MODEL_ID",
    "create_app",
    "load_encoder",
]
