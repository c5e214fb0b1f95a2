"""HTTP surface: POST /embed and GET /health.

Wire protocol: request {"texts": [string, ...]}, response
{"vectors": [[768 floats], ...]} with vectors L2-normalized within 1e-5
and order matching the request. Malformed bodies answer 400, oversized
batches 413, encoder failures 500; every error body is {"error": str}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoder import EMBED_DIM, TINY_MODEL_ID, load_encoder

MAX_BATCH = 64


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(model_id: str = TINY_MODEL_ID, encoder=None) -> FastAPI:
    app = FastAPI(title="embed-service")
    app.state.encoder = encoder if encoder is not None else load_encoder(model_id)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": f"malformed request: {exc}"})

    @app.get("/health")
    def health():
        enc = app.state.encoder
        return {
            "status": "ok",
            "dim": EMBED_DIM,
            "model": enc.model_id,
            "pooling": enc.pooling,
        }

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if len(request.texts) > MAX_BATCH:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(request.texts)} exceeds limit {MAX_BATCH}"},
            )
        try:
            vectors = app.state.encoder.encode(request.texts)
        except Exception as exc:  # surfaced as a structured 500
            return JSONResponse(status_code=500, content={"error": str(exc)})
        return {"vectors": vectors}

    return app
