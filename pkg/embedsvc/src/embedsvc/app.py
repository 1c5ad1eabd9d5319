"""HTTP surface: POST /embed and GET /health.

The reply shape is ``{"dim": int, "vectors": [[float...]...], "model": str}``
with exactly one vector per input text, in input order. Malformed bodies and
oversized batches get 400; both endpoints return 503 until the encoder is
loaded.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .encoders import Encoder

DEFAULT_MAX_BATCH = 64


def create_app(encoder: Encoder | None = None, max_batch: int = DEFAULT_MAX_BATCH) -> FastAPI:
    """App factory; pass ``encoder=None`` to model the still-loading state."""
    app = FastAPI(title="embedsvc")
    app.state.encoder = encoder
    app.state.max_batch = max_batch

    @app.get("/health")
    async def health() -> JSONResponse:
        enc: Encoder | None = app.state.encoder
        if enc is None:
            return JSONResponse(
                {"status": "loading", "model": None, "dim": None}, status_code=503
            )
        return JSONResponse({"status": "ready", "model": enc.id, "dim": enc.dim})

    @app.post("/embed")
    async def embed(request: Request) -> JSONResponse:
        enc: Encoder | None = app.state.encoder
        if enc is None:
            return JSONResponse({"error": "model is still loading"}, status_code=503)
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        if not isinstance(body, dict) or "texts" not in body:
            return JSONResponse({"error": 'body must be {"texts": [...]}'}, status_code=400)
        texts = body["texts"]
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return JSONResponse({"error": "texts must be a list of strings"}, status_code=400)
        if not 1 <= len(texts) <= app.state.max_batch:
            return JSONResponse(
                {"error": f"batch size must be in [1, {app.state.max_batch}]"},
                status_code=400,
            )
        vectors = enc.encode(texts)
        return JSONResponse(
            {"dim": enc.dim, "vectors": vectors.tolist(), "model": enc.id}
        )

    return app


def app_from_env() -> FastAPI:
    """Build the production app from environment configuration."""
    from .encoders import make_encoder

    model_spec = os.environ.get("EMBED_MODEL", "hashed")
    max_batch = int(os.environ.get("EMBED_MAX_BATCH", str(DEFAULT_MAX_BATCH)))
    return create_app(make_encoder(model_spec), max_batch=max_batch)
