"""FastAPI service implementing the engine's embed/score wire protocols.

Request bodies are parsed by hand so the contract stays exact: malformed
bodies answer 400 with ``{"error": ...}``, oversize batches 413, and a
model that cannot be loaded 503. Models load once, lazily, on first use.
"""

from __future__ import annotations

import argparse
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ShimConfig
from .models import PairScorer, TextEncoder

_ROLES = ("document", "subject")


class _LazyModels:
    def __init__(self, config: ShimConfig):
        self.config = config
        self._lock = threading.Lock()
        self._encoder: TextEncoder | None = None
        self._scorer: PairScorer | None = None

    def encoder(self) -> TextEncoder:
        with self._lock:
            if self._encoder is None:
                self._encoder = TextEncoder(
                    self.config.bi_encoder_model_id, self.config.max_sequence_length
                )
            return self._encoder

    def scorer(self) -> PairScorer:
        with self._lock:
            if self._scorer is None:
                self._scorer = PairScorer(
                    self.config.cross_encoder_model_id, self.config.max_sequence_length
                )
            return self._scorer


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ShimConfig | None = None) -> FastAPI:
    config = config or ShimConfig()
    models = _LazyModels(config)
    app = FastAPI(title="tagrank model shim")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/embed")
    async def embed(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "request body must be a JSON object")
        role = body.get("role")
        prompt = body.get("prompt")
        texts = body.get("texts")
        if role not in _ROLES:
            return _error(400, f"role must be one of {list(_ROLES)}")
        if not isinstance(prompt, str):
            return _error(400, "prompt must be a string")
        if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
            return _error(400, "texts must be a list of strings")
        if len(texts) > config.max_batch:
            return _error(413, f"batch of {len(texts)} exceeds max_batch {config.max_batch}")
        try:
            encoder = models.encoder()
        except Exception as exc:
            return _error(503, f"bi-encoder not ready: {exc}")
        if not texts:
            return {"dim": encoder.dim, "vectors": []}
        vectors = encoder.encode(texts, prompt)
        return {"dim": int(vectors.shape[1]), "vectors": vectors.tolist()}

    @app.post("/score")
    async def score(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "request body must be a JSON object")
        pairs = body.get("pairs")
        if not isinstance(pairs, list):
            return _error(400, "pairs must be a list")
        cleaned: list[tuple[str, str]] = []
        for item in pairs:
            if (
                not isinstance(item, dict)
                or not isinstance(item.get("left"), str)
                or not isinstance(item.get("right"), str)
            ):
                return _error(400, "each pair needs string fields 'left' and 'right'")
            cleaned.append((item["left"], item["right"]))
        if len(cleaned) > config.max_batch:
            return _error(413, f"batch of {len(cleaned)} exceeds max_batch {config.max_batch}")
        try:
            scorer = models.scorer()
        except Exception as exc:
            return _error(503, f"cross-encoder not ready: {exc}")
        if not cleaned:
            return {"scores": []}
        scores = [min(1.0, max(0.0, s)) for s in scorer.score(cleaned)]
        return {"scores": scores}

    return app


def serve(config: ShimConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host="127.0.0.1", port=config.port)


def main() -> None:
    parser = argparse.ArgumentParser(description="Serve the embed/score model shim.")
    parser.add_argument("--bi-encoder", default=ShimConfig.bi_encoder_model_id)
    parser.add_argument("--cross-encoder", default=ShimConfig.cross_encoder_model_id)
    parser.add_argument("--port", type=int, default=ShimConfig.port)
    parser.add_argument("--max-batch", type=int, default=ShimConfig.max_batch)
    parser.add_argument("--max-seq-len", type=int, default=ShimConfig.max_sequence_length)
    args = parser.parse_args()
    serve(
        ShimConfig(
            bi_encoder_model_id=args.bi_encoder,
            cross_encoder_model_id=args.cross_encoder,
            max_batch=args.max_batch,
            port=args.port,
            max_sequence_length=args.max_seq_len,
        )
    )


if __name__ == "__main__":
    main()
