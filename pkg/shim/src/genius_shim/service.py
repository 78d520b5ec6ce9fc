"""FastAPI app implementing the generate/embed wire protocol.

    POST /v1/generate {"sketch","prompt","n","max_new_tokens","num_beams",
                       "do_sample","top_k","top_p","seed"} -> {"texts": [...]}
    POST /v1/embed    {"texts": [...]} -> {"vectors": [[...]], "dim": N}
    GET  /healthz -> 200 once models are loaded
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engines import EmbedderEngine, GeneratorEngine, ShimConfig


class GenerateBody(BaseModel):
    sketch: str
    prompt: str | None = None
    n: int = Field(default=1, ge=1)
    max_new_tokens: int = Field(default=200, ge=1)
    num_beams: int = Field(default=4, ge=1)
    do_sample: bool = True
    top_k: int | None = None
    top_p: float | None = None
    seed: int | None = None


class EmbedBody(BaseModel):
    texts: list[str] = Field(min_length=1)


def create_app(config: ShimConfig) -> FastAPI:
    generator = GeneratorEngine(config.generator_checkpoint, config.device)
    embedder = EmbedderEngine(config.embedder_checkpoint, config.device)
    app = FastAPI(title="genius-shim")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/generate")
    def generate(body: GenerateBody):
        if body.n > config.max_batch_size:
            return JSONResponse(
                status_code=413,
                content={"error": f"n={body.n} exceeds max batch {config.max_batch_size}"},
            )
        try:
            texts = generator.generate(
                sketch=body.sketch,
                prompt=body.prompt,
                n=body.n,
                max_new_tokens=body.max_new_tokens,
                num_beams=body.num_beams,
                do_sample=body.do_sample,
                top_k=body.top_k,
                top_p=body.top_p,
                seed=body.seed,
            )
        except Exception as exc:  # decode failure -> structured 500
            return JSONResponse(status_code=500, content={"error": str(exc)})
        return {"texts": texts}

    @app.post("/v1/embed")
    def embed(body: EmbedBody):
        if len(body.texts) > config.max_batch_size:
            return JSONResponse(
                status_code=413,
                content={
                    "error": f"batch of {len(body.texts)} exceeds max {config.max_batch_size}"
                },
            )
        try:
            vectors = embedder.embed(body.texts)
        except Exception as exc:
            return JSONResponse(status_code=500, content={"error": str(exc)})
        return {"vectors": vectors, "dim": embedder.dim}

    return app
