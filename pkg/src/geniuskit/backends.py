"""Clients and deterministic stand-ins for the generation/embedding services.

Wire protocol (HTTP + JSON):

    POST /v1/generate
        {"sketch", "prompt", "n", "max_new_tokens", "num_beams",
         "do_sample", "top_k", "top_p", "seed"}          -> {"texts": [...]}
    POST /v1/embed
        {"texts": [...]}                                 -> {"vectors": [[...]], "dim": N}

`EchoStub` and `HashEmbedder` implement the same interfaces in-process so
every pipeline runs (and is tested) without a model server.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import requests

GEN_URL_ENV = "GENIUSKIT_GEN_URL"
EMB_URL_ENV = "GENIUSKIT_EMB_URL"

DEFAULT_MAX_IN_FLIGHT = 8
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 0.25


class TransportError(Exception):
    """All retry attempts failed; `attempts` records how many were made."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class ProtocolError(Exception):
    """The backend answered, but not in the agreed shape."""


@dataclass
class GenerationRequest:
    sketch_text: str
    prompt: str | None = None
    n: int = 1
    max_new_tokens: int = 200
    num_beams: int = 4
    do_sample: bool = True
    top_k: int | None = None
    top_p: float | None = None
    seed: int | None = None
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    def payload(self) -> dict:
        return {
            "sketch": self.sketch_text,
            "prompt": self.prompt,
            "n": self.n,
            "max_new_tokens": self.max_new_tokens,
            "num_beams": self.num_beams,
            "do_sample": self.do_sample,
            "top_k": self.top_k,
            "top_p": self.top_p,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class GenerationResponse:
    texts: tuple[str, ...]
    backend_id: str


def default_generation_url() -> str | None:
    return os.environ.get(GEN_URL_ENV)


def default_embedding_url() -> str | None:
    return os.environ.get(EMB_URL_ENV)


# --- deterministic stand-ins -------------------------------------------------


def stub_generate(sketch: str, filler: str, mask_token: str = "<mask>") -> str:
    """Replace every mask token with the filler, fragments untouched."""
    return sketch.replace(mask_token, filler)


class EchoStub:
    """Generator stand-in: every mask becomes the filler string, so the
    output always contains every sketch fragment verbatim and in order
    (downstream sketch-lost is exactly zero)."""

    backend_id = "echo-stub"

    def __init__(self, filler: str = "filler", mask_token: str = "<mask>"):
        self.filler = filler
        self.mask_token = mask_token

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        text = request.sketch_text
        if request.prompt:
            text = f"{request.prompt} {text}"
        filled = stub_generate(text, self.filler, self.mask_token)
        return GenerationResponse(texts=(filled,) * request.n, backend_id=self.backend_id)


def test_embed(text: str, dim: int) -> list[float]:
    """L2-normalized hashed character-trigram counts of the lowercased text.

    Uses crc32, not `hash()`, so vectors are stable across processes.
    """
    if dim < 8:
        raise ValueError("embedding dim must be >= 8")
    lowered = text.lower()
    if len(lowered) >= 3:
        feats = [lowered[i : i + 3] for i in range(len(lowered) - 2)]
    elif lowered:
        feats = [lowered]
    else:
        feats = ["\x00"]
    vec = [0.0] * dim
    for tri, count in Counter(feats).items():
        vec[zlib.crc32(tri.encode("utf-8")) % dim] += float(count)
    norm = sum(v * v for v in vec) ** 0.5
    return [v / norm for v in vec]


class HashEmbedder:
    backend_id = "hash-embedder"

    def __init__(self, dim: int = 64, scale: float = 1.0):
        if dim < 8:
            raise ValueError("embedding dim must be >= 8")
        self.dim = dim
        self.scale = scale  # test hook for scale-invariance properties

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [[self.scale * v for v in test_embed(t, self.dim)] for t in texts]


# --- HTTP clients -------------------------------------------------------------


class _RetryingClient:
    def __init__(
        self,
        base_url: str,
        retries: int = DEFAULT_RETRIES,
        backoff_s: float = DEFAULT_BACKOFF_S,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        timeout_s: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self._session.post(
                        f"{self.base_url}{path}", json=payload, timeout=self.timeout_s
                    )
                if resp.status_code >= 500:
                    last_error = ProtocolError(
                        f"{path} returned {resp.status_code}: {resp.text[:200]}"
                    )
                    continue
                if resp.status_code != 200:
                    raise ProtocolError(
                        f"{path} returned {resp.status_code}: {resp.text[:200]}"
                    )
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"{path} returned non-JSON body") from exc
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
        raise TransportError(f"POST {path} failed: {last_error}", attempts=self.retries)


class HttpGenerator(_RetryingClient):
    """Client for the /v1/generate endpoint; one response per logical
    request id regardless of internal retries."""

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        body = self._post("/v1/generate", request.payload())
        texts = body.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise ProtocolError("generate response missing 'texts' list")
        if len(texts) != request.n:
            raise ProtocolError(
                f"requested n={request.n} but backend returned {len(texts)} texts"
            )
        return GenerationResponse(texts=tuple(texts), backend_id=self.base_url)


class HttpEmbedder(_RetryingClient):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = self._post("/v1/embed", {"texts": list(texts)})
        vectors = body.get("vectors")
        dim = body.get("dim")
        if not isinstance(vectors, list) or not isinstance(dim, int):
            raise ProtocolError("embed response missing 'vectors'/'dim'")
        if len(vectors) != len(texts):
            raise ProtocolError(
                f"sent {len(texts)} texts but backend returned {len(vectors)} vectors"
            )
        if any(len(v) != dim for v in vectors):
            raise ProtocolError("embed response vectors disagree with dim")
        return [[float(x) for x in v] for v in vectors]
