"""In-process HTTP stub serving the generate/embed protocol for tests."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterator

from .backends import EchoStub, GenerationRequest, HashEmbedder


def make_server(
    port: int = 0,
    filler: str = "filler",
    mask_token: str = "<mask>",
    embed_dim: int = 64,
) -> ThreadingHTTPServer:
    generator = EchoStub(filler=filler, mask_token=mask_token)
    embedder = HashEmbedder(dim=embed_dim)

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/healthz":
                self._send(200, {"status": "ok"})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._send(400, {"error": "invalid JSON"})
                return
            if self.path == "/v1/generate":
                try:
                    request = GenerationRequest(
                        sketch_text=payload["sketch"],
                        prompt=payload.get("prompt"),
                        n=payload.get("n", 1),
                        max_new_tokens=payload.get("max_new_tokens", 200),
                        num_beams=payload.get("num_beams", 4),
                        do_sample=payload.get("do_sample", True),
                        top_k=payload.get("top_k"),
                        top_p=payload.get("top_p"),
                        seed=payload.get("seed"),
                    )
                except (KeyError, TypeError, ValueError):
                    self._send(400, {"error": "bad generate request"})
                    return
                response = generator.generate(request)
                self._send(200, {"texts": list(response.texts)})
            elif self.path == "/v1/embed":
                texts = payload.get("texts")
                if not isinstance(texts, list) or not texts:
                    self._send(400, {"error": "bad embed request"})
                    return
                vectors = embedder.embed(texts)
                self._send(200, {"vectors": vectors, "dim": embedder.dim})
            else:
                self._send(404, {"error": "not found"})

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


@contextmanager
def run_stub_server(
    port: int = 0,
    filler: str = "filler",
    mask_token: str = "<mask>",
    embed_dim: int = 64,
) -> Iterator[str]:
    """Context manager yielding the base URL of a live stub server."""
    server = make_server(port, filler, mask_token, embed_dim)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


def serve_forever(
    port: int, filler: str = "filler", mask_token: str = "<mask>", embed_dim: int = 64
) -> None:
    server = make_server(port, filler, mask_token, embed_dim)
    print(f"stub server listening on http://127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:  # pragma: no cover
        server.shutdown()
