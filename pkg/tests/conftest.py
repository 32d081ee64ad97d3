import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from tagrank.ann import IndexConfig, build_forest
from tagrank.corpus import render_document_text, render_subject_text
from tagrank.embedding import EmbedderConfig, embed_corpus
from tagrank.synth import synthetic_corpus


class StubService:
    """Local HTTP stub for the embed/score wire protocols.

    ``embed_handler`` / ``score_handler`` take the parsed request body and
    return (status, response dict). Every request body is recorded.
    """

    def __init__(self):
        self.requests: list[tuple[str, dict]] = []
        self.embed_handler = None
        self.score_handler = None
        service = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                service.requests.append((self.path, body))
                if self.path == "/embed" and service.embed_handler:
                    status, payload = service.embed_handler(body)
                elif self.path == "/score" and service.score_handler:
                    status, payload = service.score_handler(body)
                else:
                    status, payload = 404, {"error": "no handler"}
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        self.url = f"http://127.0.0.1:{self._server.server_address[1]}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_service():
    service = StubService()
    yield service
    service.close()


@pytest.fixture(scope="session")
def small_corpus():
    """200 documents over 300 subjects; lexical signal present."""
    return synthetic_corpus(200, 300, seed=42, noise_words=3)


@pytest.fixture(scope="session")
def large_ann_stack():
    """5,000 hash-embedded subjects (dim 64, seed 7), 100 query vectors,
    and a forest built with the default index parameters."""
    import time

    docs, subjects = synthetic_corpus(100, 5000, seed=7)
    embedder = EmbedderConfig(kind="hash", dim=64, seed=7)
    subject_matrix = embed_corpus(
        embedder, [(s.code, render_subject_text(s)) for s in subjects], "subject"
    )
    doc_matrix = embed_corpus(
        embedder, [(d.id, render_document_text(d)) for d in docs], "document"
    )
    started = time.perf_counter()
    forest = build_forest(subject_matrix, IndexConfig(n_trees=100, leaf_size=16, seed=7))
    build_seconds = time.perf_counter() - started
    return subject_matrix, doc_matrix, forest, build_seconds
