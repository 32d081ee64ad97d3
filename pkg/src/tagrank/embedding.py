"""Text-to-vector encoding for documents and subjects.

Two embedders share one contract (unit-norm float32 rows, input order
preserved, role-specific prompt applied):

* ``hash`` — a deterministic character-3-gram feature-hashing embedder.
  It needs no model weights, is identical across platforms, and is what
  the test suite runs against.
* ``remote`` — a thin client for an HTTP model service implementing the
  ``/embed`` wire protocol. Returned vectors are re-normalized locally.

Matrices are persisted in a small versioned binary format (``.emb``) so
they are computed once and reused.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from hashlib import blake2b
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import FormatError, InputError, ProtocolError, TransportError

DEFAULT_DOCUMENT_PROMPT = (
    "Instruct: Given the following title and abstract for the document, "
    "retrieve the relevant subjects classifying the document"
)
DEFAULT_SUBJECT_PROMPT = "Query:"

ROLES = ("document", "subject")

_EMB_MAGIC = b"EMB1"
_EMB_VERSION = 1

# Boundary marker padded onto both ends of a text before 3-gram extraction.
_BOUNDARY = "#"

_SEED_MASK = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class PromptConfig:
    document_prompt: str = DEFAULT_DOCUMENT_PROMPT
    subject_prompt: str = DEFAULT_SUBJECT_PROMPT

    def for_role(self, role: str) -> str:
        if role == "document":
            return self.document_prompt
        if role == "subject":
            return self.subject_prompt
        raise InputError(f"unknown role {role!r}; expected one of {ROLES}")


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hash"
    dim: int = 256
    endpoint: str | None = None
    batch_size: int = 128
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("hash", "remote"):
            raise InputError(f"unknown embedder kind {self.kind!r}")
        if self.batch_size < 1:
            raise InputError("batch_size must be positive")
        if self.kind == "hash" and self.dim < 8:
            raise InputError("hash embedder requires dim >= 8")
        if self.kind == "remote" and not self.endpoint:
            raise InputError("remote embedder requires an endpoint URL")


class EmbeddingMatrix:
    """Id-aligned unit-norm float32 vectors, one row per id."""

    def __init__(self, ids: Sequence[str], vectors: np.ndarray):
        ids = list(ids)
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise InputError("vectors must be a 2-D array")
        if len(ids) != vectors.shape[0]:
            raise InputError(
                f"{len(ids)} ids but {vectors.shape[0]} vector rows"
            )
        if len(set(ids)) != len(ids):
            raise InputError("ids must be unique")
        if vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise InputError("matrix must be non-empty")
        norms = np.linalg.norm(vectors, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > 1e-4:
            raise InputError(f"rows must be unit-norm (worst deviation {worst:.2e})")
        self.ids = ids
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, item_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(item_id)]


def apply_prompt(prompt: str, text: str) -> str:
    """Compose the model input for a prompted text."""
    return f"{prompt}\n{text}"


def char_trigrams(text: str) -> list[str]:
    """Character 3-grams of the lowercased text, boundary-padded one char each end."""
    padded = _BOUNDARY + text.lower() + _BOUNDARY
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


@lru_cache(maxsize=1 << 20)
def _gram_slot(gram: str, dim: int, seed: int) -> tuple[int, int]:
    digest = blake2b(
        gram.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    h = int.from_bytes(digest, "little")
    sign = 1 if (h >> 63) & 1 == 0 else -1
    return h % dim, sign


def hash_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic signed feature-hashing embedding of character 3-grams.

    Pure function of (text, dim, seed); identical across platforms. The
    result is L2-normalized float32 with norm 1 within 1e-6.
    """
    if dim < 8:
        raise InputError("hash_embed requires dim >= 8")
    trimmed = text.strip()
    if not trimmed:
        raise InputError("cannot embed empty or all-whitespace text")
    seed = seed & _SEED_MASK
    acc = np.zeros(dim, dtype=np.float64)
    for gram in char_trigrams(trimmed):
        bucket, sign = _gram_slot(gram, dim, seed)
        acc[bucket] += sign
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        # Signs cancelled in every bucket; fall back to a single
        # deterministic bucket derived from the whole text.
        bucket, _ = _gram_slot(trimmed.lower(), dim, seed)
        acc[bucket] = 1.0
        norm = 1.0
    return (acc / norm).astype(np.float32)


def remote_embed(
    endpoint: str,
    batch: Sequence[str],
    role: str,
    prompts: PromptConfig,
    timeout: float = 60.0,
) -> list[np.ndarray]:
    """Embed one batch through the ``/embed`` wire protocol.

    The prompt travels alongside the raw texts; the serving side applies
    it. Vectors are re-normalized here so downstream angular search can
    rely on unit norm regardless of serving-side drift.
    """
    if role not in ROLES:
        raise InputError(f"unknown role {role!r}; expected one of {ROLES}")
    if not batch:
        return []
    payload = {
        "role": role,
        "prompt": prompts.for_role(role),
        "texts": list(batch),
    }
    try:
        response = requests.post(f"{endpoint}/embed", json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"embed request to {endpoint} failed: {exc}") from exc
    if not 200 <= response.status_code < 300:
        raise TransportError(
            f"embed endpoint returned HTTP {response.status_code}: {response.text[:200]}"
        )
    try:
        body = response.json()
        dim = int(body["dim"])
        raw = body["vectors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed embed response: {exc}") from exc
    if not isinstance(raw, list) or len(raw) != len(batch):
        raise ProtocolError(
            f"embed response has {len(raw) if isinstance(raw, list) else '?'} vectors "
            f"for {len(batch)} texts"
        )
    out: list[np.ndarray] = []
    for i, values in enumerate(raw):
        vec = np.asarray(values, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != dim:
            raise ProtocolError(f"vector {i} has dimension {vec.shape} instead of {dim}")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.isfinite(norm):
            raise ProtocolError(f"vector {i} is not normalizable (norm {norm})")
        out.append(vec / np.float32(norm))
    return out


def embed_corpus(
    embedder: EmbedderConfig,
    texts: Sequence[tuple[str, str]],
    role: str,
    prompts: PromptConfig | None = None,
) -> EmbeddingMatrix:
    """Embed (id, text) records in order, applying the role's prompt."""
    embedder.validate()
    prompts = prompts or PromptConfig()
    if role not in ROLES:
        raise InputError(f"unknown role {role!r}; expected one of {ROLES}")
    if not texts:
        raise InputError("no texts to embed")
    for item_id, text in texts:
        if not text.strip():
            raise InputError(f"empty text for id {item_id!r}")
    ids = [item_id for item_id, _ in texts]

    if embedder.kind == "hash":
        prompt = prompts.for_role(role)
        rows = [
            hash_embed(apply_prompt(prompt, text), embedder.dim, embedder.seed)
            for _, text in texts
        ]
        return EmbeddingMatrix(ids, np.stack(rows))

    rows = []
    raw_texts = [text for _, text in texts]
    for batch_index, start in enumerate(range(0, len(raw_texts), embedder.batch_size)):
        batch = raw_texts[start : start + embedder.batch_size]
        try:
            vectors = remote_embed(embedder.endpoint, batch, role, prompts)
        except TransportError as exc:
            raise TransportError(str(exc), batch_index=batch_index) from exc
        if rows and vectors and vectors[0].shape[0] != rows[0].shape[0]:
            raise ProtocolError(
                f"embedding dimension changed across batches: "
                f"{rows[0].shape[0]} then {vectors[0].shape[0]}"
            )
        rows.extend(vectors)
    return EmbeddingMatrix(ids, np.stack(rows))


def save_matrix(m: EmbeddingMatrix, path: str | Path) -> None:
    """Write the ``.emb`` format: EMB1 | version | dim | count | id table | f32 rows."""
    parts = [
        _EMB_MAGIC,
        struct.pack("<I", _EMB_VERSION),
        struct.pack("<I", m.dim),
        struct.pack("<Q", len(m.ids)),
    ]
    for item_id in m.ids:
        encoded = item_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InputError(f"id too long to serialize: {item_id[:40]!r}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
    parts.append(np.ascontiguousarray(m.vectors, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    """Cursor over a byte buffer that turns short reads into FormatError."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.offset = 0
        self.label = label

    def take(self, n: int) -> bytes:
        end = self.offset + n
        if end > len(self.data):
            raise FormatError(f"{self.label}: truncated file")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{self.label}: trailing data after payload")


def read_id_table(reader: _Reader, count: int) -> list[str]:
    ids = []
    for _ in range(count):
        (length,) = reader.unpack("<H")
        ids.append(reader.take(length).decode("utf-8"))
    return ids


def load_matrix(path: str | Path) -> EmbeddingMatrix:
    reader = _Reader(Path(path).read_bytes(), str(path))
    if reader.take(4) != _EMB_MAGIC:
        raise FormatError(f"{path}: bad magic, not an embedding file")
    (version,) = reader.unpack("<I")
    if version != _EMB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (dim,) = reader.unpack("<I")
    (count,) = reader.unpack("<Q")
    ids = read_id_table(reader, count)
    raw = reader.take(count * dim * 4)
    reader.finish()
    vectors = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    return EmbeddingMatrix(ids, vectors)
