"""Thin inference wrappers around the two transformer models.

Truncation to the configured maximum sequence length happens here; the
engine on the other side of the wire is tokenizer-agnostic.
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import AutoModel, AutoModelForSequenceClassification, AutoTokenizer

_CHUNK = 32


def apply_prompt(prompt: str, text: str) -> str:
    """Same composition rule the engine uses for its offline embedder."""
    return f"{prompt}\n{text}"


class TextEncoder:
    """Mean-pooled, L2-normalized sentence embeddings with a prompt prefix."""

    def __init__(self, model_id: str, max_sequence_length: int):
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()
        self.max_sequence_length = max_sequence_length
        self.dim = int(self.model.config.hidden_size)

    @torch.no_grad()
    def encode(self, texts: list[str], prompt: str) -> np.ndarray:
        prompted = [apply_prompt(prompt, text) for text in texts]
        rows = []
        for start in range(0, len(prompted), _CHUNK):
            chunk = prompted[start : start + _CHUNK]
            batch = self.tokenizer(
                chunk,
                truncation=True,
                max_length=self.max_sequence_length,
                padding=True,
                return_tensors="pt",
            )
            hidden = self.model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
            rows.append(pooled)
        vectors = torch.cat(rows, dim=0)
        vectors = torch.nn.functional.normalize(vectors, p=2, dim=1)
        return vectors.cpu().numpy().astype(np.float32)


class PairScorer:
    """Relevance probability in [0, 1] for (left, right) text pairs."""

    def __init__(self, model_id: str, max_sequence_length: int):
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self.model.eval()
        self.max_sequence_length = max_sequence_length

    @torch.no_grad()
    def score(self, pairs: list[tuple[str, str]]) -> list[float]:
        out: list[float] = []
        for start in range(0, len(pairs), _CHUNK):
            chunk = pairs[start : start + _CHUNK]
            batch = self.tokenizer(
                [left for left, _ in chunk],
                [right for _, right in chunk],
                truncation=True,
                max_length=self.max_sequence_length,
                padding=True,
                return_tensors="pt",
            )
            logits = self.model(**batch).logits
            if logits.shape[-1] == 1:
                probabilities = torch.sigmoid(logits.squeeze(-1))
            else:
                probabilities = torch.softmax(logits, dim=-1)[:, 1]
            out.extend(float(p) for p in probabilities)
        return out
