from __future__ import annotations

from dataclasses import dataclass

DEFAULT_BI_ENCODER = "intfloat/multilingual-e5-large-instruct"
DEFAULT_CROSS_ENCODER = "microsoft/mdeberta-v3-base"


@dataclass(frozen=True)
class ShimConfig:
    bi_encoder_model_id: str = DEFAULT_BI_ENCODER
    cross_encoder_model_id: str = DEFAULT_CROSS_ENCODER
    max_batch: int = 64
    port: int = 8400
    max_sequence_length: int = 512
