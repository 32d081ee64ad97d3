"""Build small randomly-initialized models for offline use.

Writes two loadable model directories, ``encoder/`` (plain BERT trunk for
``/embed``) and ``classifier/`` (single-logit sequence classifier for
``/score`` and the trainer). No network access or pretrained weights are
involved, so these are fixtures for tests and smoke runs, not quality
models.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import Lowercase
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import (
    BertConfig,
    BertForSequenceClassification,
    BertModel,
    PreTrainedTokenizerFast,
)

from .data import vocabulary

_SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


def build_tokenizer(words: list[str]) -> PreTrainedTokenizerFast:
    vocab = {token: index for index, token in enumerate(_SPECIALS + list(words))}
    backend = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    backend.normalizer = Lowercase()
    backend.pre_tokenizer = Whitespace()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=backend,
        model_input_names=["input_ids", "token_type_ids", "attention_mask"],
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )


def build_tiny_models(
    out_dir: str | Path,
    words: list[str] | None = None,
    hidden: int = 64,
    layers: int = 2,
    seed: int = 0,
) -> tuple[Path, Path]:
    """Write ``<out_dir>/encoder`` and ``<out_dir>/classifier``."""
    out_dir = Path(out_dir)
    words = list(words) if words is not None else vocabulary()
    tokenizer = build_tokenizer(words)
    config = BertConfig(
        vocab_size=len(_SPECIALS) + len(words),
        hidden_size=hidden,
        num_hidden_layers=layers,
        num_attention_heads=2,
        intermediate_size=hidden * 2,
        max_position_embeddings=512,
        num_labels=1,
        pad_token_id=0,
    )
    torch.manual_seed(seed)
    encoder_dir = out_dir / "encoder"
    BertModel(config).save_pretrained(encoder_dir)
    tokenizer.save_pretrained(encoder_dir)
    torch.manual_seed(seed + 1)
    classifier_dir = out_dir / "classifier"
    BertForSequenceClassification(config).save_pretrained(classifier_dir)
    tokenizer.save_pretrained(classifier_dir)
    return encoder_dir, classifier_dir


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory for encoder/ and classifier/")
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    encoder_dir, classifier_dir = build_tiny_models(
        args.out_dir, hidden=args.hidden, layers=args.layers, seed=args.seed
    )
    print(f"wrote {encoder_dir} and {classifier_dir}")


if __name__ == "__main__":
    main()
