"""Fine-tune the pair classifier from an engine pair file.

Trains a single-logit relevance head for up to ``epochs`` epochs (default
one), evaluating the held-out F-score periodically and stopping early
once it plateaus. The fine-tuned model plus a ``metrics.json`` land in
the output directory.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer

from .config import DEFAULT_CROSS_ENCODER


class PairFileError(ValueError):
    """Unreadable or inconsistent pair file."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    learning_rate: float = 5e-5
    batch_size: int = 16
    max_sequence_length: int = 256
    holdout_fraction: float = 0.2
    eval_every: int = 20
    patience: int = 3
    min_delta: float = 0.005
    seed: int = 0


def load_pair_file(path: str | Path) -> list[tuple[str, str, int]]:
    """(left text, right text, label) triples; strict about the schema."""
    triples: list[tuple[str, str, int]] = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise PairFileError(f"line {number}: not valid JSON: {exc}") from exc
            try:
                left = record["doc_text"]
                right = record["subject_text"]
                label = record["label"]
            except (KeyError, TypeError) as exc:
                raise PairFileError(f"line {number}: missing pair fields") from exc
            if label not in (0, 1):
                raise PairFileError(f"line {number}: label must be 0 or 1")
            if not isinstance(left, str) or not isinstance(right, str):
                raise PairFileError(f"line {number}: texts must be strings")
            triples.append((left, right, int(label)))
    if not triples:
        raise PairFileError(f"{path}: no pairs found")
    return triples


def f_score(truth: list[int], predicted: list[int]) -> float:
    true_positive = sum(1 for t, p in zip(truth, predicted) if t == 1 and p == 1)
    false_positive = sum(1 for t, p in zip(truth, predicted) if t == 0 and p == 1)
    false_negative = sum(1 for t, p in zip(truth, predicted) if t == 1 and p == 0)
    denominator = 2 * true_positive + false_positive + false_negative
    return (2 * true_positive / denominator) if denominator else 0.0


def _stratified_split(triples, fraction, rng: np.random.Generator):
    def shuffled(items):
        return [items[int(i)] for i in rng.permutation(len(items))]

    positives = shuffled([t for t in triples if t[2] == 1])
    negatives = shuffled([t for t in triples if t[2] == 0])
    cut_pos = max(1, int(len(positives) * fraction))
    cut_neg = max(1, int(len(negatives) * fraction))
    holdout = positives[:cut_pos] + negatives[:cut_neg]
    train = positives[cut_pos:] + negatives[cut_neg:]
    return shuffled(train), shuffled(holdout)


def train_cross_encoder(
    pair_file: str | Path,
    out_dir: str | Path,
    model_id: str = DEFAULT_CROSS_ENCODER,
    config: TrainConfig | None = None,
) -> dict:
    """Train, save the model, and return (and persist) the metrics dict."""
    config = config or TrainConfig()
    triples = load_pair_file(pair_file)
    labels = {label for _, _, label in triples}
    if labels != {0, 1}:
        raise PairFileError(
            f"pair file must contain both labels, found only {sorted(labels)}"
        )

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    train, holdout = _stratified_split(triples, config.holdout_fraction, rng)
    if not any(t[2] == 1 for t in holdout) or not any(t[2] == 0 for t in holdout):
        raise PairFileError("held-out split lost a label; provide more pairs")

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForSequenceClassification.from_pretrained(model_id, num_labels=1)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    loss_fn = torch.nn.BCEWithLogitsLoss()

    def encode(batch):
        return tokenizer(
            [left for left, _, _ in batch],
            [right for _, right, _ in batch],
            truncation=True,
            max_length=config.max_sequence_length,
            padding=True,
            return_tensors="pt",
        )

    @torch.no_grad()
    def holdout_f() -> float:
        model.eval()
        predicted: list[int] = []
        for start in range(0, len(holdout), config.batch_size):
            chunk = holdout[start : start + config.batch_size]
            logits = model(**encode(chunk)).logits.squeeze(-1)
            predicted.extend(int(p) for p in (torch.sigmoid(logits) > 0.5))
        model.train()
        return f_score([label for _, _, label in holdout], predicted)

    best_f = -1.0
    evals_without_gain = 0
    stopped_early = False
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            batch = [train[int(i)] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            logits = model(**encode(batch)).logits.squeeze(-1)
            target = torch.tensor([float(label) for _, _, label in batch])
            loss = loss_fn(logits, target)
            loss.backward()
            optimizer.step()
            step += 1
            if step % config.eval_every == 0:
                current = holdout_f()
                if current > best_f + config.min_delta:
                    best_f = current
                    evals_without_gain = 0
                else:
                    evals_without_gain += 1
                if evals_without_gain >= config.patience:
                    stopped_early = True
                    break
        if stopped_early:
            break

    final_f = holdout_f()
    out_dir = Path(out_dir)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    metrics = {
        "f_score": final_f,
        "best_f_score": max(best_f, final_f),
        "steps": step,
        "stopped_early": stopped_early,
        "n_train": len(train),
        "n_holdout": len(holdout),
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    return metrics


def main() -> None:
    parser = argparse.ArgumentParser(description="Fine-tune the pair scorer from a pair file.")
    parser.add_argument("pair_file")
    parser.add_argument("out_dir")
    parser.add_argument("--model", default=DEFAULT_CROSS_ENCODER)
    parser.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    parser.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    parser.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    parser.add_argument("--max-seq-len", type=int, default=TrainConfig.max_sequence_length)
    parser.add_argument("--seed", type=int, default=TrainConfig.seed)
    args = parser.parse_args()
    metrics = train_cross_encoder(
        args.pair_file,
        args.out_dir,
        model_id=args.model,
        config=TrainConfig(
            epochs=args.epochs,
            learning_rate=args.learning_rate,
            batch_size=args.batch_size,
            max_sequence_length=args.max_seq_len,
            seed=args.seed,
        ),
    )
    print(
        f"held-out F {metrics['f_score']:.4f} after {metrics['steps']} steps "
        f"({'early stop' if metrics['stopped_early'] else 'ran full epochs'}) -> {args.out_dir}"
    )


if __name__ == "__main__":
    main()
