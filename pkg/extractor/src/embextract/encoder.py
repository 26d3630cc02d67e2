"""Sentence encoding with a pretrained transformer.

Each utterance becomes the mean of its last-layer token features. Special
boundary tokens count toward the mean by default; pass
``include_special=False`` to average content tokens only. Extraction runs
the model in evaluation mode under no_grad, so output is deterministic
for fixed weights.

The optional fine-tune stage trains a throwaway classification head on
the pooled features with the embedding table and the first ten encoder
layers frozen, then discards the head; it expects a BERT-style model
(``.embeddings`` and ``.encoder.layer``).
"""

from __future__ import annotations

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

DEFAULT_FROZEN_LAYERS = 10


def load_encoder(name_or_dir: str):
    """Load tokenizer and model from a hub name or local directory."""
    tokenizer = AutoTokenizer.from_pretrained(name_or_dir)
    model = AutoModel.from_pretrained(name_or_dir)
    model.eval()
    return tokenizer, model


def _pool(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # mask: (B, T) of {0,1}; clamp keeps empty rows finite instead of NaN
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * weights).sum(dim=1) / weights.sum(dim=1).clamp(min=1.0)


def encode(
    tokenizer,
    model,
    texts: list[str],
    *,
    batch_size: int = 32,
    max_length: int = 128,
    include_special: bool = True,
) -> np.ndarray:
    """Mean-pooled last-layer features, float32 of shape (len(texts), d)."""
    model.eval()
    chunks: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            batch = tokenizer(
                texts[start : start + batch_size],
                padding=True,
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
                return_special_tokens_mask=True,
            )
            special = batch.pop("special_tokens_mask")
            out = model(**batch)
            mask = batch["attention_mask"]
            if not include_special:
                mask = mask * (1 - special)
            chunks.append(_pool(out.last_hidden_state, mask).numpy())
    return np.concatenate(chunks, axis=0).astype(np.float32, copy=False)


def _frozen_modules(model, freeze_layers: int):
    yield model.embeddings
    yield from model.encoder.layer[:freeze_layers]


def fine_tune(
    tokenizer,
    model,
    texts: list[str],
    labels: np.ndarray,
    num_classes: int,
    *,
    epochs: int = 1,
    batch_size: int = 16,
    lr: float = 2e-5,
    max_length: int = 128,
    seed: int = 0,
    freeze_layers: int = DEFAULT_FROZEN_LAYERS,
) -> None:
    """Fine-tune the encoder in place on a classification objective.

    Only layers past ``freeze_layers`` (and the pooled head, discarded on
    return) receive gradients. The model is left in evaluation mode.
    """
    torch.manual_seed(seed)
    for module in _frozen_modules(model, freeze_layers):
        for p in module.parameters():
            p.requires_grad_(False)

    hidden = model.config.hidden_size
    head = torch.nn.Linear(hidden, num_classes)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable + list(head.parameters()), lr=lr)
    loss_fn = torch.nn.CrossEntropyLoss()
    targets = torch.as_tensor(np.asarray(labels), dtype=torch.long)

    generator = torch.Generator().manual_seed(seed)
    model.train()
    for _ in range(epochs):
        order = torch.randperm(len(texts), generator=generator)
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size].tolist()
            batch = tokenizer(
                [texts[i] for i in idx],
                padding=True,
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
            )
            out = model(**batch)
            pooled = _pool(out.last_hidden_state, batch["attention_mask"])
            loss = loss_fn(head(pooled), targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()

    for p in model.parameters():
        p.requires_grad_(True)
