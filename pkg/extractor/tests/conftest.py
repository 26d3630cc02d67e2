"""Shared fixtures: the sample corpus and a tiny deterministic encoder.

The encoder stands in for a pretrained model. Its word-embedding table is
built from the corpus's own word-intent statistics: each word's vector is
a mixture of per-intent orthonormal directions, weighted by how often the
word occurs under each intent. Keywords therefore align within an intent
and function words collapse onto a shared direction, so mean-pooled
features cluster by intent the way a genuinely pretrained encoder's
features do. The transformer layers keep their random default-scale
initialization (near-identity on the residual stream); everything under
test treats the saved directory as an opaque encoder.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np
import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizerFast

DATA_DIR = Path(__file__).parent / "data"

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
HIDDEN = 32


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return DATA_DIR / "intents_sample.csv"


@pytest.fixture(scope="session")
def corpus_rows(corpus_path) -> list[dict]:
    with corpus_path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def build_encoder(rows: list[dict], out_dir: Path, seed: int = 0) -> Path:
    intents = sorted({r["label"] for r in rows})
    counts: dict[str, Counter] = defaultdict(Counter)
    for r in rows:
        for word in r["text"].split():
            counts[word][r["label"]] += 1
    words = sorted(counts)
    vocab = {tok: i for i, tok in enumerate(SPECIALS + words)}

    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(HIDDEN, len(intents))))
    directions = q.T
    table = rng.normal(scale=0.05, size=(len(vocab), HIDDEN))
    for word in words:
        occurrence = counts[word]
        total = sum(occurrence.values())
        for k, intent in enumerate(intents):
            table[vocab[word]] += (occurrence[intent] / total) * directions[k]

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=2 * HIDDEN,
        max_position_embeddings=64,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    with torch.no_grad():
        model.embeddings.word_embeddings.weight.copy_(
            torch.tensor(table, dtype=torch.float32)
        )
        model.embeddings.position_embeddings.weight.zero_()
        model.embeddings.token_type_embeddings.weight.zero_()
    model.eval()
    model.save_pretrained(out_dir)
    BertTokenizerFast(vocab=vocab, do_lower_case=True).save_pretrained(out_dir)
    return out_dir


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory, corpus_rows) -> Path:
    return build_encoder(corpus_rows, tmp_path_factory.mktemp("encoder"))


@pytest.fixture(scope="session")
def split_csvs(tmp_path_factory, corpus_rows) -> dict[str, Path]:
    """Corpus sliced 12/4/4 per intent into train/val/test CSV files."""
    by_label: dict[str, list[str]] = defaultdict(list)
    for r in corpus_rows:
        by_label[r["label"]].append(r["text"])
    slices = {"train": slice(0, 12), "val": slice(12, 16), "test": slice(16, 20)}
    out = tmp_path_factory.mktemp("csv")
    paths: dict[str, Path] = {}
    for name, sl in slices.items():
        path = out / f"{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["text", "label"])
            for label in sorted(by_label):
                writer.writerows((t, label) for t in by_label[label][sl])
        paths[name] = path
    return paths
