"""Sentence-embedding extraction for the open-world training engine."""

from .data import TextDataset, label_ids, label_vocabulary, read_csv_dataset
from .embfile import read_embedding_file, write_embedding_file
from .encoder import encode, fine_tune, load_encoder
from .fetch import BENCHMARKS, fetch_benchmark

__version__ = "0.1.0"

__all__ = [
    "BENCHMARKS",
    "TextDataset",
    "encode",
    "fetch_benchmark",
    "fine_tune",
    "label_ids",
    "label_vocabulary",
    "load_encoder",
    "read_csv_dataset",
    "read_embedding_file",
    "write_embedding_file",
]
