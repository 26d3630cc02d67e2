"""Text datasets: CSV loading and the label-id convention.

Category names map to dense ids by alphabetical order, so the id
assignment is stable across runs and across machines regardless of row
order in the source file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class TextDataset:
    utterances: list[str]
    labels: list[str]
    split_tag: str = ""

    def __post_init__(self) -> None:
        if len(self.utterances) != len(self.labels):
            raise ValueError(
                f"{len(self.utterances)} utterances vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.utterances)


def read_csv_dataset(
    path: str | Path,
    text_col: str = "text",
    label_col: str = "label",
    split_tag: str = "",
) -> TextDataset:
    """Load a UTF-8 CSV with a header row into a TextDataset.

    Fields may be quoted; labels are stripped of surrounding whitespace,
    utterance text is kept verbatim.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file, expected a header row")
        for col in (text_col, label_col):
            if col not in reader.fieldnames:
                raise ValueError(
                    f"{path}: no column {col!r}, file has {reader.fieldnames}"
                )
        texts: list[str] = []
        labels: list[str] = []
        for i, row in enumerate(reader, start=2):
            text, label = row[text_col], row[label_col]
            if text is None or label is None or not label.strip():
                raise ValueError(f"{path}: line {i}: missing text or label")
            texts.append(text)
            labels.append(label.strip())
    if not texts:
        raise ValueError(f"{path}: no data rows")
    return TextDataset(texts, labels, split_tag=split_tag or path.stem)


def label_vocabulary(labels: list[str]) -> list[str]:
    """Sorted unique category names; index in this list is the label id."""
    return sorted(set(labels))


def label_ids(labels: list[str], vocab: list[str]) -> np.ndarray:
    index = {name: i for i, name in enumerate(vocab)}
    try:
        return np.array([index[lab] for lab in labels], dtype=np.int32)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in vocabulary") from None
