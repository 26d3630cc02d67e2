"""Embedding datasets: container, binary file format, and splits.

Datasets are flat arrays of float32 feature vectors with int32 labels,
where -1 marks an open (out of category) sample and is only legal in
test splits. On disk a dataset is a little-endian binary file: the
8-byte magic ``ANSEMB01``, u32 feature dim, u32 category count, u64
record count, then one ``[i32 label][dim x f32]`` record per sample.
A ``<stem>.labels.json`` sidecar holds the category names as a bare
JSON array whose indices are the label ids.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ShapeError, ValidationError
from .nn import write_json_atomic

MAGIC = b"ANSEMB01"
_HEADER = struct.Struct("<8sIIQ")
OPEN_LABEL = -1
SPLIT_TAGS = ("train", "val", "test")


@dataclass
class EmbeddingDataset:
    """Feature matrix, labels, and category names for one split."""

    features: np.ndarray
    labels: np.ndarray
    vocab: tuple[str, ...]
    split_tag: str = "test"

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        self.vocab = tuple(str(v) for v in self.vocab)
        if self.split_tag not in SPLIT_TAGS:
            raise ValidationError(f"split tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}")
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise ShapeError(f"need at least one sample and one dimension, got {self.features.shape}")
        if self.labels.shape != (n,):
            raise ShapeError(f"labels shape {self.labels.shape} does not match {n} samples")
        if not np.isfinite(self.features).all():
            raise NumericError("features contain non-finite values")
        if len(self.vocab) < 1:
            raise ValidationError("vocab must name at least one category")
        lo = OPEN_LABEL if self.split_tag == "test" else 0
        if self.labels.min() < lo or self.labels.max() >= len(self.vocab):
            raise ValidationError(
                f"labels must lie in [{lo}, {len(self.vocab) - 1}] for a "
                f"{self.split_tag} split"
            )

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_categories(self) -> int:
        return len(self.vocab)

    def features_for(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]

    def category_counts(self) -> np.ndarray:
        """Samples per known category, open samples excluded."""
        counts = np.zeros(len(self.vocab), dtype=np.int64)
        known = self.labels >= 0
        np.add.at(counts, self.labels[known], 1)
        return counts


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".labels.json")


def save_dataset(dataset: EmbeddingDataset, path: str | Path) -> None:
    """Write the binary file and its sidecar atomically."""
    path = Path(path)
    n, d = dataset.features.shape
    rec = np.dtype([("label", "<i4"), ("feat", "<f4", (d,))])
    arr = np.empty(n, dtype=rec)
    arr["label"] = dataset.labels
    arr["feat"] = dataset.features

    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(_HEADER.pack(MAGIC, d, len(dataset.vocab), n))
            f.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    write_json_atomic(list(dataset.vocab), _sidecar_path(path))


def _infer_split_tag(path: Path) -> str:
    stem = path.stem.lower()
    for tag in SPLIT_TAGS:
        if stem == tag or stem.startswith(tag + "_") or stem.endswith("_" + tag):
            return tag
    return "test"


def load_dataset(path: str | Path, split_tag: str | None = None) -> EmbeddingDataset:
    """Read a binary dataset plus sidecar.

    The split tag is inferred from the file stem when not given; files
    that look like neither train nor val are treated as test, the only
    split where the open label is legal.
    """
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise OSError(f"{path}: file shorter than the {_HEADER.size}-byte header")
        magic, d, num_cats, n = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = f.read()
    expected = n * (4 + 4 * d)
    if len(payload) != expected:
        raise OSError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    rec = np.dtype([("label", "<i4"), ("feat", "<f4", (d,))])
    arr = np.frombuffer(payload, dtype=rec)

    sidecar = _sidecar_path(path)
    try:
        cats = json.loads(sidecar.read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: missing sidecar {sidecar.name}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sidecar}: not valid JSON: {exc}") from None
    if not isinstance(cats, list) or len(cats) != num_cats:
        raise FormatError(
            f"{sidecar}: expected a JSON array of {num_cats} category names"
        )

    return EmbeddingDataset(
        features=arr["feat"].copy(),
        labels=arr["label"].copy(),
        vocab=tuple(cats),
        split_tag=split_tag if split_tag is not None else _infer_split_tag(path),
    )


@dataclass(frozen=True)
class OpenWorldSplit:
    """Record of which original categories were kept as known."""

    known_ratio: float
    seed: int
    known_category_ids: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "known_ratio": self.known_ratio,
            "seed": self.seed,
            "known_category_ids": list(self.known_category_ids),
        }


def make_open_world_split(
    train: EmbeddingDataset,
    val: EmbeddingDataset,
    test: EmbeddingDataset,
    known_ratio: float,
    seed: int = 0,
) -> tuple[EmbeddingDataset, EmbeddingDataset, EmbeddingDataset, OpenWorldSplit]:
    """Keep a random fraction of categories as known, relabel the rest.

    Chosen categories are relabeled densely in their original order.
    Train and val drop the unknown categories entirely; test keeps every
    sample, remapping unknown ones to the open label.
    """
    if not 0 < known_ratio <= 1:
        raise ValidationError(f"known_ratio must be in (0, 1], got {known_ratio}")
    if train.vocab != val.vocab or train.vocab != test.vocab:
        raise ValidationError("train, val, and test must share one vocab")

    num_cats = train.num_categories
    k = max(1, int(np.floor(known_ratio * num_cats + 0.5)))
    rng = np.random.default_rng(seed)
    known_ids = tuple(sorted(int(i) for i in rng.permutation(num_cats)[:k]))
    mapping = np.full(num_cats, OPEN_LABEL, dtype=np.int32)
    for dense, orig in enumerate(known_ids):
        mapping[orig] = dense
    new_vocab = tuple(train.vocab[i] for i in known_ids)

    def remap(ds: EmbeddingDataset, keep_open: bool) -> EmbeddingDataset:
        open_rows = ds.labels == OPEN_LABEL
        labels = np.where(open_rows, OPEN_LABEL, mapping[np.where(open_rows, 0, ds.labels)])
        if keep_open:
            return EmbeddingDataset(ds.features, labels, new_vocab, ds.split_tag)
        mask = labels >= 0
        if not mask.any():
            raise ValidationError(f"no samples left in {ds.split_tag} after split")
        return EmbeddingDataset(ds.features[mask], labels[mask], new_vocab, ds.split_tag)

    return (
        remap(train, keep_open=False),
        remap(val, keep_open=False),
        remap(test, keep_open=True),
        OpenWorldSplit(known_ratio, seed, known_ids),
    )


@dataclass(frozen=True)
class ClusterSpec:
    """One diagonal Gaussian cluster of the synthetic mixture."""

    mean: tuple[float, ...]
    cov_diag: tuple[float, ...]
    count: int
    known: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))
        object.__setattr__(self, "cov_diag", tuple(float(x) for x in self.cov_diag))
        if len(self.mean) != len(self.cov_diag):
            raise ValidationError("mean and cov_diag lengths differ")
        if any(c <= 0 for c in self.cov_diag):
            raise ValidationError("cov_diag entries must be positive")
        if self.count < 1:
            raise ValidationError(f"cluster count must be >= 1, got {self.count}")
        if self.known and self.count < 10:
            raise ValidationError(
                f"known clusters need >= 10 samples for a non-empty val "
                f"split, got {self.count}"
            )


@dataclass(frozen=True)
class SyntheticSpec:
    """Mixture description: known clusters become categories split
    80/10/10, non-known clusters appear only in test, labeled -1."""

    clusters: tuple[ClusterSpec, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not any(c.known for c in self.clusters):
            raise ValidationError("need at least one known cluster")
        if all(c.known for c in self.clusters):
            raise ValidationError("need at least one non-known cluster")
        dims = {len(c.mean) for c in self.clusters}
        if len(dims) != 1:
            raise ValidationError(f"clusters have mixed dimensions {sorted(dims)}")

    @property
    def dim(self) -> int:
        return len(self.clusters[0].mean)

    def to_dict(self) -> dict:
        return {
            "clusters": [
                {
                    "mean": list(c.mean),
                    "cov_diag": list(c.cov_diag),
                    "count": c.count,
                    "known": c.known,
                }
                for c in self.clusters
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        try:
            clusters = tuple(
                ClusterSpec(c["mean"], c["cov_diag"], int(c["count"]), bool(c["known"]))
                for c in obj["clusters"]
            )
            return cls(clusters=clusters, seed=int(obj.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad synthetic spec: {exc}") from None


def generate_synthetic(
    spec: SyntheticSpec,
) -> tuple[EmbeddingDataset, EmbeddingDataset, EmbeddingDataset]:
    """Draw the mixture deterministically from the spec's seed.

    Draws are cluster-major in spec order and each known cluster's first
    80% of rows go to train, next 10% to val, rest to test, so output
    bytes depend only on the spec.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    parts: dict[str, list[np.ndarray]] = {t: [] for t in SPLIT_TAGS}
    labels: dict[str, list[np.ndarray]] = {t: [] for t in SPLIT_TAGS}
    next_label = 0
    for cluster in spec.clusters:
        std = np.sqrt(np.asarray(cluster.cov_diag))
        draws = np.asarray(cluster.mean) + rng.standard_normal(
            (cluster.count, len(cluster.mean))
        ) * std
        if not cluster.known:
            parts["test"].append(draws)
            labels["test"].append(np.full(cluster.count, OPEN_LABEL, dtype=np.int32))
            continue
        n_train = int(0.8 * cluster.count)
        n_val = int(0.1 * cluster.count)
        for tag, chunk in (
            ("train", draws[:n_train]),
            ("val", draws[n_train : n_train + n_val]),
            ("test", draws[n_train + n_val :]),
        ):
            parts[tag].append(chunk)
            labels[tag].append(np.full(len(chunk), next_label, dtype=np.int32))
        next_label += 1

    vocab = tuple(f"cat{i:02d}" for i in range(next_label))
    out = []
    for tag in SPLIT_TAGS:
        out.append(
            EmbeddingDataset(
                features=np.concatenate(parts[tag]),
                labels=np.concatenate(labels[tag]),
                vocab=vocab,
                split_tag=tag,
            )
        )
    return out[0], out[1], out[2]


@dataclass(frozen=True)
class CategoryStats:
    mean: np.ndarray
    var: np.ndarray
    count: int


def category_stats(dataset: EmbeddingDataset, label: int) -> CategoryStats:
    """Mean and unbiased per-dimension variance of one category. A lone
    sample gets zero variance rather than a divide-by-zero."""
    if not 0 <= label < dataset.num_categories:
        raise ValidationError(
            f"label {label} outside [0, {dataset.num_categories - 1}]"
        )
    rows = dataset.features_for(label).astype(np.float64)
    if rows.shape[0] == 0:
        raise ValidationError(f"category {label} has no samples")
    mean = rows.mean(axis=0)
    var = rows.var(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(dataset.dim)
    return CategoryStats(mean=mean, var=var, count=rows.shape[0])
