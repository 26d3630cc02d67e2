"""Writer and reader for the binary embedding format the training engine loads.

Layout, little-endian throughout:

    magic    8 bytes   ASCII "ANSEMB01"
    d        u32       feature dimension
    C        u32       number of known categories
    N        u64       record count
    records  N times   [i32 label][d x f32 features]

Labels index into a sidecar ``<stem>.labels.json`` holding the C category
names as a JSON array; -1 marks open samples and never appears in the
sidecar. The engine rejects files whose payload length disagrees with the
declared N*(4 + 4d), so the writer validates shapes up front rather than
emitting something the other side will refuse.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"ANSEMB01"
_HEADER = struct.Struct("<IIQ")


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("label", "<i4"), ("feat", "<f4", (dim,))])


def _write_atomic(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_embedding_file(
    path: str | Path,
    features: np.ndarray,
    labels: np.ndarray,
    vocab: list[str],
) -> Path:
    """Write features, labels, and the labels sidecar; returns the file path.

    ``features`` must be (N, d) and finite, ``labels`` length N with values
    in [-1, len(vocab)). Both file and sidecar are written atomically.
    """
    path = Path(path)
    feats = np.asarray(features, dtype=np.float32)
    labs = np.asarray(labels, dtype=np.int32)
    if feats.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {feats.shape}")
    if labs.shape != (feats.shape[0],):
        raise ValueError(
            f"labels shape {labs.shape} does not match {feats.shape[0]} rows"
        )
    if not np.isfinite(feats).all():
        raise ValueError("features contain non-finite values")
    if labs.size and (labs.min() < -1 or labs.max() >= len(vocab)):
        raise ValueError(
            f"labels must lie in [-1, {len(vocab)}), got range "
            f"[{labs.min()}, {labs.max()}]"
        )

    n, dim = feats.shape
    records = np.empty(n, dtype=_record_dtype(dim))
    records["label"] = labs
    records["feat"] = feats

    payload = MAGIC + _HEADER.pack(dim, len(vocab), n) + records.tobytes()
    _write_atomic(path, payload)
    sidecar = _sidecar_path(path)
    _write_atomic(sidecar, (json.dumps(list(vocab)) + "\n").encode("utf-8"))
    return path


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.stem + ".labels.json")


def read_embedding_file(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read a file written by :func:`write_embedding_file`.

    Returns (features, labels, vocab). Applies the same validation the
    training engine does: magic, header sanity, exact payload length.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:8]!r}")
    dim, num_cats, count = _HEADER.unpack_from(raw, len(MAGIC))
    body = raw[len(MAGIC) + _HEADER.size :]
    expected = count * (4 + 4 * dim)
    if len(body) != expected:
        raise ValueError(
            f"{path}: payload is {len(body)} bytes, header declares {expected}"
        )
    records = np.frombuffer(body, dtype=_record_dtype(dim))
    vocab = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    if not isinstance(vocab, list) or len(vocab) != num_cats:
        raise ValueError(f"{path}: sidecar does not list {num_cats} categories")
    return records["feat"].copy(), records["label"].copy(), [str(v) for v in vocab]
