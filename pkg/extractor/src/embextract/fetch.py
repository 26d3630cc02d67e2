"""Download the public intent benchmarks and convert them to the CSV form.

The three corpora are mirrored in a common research-repo layout: one
directory per dataset holding tab-separated train/dev/test files with
``text`` and ``label`` columns. Fetching converts each split to the
comma-separated form the extractor reads and checks row counts against
the published statistics, warning on mismatch rather than failing, since
upstream files occasionally gain or lose a handful of rows.

CLINC ships out-of-scope rows in its test split; they are dropped here
because openness is regenerated downstream by holding out whole
categories, not by the corpus's own out-of-scope set.
"""

from __future__ import annotations

import csv
import hashlib
import io
import urllib.request
import warnings
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_BASE_URL = (
    "https://raw.githubusercontent.com/thuiar/Adaptive-Decision-Boundary/main/data"
)

# remote split file name -> local split name
_SPLIT_FILES = {"train": "train", "dev": "val", "test": "test"}


@dataclass(frozen=True)
class Benchmark:
    remote_dir: str
    categories: int
    expected_rows: dict[str, int]
    drop_labels: frozenset[str] = frozenset()
    checksums: dict[str, str] = field(default_factory=dict)


BENCHMARKS: dict[str, Benchmark] = {
    "banking": Benchmark(
        remote_dir="banking",
        categories=77,
        expected_rows={"train": 9003, "val": 1000, "test": 3080},
    ),
    "clinc": Benchmark(
        remote_dir="oos",
        categories=150,
        expected_rows={"train": 15000, "val": 3000, "test": 5700},
        drop_labels=frozenset({"oos"}),
    ),
    "stackoverflow": Benchmark(
        remote_dir="stackoverflow",
        categories=20,
        expected_rows={"train": 12000, "val": 2000, "test": 6000},
    ),
}


def _download(url: str, timeout: float = 60.0) -> bytes:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def _convert_tsv(raw: bytes, drop_labels: frozenset[str]) -> list[tuple[str, str]]:
    reader = csv.DictReader(io.StringIO(raw.decode("utf-8")), delimiter="\t")
    if reader.fieldnames is None or not {"text", "label"} <= set(reader.fieldnames):
        raise ValueError(f"expected text/label columns, got {reader.fieldnames}")
    return [
        (row["text"], row["label"])
        for row in reader
        if row["label"] not in drop_labels
    ]


def fetch_benchmark(
    name: str,
    out_dir: str | Path,
    base_url: str = DEFAULT_BASE_URL,
) -> dict[str, Path]:
    """Fetch one benchmark into ``out_dir`` as train/val/test CSV files.

    Returns split name -> written path. Raises KeyError for an unknown
    benchmark name, ValueError on a checksum mismatch, and propagates
    urllib errors on download failure.
    """
    bench = BENCHMARKS[name]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: dict[str, Path] = {}
    for remote, split in _SPLIT_FILES.items():
        url = f"{base_url}/{bench.remote_dir}/{remote}.tsv"
        raw = _download(url)
        want = bench.checksums.get(split)
        if want is not None:
            got = hashlib.sha256(raw).hexdigest()
            if got != want:
                raise ValueError(f"{url}: sha256 {got} != expected {want}")
        rows = _convert_tsv(raw, bench.drop_labels)

        expected = bench.expected_rows[split]
        if len(rows) != expected:
            warnings.warn(
                f"{name} {split}: {len(rows)} rows, published count is {expected}",
                stacklevel=2,
            )
        seen = {label for _, label in rows}
        if len(seen) != bench.categories:
            warnings.warn(
                f"{name} {split}: {len(seen)} categories, published count is "
                f"{bench.categories}",
                stacklevel=2,
            )

        dest = out_dir / f"{split}.csv"
        with dest.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["text", "label"])
            writer.writerows(rows)
        written[split] = dest
    return written
