"""Command-line entry points: extract embeddings, fetch benchmarks."""

from __future__ import annotations

import argparse
import sys

from . import data, embfile, encoder, fetch


def cmd_extract(args: argparse.Namespace) -> None:
    dataset = data.read_csv_dataset(args.dataset, args.text_col, args.label_col)
    vocab = data.label_vocabulary(dataset.labels)
    ids = data.label_ids(dataset.labels, vocab)

    tokenizer, model = encoder.load_encoder(args.encoder)
    if args.fine_tune:
        encoder.fine_tune(
            tokenizer,
            model,
            dataset.utterances,
            ids,
            num_classes=len(vocab),
            epochs=args.epochs,
            lr=args.lr,
            max_length=args.max_length,
            seed=args.seed,
        )
        if args.save_encoder:
            model.save_pretrained(args.save_encoder)
            tokenizer.save_pretrained(args.save_encoder)
    features = encoder.encode(
        tokenizer,
        model,
        dataset.utterances,
        batch_size=args.batch_size,
        max_length=args.max_length,
        include_special=not args.exclude_special,
    )
    out = embfile.write_embedding_file(args.out, features, ids, vocab)
    print(f"wrote {len(dataset)} records (d={features.shape[1]}, C={len(vocab)}) to {out}")


def cmd_fetch(args: argparse.Namespace) -> None:
    written = fetch.fetch_benchmark(args.name, args.out, base_url=args.base_url)
    for split in ("train", "val", "test"):
        print(f"{split}: {written[split]}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embextract",
        description="Turn labeled text into embedding files for the open-world trainer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="encode a CSV dataset into an embedding file")
    ex.add_argument("--dataset", required=True, help="input CSV with a header row")
    ex.add_argument("--text-col", default="text")
    ex.add_argument("--label-col", default="label")
    ex.add_argument("--encoder", required=True, help="model name or local directory")
    ex.add_argument("--out", required=True, help="output embedding file path")
    ex.add_argument("--batch-size", type=int, default=32)
    ex.add_argument("--max-length", type=int, default=128)
    ex.add_argument(
        "--exclude-special",
        action="store_true",
        help="drop boundary tokens from the mean instead of averaging over them",
    )
    ex.add_argument(
        "--fine-tune",
        action="store_true",
        help="fine-tune the encoder on the dataset labels before extraction",
    )
    ex.add_argument(
        "--save-encoder",
        metavar="DIR",
        help="with --fine-tune: save the tuned encoder here so other splits "
        "can be extracted in the same feature space",
    )
    ex.add_argument("--epochs", type=int, default=1)
    ex.add_argument("--lr", type=float, default=2e-5)
    ex.add_argument("--seed", type=int, default=0)
    ex.set_defaults(func=cmd_extract)

    fe = sub.add_parser("fetch", help="download a public benchmark as train/val/test CSVs")
    fe.add_argument("--name", required=True, choices=sorted(fetch.BENCHMARKS))
    fe.add_argument("--out", required=True, help="output directory")
    fe.add_argument("--base-url", default=fetch.DEFAULT_BASE_URL, help=argparse.SUPPRESS)
    fe.set_defaults(func=cmd_fetch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"embextract: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
