"""Command-line surface over the pipeline stages.

One subcommand per stage (synthesis, split, the two training stages,
evaluation) plus the two standing experiments (mode ablation, radius
sweep) and the numerical oracles. Every artifact embeds the resolved
configuration and seed, outputs are written atomically, and reruns with
identical flags produce byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .data import (
    EmbeddingDataset,
    SyntheticSpec,
    category_stats,
    generate_synthetic,
    load_dataset,
    make_open_world_split,
    save_dataset,
)
from .errors import FormatError, NumericError, ValidationError
from .fixtures import standard_spec
from .known import KnownTrainConfig, load_known, save_known, train_known
from .metrics import evaluate
from .nn import write_json_atomic
from .openworld import (
    OvrTrainConfig,
    infer,
    load_open_world,
    save_open_world,
    train_ovr,
)
from .oracles import run_gradient_cases, run_projection_cases, run_prop1_cases
from .sampler import MODES, AnsConfig, estimate_radius_bound

CSV_COLUMNS = (
    "dataset", "mode", "r", "gamma", "lambda", "seed",
    "accuracy", "f1_macro", "f1_open", "f1_known",
)
SWEEP_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_NUMERIC = 5


def _write_text_atomic(text: str, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None


def _load_labels_json(path: str | Path) -> np.ndarray:
    obj = _load_json(path)
    if not isinstance(obj, list):
        raise FormatError(f"{path}: expected a JSON array of integer labels")
    return np.asarray(obj, dtype=np.int64)


def _load_splits(args) -> tuple[EmbeddingDataset, ...]:
    return tuple(
        load_dataset(getattr(args, tag), split_tag=tag)
        for tag in ("train", "val", "test")
        if getattr(args, tag, None) is not None
    )


def _mean_radius_bound(train: EmbeddingDataset) -> float:
    bounds = [
        estimate_radius_bound(category_stats(train, m).var)
        for m in range(train.num_categories)
    ]
    return float(np.mean(bounds))


def _resolve_ans_config(args, train: EmbeddingDataset) -> AnsConfig:
    """Precedence: explicit flags, then --config JSON, then defaults.
    A radius left unset resolves to the mean per-category distance bound
    estimated from the training data."""
    base: dict = {}
    if getattr(args, "config", None):
        obj = _load_json(args.config)
        if not isinstance(obj, dict):
            raise FormatError(f"{args.config}: expected a JSON object")
        base = dict(obj.get("ans_config", obj))
    overrides = {
        "mode": getattr(args, "mode", None),
        "radius": getattr(args, "radius", None),
        "gamma": getattr(args, "gamma", None),
        "lambda": getattr(args, "lambda_", None),
        "ascent_steps": getattr(args, "steps", None),
        "step_size": getattr(args, "eta", None),
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    if base.get("radius") is None:
        base["radius"] = _mean_radius_bound(train)
    return AnsConfig.from_dict(base)


def _dataset_name(train_path: str) -> str:
    path = Path(train_path)
    stem = path.stem
    for suffix in ("_train", "-train"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    if stem == "train":
        return path.resolve().parent.name or "dataset"
    return stem


def _metrics_row(name: str, mode: str, ans: AnsConfig, seed: int, report) -> str:
    return ",".join(
        [
            name,
            mode,
            f"{ans.radius:.6g}",
            f"{ans.gamma:.6g}",
            f"{ans.lam:.6g}",
            str(seed),
            f"{report.accuracy:.6f}",
            f"{report.f1_macro:.6f}",
            f"{report.f1_open:.6f}",
            f"{report.f1_known:.6f}",
        ]
    )


def _train_and_score(train, val, test, known, ans: AnsConfig, seed: int):
    model, _ = train_ovr(train, val, known, ans, OvrTrainConfig(seed=seed))
    preds = infer(model, test.features.astype(np.float64))
    return evaluate(preds, test.labels, num_known=train.num_categories)


def cmd_gen_synth(args) -> int:
    if args.config:
        obj = _load_json(args.config)
        if not isinstance(obj, dict):
            raise FormatError(f"{args.config}: expected a JSON object")
        spec = SyntheticSpec.from_dict(obj)
    else:
        spec = standard_spec()
    if args.seed is not None:
        obj = spec.to_dict()
        obj["seed"] = args.seed
        spec = SyntheticSpec.from_dict(obj)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ("train.emb", "val.emb", "test.emb")
    for name, dataset in zip(names, generate_synthetic(spec)):
        save_dataset(dataset, out_dir / name)
    write_json_atomic(
        {
            "run_config": {"command": "gen-synth", "seed": spec.seed,
                           "spec_path": args.config},
            "spec": spec.to_dict(),
            "files": list(names),
        },
        out_dir / "synth_manifest.json",
    )
    return 0


def cmd_split(args) -> int:
    seed = 0 if args.seed is None else args.seed
    train, val, test = _load_splits(args)
    new_train, new_val, new_test, split = make_open_world_split(
        train, val, test, args.known_ratio, seed
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, dataset in (
        ("train.emb", new_train), ("val.emb", new_val), ("test.emb", new_test)
    ):
        save_dataset(dataset, out_dir / name)
    write_json_atomic(
        {
            "run_config": {
                "command": "split",
                "known_ratio": args.known_ratio,
                "seed": seed,
                "inputs": [args.train, args.val, args.test],
            },
            "split": split.to_dict(),
            "known_vocab": list(new_train.vocab),
        },
        out_dir / "split_manifest.json",
    )
    return 0


def cmd_train_known(args) -> int:
    cfg = KnownTrainConfig()
    if args.config:
        obj = _load_json(args.config)
        if not isinstance(obj, dict):
            raise FormatError(f"{args.config}: expected a JSON object")
        cfg = KnownTrainConfig.from_dict(obj)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    train = load_dataset(args.train, split_tag="train")
    val = load_dataset(args.val, split_tag="val")
    clf = train_known(train, val, cfg)
    save_known(
        clf,
        args.out,
        extra={
            "run_config": {
                "command": "train-known",
                "train": args.train,
                "val": args.val,
                "config": cfg.to_dict(),
            }
        },
    )
    return 0


def cmd_train_ovr(args) -> int:
    train = load_dataset(args.train, split_tag="train")
    val = load_dataset(args.val, split_tag="val")
    known = load_known(args.known_model)
    ans = _resolve_ans_config(args, train)

    ovr_cfg = OvrTrainConfig()
    if args.config:
        obj = _load_json(args.config)
        if isinstance(obj, dict) and "train_config" in obj:
            ovr_cfg = OvrTrainConfig.from_dict(obj["train_config"])
    if args.seed is not None:
        ovr_cfg = dataclasses.replace(ovr_cfg, seed=args.seed)

    model, trace = train_ovr(train, val, known, ans, ovr_cfg)
    run_config = {
        "command": "train-ovr",
        "train": args.train,
        "val": args.val,
        "known_model": args.known_model,
        "ans_config": ans.to_dict(),
        "train_config": ovr_cfg.to_dict(),
    }
    out = Path(args.out)
    save_open_world(model, out, extra={"run_config": run_config})
    write_json_atomic(
        {"run_config": run_config, **trace.to_dict()},
        out.with_suffix(".trace.json"),
    )
    return 0


def cmd_eval(args) -> int:
    if args.preds or args.golds:
        if not (args.preds and args.golds):
            raise ValidationError("--preds and --golds must be given together")
        preds = _load_labels_json(args.preds)
        golds = _load_labels_json(args.golds)
        report = evaluate(preds, golds)
        run_config = {"command": "eval", "preds": args.preds, "golds": args.golds}
    else:
        if not (args.test and args.model):
            raise ValidationError("eval needs --test and --model (or --preds/--golds)")
        test = load_dataset(args.test, split_tag="test")
        model = load_open_world(args.model)
        if model.vocab != test.vocab:
            raise ValidationError("model and test vocab differ")
        preds = infer(model, test.features.astype(np.float64))
        report = evaluate(preds, test.labels, num_known=len(model.vocab))
        run_config = {"command": "eval", "test": args.test, "model": args.model}

    obj = {"run_config": run_config, **report.to_dict()}
    if args.out:
        write_json_atomic(obj, Path(args.out))
    else:
        print(json.dumps(obj, indent=2))
    return 0


def cmd_ablate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    train, val, test = _load_splits(args)
    ans = _resolve_ans_config(args, train)
    known = train_known(train, val, KnownTrainConfig(seed=seed))
    name = _dataset_name(args.train)

    lines = [",".join(CSV_COLUMNS)]
    for mode in MODES:
        mode_cfg = dataclasses.replace(ans, mode=mode)
        report = _train_and_score(train, val, test, known, mode_cfg, seed)
        lines.append(_metrics_row(name, mode, mode_cfg, seed, report))
    _write_text_atomic("\n".join(lines) + "\n", Path(args.out))
    return 0


def cmd_sweep_radius(args) -> int:
    seed = 0 if args.seed is None else args.seed
    train, val, test = _load_splits(args)
    known = train_known(train, val, KnownTrainConfig(seed=seed))
    name = _dataset_name(args.train)

    bound = _mean_radius_bound(train)
    radii_arg = args.radius
    args.radius = None
    if radii_arg is not None:
        try:
            radii = [float(r) for r in str(radii_arg).split(",") if r.strip()]
        except ValueError:
            raise ValidationError(f"bad radius list {radii_arg!r}") from None
        if not radii or any(r <= 0 for r in radii):
            raise ValidationError(f"bad radius list {radii_arg!r}")
    else:
        radii = [bound * m for m in SWEEP_MULTIPLIERS]

    base = _resolve_ans_config(args, train)
    lines = [",".join(CSV_COLUMNS)]
    none_cfg = dataclasses.replace(base, mode="none")
    report = _train_and_score(train, val, test, known, none_cfg, seed)
    lines.append(_metrics_row(name, "none", none_cfg, seed, report))
    for r in radii:
        cfg = dataclasses.replace(base, radius=r, mode="ascend")
        report = _train_and_score(train, val, test, known, cfg, seed)
        lines.append(_metrics_row(name, "ascend", cfg, seed, report))
    _write_text_atomic("\n".join(lines) + "\n", Path(args.out))
    return 0


def cmd_oracle(args) -> int:
    seed = 0 if args.seed is None else args.seed
    runners = {
        "grad": run_gradient_cases,
        "projection": run_projection_cases,
        "prop1": run_prop1_cases,
    }
    reports = runners[args.which](seed=seed)
    lines = [json.dumps(r.to_dict()) for r in reports]
    for line in lines:
        print(line)
    if args.out:
        _write_text_atomic("\n".join(lines) + "\n", Path(args.out))
    if not all(r.passed for r in reports):
        raise NumericError(f"oracle {args.which} reported a failure")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ansopen",
        description="Open-world classification with synthesized negatives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, *, require=(), optional=(), flags=()):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        for path_flag in require:
            p.add_argument(
                f"--{path_flag}", dest=path_flag.replace("-", "_"), required=True
            )
        for path_flag in optional:
            p.add_argument(f"--{path_flag}", dest=path_flag.replace("-", "_"))
        if "mode" in flags:
            p.add_argument("--mode", choices=MODES)
        if "ans" in flags:
            if "multi-radius" in flags:
                p.add_argument("--radius")
            else:
                p.add_argument("--radius", type=float)
            p.add_argument("--gamma", type=float)
            p.add_argument("--lambda", dest="lambda_", type=float)
            p.add_argument("--steps", type=int)
            p.add_argument("--eta", type=float)
        if "known-ratio" in flags:
            p.add_argument(
                "--known-ratio", dest="known_ratio", type=float, required=True
            )
        p.add_argument("--seed", type=int)
        if "out-required" in flags:
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--out")
        return p

    add("gen-synth", cmd_gen_synth,
        "synthesize benchmark embeddings (standard fixture by default)",
        optional=("config",), flags=("out-required",))
    add("split", cmd_split,
        "re-split embeddings into known categories plus open test samples",
        require=("train", "val", "test"), flags=("known-ratio", "out-required"))
    add("train-known", cmd_train_known,
        "train the C-way known-category classifier",
        require=("train", "val"), optional=("config",), flags=("out-required",))
    add("train-ovr", cmd_train_ovr,
        "train the one-vs-rest open-world heads",
        require=("train", "val", "known-model"), optional=("config",),
        flags=("mode", "ans", "out-required"))
    add("eval", cmd_eval,
        "evaluate an open-world model (or raw prediction files)",
        optional=("test", "model", "preds", "golds"))
    add("ablate", cmd_ablate,
        "run all four training modes and tabulate metrics",
        require=("train", "val", "test"), optional=("config",),
        flags=("mode", "ans", "out-required"))
    add("sweep-radius", cmd_sweep_radius,
        "sweep the shell radius against the no-synthesis baseline",
        require=("train", "val", "test"), optional=("config",),
        flags=("ans", "multi-radius", "out-required"))
    oracle = sub.add_parser("oracle", help="run an independent numerical oracle")
    oracle.set_defaults(func=cmd_oracle)
    oracle.add_argument("which", choices=("grad", "projection", "prop1"))
    oracle.add_argument("--seed", type=int)
    oracle.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"ansopen: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"ansopen: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as exc:
        print(f"ansopen: format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"ansopen: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
