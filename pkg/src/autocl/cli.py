"""Command line entry points: prepare, pretrain, evaluate, visualize.

Every option can come from the command line or from a config file (JSON, or
``key=value`` lines) given via --config; explicit command-line values win.
Unknown config keys are rejected. Each run writes the fully resolved option
set to ``config.resolved.json`` in its output directory, and that file can be
fed back through --config to reproduce the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .augment import AUG_PAIR_CODES
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    FormatError,
    IngestionError,
    IntegrityError,
    SyntheticSpec,
    generate_synthetic,
    import_ucihar,
    load_container,
    save_container,
    split_few_shot,
)
from .evaluation import export_augmentation_views, export_embeddings, finetune
from .losses import CORRELATION_MODES, DENOMINATOR_MODES, LossConfig
from .training import TrainConfig, pretrain_autocl, pretrain_simclr


class UsageError(Exception):
    """Bad flag combination or unusable option value."""


@dataclass(frozen=True)
class _Opt:
    flags: tuple[str, ...]
    dest: str
    kind: type | str  # python type, or "flag"
    default: object = None
    help: str = ""
    choices: tuple | None = None
    required: bool = False


_OPTIONS: dict[str, list[_Opt]] = {
    "prepare": [
        _Opt(("--source",), "source", str, required=True,
             help="'ucihar:<dir>' or 'synthetic:<spec.json>'"),
        _Opt(("--out",), "out", str, required=True, help="output container directory"),
    ],
    "pretrain": [
        _Opt(("--data",), "data", str, required=True, help="input container directory"),
        _Opt(("--out",), "out", str, required=True, help="run output directory"),
        _Opt(("--method",), "method", str, default="autocl",
             choices=("autocl", "simclr"), help="pretraining method"),
        _Opt(("--variant",), "variant", str, choices=("E", "D"),
             help="generator input: E = projection, D = raw window (default E)"),
        _Opt(("--aug",), "aug", str, help="augmentation pair code for simclr, e.g. SP"),
        _Opt(("--batch-size",), "batch_size", int, default=256),
        _Opt(("--lr",), "lr", float, default=1e-3),
        _Opt(("--weight-decay",), "weight_decay", float, default=1e-3),
        _Opt(("--patience",), "patience", int, default=5),
        _Opt(("--epochs",), "epochs", int, default=200, help="epoch budget"),
        _Opt(("--seed",), "seed", int, default=0),
        _Opt(("--tau",), "tau", float, default=0.1, help="contrastive temperature"),
        _Opt(("--cr-weight",), "cr_weight", float, default=1.0),
        _Opt(("--no-sg",), "no_sg", "flag", default=False,
             help="disable the stop-gradient on the first-branch projection"),
        _Opt(("--no-cr",), "no_cr", "flag", default=False,
             help="disable the correlation penalty"),
        _Opt(("--grad-clip",), "grad_clip", float, default=5.0,
             help="generator gradient-norm cap"),
        _Opt(("--no-grad-clip",), "no_grad_clip", "flag", default=False),
        _Opt(("--denominator-mode",), "denominator_mode", str, default="symmetric",
             choices=DENOMINATOR_MODES),
        _Opt(("--correlation-mode",), "correlation_mode", str, default="per_sample",
             choices=CORRELATION_MODES),
    ],
    "evaluate": [
        _Opt(("--checkpoint",), "checkpoint", str, required=True),
        _Opt(("--data",), "data", str, required=True, help="labeled container directory"),
        _Opt(("--out",), "out", str, required=True),
        _Opt(("--fraction",), "fraction", float, default=0.2,
             help="labeled share used for head training"),
        _Opt(("--seed",), "seed", int, default=0),
        _Opt(("--epochs",), "epochs", int, default=100),
        _Opt(("--batch-size",), "batch_size", int, default=128),
        _Opt(("--lr",), "lr", float, default=1e-3),
        _Opt(("--weight-decay",), "weight_decay", float, default=1e-4),
    ],
    "visualize": [
        _Opt(("--checkpoint",), "checkpoint", str, required=True),
        _Opt(("--data",), "data", str, required=True),
        _Opt(("--out",), "out", str, required=True),
        _Opt(("--embeddings",), "embeddings", "flag", default=False,
             help="export per-window embeddings"),
        _Opt(("--aug-views",), "aug_views", "flag", default=False,
             help="export original vs generated windows"),
        _Opt(("-k", "--num-windows"), "k", int, default=3,
             help="windows to sample for --aug-views"),
        _Opt(("--seed",), "seed", int, default=0),
        _Opt(("--use-projection",), "use_projection", "flag", default=False,
             help="export the projection instead of the encoder embedding"),
    ],
}

_COMMAND_HELP = {
    "prepare": "build a windowed dataset container from a source",
    "pretrain": "pretrain an encoder on an unlabeled container",
    "evaluate": "few-shot fine-tune and score a pretrained checkpoint",
    "visualize": "export embeddings or generated views as CSV",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autocl",
        description="Contrastive pretraining for windowed sensor time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _OPTIONS.items():
        p = sub.add_parser(command, help=_COMMAND_HELP[command])
        p.add_argument("--config", default=None,
                       help="JSON or key=value file with option defaults")
        for opt in opts:
            if opt.kind == "flag":
                p.add_argument(*opt.flags, dest=opt.dest, action="store_const",
                               const=True, default=None, help=opt.help)
            else:
                p.add_argument(*opt.flags, dest=opt.dest, type=opt.kind,
                               choices=opt.choices, default=None, help=opt.help)
    return parser


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        return data
    except json.JSONDecodeError:
        pass
    data = {}
    for i, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config file {path}, line {i}: expected key=value")
        key, _, value = line.partition("=")
        try:
            data[key.strip()] = json.loads(value.strip())
        except json.JSONDecodeError:
            data[key.strip()] = value.strip()
    return data


def _resolve(args: argparse.Namespace) -> dict:
    opts = _OPTIONS[args.command]
    known = {o.dest for o in opts}
    config = {}
    if args.config is not None:
        config = _load_config_file(args.config)
        command = config.pop("command", None)
        if command is not None and command != args.command:
            raise UsageError(
                f"config file is for command {command!r}, not {args.command!r}"
            )
        unknown = set(config) - known
        if unknown:
            raise UsageError(
                f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}"
            )
    resolved = {}
    for opt in opts:
        value = getattr(args, opt.dest)
        if value is None and opt.dest in config:
            value = config[opt.dest]
            if opt.kind == "flag":
                value = bool(value)
            elif value is not None and not isinstance(value, opt.kind):
                try:
                    value = opt.kind(value)
                except (TypeError, ValueError) as exc:
                    raise UsageError(f"config key {opt.dest}: {exc}") from exc
            if opt.choices is not None and value is not None and value not in opt.choices:
                raise UsageError(
                    f"config key {opt.dest}: {value!r} not in {opt.choices}"
                )
        if value is None:
            value = opt.default
        if value is None and opt.required:
            raise UsageError(f"missing required option --{opt.dest.replace('_', '-')}")
        resolved[opt.dest] = value
    return resolved


def _write_resolved(resolved: dict, command: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.resolved.json", "w", encoding="utf-8") as fh:
        json.dump({"command": command, **resolved}, fh, indent=2)
        fh.write("\n")


def _run_prepare(resolved: dict) -> int:
    source = resolved["source"]
    scheme, sep, location = source.partition(":")
    if not sep or scheme not in ("ucihar", "synthetic") or not location:
        raise UsageError(
            f"source must be 'ucihar:<dir>' or 'synthetic:<spec.json>', got {source!r}"
        )
    if scheme == "ucihar":
        dataset = import_ucihar(location)
    else:
        spec_path = Path(location)
        if not spec_path.is_file():
            raise IngestionError(f"missing synthetic spec file: {spec_path}")
        with open(spec_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            spec = SyntheticSpec(**raw)
        except TypeError as exc:
            raise UsageError(f"bad synthetic spec {spec_path}: {exc}") from exc
        dataset = generate_synthetic(spec)
    out_dir = Path(resolved["out"])
    save_container(dataset, out_dir)
    _write_resolved(resolved, "prepare", out_dir)
    labeled = "labeled" if dataset.labels is not None else "unlabeled"
    print(
        f"wrote {dataset.num_windows} windows "
        f"[{dataset.window_size} x {dataset.num_channels}], {labeled}, "
        f"{dataset.manifest.num_classes} classes -> {out_dir}"
    )
    return 0


def _run_pretrain(resolved: dict) -> int:
    method = resolved["method"]
    if method == "autocl":
        if resolved["aug"] is not None:
            raise UsageError("--aug selects hand-crafted views; only valid with --method simclr")
    else:
        if resolved["aug"] is None:
            raise UsageError(
                f"--method simclr needs --aug, one of {', '.join(AUG_PAIR_CODES)}"
            )
        if resolved["no_sg"] or resolved["no_cr"]:
            raise UsageError("--no-sg/--no-cr are autocl switches; simclr has neither term")
        if resolved["variant"] is not None:
            raise UsageError("--variant selects the generator input; only valid with autocl")
    variant = resolved["variant"] or "E"
    resolved = {**resolved, "variant": variant}
    loss = LossConfig(
        tau=resolved["tau"],
        cr_enabled=not resolved["no_cr"],
        cr_weight=resolved["cr_weight"],
        sg_enabled=not resolved["no_sg"],
        denominator_mode=resolved["denominator_mode"],
        correlation_mode=resolved["correlation_mode"],
    )
    cfg = TrainConfig(
        batch_size=resolved["batch_size"],
        lr=resolved["lr"],
        weight_decay=resolved["weight_decay"],
        patience=resolved["patience"],
        max_epochs=resolved["epochs"],
        seed=resolved["seed"],
        method=method,
        variant=variant,
        aug_pair=resolved["aug"],
        grad_clip=None if resolved["no_grad_clip"] else resolved["grad_clip"],
        loss=loss,
    )
    dataset = load_container(resolved["data"])
    out_dir = Path(resolved["out"])
    _write_resolved(resolved, "pretrain", out_dir)
    runner = pretrain_autocl if method == "autocl" else pretrain_simclr
    ckpt = runner(dataset, cfg, log_path=out_dir / "train_log.jsonl")
    save_checkpoint(ckpt, out_dir / "checkpoint.bin")
    best = min(rec["loss"] for rec in ckpt.history)
    print(
        f"{method} pretraining: {len(ckpt.history)} epochs, best loss {best:.6f} "
        f"-> {out_dir / 'checkpoint.bin'}"
    )
    return 0


def _run_evaluate(resolved: dict) -> int:
    ckpt = load_checkpoint(resolved["checkpoint"])
    dataset = load_container(resolved["data"])
    if dataset.labels is None:
        raise ValueError(f"container {resolved['data']} has no labels; cannot evaluate")
    tune, test = split_few_shot(dataset, resolved["fraction"], resolved["seed"])
    out_dir = Path(resolved["out"])
    _write_resolved(resolved, "evaluate", out_dir)
    _, report = finetune(
        ckpt,
        tune,
        test,
        epochs=resolved["epochs"],
        batch_size=resolved["batch_size"],
        lr=resolved["lr"],
        weight_decay=resolved["weight_decay"],
        seed=resolved["seed"],
    )
    payload = {
        "checkpoint": str(resolved["checkpoint"]),
        "data": str(resolved["data"]),
        "fraction": resolved["fraction"],
        "seed": resolved["seed"],
        "num_tune_windows": tune.num_windows,
        "num_test_windows": test.num_windows,
        **report.to_dict(),
    }
    with open(out_dir / "eval_report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    class_names = dataset.manifest.class_names or [
        str(i) for i in range(report.confusion.shape[0])
    ]
    with open(out_dir / "confusion.csv", "w", encoding="utf-8") as fh:
        fh.write("true_class," + ",".join(f"pred_{n}" for n in class_names) + "\n")
        for name, row in zip(class_names, report.confusion):
            fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
    print(f"top-10 mean test accuracy: {report.top10_mean_accuracy:.4f} -> {out_dir}")
    return 0


def _run_visualize(resolved: dict) -> int:
    if not resolved["embeddings"] and not resolved["aug_views"]:
        raise UsageError("nothing to export: pass --embeddings and/or --aug-views")
    ckpt = load_checkpoint(resolved["checkpoint"])
    dataset = load_container(resolved["data"])
    out_dir = Path(resolved["out"])
    _write_resolved(resolved, "visualize", out_dir)
    written = []
    if resolved["embeddings"]:
        path = out_dir / "embeddings.csv"
        export_embeddings(ckpt, dataset, path, use_projection=resolved["use_projection"])
        written.append(path)
    if resolved["aug_views"]:
        path = out_dir / "aug_views.csv"
        export_augmentation_views(ckpt, dataset, resolved["k"], path, seed=resolved["seed"])
        written.append(path)
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


_RUNNERS = {
    "prepare": _run_prepare,
    "pretrain": _run_pretrain,
    "evaluate": _run_evaluate,
    "visualize": _run_visualize,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        resolved = _resolve(args)
        return _RUNNERS[args.command](resolved)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, FormatError, IntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, NotADirectoryError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
