"""Experiment runner.

Subcommands: ``gen-data``, ``train``, ``retrain``, ``finetune``, ``eval``,
``map``, ``reproduce``.  Every option can also come from a JSON config file
(flat per-section objects: dataset/model/quant/train/eval); command-line
flags override file values, which override defaults.  All artifact paths
are relative to ``--out-dir``.  ``QDNN_LAB_THREADS`` caps the worker pool
used by ``reproduce``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .data import Dataset, DatasetSpec, generate_eval_set, generate_training_set, load_dataset, save_dataset
from .errors import QdnnLabError
from .checkpoint import load_checkpoint, save_checkpoint
from .evalviz import (
    REPORT_HEADER,
    append_report_row,
    evaluate_accuracy,
    predict_map,
    render_dataset,
    render_map,
)
from .models import ModelConfig, build_fcdnn
from .quant import QuantSpec
from .rng import RandomSource
from .train import (
    CLRSchedule,
    TrainConfig,
    finetune_clr,
    pretrain_defaults,
    pretrain_float,
    pretrain_recipe,
    retrain_defaults,
    retrain_quantized,
    retrain_recipe,
)

FULL_WINDOW = (-1.1, 1.1, -1.1, 1.1)
QUARTER_WINDOW = (0.0, 1.1, -1.1, 0.0)  # bottom-right quarter

_DATASET_KEYS = ("r", "ring_count", "points_per_semicircle", "subsamples_per_core", "noise_sigma", "seed")
_MODEL_KEYS = ("width", "depth", "residual")
_QUANT_KEYS = ("weight_bits", "activation_bits", "quantize_shortcut")
_TRAIN_KEYS = ("epochs", "batch_size", "lr", "momentum", "lip_weight", "seed", "eval_density")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise QdnnLabError(f"{path}: config root must be an object")
    return cfg


def _section(config: dict, name: str, keys: tuple[str, ...], overrides: dict) -> dict:
    """flag > file > default; unknown file keys are rejected."""
    out: dict = {}
    file_section = config.get(name, {})
    unknown = set(file_section) - set(keys)
    if unknown:
        raise QdnnLabError(f"config section {name!r} has unknown keys: {sorted(unknown)}")
    out.update(file_section)
    for key in keys:
        value = overrides.get(key)
        if value is not None:
            out[key] = value
    return out


def _dataset_spec(args, config) -> DatasetSpec:
    values = _section(
        config,
        "dataset",
        _DATASET_KEYS,
        {
            "r": args.r,
            "ring_count": args.rings,
            "points_per_semicircle": args.points_per_semicircle,
            "subsamples_per_core": args.subsamples,
            "noise_sigma": args.noise_sigma,
            "seed": args.data_seed,
        },
    )
    return DatasetSpec(**values)


def _model_config(args, config) -> ModelConfig:
    values = _section(
        config,
        "model",
        _MODEL_KEYS,
        {"width": args.width, "depth": args.depth, "residual": args.residual},
    )
    if "width" not in values or "depth" not in values:
        raise QdnnLabError("model width and depth are required (flags or config file)")
    values.setdefault("residual", False)
    return ModelConfig(**values)


def _quant_spec(args, config) -> QuantSpec:
    values = _section(
        config,
        "quant",
        _QUANT_KEYS,
        {
            "weight_bits": args.wbits,
            "activation_bits": args.abits,
            "quantize_shortcut": args.quantize_shortcut,
        },
    )
    values.setdefault("quantize_shortcut", True)
    return QuantSpec(**values)


def _train_config(args, config, defaults: TrainConfig) -> TrainConfig:
    values = _section(
        config,
        "train",
        _TRAIN_KEYS,
        {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "momentum": args.momentum,
            "lip_weight": args.lip,
            "seed": args.seed,
            "eval_density": args.eval_density,
        },
    )
    merged = {key: getattr(defaults, key) for key in _TRAIN_KEYS}
    merged.update(values)
    return TrainConfig(
        milestones=defaults.milestones, decay_factor=defaults.decay_factor, **merged
    )


def _out_path(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _load_data(args) -> Dataset:
    return load_dataset(os.path.join(args.out_dir, args.data))


def _quant_tag(spec: QuantSpec) -> str:
    return spec.tag()


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    config = _load_config(args.config)
    spec = _dataset_spec(args, config)
    dataset = generate_training_set(spec)
    save_dataset(_out_path(args, args.data_out), dataset)
    print(f"core={spec.core_count} total={len(dataset)}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    dataset = _load_data(args)
    model_config = _model_config(args, config)
    train_config = _train_config(args, config, pretrain_defaults())
    net = build_fcdnn(model_config, RandomSource(train_config.seed).split("init"))
    stem = args.name or f"float_{model_config.name}_s{train_config.seed}"
    hook = _milestone_hook(args, stem)
    trained, log = pretrain_float(net, dataset, train_config, checkpoint_hook=hook)
    extra = {
        "kind": "float",
        "final_accuracy": log.final_accuracy,
        "seed": train_config.seed,
        "epochs": train_config.epochs,
    }
    save_checkpoint(_out_path(args, stem + ".ckpt.json"), trained, extra)
    log.to_csv(_out_path(args, stem + ".metrics.csv"))
    print(f"checkpoint={stem}.ckpt.json final_accuracy={log.final_accuracy:.4f}")
    return 0


def cmd_retrain(args) -> int:
    config = _load_config(args.config)
    dataset = _load_data(args)
    net, _ = load_checkpoint(os.path.join(args.out_dir, args.checkpoint))
    quant_spec = _quant_spec(args, config)
    train_config = _train_config(args, config, retrain_defaults())
    stem = args.name or f"{_quant_tag(quant_spec)}_{net.config.name}_s{train_config.seed}"
    hook = _milestone_hook(args, stem)
    trained, log = retrain_quantized(net, dataset, quant_spec, train_config, checkpoint_hook=hook)
    extra = {
        "kind": "retrained",
        "final_accuracy": log.final_accuracy,
        "seed": train_config.seed,
        "epochs": train_config.epochs,
        "lip_weight": train_config.lip_weight,
    }
    save_checkpoint(_out_path(args, stem + ".ckpt.json"), trained, extra)
    log.to_csv(_out_path(args, stem + ".metrics.csv"))
    print(f"checkpoint={stem}.ckpt.json final_accuracy={log.final_accuracy:.4f}")
    return 0


def cmd_finetune(args) -> int:
    config = _load_config(args.config)
    dataset = _load_data(args)
    net, _ = load_checkpoint(os.path.join(args.out_dir, args.checkpoint))
    train_config = _train_config(args, config, retrain_defaults())
    steps_per_epoch = (len(dataset) + train_config.batch_size - 1) // train_config.batch_size
    schedule = CLRSchedule(base_lr=args.base_lr, cycle_period=args.cycle_epochs * steps_per_epoch)
    tag = _quant_tag(net.quant.spec) if net.quant is not None else "float"
    stem = args.name or f"clr_{tag}_{net.config.name}_s{train_config.seed}"
    hook = _milestone_hook(args, stem, unit="cycle")
    best, log = finetune_clr(net, dataset, schedule, args.cycles, train_config, checkpoint_hook=hook)
    extra = {
        "kind": "clr-finetuned",
        "cycles": args.cycles,
        "cycle_period": schedule.cycle_period,
        "iterations": log.final_iteration,
        "seed": train_config.seed,
    }
    save_checkpoint(_out_path(args, stem + ".ckpt.json"), best, extra)
    log.to_csv(_out_path(args, stem + ".metrics.csv"))
    print(f"checkpoint={stem}.ckpt.json iterations={log.final_iteration}")
    return 0


def _milestone_hook(args, stem: str, unit: str = "epoch"):
    def hook(index: int, net) -> None:
        save_checkpoint(_out_path(args, f"{stem}.{unit}{index}.ckpt.json"), net, {"kind": "milestone"})

    return hook


def _want_quant_view(net, flag: bool | None) -> bool:
    if flag is None:
        return net.quant is not None
    return flag


def cmd_eval(args) -> int:
    dataset = _load_data(args)
    net, _ = load_checkpoint(os.path.join(args.out_dir, args.checkpoint))
    points, labels = generate_eval_set(dataset.spec, args.density)
    quant_view = _want_quant_view(net, args.quant_view)
    accuracy = evaluate_accuracy(net, points, labels, quant_view=quant_view)
    spec = net.quant.spec if (quant_view and net.quant is not None) else QuantSpec()
    append_report_row(
        _out_path(args, args.report),
        model=net.config.name,
        width=net.config.width,
        depth=net.config.depth,
        residual=net.config.residual,
        weight_bits=spec.weight_bits,
        activation_bits=spec.activation_bits,
        accuracy_pct=accuracy,
        seed=args.seed if args.seed is not None else 0,
    )
    print(f"accuracy={accuracy:.4f}")
    return 0


def cmd_map(args) -> int:
    net, _ = load_checkpoint(os.path.join(args.out_dir, args.checkpoint))
    window = QUARTER_WINDOW if args.quarter else tuple(args.window)
    pmap = predict_map(
        net, window, args.res, quant_view=_want_quant_view(net, args.quant_view)
    )
    out = args.map_out or "map.ppm"
    render_map(pmap, _out_path(args, out), probability_shading=args.prob_shading)
    print(f"map={out} window={window} res={args.res}")
    return 0


# ------------------------------------------------------------- reproduce

FIGURES = {
    "fig1": {"models": [(128, 3), (128, 4), (256, 3)], "residual": False, "quants": []},
    "fig2": {
        "models": [(128, 4), (256, 4), (128, 8)],
        "residual": False,
        "quants": [(2, None), (None, 2), (2, 2)],
    },
    "fig3": {
        "models": [(128, 4), (128, 8)],
        "residual": True,
        "quants": [(2, None), (None, 2), (2, 2)],
    },
}


def _workers() -> int:
    cap = os.environ.get("QDNN_LAB_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return min(4, os.cpu_count() or 1)


def _pretrain_cell(dataset, model_config, train_config):
    net = build_fcdnn(model_config, RandomSource(train_config.seed).split("init"))
    return pretrain_float(net, dataset, train_config)


def cmd_reproduce(args) -> int:
    figure = FIGURES[args.figure]
    dataset_spec = DatasetSpec(seed=args.data_seed)
    dataset = generate_training_set(dataset_spec)
    save_dataset(_out_path(args, f"{args.figure}_train.csv"), dataset)
    eval_points, eval_labels = generate_eval_set(dataset_spec, args.density)

    residual = figure["residual"]
    window = FULL_WINDOW if args.figure == "fig1" else QUARTER_WINDOW

    def pre_cfg(mc):
        over = {"seed": args.seed}
        if args.epochs is not None:
            over["epochs"] = args.epochs
        return pretrain_recipe(mc, **over)

    def re_cfg(mc):
        over = {"seed": args.seed}
        if args.retrain_epochs is not None:
            over["epochs"] = args.retrain_epochs
        return retrain_recipe(mc, **over)

    configs = [ModelConfig(width=w, depth=d, residual=residual) for w, d in figure["models"]]
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        pretrained = list(pool.map(lambda mc: _pretrain_cell(dataset, mc, pre_cfg(mc)), configs))

    rows = []
    if args.figure == "fig1":
        render_dataset(dataset, _out_path(args, "fig1_dataset.ppm"), FULL_WINDOW, args.res)
        for mc, (net, _log) in zip(configs, pretrained):
            accuracy = evaluate_accuracy(net, eval_points, eval_labels)
            pmap = predict_map(net, window, args.res)
            render_map(pmap, _out_path(args, f"fig1_{mc.name}.ppm"))
            save_checkpoint(
                _out_path(args, f"fig1_{mc.name}.ckpt.json"),
                net,
                {"kind": "float", "accuracy": accuracy},
            )
            rows.append((mc, QuantSpec(), accuracy))
    else:
        cells = []
        for mc, (net, _log) in zip(configs, pretrained):
            save_checkpoint(
                _out_path(args, f"{args.figure}_float_{mc.name}.ckpt.json"), net, {"kind": "float"}
            )
            for wbits, abits in figure["quants"]:
                cells.append((mc, net, QuantSpec(weight_bits=wbits, activation_bits=abits)))

        def run_cell(cell):
            mc, net, qspec = cell
            trained, _log = retrain_quantized(net, dataset, qspec, re_cfg(mc))
            accuracy = evaluate_accuracy(trained, eval_points, eval_labels, quant_view=True)
            return trained, accuracy

        with ThreadPoolExecutor(max_workers=_workers()) as pool:
            results = list(pool.map(run_cell, cells))
        for (mc, _net, qspec), (trained, accuracy) in zip(cells, results):
            stem = f"{args.figure}_{mc.name}_{qspec.tag()}"
            pmap = predict_map(trained, window, args.res, quant_view=True)
            render_map(pmap, _out_path(args, stem + ".ppm"))
            save_checkpoint(
                _out_path(args, stem + ".ckpt.json"), trained, {"kind": "retrained", "accuracy": accuracy}
            )
            rows.append((mc, qspec, accuracy))

    summary = _out_path(args, f"{args.figure}_summary.csv")
    with open(summary, "w", newline="") as f:
        f.write(REPORT_HEADER + "\n")
        for mc, qspec, accuracy in rows:
            n_w = "" if qspec.weight_bits is None else qspec.weight_bits
            n_a = "" if qspec.activation_bits is None else qspec.activation_bits
            f.write(
                f"{mc.name},{mc.width},{mc.depth},{int(mc.residual)},{n_w},{n_a},"
                f"{accuracy:.4f},{args.seed}\n"
            )
    print(f"{args.figure}: {len(rows)} cells -> {summary}")
    return 0


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=".", help="directory for all inputs/outputs")
    p.add_argument("--config", default=None, help="JSON config file")


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r", type=float, default=None, help="base ring radius")
    p.add_argument("--rings", type=int, default=None, help="ring count per label")
    p.add_argument("--points-per-semicircle", type=int, default=None)
    p.add_argument("--subsamples", type=int, default=None, help="noisy copies per core sample")
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--data-seed", type=int, default=None, help="dataset generation seed")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--lip", type=float, default=None, help="orthogonality regularizer weight")
    p.add_argument("--seed", type=int, default=None, help="init + shuffle seed")
    p.add_argument("--eval-density", type=float, default=None)
    p.add_argument("--name", default=None, help="output checkpoint/metrics stem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdnn-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the training dataset CSV")
    _add_common(p)
    _add_dataset_flags(p)
    p.add_argument("--data-out", default="train.csv")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="pretrain a float model")
    _add_common(p)
    p.add_argument("--data", default="train.csv")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--residual", action=argparse.BooleanOptionalAction, default=None)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrain", help="quantization-aware retraining")
    _add_common(p)
    p.add_argument("--data", default="train.csv")
    p.add_argument("--checkpoint", required=True, help="pretrained float checkpoint")
    p.add_argument("--wbits", type=int, default=None, help="weight bits")
    p.add_argument("--abits", type=int, default=None, help="activation bits")
    p.add_argument(
        "--quantize-shortcut", action=argparse.BooleanOptionalAction, default=None
    )
    _add_train_flags(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("finetune", help="cyclic-LR fine-tuning of a retrained model")
    _add_common(p)
    p.add_argument("--data", default="train.csv")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--cycle-epochs", type=int, default=8, help="epochs per CLR cycle")
    p.add_argument("--base-lr", type=float, default=1e-3)
    _add_train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="accuracy against the oracle grid")
    _add_common(p)
    p.add_argument("--data", default="train.csv")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--density", type=float, default=100.0)
    p.add_argument("--quant-view", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--report", default="report.csv")
    p.add_argument("--seed", type=int, default=None, help="seed column for the report row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("map", help="render a prediction map as P6 PPM")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--window", type=float, nargs=4, default=list(FULL_WINDOW),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--res", type=int, default=401)
    p.add_argument("--quarter", action="store_true", help="bottom-right quarter window")
    p.add_argument("--quant-view", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--prob-shading", action="store_true")
    p.add_argument("--map-out", default=None)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("reproduce", help="rebuild a figure's model grid end to end")
    _add_common(p)
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None, help="override the per-model recipe")
    p.add_argument("--retrain-epochs", type=int, default=None)
    p.add_argument("--density", type=float, default=100.0)
    p.add_argument("--res", type=int, default=401)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (QdnnLabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
