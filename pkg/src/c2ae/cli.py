"""Command-line entry point: ``c2ae <command> ...`` or ``python -m c2ae``.

Exit codes: 0 success, 1 usage/config/data error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import logging
import sys
import typing

from . import data as data_mod
from . import gradcheck
from .metrics import evaluate
from .model import (
    NumericalError,
    TrainConfig,
    UncalibratedModelError,
    fit,
    load_model,
    nearest_label_neighbors,
    predict_labels,
    predict_scores,
    save_model,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# Keys allowed in a config document besides the TrainConfig fields.
RUN_KEYS = {"data": str, "out": str}


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


def _field_types():
    hints = typing.get_type_hints(TrainConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(TrainConfig)}


def _convert(key, raw, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind is tuple:
            return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                         for v in raw.replace(" ", "").split(",") if v)
        if kind == typing.Optional[int]:
            return None if raw.lower() in ("", "none", "auto") else int(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
    raise ConfigError(f"unsupported type for {key!r}")


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    types = {**_field_types(), **RUN_KEYS}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        if key not in types:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value, types[key])
    return out


def build_run_config(config_path=None, overrides=None):
    """Defaults < config file < explicit overrides. Returns (TrainConfig, extras)."""
    values = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            values.update(parse_config(fh.read()))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    extras = {k: values.pop(k) for k in list(values) if k in RUN_KEYS}
    try:
        return TrainConfig(**values), extras
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _load_data(path):
    try:
        return data_mod.load_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"data file not found: {path}") from None
    except OSError as exc:
        raise UsageError(f"cannot read data file {path}: {exc}") from None
    except data_mod.DatasetFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _check_dims(model, ds):
    if (ds.n_features, ds.n_labels) != (model.n_features, model.n_labels):
        raise UsageError(
            f"dimension mismatch: model expects d={model.n_features}, m={model.n_labels}; "
            f"data has d={ds.n_features}, m={ds.n_labels}"
        )


def cmd_train(args):
    overrides = {"seed": args.seed, "loss_mode": args.loss, "latent_dim": args.latent_dim,
                 "epochs": args.epochs, "alpha": args.alpha, "data": args.data, "out": args.out}
    if args.missing:
        overrides["missing_mode"] = True
    config, extras = build_run_config(args.config, overrides)
    if not extras.get("data") or not extras.get("out"):
        raise UsageError("train needs --data and --out (flag or config key)")
    ds = _load_data(extras["data"])
    model, history = fit(ds, config)
    save_model(model, extras["out"])
    data_mod.atomic_write_text(extras["out"] + ".history.json", history.to_json())
    print(f"trained {config.loss_mode} for {history.n_epochs} epochs; "
          f"best validation micro-F1 {max(history.val_micro_f1):.4f}; model -> {extras['out']}")
    return EXIT_OK


def cmd_eval(args):
    model = _load_model(args.model)
    ds = _load_data(args.data)
    _check_dims(model, ds)
    try:
        pred = predict_labels(model, ds.features, args.threshold)
    except UncalibratedModelError as exc:
        raise UsageError(str(exc)) from None
    known = ds.labels != data_mod.MISSING
    rep = evaluate(pred, ds.binary_labels(), mask=known)
    data_mod.atomic_write_text(args.report, rep.to_json())
    print(" ".join(f"{k}={getattr(rep, k):.4f}" for k in ("c_p", "c_r", "c_f1", "o_p", "o_r", "o_f1")))
    return EXIT_OK


def format_predictions(scores, labels) -> str:
    m = scores.shape[0]
    buf = io.StringIO()
    header = ["instance"] + [f"score_{j}" for j in range(m)] + [f"label_{j}" for j in range(m)]
    buf.write(",".join(header) + "\n")
    for i in range(scores.shape[1]):
        row = [str(i)] + [format(float(v), ".17g") for v in scores[:, i]]
        row += [str(int(v)) for v in labels[:, i]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def cmd_predict(args):
    model = _load_model(args.model)
    ds = _load_data(args.data)
    if ds.n_features != model.n_features:
        raise UsageError(f"dimension mismatch: model expects d={model.n_features}, data has d={ds.n_features}")
    try:
        labels = predict_labels(model, ds.features, args.threshold)
    except UncalibratedModelError as exc:
        raise UsageError(str(exc)) from None
    scores = predict_scores(model, ds.features)
    data_mod.atomic_write_text(args.out, format_predictions(scores, labels))
    return EXIT_OK


def cmd_mask(args):
    ds = _load_data(args.data)
    try:
        masked = data_mod.mask_labels(ds, args.rate, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data_mod.save_dataset(masked, args.out)
    return EXIT_OK


def cmd_synth(args):
    try:
        ds = data_mod.synth_correlated(args.n, args.d, args.m, seed=args.seed)
    except (ValueError, RuntimeError) as exc:
        raise UsageError(str(exc)) from None
    data_mod.save_dataset(ds, args.out)
    return EXIT_OK


def cmd_neighbors(args):
    model = _load_model(args.model)
    try:
        rows = nearest_label_neighbors(model, args.label, args.k)
    except (ValueError, IndexError) as exc:
        raise UsageError(str(exc)) from None
    for j, dist in rows:
        print(f"{j} {format(dist, '.17g')}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.run_suite(args.seed)
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_NUMERIC


def build_parser():
    parser = argparse.ArgumentParser(prog="c2ae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write it with its history")
    p.add_argument("--data", help="training dataset (or `data` in the config)")
    p.add_argument("--config", help="file of `key = value` lines")
    p.add_argument("--out", help="model path (or `out` in the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=("c2ae", "bpmll", "bce"))
    p.add_argument("--missing", action="store_true", help="zero-mean label encoder inputs")
    p.add_argument("--latent-dim", type=int, help="default: half the label count")
    p.add_argument("--epochs", type=int)
    p.add_argument("--alpha", type=float, help="weight of the ranking loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write a metrics report for a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--threshold", type=float, help="override the calibrated threshold")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write per-instance scores and labels as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="override the calibrated threshold")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("mask", help="hide a fraction of known labels")
    p.add_argument("--data", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("synth", help="generate a synthetic correlated-label dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("neighbors", help="nearest labels in the learned latent space")
    p.add_argument("--model", required=True)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
