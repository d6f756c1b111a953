"""Command line: ``mf-train {pretrain|adapt|fewshot|eval} --config cfg.yaml``.

Each command reads one YAML document. Common blocks:

- ``model``: ``{width, depth}`` (scratch initialization only; a pretrained
  checkpoint fixes the backbone dimensions).
- ``train``: any subset of TrainConfig fields
  (``lr_heads, lr_backbone, lr_calibration_scale, batch_size, epochs,
  weight_decay, seed``).

pretrain:
  ``corpus_dir`` (created via ``generate: {n_stacks, samples_per_stack,
  height, width, seed}`` when no index exists), ``checkpoint_out``.
adapt:
  ``dataset_dir``, ``init`` ("scratch" or a pretrain checkpoint path),
  ``n_hf``/``n_lf`` training-record limits (``n_lf: 0`` = high-fidelity
  only), ``checkpoint_out``, optional ``report_out`` (test-split metrics).
fewshot:
  ``source_checkpoint`` (an adapted model), ``target_dataset_dir``,
  ``n_values``, optional ``epochs`` override, ``report_out``.
eval:
  ``checkpoint``, ``dataset_dir``, ``split`` (default test), ``report_out``.

Metric reports are JSON with the same keys ``thermkit metrics --json``
emits, so the two toolchains' numbers can be compared directly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import corpus as corpus_mod
from . import train as train_mod
from .errors import ConfigError, MfTrainError
from .model import ModelSpec, OperatorModel
from .records import Dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2


def _load_config(path: str) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a YAML mapping")
    return doc


def _train_config(doc: dict) -> train_mod.TrainConfig:
    block = doc.get("train") or {}
    if not isinstance(block, dict):
        raise ConfigError("'train' must be a mapping of TrainConfig fields")
    try:
        return train_mod.TrainConfig(**block)
    except TypeError as exc:
        raise ConfigError(f"bad train block: {exc}") from exc


def _require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"config is missing required key {key!r}")
    return doc[key]


def _write_report(path_value, payload: dict, emit_json: bool) -> None:
    if path_value:
        p = Path(path_value)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if emit_json:
        print(json.dumps(payload, indent=2, sort_keys=True))


def _cmd_pretrain(doc: dict, emit_json: bool) -> int:
    corpus_dir = Path(_require(doc, "corpus_dir"))
    if not (corpus_dir / corpus_mod.INDEX_NAME).exists():
        gen = doc.get("generate")
        if not gen:
            raise ConfigError(
                f"{corpus_dir} has no corpus index and no 'generate' block "
                "was given")
        corpus_mod.generate_diffusion_corpus(corpus_dir, **gen)
    x, y, _ = corpus_mod.load_diffusion_corpus(corpus_dir)
    cfg = _train_config(doc)
    m = doc.get("model") or {}
    model = OperatorModel(ModelSpec(
        in_channels=x.shape[1], out_channels=y.shape[1],
        width=int(m.get("width", 32)), depth=int(m.get("depth", 4))),
        seed=cfg.seed)
    result = train_mod.pretrain(model, x, y, cfg)
    train_mod.save_checkpoint(
        _require(doc, "checkpoint_out"), result.model, stats=None,
        meta={"kind": "pretrain", "init_loss": result.init_loss,
              "curve": result.curve, "config": cfg.to_json()})
    _write_report(doc.get("report_out"),
                  {"init_loss": result.init_loss, "curve": result.curve},
                  emit_json)
    print(f"pretrain: loss {result.init_loss:.4g} -> {result.curve[-1]:.4g} "
          f"over {len(result.curve)} epochs", file=sys.stderr)
    return EXIT_OK


def _split_xy(ds: Dataset, split: str, fidelity: str, limit: int | None,
              stats, channels):
    if limit == 0:
        return None
    samples = ds.load_split(split, fidelity, limit)
    if not samples:
        return None
    return train_mod.build_xy(samples, stats, channels)


def _cmd_adapt(doc: dict, emit_json: bool) -> int:
    ds = Dataset.open(_require(doc, "dataset_dir"))
    stats = ds.norm_stats()
    channels = ds.power_channels
    cfg = _train_config(doc)

    hf = _split_xy(ds, "train", "high", doc.get("n_hf"), stats, channels)
    lf = _split_xy(ds, "train", "low", doc.get("n_lf"), stats, channels)
    if hf is None:
        raise ConfigError("adaptation needs high-fidelity training records")

    init = str(doc.get("init", "scratch"))
    m = doc.get("model") or {}
    if init == "scratch":
        model = OperatorModel(ModelSpec(
            in_channels=hf[0].shape[1], out_channels=hf[1].shape[1],
            width=int(m.get("width", 32)), depth=int(m.get("depth", 4))),
            seed=cfg.seed)
    else:
        model, _, _ = train_mod.load_checkpoint(init)
        model.reinit_heads(hf[0].shape[1], hf[1].shape[1], seed=cfg.seed)

    result = train_mod.adapt(model, lf, hf, cfg)
    train_mod.save_checkpoint(
        _require(doc, "checkpoint_out"), result.model, stats=stats,
        meta={"kind": "adapt", "init": init, "case": ds.manifest["case"],
              "curves": result.curves, "config": cfg.to_json()})

    if doc.get("report_out") or emit_json:
        report = train_mod.evaluate_model(
            result.model, ds.load_split("test"), stats, channels)
        _write_report(doc.get("report_out"), report.to_json(), emit_json)
        print(f"adapt: test rmse {report.rmse:.4g} K over "
              f"{report.n_samples} samples", file=sys.stderr)
    return EXIT_OK


def _cmd_fewshot(doc: dict, emit_json: bool) -> int:
    source, _, _ = train_mod.load_checkpoint(_require(doc, "source_checkpoint"))
    ds = Dataset.open(_require(doc, "target_dataset_dir"))
    stats = ds.norm_stats()
    channels = ds.power_channels
    cfg = _train_config(doc)
    n_values = [int(n) for n in _require(doc, "n_values")]

    pool = _split_xy(ds, "train", "high", doc.get("n_pool"), stats, channels)
    if pool is None:
        raise ConfigError("target dataset has no high-fidelity train records")
    test = ds.load_split("test")
    models = train_mod.few_shot(source, pool, n_values, cfg,
                                epochs=doc.get("epochs"))
    payload = {}
    for n in n_values:
        report = train_mod.evaluate_model(models[n], test, stats, channels)
        payload[str(n)] = report.to_json()
        print(f"fewshot n={n}: test rmse {report.rmse:.4g} K",
              file=sys.stderr)
    _write_report(doc.get("report_out"), payload, emit_json)
    return EXIT_OK


def _cmd_eval(doc: dict, emit_json: bool) -> int:
    model, stats, _ = train_mod.load_checkpoint(_require(doc, "checkpoint"))
    ds = Dataset.open(_require(doc, "dataset_dir"))
    if stats is None:
        raise ConfigError("checkpoint carries no normalization statistics")
    train_mod.check_stats_match(stats, ds)
    split = str(doc.get("split", "test"))
    report = train_mod.evaluate_model(
        model, ds.load_split(split), stats, ds.power_channels)
    _write_report(doc.get("report_out"), report.to_json(), emit_json)
    print(f"eval[{split}]: rmse {report.rmse:.4g} K  "
          f"mape {report.mape_pct:.4g}%  pape {report.pape_pct:.4g}%",
          file=sys.stderr)
    return EXIT_OK


_COMMANDS = {"pretrain": _cmd_pretrain, "adapt": _cmd_adapt,
             "fewshot": _cmd_fewshot, "eval": _cmd_eval}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mf-train",
        description="Multi-fidelity operator training on thermkit datasets")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True,
                        help="YAML configuration file")
    parser.add_argument("--json", action="store_true",
                        help="print the metric report to stdout")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](_load_config(args.config), args.json)
    except ConfigError as exc:
        print(f"mf-train: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MfTrainError as exc:
        print(f"mf-train: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
