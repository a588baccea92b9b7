"""Command-line interface.

Verbs:
  fetch  [NAMES...]           download + verify dataset archives into the cache
  run    CONFIG.yaml          execute a declarative experiment, write reports
  train  CONFIG.yaml --out F  train a network per config, save a checkpoint
  test   CKPT DATA.csv        classify a canonical CSV against a checkpoint
  report DIR                  summarize report JSONs found under DIR

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime fault.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

CONFIG_ERROR, DATA_ERROR, RUNTIME_ERROR = 2, 3, 4


@click.group()
def main():
    """Spiking one-shot odor learning: experiments, training and inference."""


@main.command()
@click.argument("names", nargs=-1)
@click.option("--data-dir", type=click.Path(), default=None, help="cache directory override")
def fetch(names, data_dir):
    """Download and unpack the public datasets (idempotent)."""
    from .ingest import DATASETS, fetch_datasets

    names = names or tuple(DATASETS)
    try:
        paths = fetch_datasets(names, root=data_dir)
    except KeyError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_ERROR)
    except Exception as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(DATA_ERROR)
    for p in paths:
        click.echo(f"ready: {p}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None, help="report directory override")
@click.option("--jobs", type=int, default=None, help="parallel worker processes")
@click.option("--seeds", type=int, default=None, help="replicate count override")
@click.option("--base-seed", type=int, default=None)
def run(config_path, out_dir, jobs, seeds, base_seed):
    """Run a declarative experiment config and emit CSV/JSON reports."""
    from .experiments import emit_report, load_experiment_config, run_experiment_with_timing

    try:
        config = load_experiment_config(config_path)
        if jobs is not None:
            config.jobs = jobs
        if seeds is not None:
            config.seeds = seeds
        if base_seed is not None:
            config.base_seed = base_seed
        if out_dir is not None:
            config.out_dir = out_dir
    except (ValueError, OSError, yaml.YAMLError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_ERROR)
    try:
        report, meta = run_experiment_with_timing(config)
    except FileNotFoundError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(DATA_ERROR)
    except Exception as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(RUNTIME_ERROR)
    written = emit_report(report, config.out_dir)
    (Path(config.out_dir) / "run_meta.json").write_text(json.dumps(meta, indent=1))
    for path in written:
        click.echo(f"wrote {path}")
    for key, val in sorted(report.summary.items()):
        if isinstance(val, float):
            click.echo(f"  {key}: {val:.2f}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True, help="checkpoint file")
def train(config_path, out_path):
    """Train a network on a canonical CSV (one sample per class) and save it."""
    from .estimator import SapinetClassifier, save_pipeline
    from .experiments import build_configs
    from .ingest import samples_from_csv

    try:
        with open(config_path) as fh:
            raw = yaml.safe_load(fh) or {}
        data_path = raw["data"]
        seed = int(raw.get("seed", 0))
        params = {"network": raw.get("network", {})}
    except (KeyError, ValueError, yaml.YAMLError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_ERROR)
    try:
        samples, labels, _ = samples_from_csv(data_path)
    except (OSError, ValueError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(DATA_ERROR)
    try:
        pre, epl = build_configs(params, seed)
        pre.fit(samples)
        clf = SapinetClassifier(epl_config=epl, confidence=float(raw.get("confidence", 0.5)))
        clf.fit(pre.transform(samples), labels)
        save_pipeline(out_path, pre, clf)
    except Exception as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(RUNTIME_ERROR)
    click.echo(f"trained {len(labels)} classes -> {out_path}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True))
@click.argument("data_csv", type=click.Path(exists=True))
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="write per-sample predictions JSON here")
def test(checkpoint, data_csv, report_path):
    """Classify a canonical CSV of labeled samples against a checkpoint."""
    from .estimator import load_pipeline
    from .ingest import samples_from_csv

    try:
        samples, labels, _ = samples_from_csv(data_csv)
    except (OSError, ValueError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(DATA_ERROR)
    try:
        pre, clf = load_pipeline(checkpoint)
        preds = clf.predict(pre.transform(samples))
    except Exception as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(RUNTIME_ERROR)
    correct = np.asarray([str(p) for p in preds]) == np.asarray([str(t) for t in labels])
    accuracy = 100.0 * float(np.mean(correct)) if len(labels) else 0.0
    click.echo(f"samples: {len(labels)}  accuracy: {accuracy:.2f}%")
    if report_path:
        payload = {
            "accuracy": accuracy,
            "n_samples": int(len(labels)),
            "predictions": [str(p) for p in preds],
            "labels": [str(t) for t in labels],
        }
        Path(report_path).write_text(json.dumps(payload, indent=1, sort_keys=True))
        click.echo(f"wrote {report_path}")


@main.command("report")
@click.argument("directory", type=click.Path(exists=True))
def report_cmd(directory):
    """Print a one-line summary per report JSON found under DIRECTORY."""
    found = sorted(Path(directory).rglob("*_report.json"))
    if not found:
        click.echo("no reports found", err=True)
        sys.exit(DATA_ERROR)
    for path in found:
        data = json.loads(path.read_text())
        scalars = {k: v for k, v in data.get("summary", {}).items() if isinstance(v, (int, float))}
        head = ", ".join(f"{k}={v:.2f}" for k, v in sorted(scalars.items())[:4])
        click.echo(f"{path}: kind={data['kind']} digest={data['config_digest']} {head}")


if __name__ == "__main__":
    main()
