"""Experiment runner: every study reproducible from a declarative config.

A config names an experiment kind, a seed plan, and kind-specific params;
`run_experiment` executes all replicate seeds (optionally in parallel
worker processes), collects per-seed rows, and returns an
`ExperimentReport` whose JSON/CSV serializations are deterministic for a
given (config, seeds) pair: reports embed the config digest and library
version, and wall-time is kept out of the canonical payload.

Kinds:
  regularization_study   per-stage spike fractions and g_p on the wild-40 set
  model_scaling_study    MC/GC active fractions across data dimensions
  synthetic_attractor    one-shot sequential learning on synthetic odors
  ablation               synthetic_attractor over the four network variants
  k_sweep                accuracy grid over (k_cp, k_vth) x confidence
  gc_count_sweep         accuracy vs learning cells per column
  gaussian_study         accuracy grid over iod x std x occlusion
  impulse_study          accuracy grid over iod x occlusion
  drift_online           one-shot online learning over drift batches
  windtunnel_online      one-shot online learning on the wind-tunnel set
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from joblib import Parallel, delayed

from . import __version__
from .core import CellParams, GammaClock
from .datagen import NoiseSpec, OdorSeriesSpec, build_test_suite, generate_series, generate_wild_samples
from .epl import EplConfig, StdpConfig, build_network, feedforward_cycle, run_sniff, train_one_shot
from .estimator import SapinetClassifier
from .glomerular import GlomerularPreprocessor
from .ingest import (
    METHODS_ORDER,
    RESULTS_ORDER,
    data_dir,
    load_drift_batch,
    load_wind_tunnel,
    online_learning_protocol,
)
from .readout import ClassifierConfig, classify, cluster_distances, goodness_of_preprocessing

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "load_experiment_config",
    "run_experiment",
    "emit_report",
    "build_configs",
    "EXPERIMENT_KINDS",
]


@dataclass
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seeds: int = 5
    base_seed: int = 0
    jobs: int = 1
    out_dir: str = "results"

    def digest(self) -> str:
        payload = json.dumps(
            {"kind": self.kind, "params": self.params, "seeds": self.seeds,
             "base_seed": self.base_seed},
            sort_keys=True, default=str,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    kind: str
    config_digest: str
    version: str
    seeds: list
    rows: list
    summary: dict

    def to_json(self) -> str:
        payload = dataclasses.asdict(self)
        return json.dumps(payload, sort_keys=True, indent=1, default=_jsonify)

    def csv_rows(self) -> list[dict]:
        return self.rows


def _jsonify(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ValueError(f"{path}: experiment config must be a mapping with a 'kind'")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    config = ExperimentConfig(**raw)
    if config.kind not in EXPERIMENT_KINDS:
        raise ValueError(f"{path}: unknown experiment kind {config.kind!r}; "
                         f"known: {sorted(EXPERIMENT_KINDS)}")
    return config


def build_configs(params: dict, seed: int) -> tuple[GlomerularPreprocessor, EplConfig]:
    """Construct the preprocessor and network config from flat param overrides."""
    net = dict(params.get("network", {}))
    pre_kwargs = dict(
        target_max_current=net.pop("target_max_current", 20.0),
        duplication_factor=net.pop("duplication_factor", 5),
        et_weight_max=net.pop("et_weight_max", 0.65),
        et_input_scale=net.pop("et_input_scale", 10.0),
        reference_dimension=net.pop("reference_dimension", 20),
        density=net.pop("density", 0.1),
        random_state=seed * 7919 + 1,
    )
    cell_fields = {f.name for f in dataclasses.fields(CellParams)}
    clock_fields = {f.name for f in dataclasses.fields(GammaClock)}
    stdp_fields = {f.name for f in dataclasses.fields(StdpConfig)}
    cells = CellParams(**{k: net.pop(k) for k in list(net) if k in cell_fields})
    clock = GammaClock(**{k: net.pop(k) for k in list(net) if k in clock_fields})
    stdp = StdpConfig(**{k: net.pop(k) for k in list(net) if k in stdp_fields})
    epl = EplConfig(
        duplication_factor=pre_kwargs["duplication_factor"],
        reference_dimension=pre_kwargs["reference_dimension"],
        cells=cells, clock=clock, stdp=stdp, rng_seed=seed,
        **net,
    )
    return GlomerularPreprocessor(**pre_kwargs), epl


# ---------------------------------------------------------------------------
# synthetic attractor and its sweeps
# ---------------------------------------------------------------------------


def _odor_step(params: dict) -> float:
    # inter-odor distance is in odor units: one unit perturbs every sensor
    # by `odor_unit` response units RMS, so the realized Euclidean step is
    # iod * odor_unit * sqrt(d) and discriminability is dimension-fair
    d = int(params.get("dimension", 20))
    return (float(params.get("inter_odor_distance", 0.5))
            * float(params.get("odor_unit", 9.0)) * float(np.sqrt(d)))


def _attractor_seed_run(params: dict, seed: int) -> dict:
    d = int(params.get("dimension", 20))
    spec = OdorSeriesSpec(
        dimension=d,
        n_similar=int(params.get("n_similar", 4)),
        inter_odor_distance=_odor_step(params),
        include_nonoverlapping=bool(params.get("include_nonoverlapping", True)),
        rng_seed=seed,
    )
    odors = generate_series(spec)
    noise_params = params.get("noise", {"kind": "gaussian", "std": 6.0, "occlusion": 0.5})
    noise = NoiseSpec(rng_seed=seed + 1, **noise_params) if noise_params else None
    pre, epl = build_configs(params, seed)
    confidence = float(params.get("confidence", 0.5))
    clf = SapinetClassifier(epl_config=epl, confidence=confidence, unknown_label="none")
    pre.fit(odors)
    X = pre.transform(odors)
    labels = np.arange(len(odors))
    clf.fit(X, labels)
    test_raw, test_labels = build_test_suite(odors, noise, n_noisy=int(params.get("n_noisy", 10)))
    preds = clf.predict(pre.transform(test_raw))
    correct = sum(p == t for p, t in zip(preds, test_labels))
    return {
        "seed": seed,
        "n_test": len(test_labels),
        "accuracy": 100.0 * correct / len(test_labels),
        "n_unknown": int(sum(p == "none" for p in preds)),
    }


def run_synthetic_attractor(config: ExperimentConfig) -> tuple[list, dict]:
    seeds = [config.base_seed + i for i in range(config.seeds)]
    rows = _parallel(config, _attractor_seed_run, [(config.params, s) for s in seeds])
    accs = [r["accuracy"] for r in rows]
    return rows, {"mean_accuracy": float(np.mean(accs)), "std_accuracy": float(np.std(accs))}


ABLATION_VARIANTS = {
    "all": {},
    "no_nl": {"n_nonlearning_gc_per_column": 0},
    "no_neurogen": {"neurogenesis": False},
    "no_neurogen_no_nl": {"neurogenesis": False, "n_nonlearning_gc_per_column": 0},
}


def run_ablation(config: ExperimentConfig) -> tuple[list, dict]:
    rows = []
    summary = {}
    for name, overrides in ABLATION_VARIANTS.items():
        params = json.loads(json.dumps(config.params))
        params.setdefault("network", {}).update(overrides)
        sub = dataclasses.replace(config, params=params)
        sub_rows, sub_summary = run_synthetic_attractor(sub)
        for r in sub_rows:
            rows.append({"variant": name, **r})
        summary[name] = sub_summary
    return rows, summary


def run_k_sweep(config: ExperimentConfig) -> tuple[list, dict]:
    k_values = config.params.get("k_values", [-0.9, -0.45, 0.0, 0.45, 0.9])
    confidences = config.params.get("confidences", [0.25, 0.5, 0.75])
    rows = []
    jobs = []
    for conf in confidences:
        for k_cp in k_values:
            for k_vth in k_values:
                params = json.loads(json.dumps(config.params))
                params.setdefault("network", {}).update({"k_cp": k_cp, "k_vth": k_vth})
                params["confidence"] = conf
                for i in range(config.seeds):
                    jobs.append(((conf, k_cp, k_vth), params, config.base_seed + i))
    results = _parallel(config, _attractor_seed_run, [(p, s) for _, p, s in jobs])
    acc = {}
    for (key, _, _), r in zip(jobs, results):
        rows.append({"confidence": key[0], "k_cp": key[1], "k_vth": key[2], **r})
        acc.setdefault(key, []).append(r["accuracy"])
    summary = {
        f"conf{conf}": {
            f"kcp{k_cp}_kvth{k_vth}": float(np.mean(acc[(conf, k_cp, k_vth)]))
            for k_cp in k_values for k_vth in k_values
        }
        for conf in confidences
    }
    return rows, summary


def run_gc_count_sweep(config: ExperimentConfig) -> tuple[list, dict]:
    counts = config.params.get("gc_counts", [5, 10, 15, 20, 50])
    rows = []
    summary = {}
    for n in counts:
        params = json.loads(json.dumps(config.params))
        params.setdefault("network", {})["n_learning_gc_per_column"] = int(n)
        sub = dataclasses.replace(config, params=params)
        sub_rows, sub_summary = run_synthetic_attractor(sub)
        for r in sub_rows:
            rows.append({"gc_per_column": n, **r})
        summary[f"gc{n}"] = sub_summary
    return rows, summary


def _noise_grid_runner(config: ExperimentConfig, kind: str) -> tuple[list, dict]:
    iods = config.params.get("inter_odor_distances", [0.25, 0.5, 0.75, 1.0])
    occls = config.params.get("occlusions", [0.25, 0.5, 0.75])
    stds = config.params.get("stds", [2.0, 6.0, 18.0]) if kind == "gaussian" else [None]
    jobs = []
    for iod in iods:
        for occl in occls:
            for std in stds:
                params = json.loads(json.dumps(config.params))
                params["inter_odor_distance"] = iod
                noise = {"kind": kind, "occlusion": occl}
                if kind == "gaussian":
                    noise["std"] = std
                params["noise"] = noise
                for i in range(config.seeds):
                    jobs.append(((iod, occl, std), params, config.base_seed + i))
    results = _parallel(config, _attractor_seed_run, [(p, s) for _, p, s in jobs])
    rows = []
    acc = {}
    for (key, _, _), r in zip(jobs, results):
        iod, occl, std = key
        row = {"inter_odor_distance": iod, "occlusion": occl, **r}
        if std is not None:
            row["std"] = std
        rows.append(row)
        acc.setdefault(key, []).append(r["accuracy"])
    summary = {}
    for (iod, occl, std), vals in acc.items():
        name = f"iod{iod}_occl{occl}" + (f"_std{std}" if std is not None else "")
        summary[name] = {"mean_accuracy": float(np.mean(vals)), "std_accuracy": float(np.std(vals))}
    return rows, summary


def run_gaussian_study(config: ExperimentConfig) -> tuple[list, dict]:
    return _noise_grid_runner(config, "gaussian")


def run_impulse_study(config: ExperimentConfig) -> tuple[list, dict]:
    return _noise_grid_runner(config, "impulse")


# ---------------------------------------------------------------------------
# regularization and model scaling (feedforward studies)
# ---------------------------------------------------------------------------

REGULARIZATION_STAGES = (
    "raw", "scaled", "normalized", "duplicated", "mc_het", "mcgc_het", "het_dup",
)


def _stage_network(params: dict, d: int, stage: str, seed: int):
    """Feedforward network matching a regularization stage.

    Pre-duplication stages use one mitral cell per column; heterogeneity
    stages widen the sister/GC threshold ladders.  GC population is a
    uniform 25-threshold ladder per column with a fixed convergence ratio.
    """
    net = dict(params.get("network", {}))
    q = 1 if stage in ("raw", "scaled", "normalized") else int(net.get("duplication_factor", 5))
    mc_het = stage in ("mc_het", "mcgc_het", "het_dup")
    gc_het = stage in ("mcgc_het", "het_dup")
    conv = float(net.get("conv", 0.4))
    overrides = {
        "duplication_factor": q,
        "mc_vth_min": 0.8,
        "mc_vth_max": float(net.get("mc_vth_max", 12.8)) if mc_het else 0.8,
        "gc_vth_min": 0.8,
        "gc_vth_max": float(net.get("gc_vth_max_ff", 12.8)) if gc_het else 0.8,
        "k_vth": 0.0,
        "k_cp": 0.0,
        "conv_min": conv,
        "conv_max": conv,
        "n_learning_gc_per_column": int(net.get("gc_per_column_ff", 25)),
        "n_nonlearning_gc_per_column": 0,
        "reference_dimension": int(net.get("reference_dimension", 20)),
    }
    cells = CellParams(**{k: v for k, v in net.items()
                          if k in {f.name for f in dataclasses.fields(CellParams)}})
    epl = EplConfig(cells=cells, rng_seed=seed, **overrides)
    return build_network(epl, d)


def _stage_currents(samples: np.ndarray, stage: str, pre: GlomerularPreprocessor) -> np.ndarray:
    """Mitral input currents the architecture would deliver at each stage."""
    from .glomerular import apply_model_scaling, heterogeneous_duplicate, normalize_intensity, scale

    config = pre.config_
    if stage == "raw":
        return samples
    scaled = scale(samples, config.target_max_current)
    if stage == "scaled":
        return scaled
    normalized = normalize_intensity(scaled) * config.et_input_scale
    if stage == "normalized":
        return normalized
    if stage in ("duplicated", "mc_het", "mcgc_het"):
        return np.repeat(normalized, config.duplication_factor, axis=1)
    modeled = apply_model_scaling(normalize_intensity(scaled), config)
    return heterogeneous_duplicate(modeled, pre.projection_)


def _regularization_seed_run(params: dict, seed: int) -> dict:
    samples = generate_wild_samples(int(params.get("dimension", 100)), rng_seed=seed)
    pre, _ = build_configs(params, seed)
    pre.fit(samples)
    threshold = float(params.get("gp_threshold", 0.9))
    out = {"seed": seed}
    for stage in REGULARIZATION_STAGES:
        currents = _stage_currents(samples, stage, pre)
        state = _stage_network(params, samples.shape[1], stage, seed)
        mc_frac = np.empty(len(samples))
        gc_frac = np.empty(len(samples))
        for i, row in enumerate(currents):
            soma, gc = feedforward_cycle(state, row)
            mc_frac[i] = np.mean(soma >= 0)
            gc_frac[i] = np.mean(gc >= 0) if state.n_gc else 0.0
        out[f"gp_mc_{stage}"] = goodness_of_preprocessing(mc_frac, threshold)
        out[f"gp_gc_{stage}"] = goodness_of_preprocessing(gc_frac, threshold)
        out[f"mc_frac_mean_{stage}"] = float(mc_frac.mean())
        out[f"gc_frac_mean_{stage}"] = float(gc_frac.mean())
    return out


def run_regularization_study(config: ExperimentConfig) -> tuple[list, dict]:
    seeds = [config.base_seed + i for i in range(config.seeds)]
    rows = _parallel(config, _regularization_seed_run, [(config.params, s) for s in seeds])
    summary = {}
    for stage in REGULARIZATION_STAGES:
        summary[f"gp_mc_{stage}"] = float(np.mean([r[f"gp_mc_{stage}"] for r in rows]))
        summary[f"gp_gc_{stage}"] = float(np.mean([r[f"gp_gc_{stage}"] for r in rows]))
    return rows, summary


def _model_scaling_seed_run(params: dict, seed: int) -> dict:
    dims = params.get("dimensions", [10, 20, 40, 80, 160, 320, 640])
    n_samples = int(params.get("n_samples", 8))
    nl_fanins = params.get("nl_fanins", [5, 10, 15, 20])
    rng = np.random.default_rng(seed)
    out = {"seed": seed}
    for d in dims:
        samples = rng.uniform(0.0, 200.0, size=(n_samples, d))
        for scaled in (True, False):
            pre, epl = build_configs(params, seed)
            pre.set_params(random_state=seed * 31 + d)
            if not scaled:
                pre.set_params(reference_dimension=d)  # d/k = 1: no model scaling
            pre.fit(samples)
            currents = pre.transform(samples)
            epl = dataclasses.replace(
                epl, rng_seed=seed * 31 + d,
                reference_dimension=pre.reference_dimension if scaled else d,
                n_learning_gc_per_column=int(params.get("gc_per_column", 12)),
                n_nonlearning_gc_per_column=int(params.get("nl_per_column", 13)),
            )
            tag = "scaled" if scaled else "unscaled"
            for fanin in nl_fanins if scaled else [nl_fanins[0]]:
                state = build_network(dataclasses.replace(epl, nonlearning_fanin=int(fanin)), d)
                mc, nl, lg = [], [], []
                for row in currents:
                    soma, gc = feedforward_cycle(state, row)
                    mc.append(np.mean(soma >= 0))
                    nl.append(np.mean(gc[~state.gc_is_learning] >= 0))
                    lg.append(np.mean(gc[state.gc_is_learning] >= 0))
                out[f"mc_frac_{tag}_d{d}_f{fanin}"] = float(np.mean(mc))
                out[f"nl_frac_{tag}_d{d}_f{fanin}"] = float(np.mean(nl))
                out[f"lg_frac_{tag}_d{d}_f{fanin}"] = float(np.mean(lg))
    return out


def run_model_scaling_study(config: ExperimentConfig) -> tuple[list, dict]:
    seeds = [config.base_seed + i for i in range(config.seeds)]
    rows = _parallel(config, _model_scaling_seed_run, [(config.params, s) for s in seeds])
    summary = {}
    keys = [k for k in rows[0] if k != "seed"]
    for k in keys:
        summary[k] = float(np.mean([r[k] for r in rows]))
    return rows, summary


# ---------------------------------------------------------------------------
# real datasets
# ---------------------------------------------------------------------------


def _drift_seed_run(params: dict, seed: int, batch_data: dict) -> dict:
    order = METHODS_ORDER if params.get("order") == "methods" else RESULTS_ORDER
    max_test = params.get("max_test_per_gas")
    confidence = float(params.get("confidence", 0.5))
    reference = batch_data["reference"]
    out = {"seed": seed}
    for batch_no, batch in batch_data["batches"].items():
        pre, epl = build_configs(params, seed)
        pre.set_params(reference_dimension=int(params.get("network", {}).get("reference_dimension", 20)))
        pre.fit(reference)
        groups = online_learning_protocol(batch, seed=seed, order=order,
                                          max_test_per_gas=max_test)
        clf = SapinetClassifier(epl_config=epl, confidence=confidence, unknown_label="none")
        group_accs = []
        per_gas_last = {}
        for g_no, group in enumerate(groups, start=1):
            clf.partial_fit(pre.transform(batch.samples[group.train_index][None, :]),
                            [group.gas])
            X = pre.transform(batch.samples[group.test_indices])
            y = batch.labels[group.test_indices]
            preds = clf.predict(X)
            correct = preds == y
            acc = 100.0 * float(np.mean(correct))
            group_accs.append(acc)
            out[f"b{batch_no}_group{g_no}_accuracy"] = acc
            for gas in sorted(set(y.tolist())):
                m = y == gas
                per_gas_last[gas] = 100.0 * float(np.mean(correct[m]))
        out[f"b{batch_no}_accuracy"] = float(np.mean(group_accs))
        for gas, acc in per_gas_last.items():
            out[f"b{batch_no}_final_{gas}"] = acc
    return out


def run_drift_online(config: ExperimentConfig) -> tuple[list, dict]:
    params = config.params
    root = Path(params.get("data_dir") or (data_dir() / "drift"))
    batches = params.get("batches", list(range(1, 11)))
    feature_index = int(params.get("feature_index", 0))
    loaded = {b: load_drift_batch(root, b, feature_index) for b in batches}
    reference_batch = int(params.get("reference_batch", 1))
    if reference_batch in loaded:
        reference = loaded[reference_batch].samples
    else:
        reference = load_drift_batch(root, reference_batch, feature_index).samples
    batch_data = {"batches": loaded, "reference": reference}
    seeds = [config.base_seed + i for i in range(config.seeds)]
    rows = _parallel(config, _drift_seed_run, [(params, s, batch_data) for s in seeds])
    summary = {}
    for b in batches:
        summary[f"batch{b}_mean_accuracy"] = float(
            np.mean([r[f"b{b}_accuracy"] for r in rows]))
    summary["mean_over_batches"] = float(np.mean(list(summary.values())))
    if params.get("cluster_diagnostic", True) and reference_batch in loaded:
        from .glomerular import scale

        ref = loaded[reference_batch]
        D, labels = cluster_distances(scale(ref.samples, 20.0), ref.labels)
        summary["cluster_distances"] = {
            "labels": list(labels),
            "matrix": [[None if np.isnan(v) else float(v) for v in row] for row in D],
        }
    return rows, summary


def _windtunnel_seed_run(params: dict, seed: int, data) -> dict:
    pre, epl = build_configs(params, seed)
    pre.fit(np.concatenate([data.train_samples, data.test_samples]))
    clf = SapinetClassifier(epl_config=epl, confidence=float(params.get("confidence", 0.5)),
                            unknown_label="none")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data.train_labels))
    out = {"seed": seed}
    accs = []
    trained = []
    for g_no, idx in enumerate(order, start=1):
        gas = data.train_labels[idx]
        clf.partial_fit(pre.transform(data.train_samples[idx][None, :]), [gas])
        trained.append(gas)
        mask = np.isin(data.test_labels, trained)
        preds = clf.predict(pre.transform(data.test_samples[mask]))
        acc = 100.0 * float(np.mean(preds == data.test_labels[mask]))
        accs.append(acc)
        out[f"group{g_no}_accuracy"] = acc
        out[f"group{g_no}_gas"] = str(gas)
    out["accuracy"] = float(np.mean(accs))
    return out


def run_windtunnel_online(config: ExperimentConfig) -> tuple[list, dict]:
    params = config.params
    root = Path(params.get("data_dir") or (data_dir() / "wind_tunnel"))
    data = load_wind_tunnel(
        root,
        board=params.get("board", "middle"),
        max_trials_per_gas=params.get("max_trials_per_gas"),
    )
    seeds = [config.base_seed + i for i in range(config.seeds)]
    rows = _parallel(config, _windtunnel_seed_run, [(params, s, data) for s in seeds])
    accs = [r["accuracy"] for r in rows]
    return rows, {"mean_accuracy": float(np.mean(accs)), "std_accuracy": float(np.std(accs))}


# ---------------------------------------------------------------------------
# dispatch and reporting
# ---------------------------------------------------------------------------


def _parallel(config: ExperimentConfig, fn, arg_tuples: list) -> list:
    if config.jobs in (None, 1) or len(arg_tuples) < 2:
        return [fn(*args) for args in arg_tuples]
    return Parallel(n_jobs=config.jobs)(delayed(fn)(*args) for args in arg_tuples)


EXPERIMENT_KINDS = {
    "regularization_study": run_regularization_study,
    "model_scaling_study": run_model_scaling_study,
    "synthetic_attractor": run_synthetic_attractor,
    "ablation": run_ablation,
    "k_sweep": run_k_sweep,
    "gc_count_sweep": run_gc_count_sweep,
    "gaussian_study": run_gaussian_study,
    "impulse_study": run_impulse_study,
    "drift_online": run_drift_online,
    "windtunnel_online": run_windtunnel_online,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    runner = EXPERIMENT_KINDS[config.kind]
    rows, summary = runner(config)
    return ExperimentReport(
        kind=config.kind,
        config_digest=config.digest(),
        version=__version__,
        seeds=[config.base_seed + i for i in range(config.seeds)],
        rows=rows,
        summary=summary,
    )


def emit_report(report: ExperimentReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write the report deterministically; same report -> identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / f"{report.kind}_report.json"
        path.write_text(report.to_json())
        written.append(path)
    if "csv" in formats:
        import csv as _csv

        path = out / f"{report.kind}_rows.csv"
        rows = report.csv_rows()
        keys = sorted({k for r in rows for k in r})
        with open(path, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for r in rows:
                writer.writerow({k: r.get(k, "") for k in keys})
        written.append(path)
    return written


def run_experiment_with_timing(config: ExperimentConfig) -> tuple[ExperimentReport, dict]:
    """Run and also return non-canonical metadata (wall time etc.)."""
    t0 = time.time()
    report = run_experiment(config)
    meta = {"wall_time_s": time.time() - t0, "jobs": config.jobs}
    return report, meta
