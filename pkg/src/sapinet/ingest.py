"""Loaders and protocol logic for the two public UCSD e-nose datasets.

Drift dataset ("Gas Sensor Array Drift Dataset at Different Concentrations"):
ten batch files `batch1.dat` ... `batch10.dat` of sparse records, one sample
per line:

    <gas_id>;<concentration> 1:<v> 2:<v> ... 128:<v>

The 128 features are 8 per sensor for 16 sensors; one designated
steady-state feature per sensor (the first of each block by default) forms
the 16-dimensional input.

Wind tunnel dataset ("Gas Sensor Arrays in Open Sampling Settings"):
whitespace-delimited trial files, one row per timestamp, named or placed so
the gas label is recoverable (a `<gas>/` parent directory or a
`..._gas_<name>_...` filename token).  Column 0 is time in seconds; sensor
channels follow (72 for the full line).  Training snapshots are taken near
peak response (t = 90 s), test samples every 5 s over the plume window.

Loaders only touch local files; `fetch_datasets` downloads and verifies the
public archives into the cache directory (env `SAPINET_DATA_DIR`, default
`~/.cache/sapinet`).
"""

from __future__ import annotations

import csv
import hashlib
import os
import re
import urllib.request
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DRIFT_GASES",
    "DriftBatch",
    "WindTunnelData",
    "data_dir",
    "load_drift_batch",
    "online_learning_protocol",
    "load_wind_tunnel",
    "samples_to_csv",
    "samples_from_csv",
    "fetch_datasets",
    "DATASETS",
]

DRIFT_GASES = {
    1: "ethanol",
    2: "ethylene",
    3: "ammonia",
    4: "acetaldehyde",
    5: "acetone",
    6: "toluene",
}

# training order used by the online-learning results (ethanol first); the
# protocol also accepts the alternative methods-section order
RESULTS_ORDER = ("ethanol", "ethylene", "ammonia", "acetaldehyde", "acetone", "toluene")
METHODS_ORDER = ("ammonia", "acetaldehyde", "acetone", "ethylene", "ethanol", "toluene")

N_DRIFT_SENSORS = 16
N_DRIFT_FEATURES_PER_SENSOR = 8


def data_dir() -> Path:
    root = os.environ.get("SAPINET_DATA_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "sapinet"


@dataclass
class DriftBatch:
    batch: int
    samples: np.ndarray          # (n, 16) steady-state responses, nonnegative
    labels: np.ndarray           # gas names
    concentrations: np.ndarray   # ppmv

    def __len__(self) -> int:
        return len(self.labels)

    def gases(self) -> list[str]:
        return sorted(set(self.labels.tolist()))


def _parse_drift_line(line: str, lineno: int, feature_index: int) -> tuple[str, float, np.ndarray]:
    parts = line.split()
    if not parts or ";" not in parts[0]:
        raise ValueError(f"line {lineno}: expected '<gas>;<conc>' header token")
    gas_str, conc_str = parts[0].split(";", 1)
    try:
        gas_id = int(float(gas_str))
        conc = float(conc_str)
    except ValueError as exc:
        raise ValueError(f"line {lineno}: bad label/concentration: {exc}") from exc
    if gas_id not in DRIFT_GASES:
        raise ValueError(f"line {lineno}: unknown gas id {gas_id}")
    features = np.zeros(N_DRIFT_SENSORS * N_DRIFT_FEATURES_PER_SENSOR)
    for tok in parts[1:]:
        if ":" not in tok:
            raise ValueError(f"line {lineno}: malformed feature token {tok!r}")
        k, v = tok.split(":", 1)
        try:
            idx = int(k)
            val = float(v)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: malformed feature token {tok!r}") from exc
        if not 1 <= idx <= features.shape[0]:
            raise ValueError(f"line {lineno}: feature index {idx} out of range")
        features[idx - 1] = val
    sensor_vals = features[feature_index::N_DRIFT_FEATURES_PER_SENSOR]
    return DRIFT_GASES[gas_id], conc, np.maximum(sensor_vals, 0.0)


def load_drift_batch(path, batch: int, feature_index: int = 0) -> DriftBatch:
    """Parse one drift batch file into 16-dim steady-state samples.

    `feature_index` picks which of the 8 per-sensor features is the
    steady-state response (default: the first, the dR feature).  Negative
    raw values are clipped at zero.
    """
    if not 0 <= feature_index < N_DRIFT_FEATURES_PER_SENSOR:
        raise ValueError("feature_index must be in [0, 8)")
    root = Path(path)
    fname = root / f"batch{batch}.dat"
    if not fname.exists():
        candidates = list(root.glob(f"**/batch{batch}.dat"))
        if not candidates:
            raise FileNotFoundError(f"batch file batch{batch}.dat not found under {root}")
        fname = candidates[0]
    labels, concs, rows = [], [], []
    with open(fname) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            gas, conc, vals = _parse_drift_line(line, lineno, feature_index)
            labels.append(gas)
            concs.append(conc)
            rows.append(vals)
    return DriftBatch(
        batch=batch,
        samples=np.array(rows),
        labels=np.array(labels),
        concentrations=np.array(concs),
    )


@dataclass
class ProtocolGroup:
    """One online-learning group: train one sample, test all trained gases."""

    gas: str
    train_index: int
    test_indices: np.ndarray


def online_learning_protocol(batch: DriftBatch, seed: int = 0,
                             order: tuple = RESULTS_ORDER,
                             max_test_per_gas: int | None = None) -> list[ProtocolGroup]:
    """One-shot online learning schedule over a drift batch.

    Per group: one random-concentration training sample of the next gas,
    then a test on all samples of every gas trained so far.  Gases missing
    from the batch are skipped.  `max_test_per_gas` optionally subsamples
    large test sets (seeded) to keep desk-scale runtimes.
    """
    rng = np.random.default_rng(seed)
    present = set(batch.labels.tolist())
    groups: list[ProtocolGroup] = []
    trained: list[str] = []
    for gas in order:
        if gas not in present:
            continue
        gas_idx = np.nonzero(batch.labels == gas)[0]
        train_index = int(rng.choice(gas_idx))
        trained.append(gas)
        test_parts = []
        for g in trained:
            idx = np.nonzero(batch.labels == g)[0]
            if max_test_per_gas is not None and idx.size > max_test_per_gas:
                idx = rng.choice(idx, size=max_test_per_gas, replace=False)
            test_parts.append(np.sort(idx))
        groups.append(ProtocolGroup(gas=gas, train_index=train_index,
                                    test_indices=np.concatenate(test_parts)))
    return groups


# ---------------------------------------------------------------------------
# wind tunnel
# ---------------------------------------------------------------------------

WIND_TUNNEL_GASES = (
    "acetone", "acetaldehyde", "ammonia", "butanol", "ethylene",
    "methane", "methanol", "co", "benzene", "toluene",
)

# middle bank: the central three 8-sensor modules of the nine-module line
MIDDLE_BANK_COLUMNS = tuple(range(24, 48))


@dataclass
class WindTunnelData:
    train_samples: np.ndarray
    train_labels: np.ndarray
    test_samples: np.ndarray
    test_labels: np.ndarray


def _gas_from_path(path: Path) -> str | None:
    m = re.search(r"gas_([A-Za-z0-9]+)", path.name)
    if m:
        return m.group(1).lower()
    parent = path.parent.name.lower()
    for gas in WIND_TUNNEL_GASES:
        if parent.startswith(gas):
            return gas
    return None


def load_wind_tunnel(path, board: str = "middle", train_time_s: float = 90.0,
                     test_window_s: tuple[float, float] = (30.0, 175.0),
                     test_interval_s: float = 5.0,
                     max_trials_per_gas: int | None = None) -> WindTunnelData:
    """Build train/test sets from wind-tunnel trial files.

    Train: the sensor snapshot nearest `train_time_s` (near peak response),
    one per gas from its first trial.  Test: snapshots every
    `test_interval_s` seconds across `test_window_s` from every trial (30
    samples per trial at the defaults).  Trials shorter than the window are
    truncated with a warning.  `board` selects 'middle' (24 sensors) or
    'all' (72).
    """
    root = Path(path)
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() in (".txt", ".csv", ".dat"))
    by_gas: dict[str, list[Path]] = {}
    for f in files:
        gas = _gas_from_path(f)
        if gas is not None:
            by_gas.setdefault(gas, []).append(f)
    if not by_gas:
        raise FileNotFoundError(f"no recognizable wind-tunnel trial files under {root}")
    cols = MIDDLE_BANK_COLUMNS if board == "middle" else None
    train_x, train_y, test_x, test_y = [], [], [], []
    t_lo, t_hi = test_window_s
    for gas in sorted(by_gas):
        trials = sorted(by_gas[gas])
        if max_trials_per_gas is not None:
            trials = trials[:max_trials_per_gas]
        for i, trial in enumerate(trials):
            data = np.loadtxt(trial, ndmin=2)
            t = data[:, 0]
            sensors = data[:, 1:]
            if cols is not None:
                sensors = sensors[:, list(cols)]
            sensors = np.maximum(sensors, 0.0)
            if i == 0:
                row = int(np.argmin(np.abs(t - train_time_s)))
                train_x.append(sensors[row])
                train_y.append(gas)
            hi = min(t_hi, float(t.max()))
            if hi < t_hi:
                import warnings
                warnings.warn(f"trial {trial.name} shorter than the test window; truncated")
            for tp in np.arange(t_lo, hi + 1e-9, test_interval_s):
                row = int(np.argmin(np.abs(t - tp)))
                test_x.append(sensors[row])
                test_y.append(gas)
    return WindTunnelData(
        train_samples=np.array(train_x), train_labels=np.array(train_y),
        test_samples=np.array(test_x), test_labels=np.array(test_y),
    )


# ---------------------------------------------------------------------------
# canonical CSV and fetching
# ---------------------------------------------------------------------------


def samples_to_csv(path, samples: np.ndarray, labels, concentrations=None) -> None:
    """Write the canonical sample format: label, concentration, s0..s{d-1}."""
    samples = np.asarray(samples, dtype=float)
    labels = np.asarray(labels)
    conc = np.zeros(len(labels)) if concentrations is None else np.asarray(concentrations, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "concentration"] + [f"s{i}" for i in range(samples.shape[1])])
        for lab, c, row in zip(labels, conc, samples):
            writer.writerow([lab, repr(float(c))] + [repr(float(v)) for v in row])


def samples_from_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read the canonical CSV; returns (samples, labels, concentrations)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["label", "concentration"]:
            raise ValueError(f"{path}: not a canonical sample CSV")
        labels, concs, rows = [], [], []
        for rec in reader:
            labels.append(rec[0])
            concs.append(float(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    return np.array(rows), np.array(labels), np.array(concs)


@dataclass
class DatasetSpec:
    name: str
    url: str
    sha256: str | None      # None = no pin available; verification skipped with a warning
    archive_name: str


DATASETS = {
    "drift": DatasetSpec(
        name="drift",
        url=("https://archive.ics.uci.edu/static/public/224/"
             "gas+sensor+array+drift+dataset+at+different+concentrations.zip"),
        sha256=None,
        archive_name="gas_sensor_drift.zip",
    ),
    "wind_tunnel": DatasetSpec(
        name="wind_tunnel",
        url=("https://archive.ics.uci.edu/static/public/251/"
             "gas+sensor+arrays+in+open+sampling+settings.zip"),
        sha256=None,
        archive_name="wind_tunnel.zip",
    ),
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_datasets(names=("drift",), root: Path | None = None, specs: dict | None = None) -> list[Path]:
    """Download, verify and unpack the named dataset archives (idempotent).

    A checksum mismatch aborts and removes the offending download.  Archives
    already present and verified are not downloaded again; with no network
    a verified cache still succeeds.
    """
    specs = DATASETS if specs is None else specs
    root = data_dir() if root is None else Path(root)
    root.mkdir(parents=True, exist_ok=True)
    out = []
    for name in names:
        if name not in specs:
            raise KeyError(f"unknown dataset {name!r}; known: {sorted(specs)}")
        spec = specs[name]
        archive = root / spec.archive_name
        target = root / spec.name
        if not archive.exists():
            tmp = archive.with_suffix(".part")
            urllib.request.urlretrieve(spec.url, tmp)
            tmp.rename(archive)
        if spec.sha256 is not None:
            digest = _sha256(archive)
            if digest != spec.sha256:
                archive.unlink()
                raise ValueError(
                    f"checksum mismatch for {spec.name}: got {digest}, expected {spec.sha256}; "
                    "download removed"
                )
        else:
            import warnings
            warnings.warn(f"no checksum pinned for dataset {spec.name}; skipping verification")
        if not target.exists():
            staging = root / (spec.name + ".unpacking")
            if staging.exists():
                import shutil
                shutil.rmtree(staging)
            with zipfile.ZipFile(archive) as zf:
                zf.extractall(staging)
            staging.rename(target)
        out.append(target)
    return out
