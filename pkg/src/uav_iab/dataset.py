"""State-space sweeps, normalisation bounds and CSV persistence."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .mdp import N_STATES, UavState, enumerate_states, state_index
from .reward import FEATURES, MetricsVector
from .scenario import build_deployment, drop_users, load_profile
from .simulator import kpis_to_metrics, run_drop

log = logging.getLogger(__name__)

HEADER = ("load", "tilt_deg", "x_m", "y_m", "z_m",
          "beta_dl", "beta_ul", "a_dl50", "a_ul50", "a_dl5", "a_ul5", "n_seeds")
LOADS = ("Light", "Heavy")


class DatasetError(ValueError):
    """Malformed, incomplete or inconsistent dataset."""


def _q(value: float) -> float:
    """Round to the 9 significant digits kept by the CSV format."""
    return float(f"{value:.9g}")


def canonical_load(name: str) -> str:
    key = name.strip().capitalize()
    if key not in LOADS:
        raise DatasetError(f"unknown load {name!r}")
    return key


@dataclass(frozen=True)
class StateRecord:
    load: str
    state: UavState
    metrics: MetricsVector
    n_seeds: int

    def __post_init__(self):
        if self.n_seeds < 1:
            raise DatasetError("n_seeds must be >= 1")
        if self.metrics.normalized:
            raise DatasetError("records hold raw metrics")


class Dataset:
    """Immutable collection of records keyed uniquely by (load, state)."""

    def __init__(self, records):
        self.records = tuple(sorted(records, key=lambda r: (LOADS.index(r.load), state_index(r.state))))
        self._index: dict[str, dict[int, StateRecord]] = {}
        for rec in self.records:
            table = self._index.setdefault(rec.load, {})
            key = state_index(rec.state)
            if key in table:
                raise DatasetError(f"duplicate record for {rec.load} {rec.state}")
            table[key] = rec

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.records == other.records

    def __iter__(self):
        return iter(self.records)

    def loads(self) -> list[str]:
        return [load for load in LOADS if load in self._index]

    def for_load(self, load: str) -> dict[int, StateRecord]:
        return self._index.get(canonical_load(load), {})

    def record(self, load: str, state: UavState) -> StateRecord:
        try:
            return self.for_load(load)[state_index(state)]
        except KeyError:
            raise DatasetError(f"no record for {load} {state}") from None

    def missing_states(self, load: str) -> list[UavState]:
        table = self.for_load(load)
        return [s for i, s in enumerate(enumerate_states()) if i not in table]

    def subset(self, load: str) -> "Dataset":
        return Dataset(self.for_load(load).values())


def _state_metrics(args) -> tuple[int, list[tuple[float, ...]]]:
    config, load_name, state, seeds, duration = args
    deployment = build_deployment(config)
    load = load_profile(config, load_name)
    rows = []
    for seed in seeds:
        users = drop_users(deployment, load, seed)
        sample = run_drop(deployment, state, load, seed, sim_duration=duration, users=users)
        rows.append(kpis_to_metrics(sample).values())
    return state_index(state), rows


def average_metrics(rows) -> MetricsVector:
    mean = np.mean(np.asarray(rows, dtype=float), axis=0)
    return MetricsVector(*(_q(v) for v in mean))


def sweep_states(config: Config, load: str, seeds, *, sim_duration: float | None = None,
                 states=None, workers: int = 1) -> Dataset:
    """Simulate every UAV state for every seed and keep the seed-mean metrics."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise DatasetError("need at least one seed")
    load_name = canonical_load(load)
    states = list(enumerate_states() if states is None else states)
    jobs = [(config, load_name, s, seeds, sim_duration) for s in states]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_state_metrics, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = []
        for k, job in enumerate(jobs):
            results.append(_state_metrics(job))
            if (k + 1) % 100 == 0:
                log.info("%s: %d/%d states", load_name, k + 1, len(jobs))
    records = []
    for (idx, rows), state in zip(results, states):
        assert idx == state_index(state)
        records.append(StateRecord(load_name, state, average_metrics(rows), len(seeds)))
    return Dataset(records)


@dataclass(frozen=True)
class Bounds:
    """Per-load (min, max) for each feature, in FEATURES order."""

    per_load: dict

    def for_load(self, load: str) -> tuple[tuple[float, float], ...]:
        try:
            return self.per_load[canonical_load(load)]
        except KeyError:
            raise DatasetError(f"no bounds for load {load!r}") from None


def normalization_bounds(dataset: Dataset) -> Bounds:
    """Throughput features use their observed range; drop rates are pinned to (0, 1)."""
    if len(dataset) == 0:
        raise DatasetError("cannot compute bounds of an empty dataset")
    per_load = {}
    for load in dataset.loads():
        values = np.array([r.metrics.values() for r in dataset.for_load(load).values()])
        bounds = []
        for k, name in enumerate(FEATURES):
            if name.startswith("beta"):
                bounds.append((0.0, 1.0))
            else:
                bounds.append((float(values[:, k].min()), float(values[:, k].max())))
        per_load[load] = tuple(bounds)
    return Bounds(per_load)


def normalize(m: MetricsVector, bounds: Bounds, load: str) -> MetricsVector:
    out = []
    for value, name, (lo, hi) in zip(m.values(), FEATURES, bounds.for_load(load)):
        if name.startswith("beta"):
            out.append(value)
        elif hi > lo:
            out.append(min(max((value - lo) / (hi - lo), 0.0), 1.0))
        else:
            out.append(0.0)
    return MetricsVector(*out, normalized=True)


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in dataset:
        s = rec.state
        writer.writerow([rec.load, s.tilt, s.x, s.y, s.z, *(_fmt(v) for v in rec.metrics.values()),
                         rec.n_seeds])
    return buf.getvalue()


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(dataset))


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{path}: empty file") from None
    if tuple(header) != HEADER:
        raise DatasetError(f"{path}:1: unexpected header {header}")
    records = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(HEADER):
            raise DatasetError(f"{path}:{line}: expected {len(HEADER)} columns, got {len(row)}")
        values = {}
        for col, (name, raw) in enumerate(zip(HEADER, row), start=1):
            try:
                if name == "load":
                    values[name] = canonical_load(raw)
                elif name in ("tilt_deg", "x_m", "y_m", "z_m", "n_seeds"):
                    values[name] = int(raw)
                else:
                    values[name] = float(raw)
                    if not math.isfinite(values[name]):
                        raise ValueError("non-finite")
            except ValueError as exc:
                raise DatasetError(f"{path}:{line}: column {col} ({name}): bad value {raw!r}") from exc
        try:
            state = UavState(values["tilt_deg"], values["x_m"], values["y_m"], values["z_m"])
            metrics = MetricsVector(*(values[f] for f in FEATURES))
            records.append(StateRecord(values["load"], state, metrics, values["n_seeds"]))
        except ValueError as exc:
            raise DatasetError(f"{path}:{line}: {exc}") from exc
    return Dataset(records)


def require_complete(dataset: Dataset, load: str) -> None:
    missing = dataset.missing_states(load)
    if missing:
        shown = ", ".join(str(s) for s in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DatasetError(f"{len(missing)} of {N_STATES} states missing for {load}: {shown}{more}")
