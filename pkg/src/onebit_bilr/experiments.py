"""Seeded Monte-Carlo sweeps of recovery error against the number of measurements.

Each ``(m, trial)`` cell draws its own child seed
``derive_seed(master_seed, m, trial)``; the signal and the ensemble use the
children ``derive_seed(child, "signal")`` and ``derive_seed(child, "ensemble")``.
Cells are therefore independent of each other and of the grid they belong to.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._random import derive_seed
from .matrix_core import generate_bilr
from .recovery import hamming_fraction, recover_multistep, recover_pbp
from .sensing import make_dense_ensemble, make_factorized_ensemble, quantize, sense_and_back_project, sense_raw

SCHEMES = ("pbp", "multistep")
ERROR_MODES = ("raw", "unit-normalized", "both")
CSV_HEADER = "m,trial,seed,error_raw,error_unit,hamming_consistency_frac,wall_time_ms"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    n: int
    s: int
    r: int
    m_grid: tuple[int, ...]
    trials_per_m: int
    master_seed: int
    p: int | None = None
    output_path: str | None = None
    error_mode: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "m_grid", tuple(self.m_grid))
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.error_mode not in ERROR_MODES:
            raise ConfigError(f"error_mode must be one of {ERROR_MODES}, got {self.error_mode!r}")
        for name in ("n", "s", "r", "trials_per_m", "master_seed"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be an integer")
        if not (1 <= self.r <= self.s <= self.n):
            raise ConfigError(f"need 1 <= r <= s <= n, got n={self.n}, s={self.s}, r={self.r}")
        if self.trials_per_m < 1:
            raise ConfigError("trials_per_m must be >= 1")
        grid = self.m_grid
        if not grid or any(not isinstance(m, int) or m < 1 for m in grid):
            raise ConfigError("m_grid must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("m_grid must be strictly increasing")
        if self.scheme == "multistep":
            if not isinstance(self.p, int) or self.p < 1:
                raise ConfigError("multistep scheme needs a positive integer p")
        elif self.p is not None:
            raise ConfigError("p only applies to the multistep scheme")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m_grid"] = list(self.m_grid)
        return d


def load_config(path) -> ExperimentConfig:
    """Read a JSON config. ``OSError`` on I/O problems, ``ConfigError`` on bad content."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(data)


@dataclass(frozen=True)
class ExperimentRecord:
    m: int
    trial: int
    seed: int
    error_raw: float
    error_unit: float
    hamming_consistency_frac: float
    wall_time_ms: float


@dataclass(frozen=True)
class TrialResult:
    """A record plus the recovered estimate, for structural audits."""

    record: ExperimentRecord
    signal: np.ndarray
    estimate: np.ndarray


def run_trial(config: ExperimentConfig, m: int, trial: int, timing: bool = False) -> TrialResult:
    t0 = time.perf_counter()
    child = derive_seed(config.master_seed, m, trial)
    X = generate_bilr(config.n, config.s, config.r, derive_seed(child, "signal")).dense()
    ens_seed = derive_seed(child, "ensemble")
    if config.scheme == "pbp":
        ens = make_dense_ensemble(config.n, m, ens_seed, normalized=True)
        one = sense_and_back_project(ens, X)
        out = recover_pbp(one.signs, ens, config.s, config.r, back_projection=one.back_projection)
        ham = out.metadata["consistency_hamming"]
    else:
        ens = make_factorized_ensemble(config.n, m, config.p, ens_seed)
        # the lifted copy measures the estimate without regenerating the inner ensemble
        one = sense_and_back_project(ens, X, lift=True)
        out = recover_multistep(one.signs, ens, config.s, config.r, back_projection=one.back_projection)
        ham = hamming_fraction(quantize(sense_raw(one.lifted, out.estimate)), one.signs)
    est = out.estimate
    nrm = np.linalg.norm(est)
    err_raw = float(np.linalg.norm(X - est))
    # a zero estimate has no direction; count it as orthogonal to the signal
    err_unit = float(np.linalg.norm(X - est / nrm)) if nrm > 0 else float(np.sqrt(2.0))
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    rec = ExperimentRecord(m, trial, child, err_raw, err_unit, ham, wall)
    return TrialResult(rec, X, est)


def _cells(config: ExperimentConfig):
    return [(m, t) for m in config.m_grid for t in range(config.trials_per_m)]


def _run_cell(args):
    config, m, t, timing = args
    return run_trial(config, m, t, timing)


def run_experiment_full(config: ExperimentConfig, jobs: int = 1, timing: bool = False,
                        cells=None) -> list[TrialResult]:
    """Run every ``(m, trial)`` cell (or the given subset) and keep the estimates."""
    cells = _cells(config) if cells is None else list(cells)
    work = [(config, m, t, timing) for m, t in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, work))
    else:
        results = [_run_cell(w) for w in work]
    return sorted(results, key=lambda res: (res.record.m, res.record.trial))


def run_experiment(config: ExperimentConfig, jobs: int = 1, timing: bool = False) -> list[ExperimentRecord]:
    """Records sorted by ``(m, trial)``; identical for identical configs unless ``timing``."""
    return [res.record for res in run_experiment_full(config, jobs, timing)]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for rec in records:
        buf.write(",".join(_fmt(v) for v in asdict(rec).values()) + "\n")
    return buf.getvalue()


def records_to_json(records) -> str:
    return json.dumps([asdict(rec) for rec in records], indent=1) + "\n"


def write_records(records, path, fmt: str = "csv") -> None:
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_records(path) -> list[ExperimentRecord]:
    """Load records from a CSV or JSON results file."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        rows = json.loads(text)
    else:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or ",".join(reader.fieldnames) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        rows = list(reader)
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    return [ExperimentRecord(**{k: (int(v) if types[k] in ("int", int) else float(v))
                                for k, v in row.items()}) for row in rows]


def error_column(error_mode: str) -> str:
    return "error_raw" if error_mode == "raw" else "error_unit"


def summarize(records, column: str = "error_unit", statistic: str = "median") -> dict[int, float]:
    """Per-``m`` statistic of one error column."""
    if statistic not in ("median", "mean"):
        raise ValueError(f"statistic must be 'median' or 'mean', got {statistic!r}")
    agg = np.median if statistic == "median" else np.mean
    by_m: dict[int, list[float]] = {}
    for rec in records:
        by_m.setdefault(rec.m, []).append(getattr(rec, column))
    return {m: float(agg(v)) for m, v in sorted(by_m.items())}


def fit_decay_slope(records, statistic: str = "median", column: str = "error_unit") -> tuple[float, float]:
    """Least-squares line through ``(log m, log statistic)``; returns ``(slope, intercept)``."""
    table = summarize(records, column, statistic)
    if len(table) < 2:
        raise ValueError("need at least two distinct m values to fit a slope")
    ms = np.array(list(table), dtype=float)
    vals = np.array(list(table.values()))
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValueError("error statistics must be positive to fit on a log scale")
    design = np.column_stack([np.log(ms), np.ones_like(ms)])
    (slope, intercept), *_ = np.linalg.lstsq(design, np.log(vals), rcond=None)
    return float(slope), float(intercept)
