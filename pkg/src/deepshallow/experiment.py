"""Shallow/deep cross-check matrix: who fits whose data, with which optimizer.

A cell fits one network architecture to problems generated by one data-source
architecture with one method, over a list of seeds. For a size class the
matrix holds seven (network, data source) blocks, in this order::

    X_1 on X_1, X_3 on X_3, X_5 on X_5,        # self-fit, optimum known to be 0
    X_1 on X_3, X_1 on X_5,                    # shallow net, deep data
    X_3 on X_1, X_5 on X_1                     # deep net, shallow data

Seed ``s`` of a cell generates the problem ``generate_problem(data_arch, seed=s)``
and the starting point ``init_weights(network_arch, [s, 1])``. Every network and
method fitting the same data source sees the same problems, and every method
fitting the same (network, data source) pair starts from the same point.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .netcore import ArchitectureSpec
from .optim import METHODS, OptimizerConfig, TrainTrace, run_fit
from .probgen import (DEFAULT_SATURATION, arch_from_dict, arch_to_dict, build_size_class,
                      generate_problem, init_weights)

SCHEMA_VERSION = 1
X0_STREAM = 1
HISTORY_POINTS = 500
METHOD_ORDER = ("adadelta", "rmsprop", "sgd", "cg")
AGGREGATIONS = ("median", "mean")


class ResultsFormatError(ValueError):
    """A results store is corrupt or written by an incompatible version."""


@dataclass(frozen=True)
class CellSpec:
    network: str
    data_source: str
    network_arch: ArchitectureSpec
    data_source_arch: ArchitectureSpec
    method: str
    seeds: Tuple[int, ...]
    budget: int = 2000
    n_samples: int = 80
    input_distribution: str = "standard_normal"

    def __post_init__(self):
        if (self.network_arch.input_dim != self.data_source_arch.input_dim
                or self.network_arch.output_dim != self.data_source_arch.output_dim):
            raise ValueError(
                f"network {self.network} ({self.network_arch.label()}) and data source "
                f"{self.data_source} ({self.data_source_arch.label()}) differ in input/output dims")
        if not self.seeds:
            raise ValueError("a cell needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("cell seeds must be distinct")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.network, self.data_source, self.method)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig.for_method(self.method, max_gradient_calls=self.budget)


def aggregate(values: Sequence[float], how: str) -> float:
    if how == "median":
        return float(np.median(values))
    if how == "mean":
        return float(np.mean(values))
    raise ValueError(f"unknown aggregation {how!r}")


@dataclass
class CellResult:
    spec: CellSpec
    traces: List[Optional[TrainTrace]]
    aggregation: str = "median"
    errors: Dict[int, str] = field(default_factory=dict)

    def _ok(self) -> List[TrainTrace]:
        return [t for t in self.traces if t is not None]

    @property
    def failed(self) -> bool:
        return not self._ok()

    def agg(self, attr: str, how: Optional[str] = None) -> float:
        ok = self._ok()
        if not ok:
            return math.nan
        return aggregate([getattr(t, attr) for t in ok], how or self.aggregation)

    @property
    def f_init_agg(self) -> float:
        return self.agg("f_init")

    @property
    def f_opt_agg(self) -> float:
        return self.agg("f_opt")

    @property
    def gradient_calls_agg(self) -> int:
        ok = self._ok()
        return int(round(aggregate([t.gradient_calls_used for t in ok], "median"))) if ok else 0


def downsample_history(history, points: int = HISTORY_POINTS):
    if len(history) <= points:
        return list(history)
    idx = np.unique(np.linspace(0, len(history) - 1, points).round().astype(int))
    return [history[i] for i in idx]


def run_seed(spec: CellSpec, seed: int) -> TrainTrace:
    """One fit of a cell; the returned trace carries no parameter arrays."""
    with threadpool_limits(limits=1):
        problem = generate_problem(spec.data_source_arch, spec.n_samples,
                                   spec.input_distribution, seed)
        x0 = init_weights(spec.network_arch, [seed, X0_STREAM])
        trace = run_fit(spec.network_arch, problem.dataset, x0, spec.optimizer_config())
    return replace(trace, objective_history=downsample_history(trace.objective_history),
                   x_best=None, x_final=None)


def _run_unit(unit):
    spec, seed = unit
    try:
        return run_seed(spec, seed), None
    except Exception as exc:  # recorded per seed; one bad seed must not sink the cell
        return None, f"{type(exc).__name__}: {exc}"


def _execute(units, workers: int):
    if workers <= 1 or len(units) <= 1:
        return [_run_unit(u) for u in units]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_unit, units, chunksize=1))


def _assemble(specs: Sequence[CellSpec], outcomes, aggregation: str) -> List[CellResult]:
    results = []
    i = 0
    for spec in specs:
        traces, errors = [], {}
        for seed in spec.seeds:
            trace, err = outcomes[i]
            i += 1
            traces.append(trace)
            if err is not None:
                errors[seed] = err
        results.append(CellResult(spec, traces, aggregation, errors))
    return results


def run_cells(specs: Sequence[CellSpec], aggregation: str = "median",
              workers: int = 1) -> List[CellResult]:
    """Run many cells; (cell, seed) pairs are the parallel work units."""
    units = [(spec, seed) for spec in specs for seed in spec.seeds]
    return _assemble(specs, _execute(units, workers), aggregation)


def run_cell(spec: CellSpec, aggregation: str = "median", workers: int = 1) -> CellResult:
    result = run_cells([spec], aggregation, workers)[0]
    if result.failed:
        raise RuntimeError(f"every seed of cell {spec.key} failed: {result.errors}")
    return result


def ratio_to_cg(f_opt_by_method: Dict[str, float]) -> Dict[str, Optional[float]]:
    """``f_opt(method) / f_opt(cg)`` for every non-cg method; None when undefined."""
    cg = f_opt_by_method.get("cg")
    out = {}
    for method, value in f_opt_by_method.items():
        if method == "cg":
            continue
        if cg is None or not cg > 0 or not math.isfinite(value):
            out[method] = None
        else:
            out[method] = value / cg
    return out


def deep_shallow_ratio(deep_on_shallow_data: float, shallow_on_deep_data: float) -> Optional[float]:
    """Minimum reached by the deep net on shallow-generated data over the minimum
    reached by the shallow net on deep-generated data."""
    if not shallow_on_deep_data > 0 or not math.isfinite(deep_on_shallow_data):
        return None
    return deep_on_shallow_data / shallow_on_deep_data


@dataclass
class TableRow:
    network: str
    data_source: str
    method: str
    gradient_calls: int
    f_init_agg: float
    f_opt_agg: float
    ratio_to_cg: Optional[float] = None
    deep_shallow_ratio: Optional[float] = None
    f_opt_median: float = math.nan
    f_opt_mean: float = math.nan
    failed_seeds: int = 0
    note: str = ""


@dataclass
class SummaryRow:
    shallow: str
    deep: str
    method: str
    data_deep_nn_shallow: float
    data_shallow_nn_deep: float
    ratio: Optional[float]


@dataclass
class MatrixConfig:
    size_class: str = "A"
    methods: Tuple[str, ...] = METHOD_ORDER
    seeds: Tuple[int, ...] = tuple(range(15))
    budget: int = 2000
    saturation_factor: float = DEFAULT_SATURATION
    input_distribution: str = "standard_normal"
    aggregation: str = "median"
    master_seed: int = 0
    summary_method: str = "rmsprop"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.seeds = tuple(int(s) for s in self.seeds)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        build_size_class(self.size_class)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixConfig":
        return cls(**d)


@dataclass
class CrossCheckTable:
    size_class: str
    config: MatrixConfig
    cells: List[CellResult]
    rows: List[TableRow]
    summary: List[SummaryRow]

    def cell(self, network: str, data_source: str, method: str) -> CellResult:
        for c in self.cells:
            if c.spec.key == (network, data_source, method):
                return c
        raise KeyError((network, data_source, method))

    @property
    def failed_runs(self) -> int:
        return sum(len(c.errors) for c in self.cells)

    @property
    def total_runs(self) -> int:
        return sum(len(c.traces) for c in self.cells)


def matrix_blocks(size_class: str) -> List[Tuple[str, str]]:
    s = build_size_class(size_class).name
    depths = [d for d, _ in build_size_class(size_class).variants]
    shallow, deeps = depths[0], depths[1:]
    name = lambda d: f"{s}_{d}"
    blocks = [(name(d), name(d)) for d in depths]
    blocks += [(name(shallow), name(d)) for d in deeps]
    blocks += [(name(d), name(shallow)) for d in deeps]
    return blocks


def _ordered_methods(methods: Iterable[str]) -> List[str]:
    methods = set(methods)
    return [m for m in METHOD_ORDER if m in methods]


def matrix_specs(config: MatrixConfig) -> List[CellSpec]:
    size = build_size_class(config.size_class)
    archs = {f"{size.name}_{d}": size.arch(d, config.saturation_factor) for d, _ in size.variants}
    specs = []
    for network, data_source in matrix_blocks(size.name):
        for method in _ordered_methods(config.methods):
            specs.append(CellSpec(network, data_source, archs[network], archs[data_source],
                                  method, config.seeds, config.budget, size.data_size,
                                  config.input_distribution))
    return specs


def build_table(config: MatrixConfig, cells: List[CellResult]) -> CrossCheckTable:
    """Rows with both ratio columns plus the two-row deep/shallow summary."""
    by_key = {c.spec.key: c for c in cells}
    size = build_size_class(config.size_class)
    depths = [d for d, _ in size.variants]
    shallow = f"{size.name}_{depths[0]}"
    deeps = [f"{size.name}_{d}" for d in depths[1:]]

    def f_opt(key):
        c = by_key.get(key)
        return c.f_opt_agg if c is not None else math.nan

    rows = []
    for network, data_source in matrix_blocks(size.name):
        methods = _ordered_methods(m for (n, d, m) in by_key if (n, d) == (network, data_source))
        ratios = ratio_to_cg({m: f_opt((network, data_source, m)) for m in methods})
        for method in methods:
            c = by_key[(network, data_source, method)]
            ds = None
            if data_source == shallow and network in deeps:
                ds = deep_shallow_ratio(c.f_opt_agg, f_opt((shallow, network, method)))
            note = ""
            if c.errors:
                note = f"{len(c.errors)} of {len(c.traces)} seeds failed"
            rows.append(TableRow(
                network=network, data_source=data_source, method=method,
                gradient_calls=c.gradient_calls_agg,
                f_init_agg=c.f_init_agg, f_opt_agg=c.f_opt_agg,
                ratio_to_cg=ratios.get(method), deep_shallow_ratio=ds,
                f_opt_median=c.agg("f_opt", "median"), f_opt_mean=c.agg("f_opt", "mean"),
                failed_seeds=len(c.errors), note=note))

    present = {m for (_, _, m) in by_key}
    summary_method = config.summary_method if config.summary_method in present else \
        _ordered_methods(present)[0]
    summary = []
    for deep in deeps:
        sd = f_opt((shallow, deep, summary_method))
        dsv = f_opt((deep, shallow, summary_method))
        summary.append(SummaryRow(shallow, deep, summary_method, sd, dsv,
                                  deep_shallow_ratio(dsv, sd)))
    return CrossCheckTable(size.name, config, list(cells), rows, summary)


def run_matrix(config: MatrixConfig, workers: int = 1) -> CrossCheckTable:
    """All self-fit and cross cells of a size class for every configured method."""
    specs = matrix_specs(config)
    return build_table(config, run_cells(specs, config.aggregation, workers))


# persistence -------------------------------------------------------------

def trace_to_dict(trace: TrainTrace) -> dict:
    d = asdict(trace)
    d.pop("x_best")
    d.pop("x_final")
    d["objective_history"] = [[int(i), float(f)] for i, f in trace.objective_history]
    return d


def trace_from_dict(d: dict) -> TrainTrace:
    d = dict(d)
    d["objective_history"] = [(int(i), float(f)) for i, f in d["objective_history"]]
    return TrainTrace(**d)


def _spec_record(spec: CellSpec) -> dict:
    return {
        "network": spec.network,
        "data_source": spec.data_source,
        "network_arch": arch_to_dict(spec.network_arch),
        "data_source_arch": arch_to_dict(spec.data_source_arch),
        "method": spec.method,
        "budget": spec.budget,
        "n_samples": spec.n_samples,
        "input_distribution": spec.input_distribution,
        "optimizer": spec.optimizer_config().to_dict(),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def persist(table: CrossCheckTable, path) -> Path:
    """Write a results store as JSON lines.

    Record kinds, in order: one ``header`` (schema version and the effective
    config), one ``run`` per (cell, seed), one ``cell`` per cell with median and
    mean aggregates, one ``row`` per detail-table row and one ``summary`` per
    summary-table row.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_dumps({"record": "header", "schema_version": SCHEMA_VERSION,
                     "size_class": table.size_class, "config": table.config.to_dict(),
                     "x0_seed": f"init_weights(network_arch, [seed, {X0_STREAM}])"})]
    for cell in table.cells:
        base = _spec_record(cell.spec)
        for seed, trace in zip(cell.spec.seeds, cell.traces):
            rec = {"record": "run", **base, "seed": seed}
            if trace is None:
                rec["error"] = cell.errors.get(seed, "unknown failure")
            else:
                rec["trace"] = trace_to_dict(trace)
            lines.append(_dumps(rec))
    for cell in table.cells:
        lines.append(_dumps({
            "record": "cell", "network": cell.spec.network,
            "data_source": cell.spec.data_source, "method": cell.spec.method,
            "seeds": list(cell.spec.seeds), "aggregation": cell.aggregation,
            "f_init_median": cell.agg("f_init", "median"), "f_init_mean": cell.agg("f_init", "mean"),
            "f_opt_median": cell.agg("f_opt", "median"), "f_opt_mean": cell.agg("f_opt", "mean"),
        }))
    for row in table.rows:
        lines.append(_dumps({"record": "row", **asdict(row)}))
    for s in table.summary:
        lines.append(_dumps({"record": "summary", **asdict(s)}))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_records(path) -> List[dict]:
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ResultsFormatError(f"{path}:{lineno}: corrupt record ({exc})") from None
    if not records:
        raise ResultsFormatError(f"{path}: results store is empty")
    header = records[0]
    if header.get("record") != "header":
        raise ResultsFormatError(f"{path}: first record is not a header")
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ResultsFormatError(
            f"{path}: schema_version {version!r} is not supported (this build reads "
            f"{SCHEMA_VERSION})")
    return records


def load(path) -> CrossCheckTable:
    records = read_records(path)
    header = records[0]
    config = MatrixConfig.from_dict(header["config"])
    cells: Dict[tuple, dict] = {}
    for rec in records[1:]:
        if rec["record"] != "run":
            continue
        key = (rec["network"], rec["data_source"], rec["method"])
        entry = cells.setdefault(key, {"rec": rec, "seeds": [], "traces": [], "errors": {}})
        entry["seeds"].append(int(rec["seed"]))
        if "error" in rec:
            entry["traces"].append(None)
            entry["errors"][int(rec["seed"])] = rec["error"]
        else:
            entry["traces"].append(trace_from_dict(rec["trace"]))
    results = []
    for (network, data_source, method), entry in cells.items():
        rec = entry["rec"]
        spec = CellSpec(network, data_source, arch_from_dict(rec["network_arch"]),
                        arch_from_dict(rec["data_source_arch"]), method, tuple(entry["seeds"]),
                        int(rec["budget"]), int(rec["n_samples"]), rec["input_distribution"])
        results.append(CellResult(spec, entry["traces"], config.aggregation, entry["errors"]))
    table = build_table(config, results)
    stored_rows = [TableRow(**{k: v for k, v in r.items() if k != "record"})
                   for r in records if r["record"] == "row"]
    stored_summary = [SummaryRow(**{k: v for k, v in r.items() if k != "record"})
                      for r in records if r["record"] == "summary"]
    if stored_rows:
        table.rows = stored_rows
    if stored_summary:
        table.summary = stored_summary
    return table


def default_workers() -> int:
    return os.cpu_count() or 1
