"""Experiment orchestration: schedules, grids, summaries, scaling probes.

The grid runner sweeps (epsilon x compressor x algorithm) cells with
repeated seeds, writes one CSV + JSON sidecar per run, and aggregates a
summary table plus accuracy-versus-bits curves resampled onto a shared
bit grid.  Re-running a grid skips cells whose outputs already exist and
reproduces the remaining bytes exactly.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .compression import CompressorSpec
from .config import (
    ConfigError,
    build_engine_config,
    read_run_csv,
    write_run_csv,
    write_sidecar,
    _get,
    _jsonable,
)
from .engine import AdmissibilityCheck, EngineConfig, RunResult, check_omega_admissible, run
from .privacy import BudgetCheck, PrivacySpec, check_budget_admissible, sigma_sq
from .topology import SpectralConstants

log = logging.getLogger(__name__)

GRID_SEED_STRIDE = 10_007


@dataclass(frozen=True)
class Schedule:
    """Horizon, step size, and noise level implied by the convergence theory."""

    T: int
    eta: float
    sigma_sq: float
    J_ok: bool
    J_required: float
    budget: BudgetCheck
    omega: AdmissibilityCheck | None
    params: dict = field(default_factory=dict)


def theoretical_schedule(
    epsilon: float,
    delta: float,
    J: int,
    n: int,
    d: int,
    c2: float = 1.0,
    L: float = 1.0,
    G: float = 1.0,
    c1: float = 1.0,
    compressor: CompressorSpec | None = None,
    constants: SpectralConstants | None = None,
) -> Schedule:
    """T = floor(J^2 eps^2 / (c2^2 d ln(1/delta))), eta and sigma^2 to match.

    The compressor admissibility flag is only filled in when both the
    compressor and the topology constants are supplied.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if epsilon <= 0.0 or J < 1 or n < 1 or d < 1:
        raise ValueError("epsilon, J, n, d must all be positive")
    if c2 <= 0.0 or L < 0.0:
        raise ValueError("c2 must be positive and L non-negative")
    log_term = math.log(1.0 / delta)
    T = max(1, math.floor(J**2 * epsilon**2 / (c2**2 * d * log_term)))
    eta = 1.0 / (J * epsilon / (c2 * math.sqrt(n * d * log_term)) + L)
    priv = PrivacySpec(epsilon=epsilon, delta=delta, G=G, J=J, T=T, d=d, c1=c1, c2=c2)
    J_required = c2 * math.sqrt(d * log_term) * n**2.5 / epsilon
    omega = None
    if compressor is not None and constants is not None:
        omega = check_omega_admissible(compressor, constants)
    return Schedule(
        T=T,
        eta=eta,
        sigma_sq=sigma_sq(priv),
        J_ok=J >= J_required,
        J_required=J_required,
        budget=check_budget_admissible(priv),
        omega=omega,
        params={
            "epsilon": epsilon, "delta": delta, "J": J, "n": n, "d": d,
            "c1": c1, "c2": c2, "L": L, "G": G,
        },
    )


def parse_compressor_tag(tag: str) -> tuple[str, float | None, int | None]:
    """'identity', 'rand:0.5' (or rand_0.5), 'gsgd:8' (or gsgd_8) -> (kind, a, b)."""
    t = tag.strip().replace("_", ":")
    try:
        if t == "identity":
            return ("identity", None, None)
        if t.startswith("rand:"):
            return ("rand", float(t.split(":", 1)[1]), None)
        if t.startswith("gsgd:"):
            return ("gsgd", None, int(t.split(":", 1)[1]))
    except ValueError:
        pass
    raise ConfigError(f"cannot parse compressor tag {tag!r}")


@dataclass
class GridCell:
    index: int
    epsilon: float
    compressor_tag: str
    algorithm: str


@dataclass
class ExperimentGrid:
    base_cfg: dict[str, dict[str, str]]
    epsilons: list[float]
    compressor_tags: list[str]
    algorithms: list[str]
    repeats: int
    out_dir: str
    master_seed: int

    @property
    def cells(self) -> list[GridCell]:
        out = []
        idx = 0
        for eps in self.epsilons:
            for tag in self.compressor_tags:
                for algo in self.algorithms:
                    out.append(GridCell(idx, eps, tag, algo))
                    idx += 1
        return out


def grid_from_config(cfg: dict[str, dict[str, str]]) -> ExperimentGrid:
    grid = cfg.get("grid")
    if grid is None:
        raise ConfigError("grid runs need a [grid] section")
    epsilons = [float(v) for v in _get(grid, "epsilons", str, required=True).split(",")]
    tags = [v.strip() for v in _get(grid, "compressors", str, default="identity").split(",")]
    algorithms = [v.strip() for v in _get(grid, "algorithms", str, default="dp-csgp").split(",")]
    for tag in tags:
        parse_compressor_tag(tag)
    repeats = _get(grid, "repeats", int, default=5)
    if repeats < 1:
        raise ConfigError(f"grid.repeats must be >= 1, got {repeats}")
    return ExperimentGrid(
        base_cfg=cfg,
        epsilons=epsilons,
        compressor_tags=tags,
        algorithms=algorithms,
        repeats=repeats,
        out_dir=_get(grid, "out", str, default="grid_out"),
        master_seed=_get(cfg.get("run", {}), "seed", int, default=0),
    )


def _cell_config(grid: ExperimentGrid, cell: GridCell) -> dict[str, dict[str, str]]:
    cfg = {section: dict(kv) for section, kv in grid.base_cfg.items()}
    cfg.setdefault("privacy", {})["epsilon"] = repr(cell.epsilon)
    kind, a, b = parse_compressor_tag(cell.compressor_tag)
    comp = cfg.setdefault("compression", {})
    comp["kind"] = kind
    comp.pop("a", None)
    comp.pop("b", None)
    if a is not None:
        comp["a"] = repr(a)
    if b is not None:
        comp["b"] = str(b)
    cfg.setdefault("run", {})["algorithm"] = cell.algorithm
    return cfg


def _run_key(resolved: dict, seed: int) -> str:
    blob = json.dumps({"config": _jsonable(resolved), "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:8]


def run_grid(grid: ExperimentGrid) -> dict:
    """Execute all cells x repeats, resuming past completed runs.

    Per-run seeds are master_seed + cell_index * 10007 + repeat_index, so
    cells are decoupled and adding repeats never reshuffles earlier runs.
    Failed runs are recorded in the summary and do not stop the sweep.
    """
    os.makedirs(grid.out_dir, exist_ok=True)
    executed, skipped, failed = 0, 0, 0
    for cell in grid.cells:
        cfg = _cell_config(grid, cell)
        for rep in range(grid.repeats):
            seed = grid.master_seed + cell.index * GRID_SEED_STRIDE + rep
            key = _run_key(cfg, seed)
            tag = cell.compressor_tag.replace(":", "").replace(".", "")
            stem = f"cell{cell.index:03d}_{cell.algorithm}_{tag}_eps{cell.epsilon:g}_rep{rep}_{key}"
            csv_path = os.path.join(grid.out_dir, stem + ".csv")
            meta_path = os.path.join(grid.out_dir, stem + ".json")
            if os.path.exists(csv_path) and os.path.exists(meta_path):
                skipped += 1
                continue
            engine_cfg, consts = build_engine_config(cfg, seed_override=seed)
            result = run(engine_cfg)
            result.meta["cell_index"] = cell.index
            result.meta["repeat"] = rep
            result.meta["compressor_tag"] = cell.compressor_tag
            if result.failure is not None:
                failed += 1
                log.warning("cell %d rep %d failed: %s", cell.index, rep, result.failure)
            write_run_csv(csv_path, result.records)
            write_sidecar(meta_path, cfg, result, consts)
            executed += 1
    summary_rows = summarize_runs(grid.out_dir)
    write_summary(summary_rows, os.path.join(grid.out_dir, "summary.csv"))
    curves = accuracy_bits_curves(grid.out_dir)
    if curves is not None:
        _write_curves(curves, os.path.join(grid.out_dir, "curves.csv"))
    return {
        "executed": executed,
        "skipped": skipped,
        "failed": failed,
        "summary": os.path.join(grid.out_dir, "summary.csv"),
    }


def _load_runs(in_dir: str) -> list[dict]:
    runs = []
    for name in sorted(os.listdir(in_dir)):
        if not name.endswith(".json") or name == "summary.json":
            continue
        stem = name[:-5]
        csv_path = os.path.join(in_dir, stem + ".csv")
        if not os.path.exists(csv_path):
            continue
        with open(os.path.join(in_dir, name)) as fh:
            sidecar = json.load(fh)
        runs.append({"stem": stem, "sidecar": sidecar, "records": read_run_csv(csv_path)})
    return runs


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


SUMMARY_COLUMNS = (
    "cell_index", "algorithm", "compressor", "epsilon", "repeats", "failures",
    "final_loss_mean", "final_loss_std",
    "final_acc_mean", "final_acc_std",
    "final_grad_norm_sq_mean", "final_grad_norm_sq_std",
    "final_bits_mean", "final_bits_paper_mean",
)


def summarize_runs(in_dir: str) -> list[dict]:
    """Group per-run CSVs by cell and aggregate their final records."""
    groups: dict[tuple, list[dict]] = {}
    for entry in _load_runs(in_dir):
        meta = entry["sidecar"].get("meta", {})
        key = (
            meta.get("cell_index", 0),
            meta.get("algorithm", ""),
            meta.get("compressor", ""),
            meta.get("epsilon"),
        )
        groups.setdefault(key, []).append(entry)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], str(k))):
        cell_index, algorithm, compressor, epsilon = key
        entries = groups[key]
        finals = [e["records"][-1] for e in entries if e["records"]]
        failures = sum(1 for e in entries if e["sidecar"].get("failure"))
        row: dict = {
            "cell_index": cell_index,
            "algorithm": algorithm,
            "compressor": compressor,
            "epsilon": epsilon,
            "repeats": len(entries),
            "failures": failures,
        }
        defaults = {col: None for col in SUMMARY_COLUMNS if col.startswith("final")}
        row.update(defaults)
        if finals:
            loss_m, loss_s = _mean_std([r["loss_avg"] for r in finals])
            g_m, g_s = _mean_std([r["grad_norm_sq_avg"] for r in finals])
            bits_m, _ = _mean_std([float(r["bits_cum"]) for r in finals])
            bits_p_m, _ = _mean_std([float(r["bits_paper_convention"]) for r in finals])
            row.update(
                final_loss_mean=loss_m, final_loss_std=loss_s,
                final_grad_norm_sq_mean=g_m, final_grad_norm_sq_std=g_s,
                final_bits_mean=bits_m, final_bits_paper_mean=bits_p_m,
            )
            accs = [r["test_acc"] for r in finals if r["test_acc"] is not None]
            if accs:
                acc_m, acc_s = _mean_std(accs)
                row.update(final_acc_mean=acc_m, final_acc_std=acc_s)
        rows.append(row)
    return rows


def write_summary(rows: list[dict], path: str) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            out = []
            for col in SUMMARY_COLUMNS:
                v = row.get(col)
                if v is None:
                    out.append("")
                elif isinstance(v, float):
                    out.append(repr(v))
                else:
                    out.append(str(v))
            writer.writerow(out)


def accuracy_bits_curves(in_dir: str, points: int = 101) -> dict | None:
    """Per-cell mean accuracy resampled onto one shared cumulative-bit grid."""
    by_cell: dict[str, list[list[dict]]] = {}
    for entry in _load_runs(in_dir):
        recs = entry["records"]
        if not recs or recs[0].get("test_acc") is None:
            continue
        meta = entry["sidecar"].get("meta", {})
        label = f"cell{meta.get('cell_index', 0):03d}_{meta.get('algorithm', '')}_{meta.get('compressor', '')}"
        by_cell.setdefault(label, []).append(recs)
    if not by_cell:
        return None
    cell_curves: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for label, runs in by_cell.items():
        # seeds within a cell share the bit axis; average accuracy pointwise
        bits = np.array([r["bits_cum"] for r in runs[0]], dtype=float)
        accs = np.mean([[r["test_acc"] for r in recs] for recs in runs], axis=0)
        cell_curves[label] = (bits, accs)
    lo = max(curve[0][0] for curve in cell_curves.values())
    hi = min(curve[0][-1] for curve in cell_curves.values())
    if hi <= lo:
        return None
    grid_bits = np.linspace(lo, hi, points)
    return {
        "bits": grid_bits,
        "cells": {
            label: np.interp(grid_bits, bits, accs)
            for label, (bits, accs) in sorted(cell_curves.items())
        },
    }


def _write_curves(curves: dict, path: str) -> None:
    import csv as _csv

    labels = list(curves["cells"])
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["bits", *labels])
        for k, b in enumerate(curves["bits"]):
            writer.writerow([repr(float(b))] + [repr(float(curves["cells"][l][k])) for l in labels])


@dataclass(frozen=True)
class ProbeRow:
    n: int
    mean_metric: float
    ratio_to_prev: float | None


@dataclass(frozen=True)
class ProbeReport:
    rows: tuple[ProbeRow, ...]
    decreasing: bool


def utility_probe(results_by_n: dict[int, list[RunResult]]) -> ProbeReport:
    """Check that (1/T) sum_t ||grad f(xbar_t)||^2 shrinks as n grows.

    Guards: at least two network sizes, at least five seeds each, quadratic
    objective, positive noise variance, and schedules that came from the
    theory (otherwise the comparison is meaningless).
    """
    if len(results_by_n) < 2:
        raise ValueError("need at least two network sizes to probe the n-trend")
    for n, results in results_by_n.items():
        if len(results) < 5:
            raise ValueError(f"n={n}: need at least 5 seeds, got {len(results)}")
        for res in results:
            if res.failure is not None:
                raise ValueError(f"n={n}: cannot probe with failed runs ({res.failure})")
            if res.meta.get("objective") != "quadratic":
                raise ValueError("the utility probe is defined for the quadratic objective")
            if not res.meta.get("sigma_sq", 0.0) > 0.0:
                raise ValueError("utility probe needs sigma_sq > 0; noiseless runs show no n-effect")
            if res.meta.get("schedule_source") != "theoretical":
                raise ValueError("utility probe requires theoretically scheduled runs")
    rows: list[ProbeRow] = []
    prev: float | None = None
    for n in sorted(results_by_n):
        metrics = [
            float(np.mean([rec.grad_norm_sq_avg for rec in res.records]))
            for res in results_by_n[n]
        ]
        mean_metric = sum(metrics) / len(metrics)
        rows.append(
            ProbeRow(
                n=n,
                mean_metric=mean_metric,
                ratio_to_prev=None if prev is None else mean_metric / prev,
            )
        )
        prev = mean_metric
    decreasing = all(r.ratio_to_prev < 1.0 for r in rows[1:])
    return ProbeReport(rows=tuple(rows), decreasing=decreasing)


def run_scheduled(config: EngineConfig, schedule: Schedule) -> RunResult:
    """Run with (T, eta) taken from a theoretical schedule; tags the result."""
    cfg = replace(config, T=schedule.T, eta=schedule.eta)
    if cfg.privacy is not None:
        cfg = replace(cfg, privacy=replace_privacy_T(cfg.privacy, schedule.T))
    result = run(cfg)
    result.meta["schedule_source"] = "theoretical"
    return result


def replace_privacy_T(spec: PrivacySpec, T: int) -> PrivacySpec:
    from dataclasses import replace as _replace

    return _replace(spec, T=T)
