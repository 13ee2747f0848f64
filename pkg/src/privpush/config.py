"""Config-file parsing, run assembly, and on-disk run formats.

Config files are flat INI-style sections: topology, compression, privacy,
problem, run, and (for sweeps) grid.  Every run writes one CSV of per-
iteration records plus a JSON sidecar holding the fully resolved config,
the estimated mixing constants, the noise variance, and the admissibility
checks.  Output bytes are deterministic: floats are serialized with repr
(shortest round-trip) and no timestamps are recorded.
"""
from __future__ import annotations

import configparser
import csv
import json
import os

import numpy as np

from .compression import CompressorSpec
from .engine import EngineConfig, RunRecord, RunResult
from .privacy import PrivacySpec
from .problems import Problem, make_problem
from .topology import (
    DirectedGraph,
    MixingMatrix,
    SpectralConstants,
    build_graph,
    build_mixing,
    estimate_constants,
    load_edge_list,
)


class ConfigError(ValueError):
    """Malformed config file or inconsistent field values."""


RUN_CSV_COLUMNS = (
    "t",
    "grad_norm_sq_avg",
    "consensus_err",
    "U_t",
    "bits_cum",
    "bits_paper_convention",
    "loss_avg",
    "test_acc",
)


def parse_config(path: str) -> dict[str, dict[str, str]]:
    """Read an INI config into plain nested dicts of strings."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {section: dict(parser[section]) for section in parser.sections()}


def _get(section: dict[str, str], key: str, cast, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    raw = section[key]
    try:
        if cast is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {cast.__name__}") from None


def build_topology(cfg: dict[str, dict[str, str]]) -> tuple[DirectedGraph, MixingMatrix, int]:
    topo = cfg.get("topology", {})
    kind = _get(topo, "kind", str, default="exponential")
    horizon = _get(topo, "horizon", int, default=200)
    edge_file = _get(topo, "edge_file", str)
    if kind == "custom" or edge_file is not None:
        if edge_file is None:
            raise ConfigError("topology.kind=custom requires topology.edge_file")
        graph = load_edge_list(edge_file, n=_get(topo, "n", int))
    else:
        n = _get(topo, "n", int, required=True)
        graph = build_graph(kind, n)
    return graph, build_mixing(graph), horizon


def build_compressor(cfg: dict[str, dict[str, str]], dim: int) -> CompressorSpec:
    comp = cfg.get("compression", {})
    kind = _get(comp, "kind", str, default="identity")
    # tolerate the suffixed spellings rand_a / gsgd_b
    if kind.startswith("rand"):
        kind = "rand"
    elif kind.startswith("gsgd"):
        kind = "gsgd"
    return CompressorSpec(
        kind=kind,
        d=dim,
        a=_get(comp, "a", float),
        b=_get(comp, "b", int),
        float_width=_get(comp, "float_width", int, default=32),
    )


def build_problem(cfg: dict[str, dict[str, str]], n: int) -> Problem:
    prob = cfg.get("problem", {})
    return make_problem(
        kind=_get(prob, "kind", str, default="quadratic"),
        d=_get(prob, "d", int, default=10),
        n=n,
        J=_get(prob, "j", int, default=_get(prob, "J", int, default=100)),
        reg=_get(prob, "reg", float, default=0.0),
        synth_seed=_get(prob, "synth_seed", int, default=0),
        spread=_get(prob, "spread", float, default=0.5),
        margin=_get(prob, "margin", float, default=2.5),
        hidden=_get(prob, "hidden", int, default=8),
        csv_file=_get(prob, "csv_file", str),
    )


def build_privacy(cfg: dict[str, dict[str, str]], J: int, T: int, dim: int) -> PrivacySpec | None:
    priv = cfg.get("privacy")
    if priv is None:
        return None
    return PrivacySpec(
        epsilon=_get(priv, "epsilon", float, default=0.5),
        delta=_get(priv, "delta", float, default=1e-4),
        G=_get(priv, "clip_g", float, default=_get(priv, "clip_G", float, default=1.5)),
        J=J,
        T=T,
        d=dim,
        c1=_get(priv, "c1", float, default=1.0),
        c2=_get(priv, "c2", float, default=1.0),
        enabled=_get(priv, "enabled", bool, default=True),
    )


def build_engine_config(
    cfg: dict[str, dict[str, str]],
    seed_override: int | None = None,
    estimate: bool = True,
) -> tuple[EngineConfig, SpectralConstants | None]:
    """Assemble a runnable configuration; optionally estimate mixing constants."""
    graph, mixing, horizon = build_topology(cfg)
    problem = build_problem(cfg, graph.n)
    dim = problem.objective.dim
    runsec = cfg.get("run", {})
    T = _get(runsec, "t", int, default=_get(runsec, "T", int, default=100))
    if T < 1:
        raise ConfigError(f"run.T must be >= 1, got {T}")
    seed = seed_override if seed_override is not None else _get(runsec, "seed", int, default=0)
    privacy = build_privacy(cfg, J=problem.J, T=T, dim=dim)
    clip_enabled = _get(cfg.get("privacy", {}), "clip_enabled", bool, default=True)
    consts = estimate_constants(mixing, horizon) if estimate else None
    engine_cfg = EngineConfig(
        mixing=mixing,
        problem=problem,
        compressor=build_compressor(cfg, dim),
        privacy=privacy,
        eta=_get(runsec, "eta", float, default=0.05),
        T=T,
        seed=seed,
        algorithm=_get(runsec, "algorithm", str, default="dp-csgp"),
        clip_enabled=clip_enabled,
        overflow_guard=_get(runsec, "overflow_guard", float, default=1e12),
        enforce_omega_bound=_get(runsec, "enforce_omega_bound", bool, default=False),
        constants=consts,
    )
    return engine_cfg, consts


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_run_csv(path: str, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, col)) for col in RUN_CSV_COLUMNS])


def read_run_csv(path: str) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for key, raw in row.items():
                if raw == "":
                    parsed[key] = None
                elif key in ("t", "bits_cum", "bits_paper_convention"):
                    parsed[key] = int(raw)
                else:
                    parsed[key] = float(raw)
            rows.append(parsed)
    return rows


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [float(v) for v in obj.ravel()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_sidecar(
    path: str,
    resolved: dict,
    result: RunResult,
    consts: SpectralConstants | None,
) -> None:
    """JSON companion to the run CSV: config, constants, checks, failure."""
    payload = {
        "resolved_config": _jsonable(resolved),
        "constants": None
        if consts is None
        else {
            "lambda": consts.lam,
            "C": consts.C,
            "beta": consts.beta,
            "gamma": consts.gamma,
            "phi": [float(v) for v in consts.phi],
            "horizon": consts.horizon,
        },
        "sigma_sq": result.meta.get("sigma_sq"),
        "omega_check": result.meta.get("omega_check"),
        "budget_check": result.meta.get("budget_check"),
        "meta": {k: v for k, v in result.meta.items() if k not in ("omega_check", "budget_check")},
        "failure": result.failure,
    }
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
