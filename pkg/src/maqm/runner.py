"""Scenario configuration, orchestration and output writing.

A scenario is one JSON document. It is validated against the dataclass
schema below, unknown keys included, and every module object is built
before anything runs. A config that would fail later therefore fails at
load time.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
import types
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, fock, tomography
from .calibration import load_defaults, stored_fidelity
from .fitting import FitError, fit_exponential
from .memory import (CellAddress, IntegrationError, MemoryModelError, StirapPulse, address_to_rf,
                     grid_from_records, load_grid, stirap_transfer)
from .photonics import (CalibrationError, DetectionChain, anticorrelation, calibrate_chi,
                        fidelity_bound, herald_statistics, source_for)
from .protocol import (SIX_STATES, LinkTimeout, NodeConfig, NoiseModel, ProtocolError, raqm_shot,
                       raqm_spec, run_shot, swap_target)
from .rng import check_seed, rng_for

SCHEMA_VERSION = 1
KINDS = ("lifetime", "repeater", "raqm", "stirap", "herald-stats")
WORKERS_ENV = "MAQM_WORKERS"
CHUNK = 250  # shots per work item; fixed so chunking never depends on worker count


class ConfigError(ValueError):
    """Invalid scenario configuration (exit status 2)."""


class RunError(RuntimeError):
    """Failure while running a valid scenario (exit status 3)."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or {}


# ------------------------------------------------------------------ schema

@dataclass
class SourceSection:
    chi: float | None = None  # None: calibrate to target_g_c
    target_g_c: float = 25.0
    n_min: int = 3
    retrieval: float = 0.35


@dataclass
class ChainSection:
    eta_aod: float = 0.95
    eta_fiber: float = 0.85
    eta_optics: float = 0.82
    eta_detector: float = 0.45
    dark_prob: float = 0.0


@dataclass
class NodeSection:
    pair1: list = field(default_factory=lambda: [[2, 2], [3, 2]])
    pair2: list = field(default_factory=lambda: [[2, 3], [3, 3]])
    p_S: float = 0.004
    trial_period: float = 1.5e-6
    bsm_wait: float = 10e-6
    bsm_gap: float = 5e-6
    aod_switch_time: float = 0.5e-6
    raqm_switch_wait: float = 10e-6
    max_trials: int = 10**7
    number_resolving: bool = False


@dataclass
class NoiseSection:
    # None means "take the shipped calibration"
    link_fidelity: float | None = None
    coherence_time: float | None = None
    bsm_visibility: float | None = None
    stirap_residual: float | None = None
    tau_fast: float | None = None
    noiseless: bool = False


@dataclass
class PulseSection:
    omega1: float = 2 * math.pi * 20e6
    omega2: float = 2 * math.pi * 20e6
    sigma: float = 0.7e-6
    delay: float = 1.4e-6
    detuning: float = 2 * math.pi * 40e6
    two_photon_detuning: float = 0.0
    steps_per_sigma: int = 200
    trajectory_stride: int = 50


@dataclass
class LifetimeSection:
    times: list = field(default_factory=lambda: [i * 2e-4 for i in range(11)])
    trials_per_point: int = 20000
    probe_time: float = 1e-4
    cells: list | None = None  # None: every cell of the grid
    fidelity_times: list = field(default_factory=lambda: [i * 1e-4 for i in range(10)])
    storage_time: float | None = None


@dataclass
class TomographySection:
    coincidences: int = 2000
    bootstrap_rounds: int = 200


@dataclass
class RaqmSection:
    states: list = field(default_factory=lambda: list(SIX_STATES))
    orders: list = field(default_factory=lambda: [[1, 2], [2, 1]])
    shots: int = 400
    counts: int = 10000


@dataclass
class ScenarioConfig:
    kind: str
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    shots: int = 10000
    source: SourceSection = field(default_factory=SourceSection)
    signal_chain: ChainSection = field(default_factory=ChainSection)
    idler_chain: ChainSection = field(default_factory=ChainSection)
    node: NodeSection = field(default_factory=NodeSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    grid: list | str | None = None  # records, a path to a grid table, or None for defaults
    pulse: PulseSection = field(default_factory=PulseSection)
    lifetime: LifetimeSection = field(default_factory=LifetimeSection)
    tomography: TomographySection = field(default_factory=TomographySection)
    raqm: RaqmSection = field(default_factory=RaqmSection)


def _check_type(value, tp, where):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        for alt in typing.get_args(tp):
            try:
                return _check_type(value, alt, where)
            except ConfigError:
                pass
        raise ConfigError(f"{where}: {value!r} matches none of {tp}")
    if tp is type(None):
        if value is not None:
            raise ConfigError(f"{where}: expected null")
        return None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, where)
    raise ConfigError(f"{where}: unsupported type {tp}")


def _from_dict(cls, data, where="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {k: _check_type(v, hints[k], f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kw)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


@dataclass(frozen=True)
class Built:
    """Module objects constructed from a validated config."""

    config: ScenarioConfig
    node: NodeConfig
    noise: NoiseModel
    signal_chain: DetectionChain
    idler_chain: DetectionChain
    pulse: StirapPulse


def _chain(sec: ChainSection) -> DetectionChain:
    return DetectionChain(**dataclasses.asdict(sec))


def _grid(cfg: ScenarioConfig, defaults):
    if cfg.grid is None:
        return grid_from_records(defaults["grid"])
    if isinstance(cfg.grid, str):
        return load_grid(cfg.grid)
    return grid_from_records(cfg.grid)


def _noise(cfg: ScenarioConfig, idler: DetectionChain) -> NoiseModel:
    if cfg.noise.noiseless:
        others = {k: v for k, v in dataclasses.asdict(cfg.noise).items() if k != "noiseless"}
        if any(v is not None for v in others.values()):
            raise ConfigError("noise.noiseless excludes explicit noise parameters")
        return NoiseModel.noiseless()
    d = load_defaults()
    v = d["values"]
    kw = {}
    for name in ("link_fidelity", "coherence_time", "bsm_visibility", "stirap_residual", "tau_fast"):
        val = getattr(cfg.noise, name)
        kw[name] = v[name] if val is None else val
    return NoiseModel(idler_chain=idler, grid=_grid(cfg, d), **kw)


def build(cfg: ScenarioConfig) -> Built:
    """Construct every module object the scenario needs; any rejection is a ConfigError."""
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {cfg.schema_version} unsupported (expected {SCHEMA_VERSION})")
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {cfg.kind!r}; expected one of {KINDS}")
    try:
        check_seed(cfg.seed)
        if cfg.shots < 1:
            raise ConfigError("shots must be >= 1")
        sig, idl = _chain(cfg.signal_chain), _chain(cfg.idler_chain)
        nd = dataclasses.asdict(cfg.node)
        for k in ("pair1", "pair2"):
            pair = nd[k]
            if (not isinstance(pair, list) or len(pair) != 2
                    or any(not isinstance(c, list) or len(c) != 2 for c in pair)):
                raise ConfigError(f"node.{k} must be two [x, y] cells")
            nd[k] = tuple(CellAddress(*c) for c in pair)
        node = NodeConfig(**nd)
        noise = _noise(cfg, idl)
        for pair in node.pairs:
            for c in pair:
                noise.cell(c)
        p = dataclasses.asdict(cfg.pulse)
        extra = {k: p.pop(k) for k in ("two_photon_detuning", "steps_per_sigma", "trajectory_stride")}
        pulse = StirapPulse(**p)
        if extra["steps_per_sigma"] < 4 or extra["trajectory_stride"] < 1:
            raise ConfigError("pulse.steps_per_sigma must be >= 4 and trajectory_stride >= 1")
        _check_source(cfg.source)
        _check_lifetime(cfg.lifetime, noise)
        _check_tomography(cfg.tomography)
        _check_raqm(cfg.raqm)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, OSError) as e:
        raise ConfigError(str(e)) from None
    return Built(cfg, node, noise, sig, idl, pulse)


def _check_source(s: SourceSection):
    if s.chi is not None:
        source_for(s.chi, s.n_min)
    elif not s.target_g_c > 1:
        raise ConfigError("source.target_g_c must exceed 1")
    if not 0 <= s.retrieval <= 1 or s.n_min < 1:
        raise ConfigError("source.retrieval must be in [0, 1] and n_min >= 1")


def _check_lifetime(s: LifetimeSection, noise: NoiseModel):
    for name in ("times", "fidelity_times"):
        vals = getattr(s, name)
        if any(isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0 for t in vals):
            raise ConfigError(f"lifetime.{name} must be non-negative numbers")
    if len(s.times) < 3:
        raise ConfigError("lifetime.times needs at least 3 points for a fit")
    if s.trials_per_point < 1 or s.probe_time < 0:
        raise ConfigError("lifetime.trials_per_point must be >= 1, probe_time >= 0")
    if s.storage_time is not None and s.storage_time < 0:
        raise ConfigError("lifetime.storage_time must be non-negative")
    if s.cells is not None:
        for c in s.cells:
            if not isinstance(c, list) or len(c) != 2:
                raise ConfigError("lifetime.cells entries must be [x, y]")
            noise.cell(CellAddress(*c))


def _check_tomography(s: TomographySection):
    if s.coincidences < 9 or s.bootstrap_rounds < 1:
        raise ConfigError("tomography needs >= 9 coincidences and >= 1 bootstrap round")


def _check_raqm(s: RaqmSection):
    bad = [x for x in s.states if x not in SIX_STATES]
    if bad:
        raise ConfigError(f"raqm.states: unknown {bad}; expected {list(SIX_STATES)}")
    for o in s.orders:
        if sorted(o) != [1, 2]:
            raise ConfigError(f"raqm.orders: {o} is not a permutation of [1, 2]")
    if s.shots < 1 or s.counts < 3:
        raise ConfigError("raqm.shots must be >= 1 and counts >= 3")


def load_config(source, **overrides) -> ScenarioConfig:
    """Parse a JSON document (path, text or dict) into a validated config."""
    if isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in data:
        raise ConfigError("config lacks 'kind'")
    cfg = _from_dict(ScenarioConfig, data)
    build(cfg)
    return cfg


def config_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: ScenarioConfig) -> str:
    d = config_dict(cfg)
    d.pop("seed")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


# ----------------------------------------------------------------- results

@dataclass
class Bundle:
    """Everything a scenario produces. Tables are lists of row dicts."""

    kind: str
    summary: dict
    tables: dict
    events: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def _provenance_rows(rows, cfg):
    h = config_hash(cfg)
    return [{**r, "config_hash": h, "seed": cfg.seed} for r in rows]


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


# ---------------------------------------------------------------- repeater

def _repeater_chunk(args):
    seed, start, stop, node, noise = args
    rows, events = [], []
    for shot in range(start, stop):
        out = run_shot(shot, node, noise, rng_for(seed, "shot", shot))
        rows.append({
            "shot": shot,
            "success": int(out.success),
            "pattern_L": out.coincidence_pattern[0],
            "pattern_R": out.coincidence_pattern[1],
            "herald_1": out.herald_times[0],
            "herald_2": out.herald_times[1],
            "gap_time": out.gap_time,
            "wall_time": out.total_wall_time,
            "success_prob": out.success_prob,
            "fidelity": out.fidelity,
            "fidelity_conditioned": out.fidelity_conditioned,
        })
        events.extend(e.record() for e in out.events)
        if out.success:
            rows[-1]["_rho"] = out.output_state.rho
    return rows, events


def _map_chunks(fn, items):
    n = workers()
    if n == 1 or len(items) == 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def run_repeater_experiment(node: NodeConfig, noise: NoiseModel, seed: int, n_shots: int):
    """All shots of a repeater run, merged by shot index."""
    items = [(seed, s, min(s + CHUNK, n_shots), node, noise) for s in range(0, n_shots, CHUNK)]
    rows, events = [], []
    for r, e in _map_chunks(_repeater_chunk, items):
        rows.extend(r)
        events.extend(e)
    return rows, events


def _tomography(rho: np.ndarray, target, sec: TomographySection, seed: int, n_qubits: int, total: int):
    per = max(1, total // len(tomography.settings_for(n_qubits)))
    counts = tomography.simulate_counts(rho, per, rng_for(seed, "counts", n_qubits))
    return tomography.fidelity_with_errorbar(counts, target, sec.bootstrap_rounds,
                                             rng_for(seed, "bootstrap", n_qubits)), counts


def _run_repeater(b: Built) -> Bundle:
    cfg = b.config
    try:
        rows, events = run_repeater_experiment(b.node, b.noise, cfg.seed, cfg.shots)
    except LinkTimeout as e:
        raise RunError(str(e)) from None
    ok = [r for r in rows if r["success"]]
    rhos = [r.pop("_rho") for r in ok]
    gaps = np.array([r["gap_time"] for r in rows])
    summary = {
        "shots": cfg.shots,
        "successes": len(ok),
        "success_rate": len(ok) / cfg.shots,
        "mean_success_prob": float(np.mean([r["success_prob"] for r in rows])),
        "mean_gap_time": float(gaps.mean()),
        "mean_wall_time": float(np.mean([r["wall_time"] for r in rows])),
    }
    tables = {}
    if ok:
        f = np.array([r["fidelity"] for r in ok])
        fc = np.array([r["fidelity_conditioned"] for r in ok])
        summary.update({
            "mean_fidelity": float(f.mean()),
            "mean_fidelity_sem": float(f.std(ddof=1) / math.sqrt(len(f))) if len(f) > 1 else None,
            "mean_fidelity_conditioned": float(np.nanmean(fc)) if np.any(np.isfinite(fc)) else None,
        })
        rho = np.mean(rhos, axis=0)
        rec, counts = _tomography(rho, swap_target(), cfg.tomography, cfg.seed, 2, cfg.tomography.coincidences)
        summary.update({
            "tomography_coincidences": counts.total(),
            "tomography_fidelity": rec.fidelity_to_target,
            "tomography_error_bar": rec.error_bar,
            "tomography_raw_min_eigenvalue": rec.raw_min_eigenvalue,
            "sigma_above_classical": (rec.fidelity_to_target - 0.5) / rec.error_bar if rec.error_bar > 0 else None,
        })
        tables["tomography_counts"] = [dict(zip(("setting", "outcome", "count"), r)) for r in counts.to_rows()]
    tables["shots"] = rows
    return Bundle("repeater", summary, tables, events)


# ---------------------------------------------------------------- lifetime

def _run_lifetime(b: Built) -> Bundle:
    cfg, sec = b.config, b.config.lifetime
    cells = b.noise.grid if sec.cells is None else [b.noise.cell(CellAddress(*c)) for c in sec.cells]
    times = np.array(sec.times, dtype=float)
    rows = []
    for i, cell in enumerate(cells):
        rng = rng_for(cfg.seed, "shot", i)
        p = np.array([cell.retrieval(t) for t in times])
        k = rng.binomial(sec.trials_per_point, p)
        k = np.maximum(k, 1)  # a zero-count point carries a one-count upper bound
        y = k / sec.trials_per_point
        sig = np.sqrt(k) / sec.trials_per_point
        try:
            fit = fit_exponential(np.c_[times, y, sig])
            tau, tau_err, r0 = fit.tau, fit.tau_err, fit.R0
        except FitError:
            tau = tau_err = r0 = float("nan")
        k_probe = rng.binomial(sec.trials_per_point, cell.retrieval(sec.probe_time))
        rf = address_to_rf(cell.address)
        rows.append({
            "x": cell.address.x, "y": cell.address.y, "rf_x_mhz": rf[0], "rf_y_mhz": rf[1],
            "R_probe": k_probe / sec.trials_per_point,
            "R_probe_err": math.sqrt(max(k_probe, 1)) / sec.trials_per_point,
            "R0_fit": r0, "tau_fit": tau, "tau_fit_err": tau_err,
        })
    f0, tc = b.noise.link_fidelity, b.noise.coherence_time
    fid_rows = [{"storage_time": float(t), "fidelity": stored_fidelity(f0, float(t), tc)}
                for t in sec.fidelity_times]
    taus = np.array([r["tau_fit"] for r in rows])
    summary = {
        "cells": len(rows),
        "probe_time": sec.probe_time,
        "mean_R_probe": float(np.mean([r["R_probe"] for r in rows])),
        "mean_tau_fit": float(np.nanmean(taus)) if np.any(np.isfinite(taus)) else None,
        "failed_fits": int(np.sum(~np.isfinite(taus))),
        "min_fidelity": min((r["fidelity"] for r in fid_rows), default=None),
        "fidelity_monotone": all(a["fidelity"] >= c["fidelity"] for a, c in zip(fid_rows, fid_rows[1:])),
    }
    if sec.storage_time is not None:
        summary["storage_time"] = sec.storage_time
        summary["stored_fidelity"] = stored_fidelity(f0, sec.storage_time, tc)
    return Bundle("lifetime", summary, {"cells": rows, "fidelity": fid_rows})


# ------------------------------------------------------------------- stirap

def _run_stirap(b: Built) -> Bundle:
    p = b.config.pulse
    try:
        res = stirap_transfer(b.pulse, p.two_photon_detuning, steps_per_sigma=p.steps_per_sigma,
                              trajectory=True)
    except IntegrationError as e:
        raise RunError(str(e)) from None
    idx = list(range(0, len(res.times), p.trajectory_stride))
    if idx[-1] != len(res.times) - 1:
        idx.append(len(res.times) - 1)
    rows = [{"time": float(res.times[i]), "p_initial": float(res.trajectory[i, 0]),
             "p_excited": float(res.trajectory[i, 1]), "p_target": float(res.trajectory[i, 2])}
            for i in idx]
    summary = {"efficiency": res.efficiency, "populations": list(res.populations), "steps": res.steps,
               "residual": 1 - res.efficiency}
    return Bundle("stirap", summary, {"trajectory": rows})


# ------------------------------------------------------------ herald-stats

def _run_herald(b: Built) -> Bundle:
    s = b.config.source
    summary = {"target_g_c": s.target_g_c if s.chi is None else None}
    if s.chi is None:
        summary["fidelity_bound_target"] = fidelity_bound(s.target_g_c)
    try:
        src = source_for(s.chi, s.n_min) if s.chi is not None else \
            calibrate_chi(s.target_g_c, b.signal_chain, b.idler_chain, s.retrieval, n_min=s.n_min)
    except CalibrationError as e:
        raise RunError(str(e), partial=summary) from None
    st = herald_statistics(src, b.signal_chain, b.idler_chain, s.retrieval)
    alpha = anticorrelation(src, b.idler_chain, b.signal_chain, s.retrieval)
    row = {"chi": src.chi, "n_max": src.n_max, "p_s": st.p_s, "p_i": st.p_i, "p_c": st.p_c,
           "g_c": st.g_c, "alpha": alpha, "fidelity_bound": fidelity_bound(st.g_c)}
    summary.update(row)
    return Bundle("herald-stats", summary, {"herald": [row]})


# --------------------------------------------------------------------- raqm

def _raqm_item(args):
    name, order, sec_shots, seed, index, node, noise = args
    # streams depend on the state only, so both read orders see the same heralds
    specs = [raqm_spec(name, 1), raqm_spec(name, 2)]
    read = [o - 1 for o in order]
    acc = [np.zeros((2, 2), dtype=complex), np.zeros((2, 2), dtype=complex)]
    for shot in range(sec_shots):
        rng = rng_for(seed, "shot", index * 10**6 + shot)
        states, _, _ = raqm_shot(specs, read, node, noise, rng, shot=shot)
        for q in range(2):
            acc[q] += states[q].rho
    return [a / sec_shots for a in acc]


def _run_raqm(b: Built) -> Bundle:
    cfg, sec = b.config, b.config.raqm
    items = []
    for i, name in enumerate(sec.states):
        for order in sec.orders:
            items.append((name, tuple(order), sec.shots, cfg.seed, i, b.node, b.noise))
    try:
        results = _map_chunks(_raqm_item, items)
    except LinkTimeout as e:
        raise RunError(str(e)) from None
    rows = []
    for index, ((name, order, *_), rhos) in enumerate(zip(items, results)):
        target = raqm_spec(name, 1).target()
        row = {"state": name, "order": "-".join(map(str, order))}
        margins = []
        for q in range(2):
            exact = fock.fidelity(_atom_state(rhos[q]), target)
            per = max(1, sec.counts // 3)
            counts = tomography.simulate_counts(rhos[q], per, rng_for(cfg.seed, "counts", 100 + 2 * index + q))
            rec = tomography.fidelity_with_errorbar(counts, _relabel(target), cfg.tomography.bootstrap_rounds,
                                                    rng_for(cfg.seed, "bootstrap", 100 + 2 * index + q))
            row[f"fidelity_q{q + 1}"] = rec.fidelity_to_target
            row[f"error_q{q + 1}"] = rec.error_bar
            row[f"exact_q{q + 1}"] = exact
            margins.append((rec.fidelity_to_target - 2 / 3) / rec.error_bar if rec.error_bar > 0 else math.inf)
        row["sigma_above_classical"] = min(margins)
        rows.append(row)
    summary = {
        "rows": len(rows),
        "min_fidelity": min(min(r["fidelity_q1"], r["fidelity_q2"]) for r in rows),
        "min_sigma_above_classical": min(r["sigma_above_classical"] for r in rows),
        "all_above_classical": all(min(r["fidelity_q1"], r["fidelity_q2"]) > 2 / 3 for r in rows),
    }
    return Bundle("raqm", summary, {"raqm": rows})


def _atom_state(rho):
    return fock.JointState(fock.ModeSet((fock.qubit("a"),)), rho=rho)


def _relabel(target):
    return fock.JointState(fock.ModeSet((fock.qubit("q1"),)), vec=target.vec)


# ----------------------------------------------------------------- driver

_RUNNERS = {"repeater": _run_repeater, "lifetime": _run_lifetime, "stirap": _run_stirap,
            "herald-stats": _run_herald, "raqm": _run_raqm}


def run_scenario(cfg: ScenarioConfig) -> Bundle:
    b = build(cfg)
    t0 = time.time()
    try:
        bundle = _RUNNERS[cfg.kind](b)
    except (ProtocolError, MemoryModelError, CalibrationError, IntegrationError, LinkTimeout) as e:
        raise RunError(f"{type(e).__name__}: {e}") from None
    h = config_hash(cfg)
    bundle.summary = _clean({"kind": cfg.kind, "config_hash": h, "seed": cfg.seed, **bundle.summary})
    bundle.tables = {k: _clean(_provenance_rows(v, cfg)) for k, v in bundle.tables.items()}
    bundle.events = _clean(bundle.events)
    bundle.metadata = {"started": t0, "finished": time.time(), "version": __version__,
                       "workers": workers(), "config": _clean(config_dict(cfg))}
    return bundle


def set_path(data: dict, path: str, value):
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"parameter path {path!r} does not resolve")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"parameter path {path!r} does not resolve")
    node[keys[-1]] = value


def sweep(cfg: ScenarioConfig, path: str, grid) -> Bundle:
    """One run per grid value with the same master seed; summaries merged into one table."""
    base = config_dict(cfg)
    set_path(json.loads(json.dumps(base)), path, None)  # resolve before running anything
    rows = []
    for value in grid:
        d = json.loads(json.dumps(base))
        set_path(d, path, value)
        point = load_config(d)
        try:
            s = {**run_scenario(point).summary, "status": "ok"}
        except RunError as e:
            # a failed point stays in the table; the standalone run would exit 3
            s = {**_clean(e.partial), "status": f"error: {e}"}
        rows.append({"parameter": path, "value": value,
                     **{k: v for k, v in s.items() if not isinstance(v, (list, dict))}})
    summary = {"kind": "sweep", "scenario": cfg.kind, "parameter": path, "points": len(rows),
               "config_hash": config_hash(cfg), "seed": cfg.seed}
    return Bundle("sweep", summary, {"sweep": rows},
                  metadata={"finished": time.time(), "version": __version__, "workers": workers()})


# ----------------------------------------------------------------- writing

def table_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        cols = []
        for r in rows:
            cols.extend(k for k in r if k not in cols)
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r.get(k))
                        for k in cols})
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_bundle(bundle: Bundle, out, fmt: str = "csv") -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rows in bundle.tables.items():
        if fmt == "csv":
            p = out / f"{name}.csv"
            p.write_text(table_csv(rows), newline="")
        else:
            p = out / f"{name}.json"
            p.write_text(_json(rows))
        written.append(p)
    for name, obj in (("summary", bundle.summary), ("metadata", bundle.metadata)):
        p = out / f"{name}.json"
        p.write_text(_json(obj))
        written.append(p)
    if bundle.events:
        p = out / "events.json"
        p.write_text(_json(bundle.events))
        written.append(p)
    return written
