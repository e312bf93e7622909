"""Batch front-end: config ingestion, engine dispatch, result tables.

Configurations are INI files (key-value with nested sections). Every run
writes plot-ready CSV tables with a commented metadata header carrying the
canonical-config hash, the master seed, and the package version, so any
table can be traced back to its run and re-parsed. Identical configs and
seeds produce byte-identical tables for any worker count.

Subcommands: ame | traj | fluct | svmc | sweep | bench.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, ame, fluctuators, svmc, trajectories
from .liouville import build_generator
from .model import (DEFAULT_TEMPERATURE_GHZ, IsingProblem, PSpinProblem,
                    Protocol, Schedule, ground_state, ising_model,
                    pattern_state, pspin_model)
from .spectral import BathSpec
from .stats import tts

__all__ = ["RunConfig", "ResultTable", "ConfigError", "parse_config",
           "emit_config", "config_hash", "run", "benchmark", "main"]

WORKERS_ENV = "OPENANNEAL_WORKERS"

ENGINES = ("ame", "traj", "fluct", "svmc", "sweep", "bench")


class ConfigError(ValueError):
    """All validation problems of a config, reported together."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


def _parse_floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _parse_couplings(text):
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.replace(",", " ").split()
        if len(bits) != 3:
            raise ValueError(f"coupling entry {part!r} is not 'i j J'")
        out.append((int(bits[0]), int(bits[1]), float(bits[2])))
    return tuple(out)


def _parse_knots(text):
    s, a, b = [], [], []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise ValueError(f"knot entry {part!r} is not 's:A:B'")
        s.append(float(bits[0]))
        a.append(float(bits[1]))
        b.append(float(bits[2]))
    return tuple(s), tuple(a), tuple(b)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# schema: section -> key -> (converter, default); defaults of None mean unset
_SCHEMA = {
    "run": {
        "engine": (str, None),
        "seed": (int, None),
        "workers": (int, None),
        "label": (str, "run"),
    },
    "model": {
        "kind": (str, "ising"),
        "n_qubits": (int, None),
        "h": (_parse_floats, []),
        "couplings": (_parse_couplings, ()),
        "p": (int, 2),
        "sector": (str, "full"),
    },
    "schedule": {
        "kind": (str, "linear"),
        "a0_ghz": (float, 8.0),
        "b1_ghz": (float, 8.0),
        "knots": (_parse_knots, None),
    },
    "protocol": {
        "variant": (str, "forward"),
        "tau_ns": (float, None),
        "s_inv": (float, None),
        "t_p_ns": (float, 0.0),
        "gamma": (float, 1.0),
        "pattern": (str, None),
        "r": (int, 1),
    },
    "bath": {
        "eta_g2": (float, 1e-3),
        "omega_c_ghz": (float, 1e3),
        "temperature_ghz": (float, DEFAULT_TEMPERATURE_GHZ),
        "topology": (str, "independent"),
        "lamb_shift": (_parse_bool, False),
    },
    "noise": {
        "gamma_min_ghz": (float, 0.01),
        "gamma_max_ghz": (float, 1.0),
        "n_per_decade": (float, None),
        "n_total": (int, None),
        "b_mean_ghz": (float, 0.2),
        "b_rel_spread": (float, 0.2),
        "dp_eq": (float, 0.08),
        "axis": (str, "z"),
        "drive": (str, "anneal"),
        "e_split_ghz": (float, 2.0),
        "t_final_ns": (float, None),
        "n_real": (int, 1000),
        "dt_sub_ns": (float, None),
        "init": (str, "plus"),
    },
    "numerics": {
        "rtol": (float, 1e-8),
        "atol": (float, 1e-10),
        "omega_tol_ghz": (float, 1e-4),
        "n_frames": (str, "auto"),
        "output_points": (int, 51),
        "k_traj": (int, 1000),
        "n_boot": (int, 1000),
        "n_keep": (int, None),
    },
    "svmc": {
        "variant": (str, "svmc"),
        "tau_sweeps": (float, 1000.0),
        "s_inv": (float, 0.9),
        "t_p_sweeps": (float, 0.0),
        "k_samples": (int, 10000),
    },
    "sweep": {
        "parameter": (str, None),
        "values": (_parse_floats, None),
        "engine": (str, None),
        "tts_target": (float, None),
    },
    "feedback": {
        "enabled": (_parse_bool, False),
        "kind": (str, "lindblad_cooling"),
        "basis": (str, "energy"),
        "delay_ns": (float, 0.0),
    },
    "output": {
        "dir": (str, "."),
        "format": (str, "csv"),
        "jump_log": (_parse_bool, False),
        "switch_log": (int, 0),
    },
    "init": {
        "state": (str, "auto"),
    },
}

_QUANTUM_ENGINES = ("ame", "traj", "fluct")


@dataclass
class RunConfig:
    """Validated configuration; sections become attribute dictionaries."""

    engine: str
    seed: int
    workers: int
    label: str
    sections: dict
    canonical: str

    def __getitem__(self, section):
        return self.sections[section]


def parse_config(text: str, engine: Optional[str] = None,
                 seed: Optional[int] = None,
                 workers: Optional[int] = None) -> RunConfig:
    """Parse and validate; collects every problem instead of failing fast."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"])
    problems = []
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                problems.append(f"unknown key {key!r} in [{section}]")
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key) and parser.get(section, key).strip():
                raw = parser.get(section, key)
                try:
                    values[section][key] = conv(raw)
                except (ValueError, TypeError) as exc:
                    problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            else:
                values[section][key] = default

    eng = engine or values["run"]["engine"]
    if eng is None:
        problems.append("run.engine missing (or pass a subcommand)")
    elif eng not in ENGINES:
        problems.append(f"run.engine {eng!r} not one of {ENGINES}")
    the_seed = seed if seed is not None else values["run"]["seed"]
    if the_seed is None:
        problems.append("run.seed is mandatory")
    the_workers = workers if workers is not None else values["run"]["workers"]
    if the_workers is None:
        the_workers = int(os.environ.get(WORKERS_ENV, "1"))
    if the_workers < 1:
        problems.append("run.workers must be >= 1")

    problems.extend(_validate_sections(eng, values))
    if problems:
        raise ConfigError(problems)
    values["run"]["engine"] = eng
    values["run"]["seed"] = the_seed
    values["run"]["workers"] = the_workers
    canonical = emit_config(values)
    return RunConfig(engine=eng, seed=int(the_seed), workers=int(the_workers),
                     label=values["run"]["label"], sections=values,
                     canonical=canonical)


def _validate_sections(engine, v):
    problems = []
    mdl, proto, bath = v["model"], v["protocol"], v["bath"]
    effective = engine
    if engine == "sweep":
        sub = v["sweep"]["engine"]
        if sub in ("ame", "traj", "svmc"):
            effective = sub
    if effective in ("ame", "traj", "bench"):
        if mdl["n_qubits"] is None:
            problems.append("model.n_qubits is required")
        if mdl["kind"] not in ("ising", "pspin"):
            problems.append(f"model.kind {mdl['kind']!r} not ising|pspin")
        if mdl["sector"] not in ("full", "maxspin"):
            problems.append("model.sector must be full|maxspin")
        if proto["tau_ns"] is None:
            problems.append("protocol.tau_ns is required")
        elif proto["tau_ns"] <= 0:
            problems.append("protocol.tau_ns must be positive")
        if proto["variant"] not in ("forward", "ira", "ira_experimental",
                                    "ara", "fixed_point"):
            problems.append(f"protocol.variant {proto['variant']!r} unknown")
        if proto["variant"] in ("ira", "ira_experimental", "fixed_point"):
            si = proto["s_inv"]
            if si is None or not (0.0 < si < 1.0):
                problems.append("protocol.s_inv must lie in (0, 1)")
        if proto["r"] < 1:
            problems.append("protocol.r must be >= 1")
    if effective == "fluct":
        n = v["noise"]
        if not (0 < n["gamma_min_ghz"] < n["gamma_max_ghz"]):
            problems.append("noise: need 0 < gamma_min < gamma_max")
        if (n["n_per_decade"] is None) == (n["n_total"] is None):
            problems.append("noise: specify exactly one of n_per_decade/n_total")
        if n["axis"] not in ("z", "x"):
            problems.append("noise.axis must be z|x")
        if n["drive"] not in ("anneal", "static"):
            problems.append("noise.drive must be anneal|static")
        if n["drive"] == "anneal" and proto["tau_ns"] is None:
            problems.append("protocol.tau_ns is required for noise.drive=anneal")
        if n["drive"] == "static" and n["t_final_ns"] is None:
            problems.append("noise.t_final_ns is required for noise.drive=static")
    if effective == "svmc":
        s = v["svmc"]
        if s["variant"] not in ("svmc", "svmc_tf"):
            problems.append("svmc.variant must be svmc|svmc_tf")
        if not (0.0 < s["s_inv"] < 1.0):
            problems.append("svmc.s_inv must lie in (0, 1)")
        if mdl["n_qubits"] is None:
            problems.append("model.n_qubits is required")
    if engine == "sweep":
        sw = v["sweep"]
        if sw["parameter"] not in ("s_inv", "tau_ns", "gamma", "tau_sweeps"):
            problems.append("sweep.parameter must be s_inv|tau_ns|gamma|tau_sweeps")
        if not sw["values"]:
            problems.append("sweep.values is required")
        if sw["engine"] not in ("ame", "traj", "svmc"):
            problems.append("sweep.engine must be ame|traj|svmc")
        if sw["parameter"] == "s_inv" and sw["values"]:
            bad = [x for x in sw["values"] if not (0.0 < x < 1.0)]
            if bad:
                problems.append(f"sweep.values for s_inv outside (0, 1): {bad}")
    if bath["topology"] not in ("independent", "collective"):
        problems.append("bath.topology must be independent|collective")
    if v["feedback"]["enabled"]:
        if v["feedback"]["kind"] not in ("lindblad_cooling", "hamiltonian_pulse"):
            problems.append("feedback.kind unknown")
        if v["feedback"]["basis"] not in ("energy", "comp_x", "comp_z"):
            problems.append("feedback.basis unknown")
        if v["feedback"]["delay_ns"] < 0:
            problems.append("feedback.delay_ns must be >= 0")
    if v["init"]["state"] not in ("auto", "gs", "pattern", "plus"):
        problems.append("init.state must be auto|gs|pattern|plus")
    return problems


def _fmt_value(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, (list, tuple)):
        if val and isinstance(val[0], tuple):
            if len(val[0]) == 3 and isinstance(val[0][0], (int, np.integer)):
                return "; ".join(f"{i} {j} {x!r}" for i, j, x in val)
        return ", ".join(repr(float(x)) for x in val)
    return str(val)


def emit_config(sections: dict) -> str:
    """Canonical text form: sorted sections and keys, unset keys omitted.
    run.workers is a runtime resource knob, not part of the run identity."""
    out = io.StringIO()
    for section in sorted(sections):
        keys = {k: v for k, v in sections[section].items() if v is not None}
        keys.pop("workers", None)
        if not keys:
            continue
        out.write(f"[{section}]\n")
        for key in sorted(keys):
            if section == "schedule" and key == "knots":
                s, a, b = keys[key]
                text = "; ".join(f"{x!r}:{y!r}:{z!r}" for x, y, z in zip(s, a, b))
            else:
                text = _fmt_value(keys[key])
            out.write(f"{key} = {text}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(config.canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

@dataclass
class ResultTable:
    name: str
    columns: list
    rows: np.ndarray          # (n, n_cols) floats; NaN renders as empty cell
    meta: dict

    def to_csv(self) -> str:
        out = io.StringIO()
        for key in sorted(self.meta):
            out.write(f"# {key}: {self.meta[key]}\n")
        out.write(",".join(self.columns) + "\n")
        for row in np.atleast_2d(self.rows):
            cells = ["" if (isinstance(x, float) and np.isnan(x)) else f"{x:.12g}"
                     for x in row]
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    def write(self, directory: Path) -> Path:
        path = Path(directory) / f"{self.name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def parse_table(text: str) -> ResultTable:
    meta = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition(":")
        meta[key.strip()] = val.strip()
        i += 1
    columns = lines[i].split(",")
    rows = []
    for line in lines[i + 1:]:
        if not line.strip():
            continue
        rows.append([float(c) if c else float("nan") for c in line.split(",")])
    return ResultTable(name=meta.get("label", "table"), columns=columns,
                       rows=np.asarray(rows, dtype=float), meta=meta)


# ---------------------------------------------------------------------------
# Model assembly from config
# ---------------------------------------------------------------------------

def _schedule_from(cfg: RunConfig) -> Schedule:
    sc = cfg["schedule"]
    if sc["kind"] == "linear":
        return Schedule.linear(sc["a0_ghz"], sc["b1_ghz"])
    if sc["kind"] == "dwave_like":
        return Schedule.dwave_like()
    if sc["kind"] == "table":
        if sc["knots"] is None:
            raise ConfigError(["schedule.kind=table requires schedule.knots"])
        s, a, b = sc["knots"]
        return Schedule(s, a, b)
    raise ConfigError([f"schedule.kind {sc['kind']!r} unknown"])


def _protocol_from(cfg: RunConfig, tau=None, s_inv=None, gamma=None) -> Protocol:
    pr = cfg["protocol"]
    pattern = None
    if pr["pattern"]:
        pattern = tuple(1 if ch == "0" else -1 for ch in pr["pattern"].strip())
    return Protocol(variant=pr["variant"],
                    tau=tau if tau is not None else pr["tau_ns"],
                    s_inv=s_inv if s_inv is not None else pr["s_inv"],
                    t_p=pr["t_p_ns"],
                    gamma=gamma if gamma is not None else pr["gamma"],
                    pattern=pattern, r=pr["r"])


def _model_from(cfg: RunConfig, **proto_kw):
    mdl = cfg["model"]
    sched = _schedule_from(cfg)
    proto = _protocol_from(cfg, **proto_kw)
    if mdl["kind"] == "pspin":
        problem = PSpinProblem(n_qubits=mdl["n_qubits"], p=mdl["p"],
                               reduced=mdl["sector"] == "maxspin")
        return pspin_model(problem, sched, proto)
    h = mdl["h"] if mdl["h"] else [0.0] * mdl["n_qubits"]
    problem = IsingProblem(n_qubits=mdl["n_qubits"], h=tuple(h),
                           couplings=mdl["couplings"])
    return ising_model(problem, sched, proto)


def _bath_from(cfg: RunConfig) -> BathSpec:
    b = cfg["bath"]
    return BathSpec(eta_g2=b["eta_g2"], omega_c=b["omega_c_ghz"],
                    temperature=b["temperature_ghz"], topology=b["topology"])


def _initial_state(cfg: RunConfig, model):
    choice = cfg["init"]["state"]
    proto = model.protocol
    if choice == "auto":
        choice = "pattern" if proto.variant in ("ira", "ira_experimental", "ara") \
            else "gs"
    if choice == "gs":
        return ground_state(model, 0.0)
    if choice == "plus":
        dim = model.dim
        return np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    pattern = proto.pattern
    if pattern is None:
        raise ConfigError(["init.state=pattern requires protocol.pattern"])
    if model.representation == "maxspin":
        w = sum(1 for e in pattern if e == -1)
        psi = np.zeros(model.dim, dtype=complex)
        psi[w] = 1.0
        return psi
    return pattern_state(pattern, model.n_qubits)


def _targets(model):
    """Computational indices of the problem ground states (success states)."""
    if model.representation == "maxspin":
        n = model.dim - 1
        diag = np.real(np.diag(model.h_z))
        lo = diag.min()
        return [i for i in range(n + 1) if diag[i] < lo + 1e-9]
    diag = np.real(np.diag(model.h_z))
    lo = diag.min()
    return [i for i in np.flatnonzero(diag < lo + 1e-9)]


def _n_frames(cfg: RunConfig):
    raw = cfg["numerics"]["n_frames"]
    if raw is None or raw == "auto":
        return None
    return int(raw)


def _feedback_from(cfg: RunConfig):
    fb = cfg["feedback"]
    if not fb["enabled"]:
        return None
    return ame.FeedbackSpec(kind=fb["kind"], basis=fb["basis"],
                            delay=fb["delay_ns"])


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------

def _base_meta(cfg: RunConfig):
    return {"config_hash": config_hash(cfg), "seed": cfg.seed,
            "version": __version__, "label": cfg.label,
            "engine": cfg.engine}


def _run_ame(cfg: RunConfig):
    model = _model_from(cfg)
    bath = _bath_from(cfg)
    num = cfg["numerics"]
    psi0 = _initial_state(cfg, model)
    rho0 = np.outer(psi0, psi0.conj())
    fb = _feedback_from(cfg)
    res = ame.propagate(model, bath, rho0, n_out=num["output_points"],
                        rtol=num["rtol"], atol=num["atol"],
                        n_frames=_n_frames(cfg), omega_tol=num["omega_tol_ghz"],
                        lamb=cfg["bath"]["lamb_shift"], n_keep=num["n_keep"],
                        feedback=fb)
    targets = _targets(model)
    success = res.success(targets)
    s_vals = [model.protocol.s_of(t) for t in res.times]
    rows = np.column_stack([res.times, s_vals, res.gs_population, success,
                            res.trace_drift])
    meta = _base_meta(cfg)
    meta["leakage"] = f"{res.leakage:.6g}"
    table = ResultTable(name=f"{cfg.label}_ame",
                        columns=["t_ns", "s", "gs_population", "success",
                                 "trace_drift"],
                        rows=rows, meta=meta)
    return [table]


def _run_traj(cfg: RunConfig, workers=None, k_override=None):
    model = _model_from(cfg)
    bath = _bath_from(cfg)
    num = cfg["numerics"]
    psi0 = _initial_state(cfg, model)
    gen = build_generator(model, bath, n_frames=_n_frames(cfg),
                          omega_tol=num["omega_tol_ghz"],
                          lamb=cfg["bath"]["lamb_shift"], n_keep=num["n_keep"])
    targets = _targets(model)
    want_jump_log = cfg["output"]["jump_log"]
    stats = trajectories.ensemble(
        gen, psi0, K=k_override or num["k_traj"], master_seed=cfg.seed,
        workers=workers if workers is not None else cfg.workers,
        n_out=num["output_points"], fb=_feedback_from(cfg), targets=targets,
        rtol=num["rtol"], atol=num["atol"], n_boot=num["n_boot"],
        keep_jumps=want_jump_log)
    s_vals = [model.protocol.s_of(t) for t in stats.times]
    err = stats.gs_stderr if stats.gs_stderr is not None \
        else np.full_like(stats.gs_mean, np.nan)
    lo = stats.gs_ci_low if stats.gs_ci_low is not None else err
    hi = stats.gs_ci_high if stats.gs_ci_high is not None else err
    rows = np.column_stack([stats.times, s_vals, stats.gs_mean, err, lo, hi,
                            stats.success_mean])
    table = ResultTable(name=f"{cfg.label}_traj",
                        columns=["t_ns", "s", "gs_population", "stderr",
                                 "ci_low", "ci_high", "success"],
                        rows=rows, meta=_base_meta(cfg))
    centers = 0.5 * (stats.net_jump_bins[:-1] + stats.net_jump_bins[1:])
    jumps = ResultTable(name=f"{cfg.label}_jumps",
                        columns=["t_ns", "net_jumps_to_gs"],
                        rows=np.column_stack([centers, stats.net_jumps]),
                        meta=_base_meta(cfg))
    tables = [table, jumps]
    if want_jump_log and stats.jump_events is not None:
        tables.append(ResultTable(
            name=f"{cfg.label}_jump_log",
            columns=["trajectory", "t_ns", "channel", "omega_ghz",
                     "pre_level", "post_level"],
            rows=stats.jump_events, meta=_base_meta(cfg)))
    return tables


def _run_fluct(cfg: RunConfig):
    noise = cfg["noise"]
    num = cfg["numerics"]
    spec = fluctuators.FluctuatorEnsembleSpec(
        gamma_min=noise["gamma_min_ghz"], gamma_max=noise["gamma_max_ghz"],
        b_mean=noise["b_mean_ghz"], n_per_decade=noise["n_per_decade"],
        n_total=noise["n_total"], b_rel_spread=noise["b_rel_spread"],
        dp_eq=noise["dp_eq"])
    axis = np.array([[0, 1], [1, 0]], dtype=complex) if noise["axis"] == "x" \
        else np.array([[1, 0], [0, -1]], dtype=complex)
    if noise["drive"] == "anneal":
        sched = _schedule_from(cfg)
        proto = _protocol_from(cfg)
        t_end = proto.total_time

        def h_of_t(t):
            a, b = sched.evaluate(proto.s_of(t))
            return 0.5 * np.array([[-b, -a], [-a, b]], dtype=complex)
    else:
        e = noise["e_split_ghz"]
        t_end = noise["t_final_ns"]
        h_static = 0.5 * np.array([[e, 0.0], [0.0, -e]], dtype=complex)

        def h_of_t(t):
            return h_static
    times = np.linspace(0.0, t_end, num["output_points"])
    if noise["init"] == "plus":
        psi0 = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    elif noise["init"] == "one":
        psi0 = np.array([0.0, 1.0], dtype=complex)
    else:
        evals, vecs = np.linalg.eigh(h_of_t(0.0))
        psi0 = vecs[:, 0].astype(complex)
    gs_vectors = None
    if noise["drive"] == "anneal":
        gs_list = []
        for t in times:
            evals, vecs = np.linalg.eigh(h_of_t(t))
            gs_list.append(vecs[:, 0])
        gs_vectors = np.asarray(gs_list)
    res = fluctuators.run_fluctuator_ensemble(
        spec, psi0, times, master_seed=cfg.seed, n_real=noise["n_real"],
        workers=cfg.workers, h_of_t=h_of_t, axis_op=axis,
        gs_vectors=gs_vectors, dt_sub=noise["dt_sub_ns"],
        n_boot=num["n_boot"])
    gs = res.gs_population if res.gs_population is not None \
        else np.full(times.size, np.nan)
    err = res.stderr if res.stderr is not None else np.full(times.size, np.nan)
    rows = np.column_stack([times, res.bloch, res.coherence, gs, err])
    table = ResultTable(name=f"{cfg.label}_fluct",
                        columns=["t_ns", "mx", "my", "mz", "coherence",
                                 "gs_population", "stderr"],
                        rows=rows, meta=_base_meta(cfg))
    tables = [table]
    n_log = min(cfg["output"]["switch_log"], noise["n_real"])
    if n_log > 0:
        log_rows = []
        for k in range(n_log):
            rng = fluctuators.realization_rng(cfg.seed, k)
            fl = fluctuators.sample_ensemble(spec, rng, t_max=times[-1])
            for i, f in enumerate(fl):
                for t_sw in f.switch_times:
                    log_rows.append([k, i, f.b, f.gamma, f.chi0, t_sw])
        tables.append(ResultTable(
            name=f"{cfg.label}_switch_log",
            columns=["realization", "fluctuator", "b_ghz", "gamma_ghz",
                     "chi0", "switch_t_ns"],
            rows=np.asarray(log_rows).reshape(-1, 6), meta=_base_meta(cfg)))
    return tables


def _run_svmc(cfg: RunConfig, s_inv=None, tau=None):
    sv = cfg["svmc"]
    mdl = cfg["model"]
    sched = _schedule_from(cfg)
    pattern = cfg["protocol"]["pattern"]
    bits = None
    if pattern:
        bits = [0 if ch == "0" else 1 for ch in pattern.strip()]
    beta = 1.0 / cfg["bath"]["temperature_ghz"]
    res = svmc.run_reverse_anneal(
        mdl["n_qubits"], mdl["p"], sched,
        tau_sweeps=tau if tau is not None else sv["tau_sweeps"],
        s_inv=s_inv if s_inv is not None else sv["s_inv"],
        t_p_sweeps=sv["t_p_sweeps"], K=sv["k_samples"], seed=cfg.seed,
        variant=sv["variant"], beta=beta, initial_bits=bits)
    rows = np.array([[res.n_sweeps, sv["s_inv"] if s_inv is None else s_inv,
                      res.total, res.total_err, res.up, res.up_err,
                      res.down, res.down_err]])
    table = ResultTable(name=f"{cfg.label}_svmc",
                        columns=["n_sweeps", "s_inv", "total", "total_err",
                                 "up", "up_err", "down", "down_err"],
                        rows=rows, meta=_base_meta(cfg))
    return [table]


def _run_sweep(cfg: RunConfig):
    sw = cfg["sweep"]
    param = sw["parameter"]
    rows = []
    for val in sw["values"]:
        if sw["engine"] == "svmc":
            if param == "s_inv":
                sub = _run_svmc(cfg, s_inv=val)
            elif param == "tau_sweeps":
                sub = _run_svmc(cfg, tau=val)
            else:
                raise ConfigError([f"svmc sweep over {param!r} unsupported"])
            r = sub[0].rows[0]
            p_g = r[2]
            rows.append([val, p_g, r[3], r[4], r[6]])
        else:
            kw = {}
            if param == "s_inv":
                kw["s_inv"] = val
            elif param == "tau_ns":
                kw["tau"] = val
            elif param == "gamma":
                kw["gamma"] = val
            model = _model_from(cfg, **kw)
            bath = _bath_from(cfg)
            num = cfg["numerics"]
            psi0 = _initial_state(cfg, model)
            targets = _targets(model)
            if sw["engine"] == "ame":
                res = ame.propagate(model, bath, np.outer(psi0, psi0.conj()),
                                    n_out=num["output_points"], rtol=num["rtol"],
                                    atol=num["atol"], n_frames=_n_frames(cfg),
                                    omega_tol=num["omega_tol_ghz"],
                                    lamb=cfg["bath"]["lamb_shift"],
                                    n_keep=num["n_keep"],
                                    feedback=_feedback_from(cfg))
                rows.append([val, res.success(targets)[-1], np.nan,
                             np.nan, np.nan])
            else:
                gen = build_generator(model, bath, n_frames=_n_frames(cfg),
                                      omega_tol=num["omega_tol_ghz"],
                                      lamb=cfg["bath"]["lamb_shift"],
                                      n_keep=num["n_keep"])
                stats = trajectories.ensemble(
                    gen, psi0, K=num["k_traj"], master_seed=cfg.seed,
                    workers=cfg.workers, n_out=num["output_points"],
                    fb=_feedback_from(cfg), targets=targets, rtol=num["rtol"],
                    atol=num["atol"], n_boot=num["n_boot"])
                err = stats.success_stderr[-1] if stats.success_stderr is not None \
                    else np.nan
                rows.append([val, stats.success_mean[-1], err, np.nan, np.nan])
    rows = np.asarray(rows, dtype=float)
    columns = [param, "success", "err", "up", "down"]
    if sw["tts_target"] is not None:
        tau_ref = cfg["protocol"]["tau_ns"] or cfg["svmc"]["tau_sweeps"]
        tts_col = []
        for row in rows:
            tau_val = row[0] if param in ("tau_ns", "tau_sweeps") else tau_ref
            tts_col.append(tts(tau_val, row[1], sw["tts_target"]))
        rows = np.column_stack([rows, tts_col])
        columns.append("tts")
    table = ResultTable(name=f"{cfg.label}_sweep", columns=columns, rows=rows,
                        meta=_base_meta(cfg))
    return [table]


def benchmark(cfg: RunConfig, worker_counts):
    """Run the trajectory ensemble at several worker counts; outputs must be
    identical, and the timing table records wall time and speedup."""
    num = cfg["numerics"]
    k = num["k_traj"]
    rows = []
    baseline = None
    reference = None
    for c in worker_counts:
        c_eff = min(c, k)
        if c_eff < c:
            print(f"warning: clamping {c} workers to {k} trajectories",
                  file=sys.stderr)
        t0 = time.perf_counter()
        tables = _run_traj(cfg, workers=c_eff)
        wall = time.perf_counter() - t0
        payload = tables[0].to_csv()
        if reference is None:
            reference = payload
            baseline = wall
        identical = float(payload == reference)
        rows.append([c, wall, baseline / wall, identical])
    table = ResultTable(name=f"{cfg.label}_bench",
                        columns=["workers", "wall_s", "speedup", "identical"],
                        rows=np.asarray(rows), meta=_base_meta(cfg))
    return [table]


_ENGINE_FUNCS = {
    "ame": _run_ame,
    "traj": _run_traj,
    "fluct": _run_fluct,
    "svmc": _run_svmc,
    "sweep": _run_sweep,
}


def run(cfg: RunConfig, out_dir: Optional[str] = None, worker_counts=None):
    """Dispatch an engine run; returns (tables, exit status)."""
    try:
        if cfg.engine == "bench":
            tables = benchmark(cfg, worker_counts or [1, 2, 4])
        else:
            tables = _ENGINE_FUNCS[cfg.engine](cfg)
    except ame.PositivityError as exc:
        print(f"positivity violation: {exc}", file=sys.stderr)
        return [], 3
    except (RuntimeError, ArithmeticError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return [], 4
    directory = Path(out_dir if out_dir is not None else cfg["output"]["dir"])
    for table in tables:
        table.write(directory)
    return tables, 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="openanneal",
        description="Open-system quantum annealing batch runner")
    sub = parser.add_subparsers(dest="engine", required=True)
    for eng in ENGINES:
        p = sub.add_parser(eng, help=f"{eng} engine")
        p.add_argument("-c", "--config", required=True, help="INI config path")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--workers", type=int, default=None,
                       help=f"override worker count (default ${WORKERS_ENV} or 1)")
        p.add_argument("--output-dir", default=None)
        if eng == "bench":
            p.add_argument("--counts", default="1,2,4",
                           help="comma-separated worker counts")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, engine=args.engine, seed=args.seed,
                           workers=args.workers)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    counts = None
    if args.engine == "bench":
        counts = [int(x) for x in args.counts.split(",")]
    tables, status = run(cfg, out_dir=args.output_dir, worker_counts=counts)
    for table in tables:
        print(f"wrote {table.name}.csv ({len(np.atleast_2d(table.rows))} rows)")
    return status


if __name__ == "__main__":
    sys.exit(main())
