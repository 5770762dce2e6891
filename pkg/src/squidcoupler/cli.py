"""Command-line front end: load a config, run a named experiment, write CSV/JSON artifacts.

Exit status is 0 on success, 1 for configuration errors, 2 for physics
errors (no idle point, ambiguous labels, infeasible gates) and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .circuit import ChainParams, CircuitParams
from .dynamics import (
    DEFAULT_DT_PROP,
    N_LEVELS_LINDBLAD,
    N_LEVELS_UNITARY,
    IntegrationError,
    simulate_gate,
    offset_error_map,
    t1_sweep_fit,
)
from .noise import FluxNoiseModel, asymmetry_dephasing_sweep, coupler_energy_tradeoff, rms_drift
from .operators import DEFAULT_NCUT, DimensionError
from .perturbation import predict_phi_off_pert, zeta_pert_terms, zeta_spectator, zeta13_pert
from .pulse import PulseConfig, calibrate_beta
from .spectrum import (
    EigenSolverError,
    PhysicsError,
    bare_qubit_spectrum,
    detuned_spectator,
    find_phi_off,
    format_float,
    idle_chain_biases,
    min_hybridization_coupling,
    spectator_zz,
    sweep_flux,
    two_qubit_spectrum,
    write_table,
    zeta_at,
    zz_rate,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERICAL = 0, 1, 2, 3
TOP_LEVEL_KEYS = {"schema_version", "experiment", "circuit", "circuit_file", "parameters", "output_dir"}


class ConfigError(ValueError):
    """Invalid configuration, optionally located at a line of the config file."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass
class RunContext:
    """Global numerical settings shared by every experiment."""

    out: Path
    threads: int = 1
    dt_prop: float = DEFAULT_DT_PROP
    ncut: int = DEFAULT_NCUT
    n_levels: int | None = None

    def map(self, fn: Callable, items: Iterable) -> list:
        """Ordered map; runs on a thread pool when more than one thread is requested."""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def levels(self, default: int) -> int:
        return self.n_levels if self.n_levels is not None else default


@dataclass
class ExperimentConfig:
    experiment: str
    circuit: CircuitParams = field(default_factory=CircuitParams)
    circuit_file: str | None = None
    parameters: dict[str, Any] = field(default_factory=dict)
    output_dir: str | None = None
    source: str | None = None
    text: str = ""


@dataclass(frozen=True)
class Experiment:
    run: Callable[[ExperimentConfig, dict, RunContext], dict]
    defaults: dict[str, Any]
    description: str


# -- config parsing -------------------------------------------------------------


def _key_line(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _load_json(text: str, path: str | None) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, path) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", 1, path)
    return data


def _circuit_from(data: Any, text: str, path: str | None, key: str) -> CircuitParams:
    if not isinstance(data, dict):
        raise ConfigError(f"'{key}' must be an object", _key_line(text, key), path)
    names = {f.name for f in fields(CircuitParams)}
    for k in data:
        if k not in names:
            raise ConfigError(f"unknown circuit field '{k}'", _key_line(text, k), path)
    try:
        return CircuitParams(**{k: float(v) for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), _key_line(text, key), path) from None


def parse_config(text: str, path: str | None = None, experiment: str | None = None) -> ExperimentConfig:
    """Validate a JSON config. ``experiment`` overrides the file's own entry."""
    data = _load_json(text, path) if text.strip() else {}
    for k in data:
        if k not in TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown key '{k}'", _key_line(text, k), path)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
            _key_line(text, "schema_version"),
            path,
        )
    name = experiment or data.get("experiment")
    if name is None:
        raise ConfigError("no experiment given", None, path)
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{name}'", _key_line(text, "experiment"), path)
    if "circuit" in data and "circuit_file" in data:
        raise ConfigError("give either 'circuit' or 'circuit_file'", _key_line(text, "circuit_file"), path)
    circuit = CircuitParams()
    circuit_file = data.get("circuit_file")
    if "circuit" in data:
        circuit = _circuit_from(data["circuit"], text, path, "circuit")
    elif circuit_file is not None:
        cpath = Path(circuit_file)
        if path is not None and not cpath.is_absolute():
            cpath = Path(path).parent / cpath
        try:
            ctext = cpath.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read circuit file: {exc}", _key_line(text, "circuit_file"), path) from None
        circuit = _circuit_from(_load_json(ctext, str(cpath)), ctext, str(cpath), "circuit")
    params = data.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("'parameters' must be an object", _key_line(text, "parameters"), path)
    defaults = EXPERIMENTS[name].defaults
    for k, v in params.items():
        if k not in defaults:
            raise ConfigError(f"unknown parameter '{k}' for {name}", _key_line(text, k), path)
        if isinstance(defaults[k], list) and (not isinstance(v, list) or not v):
            raise ConfigError(f"parameter '{k}' must be a non-empty list", _key_line(text, k), path)
    return ExperimentConfig(name, circuit, circuit_file, dict(params), data.get("output_dir"), path, text)


def resolved_parameters(cfg: ExperimentConfig) -> dict:
    out = dict(EXPERIMENTS[cfg.experiment].defaults)
    out.update(cfg.parameters)
    return out


# -- helpers ----------------------------------------------------------------------


def _grid(spec: Any) -> np.ndarray:
    """A list of values, or {"start", "stop", "num"} for an inclusive linear grid."""
    try:
        if isinstance(spec, dict):
            return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        return np.asarray(spec, dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed grid {spec!r}") from exc


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _gate_waveform(circuit: CircuitParams, T_G: float, p: dict, ctx: RunContext):
    n = ctx.levels(N_LEVELS_UNITARY)
    template = PulseConfig(T_G=T_G, sigma_filter=float(p.get("sigma_filter", 0.5)))
    cal = calibrate_beta(circuit, T_G, template, n_levels=n, dt_prop=ctx.dt_prop, ncut=ctx.ncut)
    return cal


# -- experiments --------------------------------------------------------------------


def run_zz_sweep(cfg, p, ctx):
    grid = _grid(p["flux"])
    table = sweep_flux(cfg.circuit, grid, int(p["n_eigs"]), ctx.ncut, ctx.levels(40))
    table.to_csv(ctx.out / "zz_sweep.csv")
    phi_off = find_phi_off(cfg.circuit, ncut=ctx.ncut)
    exc = table.excursion(0.0, phi_off)
    return {
        "phi_off": phi_off,
        "eigenfrequency_excursion_GHz": [float(x) for x in exc],
        "failed_points": {str(k): v for k, v in table.errors.items()},
    }


def run_spectrum(cfg, p, ctx):
    sp = two_qubit_spectrum(cfg.circuit, float(p["phi_e1"]), ctx.ncut, ctx.levels(int(p["n_levels"])))
    rows = []
    for lab, k in sorted(sp.labels.items(), key=lambda item: item[1]):
        e = sp.eigenvalues[k]
        rows.append([k, *lab, e, e - sp.eigenvalues[0], sp.overlaps[lab]])
    write_table(ctx.out / "spectrum.csv", ["index", "n1", "n2", "energy_GHz", "frequency_GHz", "overlap"], rows)
    bare = bare_qubit_spectrum(cfg.circuit, ctx.ncut)
    return {"bare": bare._asdict(), "zeta_GHz": zz_rate(sp)}


def run_find_off(cfg, p, ctx):
    bracket = tuple(float(x) for x in p["bracket"])
    phi_off = find_phi_off(cfg.circuit, bracket, ctx.ncut)
    out = {"phi_off": phi_off, "zeta_on_GHz": zeta_at(cfg.circuit, 0.0, ctx.ncut)}
    try:
        out["phi_off_perturbative"] = predict_phi_off_pert(cfg.circuit)
    except PhysicsError as exc:
        out["phi_off_perturbative"] = None
        out["perturbative_error"] = str(exc)
    return out


def run_cz_gate(cfg, p, ctx):
    T_G = float(p["T_G"])
    cal = _gate_waveform(cfg.circuit, T_G, p, ctx)
    res = simulate_gate(cfg.circuit, cal.waveform, ctx.levels(N_LEVELS_UNITARY), ctx.dt_prop, ctx.ncut, cal.beta)
    cal.waveform.to_csv(ctx.out / "waveform.csv")
    gate = res.to_dict()
    _write_json(ctx.out / "gate.json", gate)
    return {**gate, "entangling_phase": cal.phase, "calibration_evaluations": cal.iterations}


def run_asymmetry_scan(cfg, p, ctx):
    T_G = float(p["T_G"])

    def one(a):
        c = cfg.circuit.with_asymmetry(float(a))
        phi_off = find_phi_off(c, ncut=ctx.ncut)
        try:
            pert = predict_phi_off_pert(c)
        except PhysicsError:
            pert = math.nan
        if not p["gate"]:
            return [a, c.delta_EJC, phi_off, pert, math.nan, math.nan, math.nan]
        cal = _gate_waveform(c, T_G, p, ctx)
        r = simulate_gate(c, cal.waveform, ctx.levels(N_LEVELS_UNITARY), ctx.dt_prop, ctx.ncut)
        return [a, c.delta_EJC, phi_off, pert, cal.beta, r.coherent_error, r.leakage]

    rows = ctx.map(one, p["asymmetries"])
    header = ["asymmetry", "delta_EJC_GHz", "phi_off", "phi_off_pert", "beta", "coherent_error", "leakage"]
    write_table(ctx.out / "asymmetry_scan.csv", header, rows)
    return {"max_coherent_error": float(np.nanmax([r[5] for r in rows])) if p["gate"] else None}


def _noise(p) -> FluxNoiseModel:
    return FluxNoiseModel(
        float(p["A_inner"]), float(p["A_outer"]), float(p["A_outer_prime"]), float(p["correlation"])
    )


def run_noise_dephasing(cfg, p, ctx):
    table = asymmetry_dephasing_sweep(
        cfg.circuit, [float(a) for a in p["asymmetries"]], _noise(p), p["sum_EJC"], ctx.ncut
    )
    table.to_csv(ctx.out / "noise_dephasing.csv")
    return {"min_T_us": float(np.min([table.column("T10_us"), table.column("T01_us")]))}


def run_tradeoff(cfg, p, ctx):
    table = coupler_energy_tradeoff(cfg.circuit, [float(s) for s in p["sum_EJC"]], _noise(p), ctx.ncut)
    table.to_csv(ctx.out / "tradeoff.csv")
    return {"rows": len(table.rows)}


def run_offset_map(cfg, p, ctx):
    T_G = float(p["T_G"])
    cal = _gate_waveform(cfg.circuit, T_G, p, ctx)
    inner, outer = _grid(p["offsets_inner"]), _grid(p["offsets_outer"])
    err = offset_error_map(
        cfg.circuit, cal.waveform, inner, outer, ctx.levels(N_LEVELS_UNITARY), ctx.dt_prop, map_fn=ctx.map
    )
    rows = [[di, do, err[i, j]] for i, di in enumerate(inner) for j, do in enumerate(outer)]
    write_table(ctx.out / "offset_map.csv", ["offset_inner", "offset_outer", "coherent_error"], rows)
    t_min = T_G * 1e-9
    return {
        "beta": cal.beta,
        "rms_drift_inner": rms_drift(float(p["A_inner"]), float(p["drift_seconds"]), t_min),
        "rms_drift_outer": rms_drift(float(p["A_outer"]), float(p["drift_seconds"]), t_min),
    }


def run_chain_crosstalk(cfg, p, ctx):
    base = ChainParams(EJ=tuple(p["EJ"]), C=tuple(p["C"]))

    def one(a):
        chain = base.with_asymmetry(float(a), float(p["sum_EJC"]), float(p["CC"]))
        idle = idle_chain_biases(chain, ncut=ctx.ncut)
        zp = zeta13_pert(chain, biases=(idle.phi12, idle.phi23))
        return [a, float(a) * float(p["sum_EJC"]), idle.phi12, idle.phi23, idle.zeta13, zp]

    rows = ctx.map(one, p["asymmetries"])
    header = ["asymmetry", "delta_EJC_GHz", "phi12_off", "phi23_off", "zeta13_GHz", "zeta13_pert_GHz"]
    write_table(ctx.out / "chain_crosstalk.csv", header, rows)
    return {"max_abs_zeta13_GHz": float(max(abs(r[4]) for r in rows))}


def run_spectator(cfg, p, ctx):
    phi = float(p["phi_e1"])
    cells = [(float(c), float(d)) for c in p["C_para"] for d in p["detunings"]]

    def one(cell):
        c_para, det = cell
        sp, w2 = detuned_spectator(cfg.circuit, det, c_para, float(p["CS"]), phi, ctx.ncut)
        z = spectator_zz(sp, phi, ctx.ncut)
        try:
            est = zeta_spectator(sp, phi, ctx.ncut, omega2=w2)
            e1, gam = est.zeta_1S, est.gamma
        except PhysicsError:
            e1 = gam = math.nan
        return [c_para, det, sp.EJS, z.omega_S, z.zeta_1S, z.zeta_2S, e1, gam]

    rows = ctx.map(one, cells)
    header = ["C_para_aF", "detuning_GHz", "EJS_GHz", "omega_S_GHz", "zeta_1S_GHz", "zeta_2S_GHz",
              "zeta_1S_estimate_GHz", "gamma"]
    write_table(ctx.out / "spectator.csv", header, rows)
    w2 = two_qubit_spectrum(cfg.circuit, phi, ctx.ncut, n_levels=12).frequency((0, 1))
    return {"omega2_dressed_GHz": w2}


def run_t1_sweep(cfg, p, ctx):
    T_G = float(p["T_G"])
    cal = _gate_waveform(cfg.circuit, T_G, p, ctx)
    fit = t1_sweep_fit(
        cfg.circuit, cal.waveform, [float(t) for t in p["T1_ns"]], ctx.levels(N_LEVELS_LINDBLAD), ctx.dt_prop,
        map_fn=ctx.map,
    )
    rows = [[t, T_G / t, y, r] for t, y, r in zip(fit.T1, fit.infidelity, fit.residuals)]
    write_table(ctx.out / "t1_sweep.csv", ["T1_ns", "T_G_over_T1", "infidelity", "fit_residual"], rows)
    return {"a": fit.a, "b": fit.b, "beta": cal.beta}


def run_pert_vs_numeric(cfg, p, ctx):
    rows = []
    for s in p["sum_EJC"]:
        c = cfg.circuit if s is None else cfg.circuit.with_asymmetry(
            cfg.circuit.delta_EJC / cfg.circuit.sum_EJC if cfg.circuit.sum_EJC else 0.0, float(s)
        )
        for phi in _grid(p["flux"]):
            num = zeta_at(c, float(phi), ctx.ncut)
            try:
                t = zeta_pert_terms(c, float(phi))
                pert = [t.zeta1, t.zeta2_c, t.zeta2_odd, t.total]
            except PhysicsError:
                pert = [math.nan] * 4
            rows.append([c.sum_EJC, phi, num, *pert])
    header = ["sum_EJC_GHz", "flux", "zeta_numeric_GHz", "zeta1_GHz", "zeta2_c_GHz", "zeta2_odd_GHz",
              "zeta_pert_GHz"]
    write_table(ctx.out / "pert_vs_numeric.csv", header, rows)
    out = {"phi_off": find_phi_off(cfg.circuit, ncut=ctx.ncut)}
    try:
        out["phi_off_perturbative"] = predict_phi_off_pert(cfg.circuit)
    except PhysicsError as exc:
        out["phi_off_perturbative"] = None
        out["perturbative_error"] = str(exc)
    return out


def run_truncation_scan(cfg, p, ctx):
    T_G = float(p["T_G"])
    cal = _gate_waveform(cfg.circuit, T_G, p, ctx)

    def one(n):
        r = simulate_gate(cfg.circuit, cal.waveform, int(n), ctx.dt_prop, ctx.ncut)
        return [int(n), r.coherent_error, r.leakage]

    rows = ctx.map(one, p["n_levels"])
    write_table(ctx.out / "truncation_scan.csv", ["n_levels", "coherent_error", "leakage"], rows)
    return {"beta": cal.beta}


def run_straddling(cfg, p, ctx):
    base = replace(cfg.circuit, EJ2=float(p["EJ2"])).with_asymmetry(0.0, float(p["sum_EJC"]))
    cc = min_hybridization_coupling(base, _grid(p["CC_grid"]), 0.0, ctx.ncut)
    circuit = base.with_asymmetry(0.0, CC=cc)
    table = sweep_flux(circuit, _grid(p["flux"]), 6, ctx.ncut, ctx.levels(40))
    table.to_csv(ctx.out / "straddling_sweep.csv")
    phi_off = find_phi_off(circuit, ncut=ctx.ncut)
    out = {"CC_fF": cc, "phi_off": phi_off, "bare": bare_qubit_spectrum(circuit, ctx.ncut)._asdict()}
    if p["gate"]:
        T_G = float(p["T_G"])
        cal = _gate_waveform(circuit, T_G, p, ctx)
        r = simulate_gate(circuit, cal.waveform, ctx.levels(N_LEVELS_UNITARY), ctx.dt_prop, ctx.ncut, cal.beta)
        cal.waveform.to_csv(ctx.out / "waveform.csv")
        out["gate"] = r.to_dict()
    return out


_NOISE_DEFAULTS = {"A_inner": 1e-6, "A_outer": 5e-6, "A_outer_prime": 5e-6, "correlation": -1.0}

EXPERIMENTS: dict[str, Experiment] = {
    "zz-sweep": Experiment(run_zz_sweep, {"flux": {"start": 0.0, "stop": 1.0, "num": 101}, "n_eigs": 6},
                           "zeta, hybridization and eigenfrequencies versus inner flux"),
    "spectrum": Experiment(run_spectrum, {"phi_e1": 0.0, "n_levels": 12}, "labeled spectrum at one bias"),
    "find-off": Experiment(run_find_off, {"bracket": [0.0, 1.0]}, "idle flux and on-rate"),
    "cz-gate": Experiment(run_cz_gate, {"T_G": 22.0, "sigma_filter": 0.5}, "calibrated CZ gate"),
    "asymmetry-scan": Experiment(
        run_asymmetry_scan,
        {"asymmetries": [0.0, 0.1, 0.2, 0.5, 1.0], "T_G": 22.0, "sigma_filter": 0.5, "gate": True},
        "idle flux and CZ error versus junction asymmetry",
    ),
    "noise-dephasing": Experiment(
        run_noise_dephasing,
        {"asymmetries": [0.0, 0.05, 0.1, 0.2, 0.3, 0.5], "sum_EJC": None, **_NOISE_DEFAULTS},
        "echo dephasing at the idle point versus asymmetry",
    ),
    "tradeoff": Experiment(
        run_tradeoff, {"sum_EJC": [0.2, 0.4, 0.6, 0.8, 1.2, 1.6], **_NOISE_DEFAULTS},
        "dephasing time and minimum gate time versus coupler energy",
    ),
    "offset-map": Experiment(
        run_offset_map,
        {"T_G": 22.0, "sigma_filter": 0.5, "offsets_inner": [-4e-5, -2e-5, 0.0, 2e-5, 4e-5],
         "offsets_outer": [-2e-4, -1e-4, 0.0, 1e-4, 2e-4], "drift_seconds": 3600.0,
         "A_inner": 1e-6, "A_outer": 5e-6},
        "CZ error versus static flux offsets",
    ),
    "chain-crosstalk": Experiment(
        run_chain_crosstalk,
        {"asymmetries": [0.1, 0.2, 0.3, 0.4, 0.5], "sum_EJC": 0.8, "CC": 1.56,
         "EJ": list(ChainParams().EJ), "C": list(ChainParams().C)},
        "next-nearest-neighbour ZZ of a three-transmon chain",
    ),
    "spectator": Experiment(
        run_spectator,
        {"phi_e1": 0.0, "CS": 69.2, "C_para": [30.0], "detunings": [-0.3, -0.1, -0.06, 0.06, 0.1, 0.3]},
        "indirect and direct spectator ZZ",
    ),
    "t1-sweep": Experiment(
        run_t1_sweep, {"T_G": 22.0, "sigma_filter": 0.5, "T1_ns": [1e5, 3e5, 1e6, 3e6]},
        "dissipative CZ infidelity versus T1 with linear fit",
    ),
    "pert-vs-numeric": Experiment(
        run_pert_vs_numeric, {"flux": {"start": 0.0, "stop": 1.0, "num": 51}, "sum_EJC": [None]},
        "perturbative versus numeric zeta",
    ),
    "truncation-scan": Experiment(
        run_truncation_scan, {"T_G": 22.0, "sigma_filter": 0.5, "n_levels": [16, 20, 24, 28, 32, 36, 40, 44, 48]},
        "CZ error versus retained levels",
    ),
    "straddling": Experiment(
        run_straddling,
        {"EJ2": 11.07, "sum_EJC": 0.4, "CC_grid": {"start": 0.5, "stop": 6.0, "num": 23},
         "flux": {"start": 0.0, "stop": 1.0, "num": 51}, "T_G": 43.0, "sigma_filter": 0.5, "gate": True},
        "CZ gate between transmons in the straddling regime",
    ),
}


# -- entry point ----------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run(cfg: ExperimentConfig, ctx: RunContext) -> dict:
    """Run one experiment and write its artifacts plus ``manifest.json`` into ``ctx.out``."""
    ctx.out.mkdir(parents=True, exist_ok=True)
    params = resolved_parameters(cfg)
    start = time.perf_counter()
    summary = EXPERIMENTS[cfg.experiment].run(cfg, params, ctx)
    wall = time.perf_counter() - start
    _write_json(ctx.out / "summary.json", _jsonable(summary))
    manifest = {
        "tool": "squidcoupler",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config_file": cfg.source,
        "circuit": {f.name: getattr(cfg.circuit, f.name) for f in fields(CircuitParams)},
        "circuit_file": cfg.circuit_file,
        "parameters": params,
        "settings": {"threads": ctx.threads, "dt_prop": ctx.dt_prop, "ncut": ctx.ncut, "n_levels": ctx.n_levels},
        "wall_time_s": wall,
    }
    _write_json(ctx.out / "manifest.json", _jsonable(manifest))
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="squidcoupler", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", nargs="?", help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("--config", type=Path, help="JSON config file")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--dt", type=float, help="propagation step (ns)")
    ap.add_argument("--ncut", type=int, help="charge-basis cutoff")
    ap.add_argument("--nlevels", type=int, help="retained eigenstates")
    ap.add_argument("--tg", type=float, help="gate time (ns) for gate experiments")
    ap.add_argument("--list", action="store_true", help="list experiments and exit")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        for name, exp in EXPERIMENTS.items():
            print(f"{name:18s} {exp.description}")
        return EXIT_OK
    try:
        text, src = "", None
        if args.config is not None:
            src = str(args.config)
            try:
                text = args.config.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text, src, args.experiment)
        if args.tg is not None:
            if "T_G" not in EXPERIMENTS[cfg.experiment].defaults:
                raise ConfigError(f"--tg does not apply to {cfg.experiment}")
            cfg.parameters["T_G"] = args.tg
        for name, val in (("threads", args.threads), ("dt", args.dt), ("ncut", args.ncut), ("nlevels", args.nlevels)):
            if val is not None and val <= 0:
                raise ConfigError(f"--{name} must be positive")
        out = args.out or (Path(cfg.output_dir) if cfg.output_dir else Path("out") / cfg.experiment)
        ctx = RunContext(
            out,
            threads=args.threads,
            dt_prop=args.dt or DEFAULT_DT_PROP,
            ncut=args.ncut or DEFAULT_NCUT,
            n_levels=args.nlevels,
        )
        summary = run(cfg, ctx)
    except PhysicsError as exc:
        print(f"physics error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (EigenSolverError, IntegrationError, DimensionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # ConfigError, ParameterError and argument validation inside experiments.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
