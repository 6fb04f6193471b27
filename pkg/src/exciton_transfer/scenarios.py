"""Presets, sweeps, disorder ensembles, scaling studies and figure datasets."""
from __future__ import annotations

import dataclasses
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .analysis import concurrence, fgr_rate, fit_equilibration, transfer_rate
from .errors import (ContractViolation, ConvergenceError, CutoffWarning, FitError,
                     IntegrationFailure, InvalidModelError, UndefinedRateError)
from .hilbert import ManifoldBasis, reduced_two_qubit_state
from .lindblad import (DEFAULT_ATOL, DEFAULT_RTOL, cutoff_convergence, default_horizon,
                       simulate)
from .model import ModelParams, exciton_couplings_dimer, sample_disorder

_COMMON = dict(J=0.3, epsilon=3.0, nbar=0.01, g=1.0, omega=1.0)
PRESETS = {
    "p1": dict(_COMMON, gamma=0.039552, p=1.0),
    "p2": dict(_COMMON, gamma=0.010506, p=1.0),
    "p3": dict(_COMMON, gamma=0.111707, p=1.0),
    "p4": dict(_COMMON, gamma=0.030263, p=1.5),
    # weak-coupling resonance study
    "perturbative": dict(J=0.03, gamma=0.015, nbar=0.01, g=1.0, omega=1.0, p=1.0, epsilon=1.0),
}
DISORDER_PRESETS = ("p1", "p2", "p3", "p4")

_AXIS_ALIASES = {"L": "sites_per_monomer", "eps": "epsilon", "N_ph": "phonon_cutoff"}
_INT_FIELDS = {"n_monomers", "sites_per_monomer", "coolants_per_gap", "phonon_cutoff"}
_DISORDER_AXES = ("sigma_g", "sigma_eps")
_MODEL_FIELDS = {f.name for f in dataclasses.fields(ModelParams)}

RESOURCE_CAP = 400


def preset_params(name: str | None = None, **overrides) -> ModelParams:
    """ModelParams for a named preset with optional field overrides."""
    base = {}
    if name is not None:
        if name not in PRESETS:
            raise InvalidModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        base = dict(PRESETS[name])
    base.update(overrides)
    return ModelParams(**base)


def expand_values(values) -> tuple:
    """Axis values from a list or a range mapping.

    A mapping takes ``start``, ``stop`` and either ``step`` (inclusive of
    ``stop`` up to rounding) or ``num`` with optional ``log: true``.
    """
    if isinstance(values, dict):
        start, stop = float(values["start"]), float(values["stop"])
        if "step" in values:
            step = float(values["step"])
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            vals = start + step * np.arange(n)
            vals = np.round(vals, 12)
        elif values.get("log"):
            vals = np.geomspace(start, stop, int(values["num"]))
        else:
            vals = np.linspace(start, stop, int(values["num"]))
        return tuple(float(v) for v in vals)
    return tuple(float(v) for v in values)


def _canonical_axis(axis: str) -> str:
    axis = _AXIS_ALIASES.get(axis, axis)
    if axis not in _MODEL_FIELDS and axis not in _DISORDER_AXES:
        raise InvalidModelError(f"unknown sweep axis {axis!r}")
    return axis


@dataclass(frozen=True)
class SweepConfig:
    """One parameter axis swept over a base model.

    ``overrides`` are ModelParams fields applied on top of ``preset``.
    ``values`` may be a list or a range mapping (see ``expand_values``).
    """

    axis: str = "epsilon"
    values: tuple = ()
    preset: str | None = None
    overrides: dict = field(default_factory=dict)
    init_state: str = "triplet"
    replicates: int = 1
    master_seed: int = 0
    sigma_g: float = 0.0
    sigma_eps: float = 0.0
    t_final: float | None = None
    n_records: int = 1001
    acceptor_complement: bool | None = None
    fit: bool = True
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL

    def __post_init__(self):
        object.__setattr__(self, "axis", _canonical_axis(self.axis))
        object.__setattr__(self, "values", expand_values(self.values))
        object.__setattr__(self, "overrides", dict(self.overrides))
        if not self.values:
            raise InvalidModelError("sweep needs at least one axis value")
        if not np.all(np.isfinite(self.values)):
            raise InvalidModelError("axis values must be finite")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise InvalidModelError("replicates must be a positive integer")
        if self.n_records < 100:
            raise InvalidModelError("at least 100 record points are needed for rate estimates")
        if self.sigma_g < 0 or self.sigma_eps < 0:
            raise InvalidModelError("disorder widths must be non-negative")
        self.base_params()

    def base_params(self) -> ModelParams:
        return preset_params(self.preset, **self.overrides)

    def params_at(self, value) -> ModelParams:
        if self.axis in _DISORDER_AXES:
            return self.base_params()
        v = int(round(value)) if self.axis in _INT_FIELDS else float(value)
        return preset_params(self.preset, **{**self.overrides, self.axis: v})

    def sigmas_at(self, value):
        sg = float(value) if self.axis == "sigma_g" else self.sigma_g
        se = float(value) if self.axis == "sigma_eps" else self.sigma_eps
        return sg, se

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["values"] = list(self.values)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidModelError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class EnsembleSummary:
    axis_value: float
    median: float
    q25: float
    q75: float
    n_realizations: int
    n_failed: int = 0


def _pmap(fn, tasks, threads=1):
    tasks = list(tasks)
    if threads is None or threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def evaluate_point(task: dict) -> dict:
    """Run one dynamics + analysis pipeline; never raises for model failures."""
    params = ModelParams.from_dict(task["params"])
    sg, se = task.get("sigma_g", 0.0), task.get("sigma_eps", 0.0)
    realization = None
    if sg > 0 or se > 0:
        realization = sample_disorder(params, sg, se, task.get("seed", 0), task.get("realization_index", 0))
    complement = task.get("acceptor_complement")
    if complement is None:
        complement = params.n_monomers > 2
    t_final = task.get("t_final") or default_horizon(params.omega)
    grid = np.linspace(0.0, t_final, int(task.get("n_records", 1001)))
    row = {"status": "ok", "diagnostic": ""}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CutoffWarning)
            traj = simulate(params, task.get("init_state", "triplet"), realization, t_final, grid,
                            rtol=task.get("rtol", DEFAULT_RTOL), atol=task.get("atol", DEFAULT_ATOL))
        row["cutoff_warning"] = any(issubclass(w.category, CutoffWarning) for w in caught)
        rate = transfer_rate(traj, complement)
    except (IntegrationFailure, ConvergenceError, ContractViolation, UndefinedRateError, InvalidModelError) as exc:
        row.update(status="failed", diagnostic=f"{type(exc).__name__}: {exc}")
        return row
    row["k_T"] = rate.k_T
    row["k_T_definition"] = rate.definition_tag
    row["Gamma"] = row["Gamma_ci95"] = row["P_SS"] = row["fit_rms"] = np.nan
    if task.get("fit", True):
        try:
            fit = fit_equilibration(traj, use_acceptor_complement=complement)
            row.update(Gamma=fit.Gamma, Gamma_ci95=fit.ci95[0], P_SS=fit.P_SS, fit_rms=fit.residual)
        except FitError as exc:
            row["diagnostic"] = f"fit: {exc}"
    mono = traj.monomer_populations()[-1]
    row["P_D_final"] = mono[0]
    row["P_A_final"] = mono[-1]
    row["P_I_final"] = float(mono[1:-1].sum())
    row["P_I_peak"] = float(traj.monomer_populations()[:, 1:-1].sum(axis=1).max()) if len(mono) > 2 else 0.0
    n = params.n_sites
    basis = ManifoldBasis(n)
    row["C12_final"] = concurrence(reduced_two_qubit_state(traj.rho_el[-1], basis, (1, 2)))
    row["C_acceptor_final"] = concurrence(reduced_two_qubit_state(traj.rho_el[-1], basis, (n - 1, n)))
    row["purity_final"] = float(traj.purity[-1])
    row["n_phonon_final"] = float(traj.phonon_number[-1])
    row["top_fock_max"] = float(np.max(traj.top_fock))
    row["nfev"] = traj.stats["nfev"]
    return row


def _task(config: SweepConfig, value, replicate, params=None, sigmas=None):
    p = config.params_at(value) if params is None else params
    sg, se = config.sigmas_at(value) if sigmas is None else sigmas
    return {
        "params": p.to_dict(), "init_state": config.init_state, "sigma_g": sg, "sigma_eps": se,
        "seed": config.master_seed, "realization_index": replicate, "t_final": config.t_final,
        "n_records": config.n_records, "acceptor_complement": config.acceptor_complement,
        "fit": config.fit, "rtol": config.rtol, "atol": config.atol,
    }


def sweep_run_id(config: SweepConfig, command="sweep", extra_inputs=None) -> str:
    inputs = {"config": config.to_dict(), **(extra_inputs or {})}
    body = io.manifest_body(command, inputs, config.master_seed, {"rtol": config.rtol, "atol": config.atol})
    return io.run_id(body)


def run_sweep(config: SweepConfig, threads: int = 1) -> pd.DataFrame:
    """One pipeline per (axis value, replicate), ordered by axis then replicate."""
    keys = [(i, v, r) for i, v in enumerate(config.values) for r in range(config.replicates)]
    rows = _pmap(evaluate_point, [_task(config, v, r) for _, v, r in keys], threads)
    rid = sweep_run_id(config)
    out = []
    for (i, v, r), row in zip(keys, rows):
        base = {"run_id": rid, "axis": config.axis, "value": v, "axis_index": i, "replicate": r,
                "init_state": config.init_state}
        p = config.params_at(v)
        if p.n_monomers == 2 and p.sites_per_monomer == 2 and p.gamma > 0:
            base["J_TT_over_gamma"] = exciton_couplings_dimer(p.J, p.p, p.coolants_per_gap)[0] / p.gamma
        out.append({**base, **row})
    return pd.DataFrame(out)


def _summarize(value, ratios, n_failed):
    r = np.asarray(ratios, float)
    if r.size == 0:
        return EnsembleSummary(float(value), np.nan, np.nan, np.nan, 0, n_failed)
    q25, med, q75 = np.percentile(r, [25, 50, 75])
    return EnsembleSummary(float(value), float(med), float(q25), float(q75), int(r.size), n_failed)


def run_disorder_ensemble(config: SweepConfig, sigma_axis, kind: str = "g", threads: int = 1,
                          return_table: bool = False):
    """Median and quartiles of k_T / k_T* per disorder width.

    Realization r at every width reuses the same standard-normal draws
    (keyed by master seed and r), scaled by the width. k_T* is the clean
    model's rate, computed in the same call.
    """
    if config.replicates < 2:
        raise InvalidModelError("an ensemble needs at least two replicates")
    if kind not in ("g", "eps"):
        raise InvalidModelError("disorder kind must be 'g' or 'eps'")
    sigmas = expand_values(sigma_axis)
    params = config.base_params()
    clean = evaluate_point(_task(config, 0.0, 0, params, (0.0, 0.0)))
    if clean["status"] != "ok":
        raise IntegrationFailure(f"clean baseline failed: {clean['diagnostic']}")
    k_star = clean["k_T"]
    keys = [(s, r) for s in sigmas for r in range(config.replicates)]
    tasks = [_task(config, 0.0, r, params, (s, 0.0) if kind == "g" else (0.0, s)) for s, r in keys]
    rows = _pmap(evaluate_point, tasks, threads)
    rid = sweep_run_id(config, "ensemble", {"sigma_axis": list(sigmas), "kind": kind})
    table = pd.DataFrame([{"run_id": rid, "kind": kind, "sigma": s, "realization": r, "k_T_star": k_star, **row}
                          for (s, r), row in zip(keys, rows)])
    table["k_T_ratio"] = table["k_T"] / k_star if "k_T" in table else np.nan
    summaries = []
    for s in sigmas:
        sub = table[table["sigma"] == s]
        ok = sub[sub["status"] == "ok"]
        summaries.append(_summarize(s, ok["k_T_ratio"], int((sub["status"] != "ok").sum())))
    return (summaries, table) if return_table else summaries


def summaries_frame(summaries, **labels) -> pd.DataFrame:
    return pd.DataFrame([{**labels, **dataclasses.asdict(s)} for s in summaries])


def run_scaling_study(kind: str, max_size: int, preset: str = "p1", *, min_size: int = 2,
                      init_states=("E1", "W"), truncation: float = 5.0, threads: int = 1,
                      resource_cap: int = RESOURCE_CAP, overrides=None, n_records: int = 1001) -> pd.DataFrame:
    """k_T versus monomer size (``monomer-size``) or monomer count (``chain-length``).

    Chain-length runs start from the donor triplet, use the acceptor
    complement rate, and are repeated with couplings beyond ``truncation``
    removed. Points above ``resource_cap`` joint dimension are reported as
    skipped rather than run.
    """
    if kind not in ("monomer-size", "chain-length"):
        raise InvalidModelError("kind must be 'monomer-size' or 'chain-length'")
    overrides = dict(overrides or {})
    specs = []
    for size in range(min_size, max_size + 1):
        if kind == "monomer-size":
            for init in init_states:
                specs.append((size, init, None, dict(overrides, sites_per_monomer=size)))
        else:
            for trunc in (None, truncation):
                specs.append((size, "triplet", trunc, dict(overrides, n_monomers=size, coupling_truncation=trunc)))
    rows, tasks, live = [], [], []
    for size, init, trunc, ov in specs:
        p = preset_params(preset, **ov)
        dim = p.n_sites * (p.phonon_cutoff + 1)
        base = {"kind": kind, "size": size, "n_sites": p.n_sites, "init_state": init,
                "truncation": trunc, "joint_dim": dim}
        rows.append(base)
        if dim > resource_cap:
            base.update(status="skipped", diagnostic=f"joint dimension {dim} exceeds cap {resource_cap}")
            continue
        tasks.append({"params": p.to_dict(), "init_state": init, "n_records": n_records,
                      "acceptor_complement": kind == "chain-length"})
        live.append(base)
    for base, res in zip(live, _pmap(evaluate_point, tasks, threads)):
        base.update(res)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------- figures

def _trajectory_frame(params, init, realization=None, t_final=None, n_records=1001, **labels):
    grid = np.linspace(0.0, t_final or default_horizon(params.omega), n_records)
    traj = simulate(params, init, realization, grid[-1], grid)
    df = traj.to_frame()
    for k, v in reversed(list(labels.items())):
        df.insert(0, k, v)
    return df


def _fig2a(quick, threads):
    step = 0.1 if quick else 0.02
    frames = []
    for init in ("triplet", "singlet", "product-2"):
        cfg = SweepConfig(axis="epsilon", values={"start": 0.2, "stop": 4.5, "step": step},
                          preset="perturbative", init_state=init, fit=False, overrides={"phonon_cutoff": 12})
        frames.append(run_sweep(cfg, threads))
    df = pd.concat(frames, ignore_index=True)
    base = preset_params("perturbative")
    df["k_fgr"] = [fgr_rate(base.replace(epsilon=e), "T" if i != "singlet" else "S").total
                   for e, i in zip(df["value"], df["init_state"])]
    df["k_fgr_scaled"] = df["k_fgr"] / 5.0
    return df, {"model": PRESETS["perturbative"], "epsilon_step": step, "fgr_scale": 0.2}


def _fig2b(quick, threads):
    p = preset_params("perturbative", phonon_cutoff=12)
    frames = [_trajectory_frame(p.replace(epsilon=e), "triplet", epsilon=e) for e in (1.0, 2.0, 3.0)]
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["perturbative"], "epsilon": [1, 2, 3]}


# low-damping curve of the non-perturbative sweep and the peak threshold that
# resolves its weakest sideband (rates span two decades across the sweep)
C6_GAMMA = 0.01
C6_PROMINENCE = 0.03


def _fig2c(quick, threads):
    step = 0.1 if quick else 0.02
    frames = []
    for init, gamma in (("triplet", C6_GAMMA), ("singlet", C6_GAMMA), ("triplet", 0.04)):
        cfg = SweepConfig(axis="epsilon", values={"start": 0.2, "stop": 4.5, "step": step}, preset="p1",
                          init_state=init, fit=False, overrides={"gamma": gamma, "phonon_cutoff": 12})
        df = run_sweep(cfg, threads)
        df["gamma"] = gamma
        frames.append(df)
    return pd.concat(frames, ignore_index=True), {"J": 0.3, "g": 1.0, "p": 1.0, "nbar": 0.01,
                                                  "gamma_values": [C6_GAMMA, 0.04], "epsilon_step": step}


def _fig2d(quick, threads):
    frames = []
    for eps in (2.0, 4.0):
        for gamma in (C6_GAMMA, 0.04):
            p = preset_params("p1", epsilon=eps, gamma=gamma, phonon_cutoff=15)
            frames.append(_trajectory_frame(p, "triplet", epsilon=eps, gamma=gamma))
    return pd.concat(frames, ignore_index=True), {"J": 0.3, "epsilon": [2, 4], "gamma": [C6_GAMMA, 0.04]}


FIG3A_VARIANTS = {
    "REF": {},
    "J=0.2": {"J": 0.2},
    "p=1.5": {"p": 1.5},
    "g=0.8": {"g": 0.8},
}


def _fig3a(quick, threads):
    frames = []
    for name, ov in FIG3A_VARIANTS.items():
        p = preset_params("p1", **ov)
        jtt = exciton_couplings_dimer(p.J, p.p, p.coolants_per_gap)[0]
        ratios = np.geomspace(0.3, 30.0, 9 if quick else 25)
        cfg = SweepConfig(axis="gamma", values=tuple(jtt / ratios), preset="p1", overrides=ov, fit=False)
        df = run_sweep(cfg, threads)
        df["variant"] = name
        frames.append(df)
    return pd.concat(frames, ignore_index=True), {"reference": PRESETS["p1"], "variants": FIG3A_VARIANTS}


def _ensemble_fig(kind, sigmas, quick, threads):
    reps = 20 if quick else 100
    frames = []
    for name in DISORDER_PRESETS:
        cfg = SweepConfig(preset=name, replicates=reps, master_seed=2024, fit=False,
                          overrides={"phonon_cutoff": 12})
        summ = run_disorder_ensemble(cfg, sigmas, kind, threads)
        frames.append(summaries_frame(summ, preset=name, kind=kind))
    return pd.concat(frames, ignore_index=True), {"presets": {k: PRESETS[k] for k in DISORDER_PRESETS},
                                                  "realizations": reps, "sigmas": list(sigmas)}


def _fig3b(quick, threads):
    return _ensemble_fig("g", (0.0, 0.05, 0.1, 0.15, 0.2) if not quick else (0.0, 0.1, 0.2), quick, threads)


def _fig3c(quick, threads):
    return _ensemble_fig("eps", (0.0, 0.025, 0.05, 0.075, 0.1) if not quick else (0.0, 0.05, 0.1), quick, threads)


DEPHASING_GRID = (0.0, 1e-4, 3e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, 2e-1)


def _fig3d(quick, threads):
    frames = []
    grid = DEPHASING_GRID[::2] if quick else DEPHASING_GRID
    for name in DISORDER_PRESETS:
        df = run_sweep(SweepConfig(axis="gamma_d", values=grid, preset=name, fit=False,
                                   overrides={"phonon_cutoff": 12}), threads)
        df["preset"] = name
        df["k_T_ratio"] = df["k_T"] / df["k_T"].iloc[0]
        frames.append(df)
    return pd.concat(frames, ignore_index=True), {"presets": {k: PRESETS[k] for k in DISORDER_PRESETS},
                                                  "gamma_d": list(grid)}


NBAR_GRID = (0.01, 0.1, 0.3, 0.5, 0.7)
THERMAL_CUTOFF = 26


def _fig4a(quick, threads):
    step = 0.1 if quick else 0.05
    frames = []
    for nbar in NBAR_GRID:
        cfg = SweepConfig(axis="epsilon", values={"start": 0.2, "stop": 4.5, "step": step}, preset="p1",
                          init_state="thermal", fit=False, overrides={"nbar": nbar, "phonon_cutoff": THERMAL_CUTOFF})
        df = run_sweep(cfg, threads)
        df["nbar"] = nbar
        frames.append(df)
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "nbar": list(NBAR_GRID)}


def _fig4c(quick, threads):
    frames = [_trajectory_frame(preset_params("p1", nbar=nb, phonon_cutoff=THERMAL_CUTOFF), "thermal", nbar=nb)
              for nb in NBAR_GRID]
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "epsilon": 3.0, "nbar": list(NBAR_GRID)}


def temperature_scan(epsilon=3.0, nbars=NBAR_GRID, preset="p1", cutoff=THERMAL_CUTOFF, threads=1) -> pd.DataFrame:
    """k_T and Gamma relative to the zero-temperature run."""
    values = (0.0,) + tuple(nbars)
    cfg = SweepConfig(axis="nbar", values=values, preset=preset, init_state="thermal",
                      overrides={"epsilon": epsilon, "phonon_cutoff": cutoff})
    df = run_sweep(cfg, threads)
    df["k_T_ratio"] = df["k_T"] / df["k_T"].iloc[0]
    df["Gamma_ratio"] = df["Gamma"] / df["Gamma"].iloc[0]
    df["Gamma_ratio_ci95"] = df["Gamma_ci95"] / df["Gamma"].iloc[0]
    df["epsilon"] = epsilon
    return df


def _fig4d(quick, threads):
    frames = [temperature_scan(e, threads=threads) for e in ((3.0,) if quick else (2.0, 3.0))]
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "nbar": [0.0, *NBAR_GRID]}


def _fig5a(quick, threads):
    return run_scaling_study("monomer-size", 3 if quick else 5, "p1", threads=threads,
                             overrides={"phonon_cutoff": 12}), {"model": PRESETS["p1"], "L": "2..5"}


def _fig5b(quick, threads):
    p = preset_params("p1", sites_per_monomer=5, phonon_cutoff=12)
    frames = [_trajectory_frame(p, init, init_state=init) for init in ("E1", "W")]
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "L": 5}


def _fig5c(quick, threads):
    return run_scaling_study("chain-length", 3 if quick else 5, "p1", threads=threads,
                             overrides={"phonon_cutoff": 12}), {"model": PRESETS["p1"], "truncation": 5}


def _fig5d(quick, threads):
    p = preset_params("p1", n_monomers=5, phonon_cutoff=12)
    return _trajectory_frame(p, "triplet"), {"model": PRESETS["p1"], "n_monomers": 5}


def coupling_ratio_table(p_values=None, d_values=None, J: float = 1.0) -> pd.DataFrame:
    """Exciton-coupling ratios versus power-law exponent and coolant count."""
    p_values = np.round(np.linspace(0.0, 4.0, 81), 10) if p_values is None else p_values
    d_values = range(0, 9) if d_values is None else d_values
    rows = []
    for sweep, pairs in (("p", [(p, 2) for p in p_values]), ("d", [(1.0, d) for d in d_values])):
        for p, d in pairs:
            tt, ss, ts = exciton_couplings_dimer(J, p, d)
            rows.append({"sweep": sweep, "p": float(p), "d": int(d), "J_TT": tt, "J_SS": ss, "J_TS": ts,
                         "TT_over_SS_sq": tt ** 2 / ss ** 2 if ss else np.inf,
                         "TT_over_TS_sq": tt ** 2 / ts ** 2 if ts else np.inf,
                         "TT_over_nearest_sq": tt ** 2 / (J / (d + 1) ** p) ** 2})
    return pd.DataFrame(rows)


def _fig7(quick, threads):
    return coupling_ratio_table(), {"J": 1.0}


def _fig8(quick, threads):
    frames = []
    for c in ((5, 10, 15) if quick else (5, 10, 15, 20)):
        frames.append(_trajectory_frame(preset_params("p1", phonon_cutoff=c), "triplet", cutoff=c))
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "expected_steady_phonons": 0.25}


def _fig9(quick, threads):
    cases = {"a": {}, "b": {"nbar": 0.1}, "c": {"epsilon": 0.26}}
    frames = [_trajectory_frame(preset_params("p1", phonon_cutoff=15, **ov), "triplet", panel=k)
              for k, ov in cases.items()]
    return pd.concat(frames, ignore_index=True), {"model": PRESETS["p1"], "panels": cases}


FIGURES = {
    "fig2a": _fig2a, "fig2b": _fig2b, "fig2c": _fig2c, "fig2d": _fig2d,
    "fig3a": _fig3a, "fig3b": _fig3b, "fig3c": _fig3c, "fig3d": _fig3d,
    "fig4a": _fig4a, "fig4c": _fig4c, "fig4d": _fig4d,
    "fig5a": _fig5a, "fig5b": _fig5b, "fig5c": _fig5c, "fig5d": _fig5d,
    "fig7": _fig7, "fig8": _fig8, "fig9": _fig9,
}


def reproduce_figure(tag: str, out_dir, *, quick: bool = False, threads: int = 1, fmt: str = "csv"):
    """Write the dataset and manifest for a figure tag; returns their paths."""
    if tag not in FIGURES:
        raise KeyError(f"unknown figure tag {tag!r}; choose from {sorted(FIGURES)}")
    tic = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        df, description = FIGURES[tag](quick, threads)
    inputs = {"figure": tag, "quick": quick, "parameters": description}
    manifest = io.build_manifest("figure", inputs, tolerances={"rtol": DEFAULT_RTOL, "atol": DEFAULT_ATOL},
                                 wall_time=time.perf_counter() - tic)
    if "run_id" in df:
        df["run_id"] = manifest["run_id"]
    else:
        df.insert(0, "run_id", manifest["run_id"])
    out_dir = Path(out_dir)
    data = io.write_table(df, out_dir / tag, fmt)
    man = io.write_manifest(manifest, out_dir / f"{tag}.manifest.json")
    return data, man


def recommended_cutoff(preset="p1", scenario="triplet", tolerance=1e-3, **overrides) -> int:
    return cutoff_convergence(preset_params(preset, **overrides), scenario, tolerance)
