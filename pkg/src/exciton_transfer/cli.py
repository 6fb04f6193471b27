"""Command-line entry point: ``exciton-transfer <command> [options]``."""
from __future__ import annotations

import argparse
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import io, scenarios
from .analysis import fgr_rate
from .errors import ConvergenceError, CutoffWarning, InvalidModelError
from .lindblad import DEFAULT_ATOL, DEFAULT_RTOL, cutoff_convergence
from .model import exciton_couplings_dimer, intermonomer_coupling_table, monomer_exciton_basis


def _parse_values(text):
    """``0.1,0.2,0.3`` or ``start:stop:step`` or ``start:stop:num:log``."""
    if text is None:
        return None
    if ":" in text:
        parts = text.split(":")
        if len(parts) == 3:
            return {"start": float(parts[0]), "stop": float(parts[1]), "step": float(parts[2])}
        if len(parts) == 4 and parts[3] == "log":
            return {"start": float(parts[0]), "stop": float(parts[1]), "num": int(parts[2]), "log": True}
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return [float(v) for v in text.split(",") if v.strip()]


def _section(args, name):
    if not args.config:
        return {}
    data = io.load_config(args.config)
    body = data.get(name, {k: v for k, v in data.items() if k != "schema_version"})
    if not isinstance(body, dict):
        raise InvalidModelError(f"config section {name!r} must be a mapping")
    return dict(body)


def _merge(base, **flags):
    out = dict(base)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _emit(args, name, df, command, inputs, seed=None, tic=None, tolerances=None):
    tol = tolerances or {"rtol": DEFAULT_RTOL, "atol": DEFAULT_ATOL}
    manifest = io.build_manifest(command, inputs, seed=seed, tolerances=tol,
                                 wall_time=None if tic is None else time.perf_counter() - tic)
    if "run_id" in df:
        df["run_id"] = manifest["run_id"]
    else:
        df.insert(0, "run_id", manifest["run_id"])
    out = Path(args.out)
    data = io.write_table(df, out / name, args.format)
    man = io.write_manifest(manifest, out / f"{name}.manifest.json")
    print(f"wrote {data} and {man} (run {manifest['run_id']})")
    return manifest


def _sweep_config(args, section):
    raw = _merge(_section(args, section), preset=args.preset, master_seed=args.seed)
    if getattr(args, "axis", None):
        raw["axis"] = args.axis
    values = _parse_values(getattr(args, "values", None))
    if values is not None:
        raw["values"] = values
    for key in ("init_state", "replicates"):
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = v
    for pair in getattr(args, "set", None) or []:
        key, _, val = pair.partition("=")
        raw.setdefault("overrides", {})[key] = _literal(val)
    if section == "ensemble":
        raw.setdefault("values", [0.0])
    return scenarios.SweepConfig.from_dict(raw)


def _literal(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return {"none": None, "true": True, "false": False}.get(text.lower(), text)


def cmd_sweep(args):
    tic = time.perf_counter()
    cfg = _sweep_config(args, "sweep")
    df = scenarios.run_sweep(cfg, threads=args.threads)
    _emit(args, "sweep", df, "sweep", {"config": cfg.to_dict()}, cfg.master_seed, tic,
          {"rtol": cfg.rtol, "atol": cfg.atol})
    failed = int((df["status"] != "ok").sum())
    if failed:
        print(f"{failed} of {len(df)} runs failed; see the diagnostic column", file=sys.stderr)
    return 0


def cmd_ensemble(args):
    tic = time.perf_counter()
    section = _section(args, "ensemble")
    sigmas = _parse_values(args.sigmas) or section.pop("sigmas", None)
    kind = args.kind or section.pop("kind", "g")
    section.pop("sigmas", None)
    section.pop("kind", None)
    if sigmas is None:
        raise InvalidModelError("ensemble needs --sigmas or a 'sigmas' config entry")
    raw = _merge(section, preset=args.preset, master_seed=args.seed, replicates=args.replicates,
                 init_state=args.init_state)
    raw.setdefault("values", [0.0])
    raw.setdefault("replicates", 100)
    cfg = scenarios.SweepConfig.from_dict(raw)
    summaries, table = scenarios.run_disorder_ensemble(cfg, sigmas, kind, args.threads, return_table=True)
    inputs = {"config": cfg.to_dict(), "sigma_axis": list(scenarios.expand_values(sigmas)), "kind": kind}
    tol = {"rtol": cfg.rtol, "atol": cfg.atol}
    _emit(args, "ensemble_realizations", table, "ensemble", inputs, cfg.master_seed, tic, tol)
    summary = scenarios.summaries_frame(summaries, preset=cfg.preset, kind=kind)
    _emit(args, "ensemble", summary, "ensemble", inputs, cfg.master_seed, tic, tol)
    return 0


def cmd_scaling(args):
    tic = time.perf_counter()
    section = _section(args, "scaling")
    kind = args.kind or section.pop("kind", "monomer-size")
    max_size = args.max_size or section.pop("max_size", 5)
    preset = args.preset or section.pop("preset", "p1")
    section.pop("kind", None)
    section.pop("max_size", None)
    section.pop("preset", None)
    df = scenarios.run_scaling_study(kind, int(max_size), preset, threads=args.threads, **section)
    inputs = {"kind": kind, "max_size": int(max_size), "preset": preset, **section}
    _emit(args, "scaling", df, "scaling", inputs, None, tic)
    skipped = df[df.get("status", pd.Series(dtype=str)) == "skipped"]
    if len(skipped):
        print(f"{len(skipped)} points skipped above the resource cap", file=sys.stderr)
    return 0


def cmd_figure(args):
    data, man = scenarios.reproduce_figure(args.tag, args.out, quick=args.quick, threads=args.threads,
                                           fmt=args.format)
    print(f"wrote {data} and {man}")
    return 0


def cmd_converge(args):
    tic = time.perf_counter()
    section = _section(args, "converge")
    scenario = args.init_state or section.pop("scenario", "triplet")
    tolerance = args.tolerance if args.tolerance is not None else section.pop("tolerance", 1e-3)
    section.pop("scenario", None)
    section.pop("tolerance", None)
    overrides = {**section.pop("overrides", {}), **section}
    for pair in args.set or []:
        key, _, val = pair.partition("=")
        overrides[key] = _literal(val)
    params = scenarios.preset_params(args.preset or "p1", **overrides)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        try:
            cutoff = cutoff_convergence(params, scenario, tolerance)
            status = "converged"
        except ConvergenceError as exc:
            cutoff, status = -1, str(exc)
    df = pd.DataFrame([{"preset": args.preset or "p1", "scenario": scenario, "tolerance": tolerance,
                        "recommended_cutoff": cutoff, "status": status}])
    inputs = {"preset": args.preset or "p1", "overrides": overrides, "scenario": scenario, "tolerance": tolerance}
    _emit(args, "converge", df, "converge", inputs, None, tic)
    return 0 if cutoff > 0 else 1


def cmd_couplings(args):
    section = _section(args, "couplings")
    J = args.J if args.J is not None else section.get("J", 1.0)
    p = args.p if args.p is not None else section.get("p", 1.0)
    d = args.d if args.d is not None else section.get("d", 2)
    L = args.L if args.L is not None else section.get("L", 2)
    convention = args.convention or section.get("convention", "orthonormal")
    rows = []
    if L == 2:
        tt, ss, ts = exciton_couplings_dimer(J, p, d)
        rows = [{"donor": "T", "acceptor": "T", "coupling": tt}, {"donor": "S", "acceptor": "S", "coupling": ss},
                {"donor": "T", "acceptor": "S", "coupling": ts}, {"donor": "S", "acceptor": "T", "coupling": -ts}]
    else:
        table = intermonomer_coupling_table(L, J, p, d, convention)
        for i in range(L):
            for j in range(L):
                rows.append({"donor": f"E{i + 1}", "acceptor": f"E{j + 1}", "coupling": table[i, j]})
        basis = monomer_exciton_basis(L, J, p)
        for i, e in enumerate(basis.eigenvalues):
            rows.append({"donor": f"E{i + 1}", "acceptor": "energy", "coupling": e})
    df = pd.DataFrame(rows)
    _emit(args, "couplings", df, "couplings", {"J": J, "p": p, "d": d, "L": L, "convention": convention})
    if args.format == "csv":
        print(df.to_string(index=False))
    return 0


def cmd_fgr(args):
    section = _section(args, "fgr")
    values = _parse_values(args.values) or section.pop("epsilon", None) or [None]
    initial = args.initial or section.pop("initial", "T")
    section.pop("epsilon", None)
    section.pop("initial", None)
    overrides = {**section.pop("overrides", {}), **section}
    for pair in args.set or []:
        key, _, val = pair.partition("=")
        overrides[key] = _literal(val)
    base = scenarios.preset_params(args.preset or "perturbative", **overrides)
    eps = scenarios.expand_values(values) if values != [None] else (base.epsilon,)
    rows = []
    for e in eps:
        pred = fgr_rate(base.replace(epsilon=e), initial)
        per_final = {f: sum(v for (i, ff, n), v in pred.per_channel.items() if ff == f) for f in ("T", "S")}
        rows.append({"epsilon": e, "initial": initial, "k_fgr": pred.total,
                     "to_T": per_final["T"], "to_S": per_final["S"]})
    df = pd.DataFrame(rows)
    inputs = {"preset": args.preset or "perturbative", "overrides": overrides, "initial": initial,
              "epsilon": list(np.asarray(eps, float))}
    _emit(args, "fgr", df, "fgr", inputs)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config with schema_version: 1")
    common.add_argument("--preset", help=f"named parameter set ({', '.join(scenarios.PRESETS)})")
    common.add_argument("--seed", type=int, help="master seed for disorder draws")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="model parameter override")

    parser = argparse.ArgumentParser(prog="exciton-transfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="one-axis parameter sweep")
    p.add_argument("--axis", help="parameter to vary (epsilon, gamma, nbar, gamma_d, sigma_g, L, ...)")
    p.add_argument("--values", help="comma list, start:stop:step, or start:stop:num:log")
    p.add_argument("--init-state", dest="init_state")
    p.add_argument("--replicates", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ensemble", parents=[common], help="static-disorder ensemble statistics")
    p.add_argument("--kind", choices=("g", "eps"))
    p.add_argument("--sigmas", help="disorder widths (same syntax as --values)")
    p.add_argument("--replicates", type=int, help="realizations per width (default 100)")
    p.add_argument("--init-state", dest="init_state")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("scaling", parents=[common], help="monomer-size or chain-length study")
    p.add_argument("--kind", choices=("monomer-size", "chain-length"))
    p.add_argument("--max-size", dest="max_size", type=int)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("figure", parents=[common], help="dataset for a figure recipe")
    p.add_argument("tag", choices=sorted(scenarios.FIGURES))
    p.add_argument("--quick", action="store_true", help="coarser grids and fewer realizations")
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("converge", parents=[common], help="smallest adequate phonon cutoff")
    p.add_argument("--init-state", dest="init_state")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("couplings", parents=[common], help="exciton coupling tables")
    p.add_argument("--J", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--d", type=int, help="coolants between monomers")
    p.add_argument("--L", type=int, help="sites per monomer")
    p.add_argument("--convention", choices=("orthonormal", "published"))
    p.set_defaults(func=cmd_couplings)

    p = sub.add_parser("fgr", parents=[common], help="golden-rule transfer rates")
    p.add_argument("--values", help="epsilon values (same syntax as sweep --values)")
    p.add_argument("--initial", choices=("T", "S"))
    p.set_defaults(func=cmd_fgr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidModelError, ValueError, KeyError) as exc:
        parser.exit(2, f"{parser.prog} {args.command}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
