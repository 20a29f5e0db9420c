"""Command line entry point: ``agepde <command> <scenario.yaml>``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from .core import AgeFunction
from .errors import AgePdeError
from .ode_model import integrate_ode, steady_state_ode
from .pde_full import LINEAR, NONLINEAR, SolverConfig, simulate
from .pde_ode import (bounds_and_assumptions, convergence_diagnostics, one_phase_and_comparisons,
                      simulate_hybrid, smurf_ratio_sensitivity, stability_verdict,
                      steady_state_hybrid)
from .scenario import load_scenario, parse_scenario
from .spectral import eigenfunctions, growth_rate, gre_rate
from .verify import SCHEMA, _clean, _init_state, run_verify

TRAJECTORY_COLUMNS = ("t", "N1", "N2", "S1", "S2", "n1_at_0", "n2_at_0")
PROFILE_COLUMNS = ("a", "n1", "n2")
EIGEN_COLUMNS = ("a", "n1_0", "n2_0", "phi1_0", "phi2_0")
ODE_COLUMNS = ("t", "N1", "N2")
DIAG_COLUMNS = ("t", "N1", "N2", "lambda_t", "kappa_t", "profile_gap", "lyapunov_V")

PLOT_SCRIPT = '''"""Plot the CSV files written by agepde in this directory."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
for path in sorted(here.glob("*.csv")):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        continue
    cols = list(rows[0])
    x = [float(r[cols[0]]) for r in rows]
    fig, ax = plt.subplots()
    for c in cols[1:]:
        try:
            ax.plot(x, [float(r[c]) for r in rows], label=c)
        except ValueError:
            continue
    ax.set_xlabel(cols[0])
    ax.legend()
    ax.set_title(path.stem)
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
'''


def _num(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_num(v) for v in row])


def to_plain(obj):
    """Dataclasses to dicts, dropping age profiles (written as CSV instead)."""
    if is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, AgeFunction):
                continue
            out[f.name] = to_plain(v)
        return out
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    return _clean(obj)


def dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False, default=str)


class Output:
    def __init__(self, args):
        self.dir = Path(args.out) if args.out else None
        self.json = args.json
        self.plot = getattr(args, "plot", False)

    def report(self, name: str, data: dict, text_lines=()):
        data = {"schema": SCHEMA, **to_plain(data)}
        if self.json:
            print(dump_json(data))
        else:
            for line in text_lines:
                print(line)
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / f"{name}.json").write_text(dump_json(data) + "\n")

    def csv(self, name: str, columns, rows):
        if self.dir:
            write_csv(self.dir / f"{name}.csv", columns, rows)
            if self.plot:
                (self.dir / "plot.py").write_text(PLOT_SCRIPT)


def _load(args):
    return load_scenario(args.scenario, t_end=args.t_end, dt_cells=args.dt_cells)


def _require(sc, *models):
    if sc.model not in models:
        raise AgePdeError(f"scenario model {sc.model!r} not valid here (need {' or '.join(models)})")


def cmd_eigen(args, out: Output):
    sc = _load(args)
    _require(sc, "pde", "pde-linear", "hybrid")
    lin = sc.params.without_competition()
    gr = growth_rate(lin)
    data = {"scenario": sc.name, "R0": gr.R0, "lambda0": gr.value, "degenerate": gr.degenerate,
            "root_iterations": gr.iterations}
    if not gr.degenerate and gr.value > 0:
        eig = eigenfunctions(lin, gr.value)
        data["mu"] = gre_rate(lin, eig)
        data["bounds"] = eig.bounds
        a = sc.grid.nodes
        out.csv("eigen", EIGEN_COLUMNS, zip(a, eig.n1_0.values, eig.n2_0.values,
                                            eig.phi1_0.values, eig.phi2_0.values))
    out.report("eigen", data, [f"R0 = {gr.R0:.10g}", f"lambda0 = {gr.value:.12g}"])


def _traj_rows(tr):
    return zip(tr.times, tr.N1, tr.N2, tr.S1, tr.S2, tr.B1, tr.B2)


def _solver_config(sc, mode=NONLINEAR):
    s = sc.solver
    return SolverConfig(s["t_end"], record_every=int(s.get("record_every", 10 ** 9)), mode=mode,
                        prescribed_S=sc.prescribed_S,
                        blowup_factor=s.get("blowup_factor", 1e12))


def cmd_simulate_pde(args, out: Output):
    sc = _load(args)
    _require(sc, "pde", "pde-linear")
    mode = LINEAR if sc.model == "pde-linear" else NONLINEAR
    tr = simulate(sc.params, _init_state(sc), _solver_config(sc, mode))
    out.csv("trajectory", TRAJECTORY_COLUMNS, _traj_rows(tr))
    fin = tr.final
    out.csv("final_profile", PROFILE_COLUMNS, zip(sc.grid.nodes, fin.n1.values, fin.n2.values))
    data = {"scenario": sc.name, "t_end": float(tr.times[-1]), "N1": float(tr.N1[-1]),
            "N2": float(tr.N2[-1]), "S1": float(tr.S1[-1]), "S2": float(tr.S2[-1])}
    out.report("simulate", data, [f"t = {tr.times[-1]:g}: N1 = {tr.N1[-1]:.10g}, "
                                  f"N2 = {tr.N2[-1]:.10g}"])


def cmd_ode(args, out: Output):
    sc = _load(args)
    _require(sc, "ode")
    if args.action == "steady":
        ss = steady_state_ode(sc.params)
        out.report("ode_steady", {"scenario": sc.name, "steady_state": ss},
                   [f"N1* = {ss.N1s:.12g}", f"N2* = {ss.N2s:.12g}"])
    else:
        dt = sc.solver.get("dt", 0.01)
        tr = integrate_ode(sc.params, (sc.init["N1"], sc.init["N2"]), sc.solver["t_end"], dt)
        out.csv("ode_trajectory", ODE_COLUMNS, zip(tr.times, tr.N1, tr.N2))
        F1, F2 = tr.final
        out.report("ode_run", {"scenario": sc.name, "N1": float(F1), "N2": float(F2),
                               "clip_events": tr.clip_events},
                   [f"t = {tr.times[-1]:g}: N1 = {F1:.10g}, N2 = {F2:.10g}"])


def cmd_hybrid(args, out: Output):
    sc = _load(args)
    _require(sc, "hybrid")
    p = sc.params
    act = args.action
    if act == "verify":
        return _verify(sc, args, out)
    ss = steady_state_hybrid(p)
    if act == "steady":
        out.csv("steady_profile", ("a", "n1"), zip(sc.grid.nodes, ss.n1_profile.values))
        out.report("hybrid_steady", {"scenario": sc.name, "steady_state": ss},
                   [f"lambda0 = {ss.lambda0:.12g}", f"N1* = {ss.N1s:.12g}",
                    f"N2* = {ss.N2s:.12g}", f"case = {ss.case_tag}"])
    elif act == "stability":
        rep = stability_verdict(p, ss)
        data = {"scenario": sc.name, "stability": rep}
        lines = [f"quadratic = {rep.coefficients}", f"verdict = {rep.verdict}",
                 f"trivial state (R0 = {rep.trivial_R0:.6g}): {rep.trivial_verdict}"]
        if p.competition.c2_tot > 0:
            data["sensitivity"] = smurf_ratio_sensitivity(p, ss)
        out.report("hybrid_stability", data, lines)
    elif act == "compare":
        rep = one_phase_and_comparisons(p)
        out.report("hybrid_compare", {"scenario": sc.name, "comparisons": rep},
                   [f"N* = {rep.N_star:.10g}", f"N1*+N2* = {rep.N1s + rep.N2s:.10g}",
                    f"no-transition-competition (N1**, N2**) = ({rep.N1ss:.10g}, {rep.N2ss:.10g})"])
    else:
        init = _init_state(sc)
        tr = simulate_hybrid(p, init, _solver_config(sc))
        out.csv("trajectory", TRAJECTORY_COLUMNS, _traj_rows(tr))
        cd = convergence_diagnostics(p, tr, ss)
        rec = tr.record_times
        out.csv("diagnostics", DIAG_COLUMNS,
                zip(rec, [s.N1 for s in tr.states], [s.N2 for s in tr.states], cd.lambda_t,
                    cd.kappa_t, cd.profile_gap, cd.lyapunov_V))
        data = {"scenario": sc.name, "N1": float(tr.N1[-1]), "N2": float(tr.N2[-1]),
                "steady_state": {"N1s": ss.N1s, "N2s": ss.N2s}, "t0": cd.t0,
                "renewal_constant_estimate": cd.renewal_constant}
        if p.k.inf() > 0:
            data["bounds"] = bounds_and_assumptions(p, init, tr, ss)
        out.report("hybrid_run", data, [f"t = {tr.times[-1]:g}: N1 = {tr.N1[-1]:.10g}, "
                                        f"N2 = {tr.N2[-1]:.10g}"])


def _verify(sc, args, out: Output):
    rep = run_verify(sc, seed=args.seed, quick=args.quick)
    out.report("verify", rep.to_dict(), [c.line() for c in rep.checks])
    return rep.exit_code


def cmd_verify(args, out: Output):
    return _verify(_load(args), args, out)


def _set_key(doc: dict, key: str, value: float) -> dict:
    doc = json.loads(json.dumps(doc))
    node = doc
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise AgePdeError(f"cannot set {key}: {part} is not a section")
    node[parts[-1]] = value
    return doc


def sweep_point(task):
    """One sweep point; module level so worker processes can pickle it."""
    doc, key, value = task
    try:
        sc = parse_scenario(_set_key(doc, key, value))
        if sc.model == "ode":
            ss = steady_state_ode(sc.params)
            return {key: value, "status": "ok", "lambda0": float("nan"),
                    "N1": ss.N1s, "N2": ss.N2s}
        if sc.model == "hybrid":
            ss = steady_state_hybrid(sc.params)
            return {key: value, "status": "ok", "lambda0": ss.lambda0,
                    "N1": ss.N1s, "N2": ss.N2s}
        mode = LINEAR if sc.model == "pde-linear" else NONLINEAR
        tr = simulate(sc.params, _init_state(sc), _solver_config(sc, mode))
        lam = growth_rate(sc.params.without_competition())
        return {key: value, "status": "ok", "lambda0": lam.value,
                "N1": float(tr.N1[-1]), "N2": float(tr.N2[-1])}
    except (AgePdeError, ValueError) as exc:
        return {key: value, "status": f"{type(exc).__name__}: {exc}",
                "lambda0": float("nan"), "N1": float("nan"), "N2": float("nan")}


def cmd_sweep(args, out: Output):
    doc = yaml.safe_load(Path(args.scenario).read_text())
    if args.t_end is not None:
        doc.setdefault("solver", {})["t_end"] = args.t_end
    if args.dt_cells is not None and "grid" in doc:
        doc["grid"]["n_cells"] = int(round(doc["grid"]["a_max"] * args.dt_cells))
    values = [float(v) for v in args.values.split(",") if v.strip()]
    tasks = [(doc, args.param, v) for v in values]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(sweep_point, tasks))
    else:
        rows = [sweep_point(t) for t in tasks]
    cols = (args.param, "status", "lambda0", "N1", "N2")
    out.csv("sweep", cols, ([r[c] for c in cols] for r in rows))
    lines = [",".join(cols)] + [",".join(_num(r[c]) for c in cols) for r in rows]
    out.report("sweep", {"param": args.param, "rows": rows}, lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="directory for CSV/JSON outputs")
    common.add_argument("--t-end", type=float, help="override solver.t_end")
    common.add_argument("--dt-cells", type=float,
                        help="cells per unit age (sets da = 1/value; dt = da)")
    common.add_argument("--seed", type=int, default=0, help="seed for random-draw checks")
    common.add_argument("--json", action="store_true", help="print JSON instead of text")
    common.add_argument("--plot", action="store_true", help="also write plot.py next to CSVs")

    ap = argparse.ArgumentParser(prog="agepde", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("eigen", "growth rate and eigenfunctions"),
                           ("simulate-pde", "run the two-phase age-structured model"),
                           ("verify", "run the theorem-check suite")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("scenario")
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="fewer draws, coarse checks")
    p = sub.add_parser("ode", parents=[common], help="two-compartment ODE model")
    p.add_argument("action", choices=("steady", "run"))
    p.add_argument("scenario")
    p = sub.add_parser("hybrid", parents=[common], help="age-structured phase 1 + ODE phase 2")
    p.add_argument("action", choices=("steady", "stability", "compare", "run", "verify"))
    p.add_argument("scenario")
    p.add_argument("--quick", action="store_true", help="fewer draws in verify")
    p = sub.add_parser("sweep", parents=[common], help="vary one scenario key")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted key, e.g. competition.c2 or rates.b")
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--workers", type=int, default=1)
    return ap


COMMANDS = {"eigen": cmd_eigen, "simulate-pde": cmd_simulate_pde, "ode": cmd_ode,
            "hybrid": cmd_hybrid, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Output(args)
    try:
        code = COMMANDS[args.command](args, out)
    except AgePdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
