"""YAML scenario files.

Example::

    name: const_a_hybrid
    model: hybrid            # pde | pde-linear | ode | hybrid
    grid: {a_max: 30, n_cells: 12000}
    rates:
      b: 2                   # a number means a constant rate
      btilde: 0
      k: {table: [[0, 0.5], [5, 2]]}
      d: 1
    competition: {c1: 1, ctilde2: 1}
    init:
      n1: {indicator: [0, 1]}
      N2: 0.3
    solver: {t_end: 80, record_every: 400}

A rate is a number, {constant: v}, {table: [[a, v], ...]} (linear
interpolation) or {piecewise: [[a_start, v], ...]}.  Initial densities
additionally accept {indicator: [lo, hi]}.  The ode model takes N1, N2
in ``init`` and ``dt`` in ``solver``; no grid is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import (AgeFunction, AgeGrid, AssumptionReport, Competition, ModelParams,
                   check_assumptions)
from .errors import ConfigError, DomainError
from .ode_model import OdeParams
from .pde_full import table_S

MODELS = ("pde", "pde-linear", "ode", "hybrid")
TOP_KEYS = {"name", "model", "grid", "rates", "competition", "kernels", "init", "solver",
            "prescribed_S", "verify"}
RATE_KEYS = ("b", "btilde", "k", "d")
COMP_KEYS = ("eta1", "eta2", "c1", "c2", "ctilde1", "ctilde2")
SOLVER_KEYS = {"t_end", "record_every", "dt", "blowup_factor"}
VERIFY_KEYS = {"skip", "seed"}


@dataclass(frozen=True)
class Scenario:
    name: str
    model: str
    grid: AgeGrid | None
    params: ModelParams | OdeParams
    init: dict
    solver: dict
    prescribed_S: object = None
    verify: dict = field(default_factory=dict)
    assumptions: AssumptionReport | None = None
    source: dict = field(default_factory=dict)

    @property
    def is_ode(self) -> bool:
        return self.model == "ode"


def _unknown(section: str, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"unknown keys in {section}: {', '.join(extra)}")


def _number(key: str, v, allow_negative=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite")
    if v < 0 and not allow_negative:
        raise ConfigError(f"{key} must be nonnegative, got {v}")
    return v


def _pairs(key: str, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty list of [age, value] pairs")
    out = []
    for i, item in enumerate(v):
        if not isinstance(item, list) or len(item) != 2:
            raise ConfigError(f"{key}[{i}] must be an [age, value] pair")
        out.append((_number(f"{key}[{i}] age", item[0]), _number(f"{key}[{i}] value", item[1])))
    return out


def age_function(key: str, spec, grid: AgeGrid) -> AgeFunction:
    try:
        if not isinstance(spec, dict):
            return AgeFunction.constant(grid, _number(key, spec))
        if len(spec) != 1:
            raise ConfigError(f"{key} needs exactly one of constant/table/piecewise/indicator")
        (kind, val), = spec.items()
        if kind == "constant":
            return AgeFunction.constant(grid, _number(key, val))
        if kind == "table":
            return AgeFunction.from_table(grid, _pairs(key, val))
        if kind == "piecewise":
            return AgeFunction.piecewise(grid, _pairs(key, val))
        if kind == "indicator":
            if not isinstance(val, list) or len(val) != 2:
                raise ConfigError(f"{key}.indicator must be [lo, hi]")
            lo, hi = (_number(f"{key}.indicator", x) for x in val)
            a = grid.nodes
            return AgeFunction(grid, ((a >= lo - 1e-12) & (a <= hi + 1e-12)).astype(float))
        raise ConfigError(f"unknown rate form {kind!r} in {key}")
    except DomainError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _constant_value(key: str, spec) -> float:
    if isinstance(spec, dict):
        if set(spec) != {"constant"}:
            raise ConfigError(f"{key} must be constant for the ode model")
        spec = spec["constant"]
    return _number(key, spec)


def parse_scenario(doc: dict, overrides: dict | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must hold a mapping")
    _unknown("scenario", doc, TOP_KEYS)
    overrides = overrides or {}
    name = str(doc.get("name", "scenario"))
    model = doc.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {model!r}")

    rates = doc.get("rates")
    if not isinstance(rates, dict):
        raise ConfigError("rates section is required")
    _unknown("rates", rates, RATE_KEYS)
    missing = [k for k in ("b", "k") if k not in rates]
    if missing:
        raise ConfigError(f"rates missing: {', '.join(missing)}")
    rates = {"btilde": 0, "d": 0, **rates}

    comp_doc = doc.get("competition") or {}
    _unknown("competition", comp_doc, COMP_KEYS)
    comp = Competition(**{k: _number(f"competition.{k}", v) for k, v in comp_doc.items()})

    solver = dict(doc.get("solver") or {})
    _unknown("solver", solver, SOLVER_KEYS)
    for k, v in solver.items():
        solver[k] = _number(f"solver.{k}", v)
    if "record_every" in solver:
        solver["record_every"] = int(solver["record_every"])
    if overrides.get("t_end") is not None:
        solver["t_end"] = float(overrides["t_end"])
    solver.setdefault("t_end", 10.0)

    verify = dict(doc.get("verify") or {})
    _unknown("verify", verify, VERIFY_KEYS)
    init_doc = doc.get("init") or {}

    if model == "ode":
        if "grid" in doc or "kernels" in doc or "prescribed_S" in doc:
            raise ConfigError("the ode model takes no grid, kernels or prescribed_S")
        vals = {k: _constant_value(f"rates.{k}", rates[k]) for k in RATE_KEYS}
        params = OdeParams(vals["b"], vals["btilde"], vals["k"], vals["d"], **comp_doc)
        _unknown("init", init_doc, {"N1", "N2"})
        init = {k: _number(f"init.{k}", init_doc.get(k, 0.0)) for k in ("N1", "N2")}
        return Scenario(name, model, None, params, init, solver, None, verify, None, doc)

    grid_doc = doc.get("grid")
    if not isinstance(grid_doc, dict):
        raise ConfigError("grid section {a_max, n_cells} is required")
    _unknown("grid", grid_doc, {"a_max", "n_cells"})
    a_max = _number("grid.a_max", grid_doc.get("a_max"))
    n_cells = grid_doc.get("n_cells")
    if overrides.get("dt_cells") is not None:
        n_cells = int(round(a_max * overrides["dt_cells"]))
    if not isinstance(n_cells, int) or n_cells < 2:
        raise ConfigError("grid.n_cells must be an integer >= 2")
    grid = AgeGrid(a_max, n_cells)

    funcs = {k: age_function(f"rates.{k}", rates[k], grid) for k in RATE_KEYS}
    kern_doc = doc.get("kernels") or {}
    _unknown("kernels", kern_doc, {"psi1", "psi2"})
    kernels = {k: age_function(f"kernels.{k}", v, grid) for k, v in kern_doc.items()}
    params = ModelParams(funcs["b"], funcs["btilde"], funcs["k"], funcs["d"], comp, **kernels)

    prescribed = None
    if model == "hybrid":
        if not funcs["btilde"].is_zero():
            raise ConfigError("hybrid model requires btilde = 0 (no births from phase 2)")
        if not funcs["d"].is_constant():
            raise ConfigError("hybrid model requires a constant death rate d")
        if kernels:
            raise ConfigError("hybrid model takes no competition kernels")
        _unknown("init", init_doc, {"n1", "N2"})
        init = {"n1": age_function("init.n1", init_doc.get("n1", 0), grid),
                "N2": _number("init.N2", init_doc.get("N2", 0.0))}
    else:
        _unknown("init", init_doc, {"n1", "n2"})
        init = {k: age_function(f"init.{k}", init_doc.get(k, 0), grid) for k in ("n1", "n2")}
    if model == "pde-linear":
        ps = doc.get("prescribed_S")
        if not isinstance(ps, dict):
            raise ConfigError("pde-linear needs prescribed_S {times, S1, S2}")
        _unknown("prescribed_S", ps, {"times", "S1", "S2"})
        try:
            prescribed = table_S(ps["times"], ps["S1"], ps["S2"])
        except KeyError as exc:
            raise ConfigError(f"prescribed_S missing {exc.args[0]}") from exc
    elif "prescribed_S" in doc:
        raise ConfigError("prescribed_S only applies to the pde-linear model")

    report = check_assumptions(params)
    return Scenario(name, model, grid, params, init, solver, prescribed, verify, report, doc)


def load_scenario(path, **overrides) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if isinstance(doc, dict):
        doc.setdefault("name", path.stem)
    return parse_scenario(doc, overrides)
