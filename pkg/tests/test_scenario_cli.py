import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from agepde.cli import main
from agepde.core import AgeGrid, Competition, ModelParams
from agepde.errors import ConfigError
from agepde.pde_ode import hybrid_state
from agepde.scenario import load_scenario, parse_scenario
from agepde.spectral import RenewalMap
from agepde.verify import FAIL, PASS, SKIP, check_global_convergence

from conftest import indicator

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


def base_doc(**changes):
    doc = {
        "model": "pde",
        "grid": {"a_max": 30, "n_cells": 600},
        "rates": {"b": 2, "btilde": 0, "k": 1, "d": 1},
        "competition": {"c1": 1, "ctilde2": 1},
        "init": {"n1": {"indicator": [0, 1]}},
        "solver": {"t_end": 1},
    }
    doc.update(changes)
    return doc


def test_load_const_a():
    sc = load_scenario(SCEN / "const_a.yaml")
    assert sc.name == "const_a" and sc.model == "pde"
    assert RenewalMap(sc.params)(0.0) == pytest.approx(2, rel=1e-4)


def test_all_shipped_scenarios_load():
    for path in SCEN.glob("*.yaml"):
        assert load_scenario(path).name == path.stem


def test_negative_rate_names_key():
    doc = base_doc(competition={"c1": 1, "c2": -0.5})
    with pytest.raises(ConfigError, match="competition.c2"):
        parse_scenario(doc)
    doc = base_doc(rates={"b": -1, "k": 1})
    with pytest.raises(ConfigError, match="rates.b"):
        parse_scenario(doc)


def test_hybrid_rejects_btilde():
    doc = base_doc(model="hybrid", rates={"b": 2, "btilde": 0.1, "k": 1, "d": 1},
                   init={"N2": 0.1})
    with pytest.raises(ConfigError, match="btilde"):
        parse_scenario(doc)


def test_unknown_keys():
    with pytest.raises(ConfigError, match="colour"):
        parse_scenario(base_doc(colour="red"))
    with pytest.raises(ConfigError, match="rates"):
        parse_scenario(base_doc(rates={"b": 1, "k": 1, "mu": 2}))


def test_overrides():
    sc = parse_scenario(base_doc(), {"t_end": 3, "dt_cells": 50})
    assert sc.solver["t_end"] == 3
    assert sc.grid.n_cells == 1500


def test_ode_scenario_has_no_grid():
    doc = {"model": "ode", "rates": {"b": 2, "k": 1, "d": 1},
           "competition": {"c1": 1, "ctilde2": 1}, "init": {"N1": 0.5, "N2": 0.5}}
    sc = parse_scenario(doc)
    assert sc.grid is None and sc.params.b == 2
    with pytest.raises(ConfigError):
        parse_scenario({**doc, "grid": {"a_max": 10, "n_cells": 10}})


def small_scenario(tmp_path, **changes):
    path = tmp_path / "s.yaml"
    path.write_text(yaml.safe_dump(base_doc(**changes)))
    return path


def test_cli_outputs_are_reproducible(tmp_path):
    path = small_scenario(tmp_path)
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["simulate-pde", str(path), "--out", str(out)]) == 0
        assert main(["eigen", str(path), "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert {"trajectory.csv", "final_profile.csv", "eigen.csv"} <= set(outs[0])


def test_sweep_worker_invariance(tmp_path):
    path = small_scenario(tmp_path)
    args = ["sweep", str(path), "--param", "competition.c2", "--values", "0,0.5,1"]
    assert main(args + ["--out", str(tmp_path / "w1")]) == 0
    assert main(args + ["--out", str(tmp_path / "w2"), "--workers", "2"]) == 0
    a = (tmp_path / "w1" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "w2" / "sweep.csv").read_bytes()
    assert len(a.splitlines()) == 4


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = small_scenario(tmp_path, competition={"c1": 1, "c2": -1})
    assert main(["eigen", str(path)]) == 2
    assert "competition.c2" in capsys.readouterr().err


def test_verify_extinction(capsys):
    code = main(["verify", str(SCEN / "extinction_ode.yaml"), "--quick", "--json"])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    status = {c["name"]: c["status"] for c in rep["checks"]}
    assert rep["schema"] == 1
    assert status["ode_extinction"] == PASS
    assert status["ode_global_stability"] == SKIP
    assert FAIL not in status.values()


def test_verify_ode_quick(capsys):
    assert main(["verify", str(SCEN / "const_a_ode.yaml"), "--quick"]) == 0
    text = capsys.readouterr().out
    assert "PASS    ode_global_stability" in text


def test_ode_and_hybrid_commands(tmp_path):
    assert main(["ode", "run", str(SCEN / "const_a_ode.yaml"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ode_trajectory.csv").exists()
    for action in ("steady", "stability", "compare"):
        assert main(["hybrid", action, str(SCEN / "const_a_hybrid.yaml"),
                     "--dt-cells", "100"]) == 0


def test_unmet_margin_leaves_lyapunov_unaudited():
    g = AgeGrid(30.0, 3000)
    p = ModelParams.constant(g, 2, 0, 1, 1, competition=Competition(c1=1, c2=3, ctilde1=0.5,
                                                                     ctilde2=1))
    init = hybrid_state(p, indicator(g, 0, 1).values, 0.3)
    res = check_global_convergence(p, [init], t_end=45.0)
    assert res.measured["lyapunov_audited"] is False
    assert "Lyapunov audit skipped" in res.note
    assert res.status == PASS
    assert np.isfinite(res.measured["final_err"])
