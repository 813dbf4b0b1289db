import csv
import io
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from robust_gnep.cli import main
from robust_gnep.config import ExperimentConfig, build_game, build_graph
from robust_gnep.experiment import RunRecord, run_experiment
from robust_gnep.export import CSV_HEADER, export_results, residuals_csv
from robust_gnep.robustify import build_extended_game, to_canonical
from robust_gnep.solver import SolverParams, run_distributed

SVG = "{http://www.w3.org/2000/svg}"


def tiny(**sections):
    """Three scalar agents with a robust budget; converges in about two thousand rounds."""
    raw = {
        "name": "tiny",
        "game": {
            "agents": [{"n": 1, "cost": {"kind": "neighbor_average", "Q": [[1]], "linear": [-v]},
                        "omega": {"box": [0, 4]}} for v in (1, 3, 5)],
            "coupling": [{"a0": [[1]] * 3, "P": [[[0.5]]] * 3, "b0": 6, "q": [1]}],
            "uncertainty": {"local": [{"box": [-1, 1]}] * 3, "global": {"box": [-1, 1]}},
        },
        "graph": {"topology": "ring"},
        "solver": {"tolerance": 1e-10, "mode": "both"},
        "experiment": {"centralized": True},
        "output": {"record_wall_time": False},
    }
    for k, v in sections.items():
        raw.setdefault(k, {}).update(v)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


@pytest.fixture(scope="module")
def tiny_report():
    return run_experiment(ExperimentConfig.from_dict(tiny()))


def test_experiment_verifies(tiny_report):
    assert tiny_report.exit_code() == 0
    assert [(r.topology, r.mode) for r in tiny_report.runs] == [("ring", "ripfbf"), ("ring", "tseng")]
    for run in tiny_report.runs:
        assert run.verified, run.verification
        np.testing.assert_allclose(run.report.x, [0, 0, 10 / 3], atol=1e-8)


def test_csv_rows_and_order(tiny_report):
    text = residuals_csv(tiny_report.runs)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) - 1 == sum(r.report.iterations for r in tiny_report.runs)
    groups = {}
    for it, mode, topo, *_ in rows[1:]:
        groups.setdefault((mode, topo), []).append(int(it))
    for its in groups.values():
        assert its == list(range(1, len(its) + 1))


def test_csv_header_only_for_empty_trace():
    cfg = ExperimentConfig.from_dict(tiny())
    graph = build_graph(cfg)
    cg = to_canonical(build_extended_game(build_game(cfg, graph)), graph)
    rep = run_distributed(cg, SolverParams(max_iter=0))
    assert rep.iterations == 0
    assert residuals_csv([RunRecord("ring", "ripfbf", rep, {})]) == ",".join(CSV_HEADER) + "\n"


def test_csv_byte_identical_on_rerun(tmp_path):
    cfg = write(tmp_path, tiny(solver={"mode": "ripfbf"}, experiment={"centralized": False}))
    assert main(["solve", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["solve", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "residuals.csv").read_bytes() == (tmp_path / "b" / "residuals.csv").read_bytes()


def test_svgs_well_formed(tiny_report, tmp_path):
    paths = export_results(tiny_report, tmp_path)
    conv = ET.parse(paths["convergence.svg"]).getroot()
    declared = json.loads(conv.find(f"{SVG}desc").text)
    lines = conv.findall(f"{SVG}polyline")
    assert declared == ["ripfbf/ring", "tseng/ring"]
    assert [p.get("data-series") for p in lines] == declared
    traj = ET.parse(paths["trajectories.svg"]).getroot()
    assert len(traj.findall(f"{SVG}polyline")) == 3
    assert len(json.loads(traj.find(f"{SVG}desc").text)) == 3
    # dashed centralized reference per strategy component
    assert len([e for e in traj.findall(f"{SVG}line") if e.get("stroke-dasharray")]) == 3


def test_equilibrium_json_round_trips_config(tiny_report, tmp_path):
    paths = export_results(tiny_report, tmp_path)
    data = json.loads(paths["equilibrium.json"].read_text())
    assert ExperimentConfig.from_dict(data["config"]).to_dict() == tiny_report.config.to_dict()
    assert data["verified"] and len(data["runs"]) == 2
    assert data["runs"][0]["milestones"]["1e-06"] <= data["runs"][0]["iterations"]


def test_partial_files_removed(tiny_report, tmp_path):
    (tmp_path / "convergence.svg").mkdir()
    with pytest.raises(OSError):
        export_results(tiny_report, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["convergence.svg"]


def test_exit_code_config_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.json")]) == 4
    raw = tiny()
    raw["solver"]["sigma_bar"] = 1.2
    assert main(["solve", write(tmp_path, raw)]) == 4
    assert "/solver/sigma_bar" in capsys.readouterr().err
    raw = tiny()
    del raw["graph"]
    assert main(["solve", write(tmp_path, raw)]) == 4
    assert "/graph" in capsys.readouterr().err
    assert main(["solve", write(tmp_path, tiny()), "--sweep", "nodes=3"]) == 4


def test_exit_code_invalid_game(tmp_path):
    # inverse-degree weights on a path are not symmetric, so monotonicity fails
    raw = tiny(experiment={"topologies": ["path"]})
    assert main(["solve", write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 4


def test_exit_code_not_converged(tmp_path):
    raw = tiny(solver={"max_iter": 10}, experiment={"centralized": False})
    assert main(["solve", write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 3


def test_exit_code_verification_failure(tmp_path):
    raw = tiny(solver={"mode": "ripfbf"}, verification={"consensus_tol": 0.0})
    assert main(["solve", write(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2
    data = json.loads((tmp_path / "o" / "equilibrium.json").read_text())
    assert not data["runs"][0]["verification"]["consensus"]["passed"]


def test_cli_overrides_and_env(tmp_path, monkeypatch, capsys):
    raw = tiny(solver={"mode": "ripfbf"}, experiment={"centralized": False})
    monkeypatch.setenv("ROBUST_GNEP_OUT", str(tmp_path / "env"))
    assert main(["solve", write(tmp_path, raw), "--mode", "tseng", "--centralized",
                 "--sweep", "topologies=ring,complete"]) == 0
    out = capsys.readouterr().out
    assert out.count("tseng") == 2 and "ripfbf" not in out
    data = json.loads((tmp_path / "env" / "equilibrium.json").read_text())
    assert [r["topology"] for r in data["runs"]] == ["ring", "complete"]
    assert "centralized" in data["runs"][0]


def test_example_command(capsys):
    assert main(["example"]) == 0
    assert json.loads(capsys.readouterr().out)["name"] == "benchmark"
    assert main(["example", "nope"]) == 4
