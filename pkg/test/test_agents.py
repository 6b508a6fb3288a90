"""
Tests for the constellation, ensemble, plot and orchestrator agents
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from src.agents.base_agent import EXIT_ERROR, EXIT_IO, EXIT_OK, EXIT_VIOLATION
from src.agents.constellation_agent import ConstellationAgent
from src.agents.ensemble_agent import EnsembleAgent
from src.agents.orchestrator_agent import OrchestratorAgent, label_slug
from src.agents.plot_agent import PlotAgent
from src.services.config import load_config
from src.services.manifest import MANIFEST_NAME

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_constellation_agent_lists_phases(settings):
    result = ConstellationAgent(settings).process({"config_path": CONFIG_DIR / "two_qubit.toml"})
    assert result["exit_code"] == EXIT_OK
    assert result["constellation"].size == 4
    assert len([line for line in result["lines"] if "rad" in line and line.startswith("  ")]) == 4
    assert result["lines"][-1].startswith("ok")


def test_constellation_agent_flags_collisions(settings):
    result = ConstellationAgent(settings).process({"config_path": CONFIG_DIR / "equal_pulls.toml"})
    assert result["exit_code"] == EXIT_VIOLATION
    assert any("+-" in line and "-+" in line for line in result["lines"])


def test_constellation_agent_reports_bad_config(settings, tmp_path):
    result = ConstellationAgent(settings).process({"config_path": tmp_path / "missing.toml"})
    assert result["exit_code"] == EXIT_ERROR
    assert "error" in result


def test_ensemble_agent_run(settings, small_config):
    config = load_config(small_config()).to_experiment_config()
    result = EnsembleAgent(settings).process({"config": config, "threads": 2})
    assert result["exit_code"] == EXIT_OK
    assert len(result["cells_completed"]) == 8
    assert len(result["summary"]) == 4
    assert list(result["curves"].columns)[:3] == ["strategy", "alpha", "label"]


def test_ensemble_agent_sweep_needs_rates(settings, small_config):
    config = load_config(small_config()).to_experiment_config()
    agent = EnsembleAgent(settings)
    assert agent.process({"config": config, "mode": "sweep"})["exit_code"] == EXIT_ERROR
    assert agent.process({"config": config, "mode": "replay"})["exit_code"] == EXIT_ERROR


def test_orchestrator_run_writes_outputs(settings, small_config, tmp_path):
    out = tmp_path / "run"
    config_path = small_config(dump=1)
    result = OrchestratorAgent(settings).process({"config_path": config_path, "out_dir": out})
    assert result["exit_code"] == EXIT_OK

    manifest = json.loads((out / MANIFEST_NAME).read_text(encoding="utf-8"))
    assert manifest["status"] == "complete"
    assert manifest["seed"] == 3
    assert manifest["config_checksum"] == load_config(config_path).checksum()
    assert set(manifest["timings"]) == {"validate", "ensemble", "outputs"}
    assert manifest["constellation"]["labels"] == ["++", "+-", "-+", "--"]
    assert (out / "curves.csv").exists()
    assert (out / "summary.csv").exists()
    assert len(list((out / "trajectories").glob("*.csv"))) == 8

    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) == 4


def test_orchestrator_cleans_up_after_violation(settings, tmp_path):
    out = tmp_path / "bad"
    result = OrchestratorAgent(settings).process({
        "config_path": CONFIG_DIR / "equal_pulls.toml",
        "out_dir": out,
    })
    assert result["exit_code"] == EXIT_ERROR
    assert not out.exists()


def test_orchestrator_failure_keeps_earlier_run(settings, small_config, tmp_path):
    out = tmp_path / "shared"
    assert OrchestratorAgent(settings).process({"config_path": small_config(), "out_dir": out})["exit_code"] == EXIT_OK
    earlier = (out / MANIFEST_NAME).read_bytes()
    curves = (out / "curves.csv").read_bytes()

    result = OrchestratorAgent(settings).process({
        "config_path": CONFIG_DIR / "equal_pulls.toml",
        "out_dir": out,
    })
    assert result["exit_code"] == EXIT_ERROR
    assert (out / MANIFEST_NAME).read_bytes() == earlier
    assert (out / "curves.csv").read_bytes() == curves


def test_orchestrator_io_failure(settings, small_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory", encoding="utf-8")
    result = OrchestratorAgent(settings).process({"config_path": small_config(), "out_dir": blocker / "out"})
    assert result["exit_code"] == EXIT_IO


def test_orchestrator_sweep(settings, small_config, tmp_path):
    out = tmp_path / "sweep"
    result = OrchestratorAgent(settings).process({
        "config_path": small_config(n_runs=6),
        "out_dir": out,
        "mode": "sweep",
        "rates": [50.0, 300.0],
    })
    assert result["exit_code"] == EXIT_OK
    sweep = pd.read_csv(out / "sweep.csv")
    assert sorted(sweep["rate"].unique()) == [50.0, 300.0]
    assert len(sweep) == 2 * 2
    assert json.loads((out / MANIFEST_NAME).read_text())["command"] == "sweep"


def test_plot_agent(settings, small_config, tmp_path):
    out = tmp_path / "plot"
    OrchestratorAgent(settings).process({"config_path": small_config(), "out_dir": out})

    agent = PlotAgent(settings)
    result = agent.process({"csv_path": out / "curves.csv", "style": "time"})
    assert result["exit_code"] == EXIT_OK
    assert result["series"] == 2
    assert Path(result["output"]).name == "curves_time.svg"
    assert Path(result["output"]).read_text(encoding="utf-8").lstrip().startswith("<?xml")

    snr = agent.process({"csv_path": out / "summary.csv", "style": "snr", "out_path": tmp_path / "snr.svg"})
    assert snr["exit_code"] == EXIT_OK
    assert snr["series"] == 4

    ttt = agent.process({"csv_path": out / "summary.csv", "style": "ttt", "out_path": tmp_path / "ttt.svg"})
    assert ttt["series"] == 2


@pytest.mark.parametrize("content, style", [
    ("", "time"),
    ("strategy,alpha,t\n", "time"),
    ("strategy,alpha,label,t,mean,std,stderr\n", "time"),
    ("strategy,alpha,t,mean\nadaptive,5,0,0.25\n", "ttt"),
])
def test_plot_agent_schema_errors(settings, tmp_path, content, style):
    path = tmp_path / "bad.csv"
    path.write_text(content, encoding="utf-8")
    result = PlotAgent(settings).process({"csv_path": path, "style": style})
    assert result["exit_code"] == EXIT_ERROR


def test_label_slug():
    assert label_slug("+-+") == "pmp"
