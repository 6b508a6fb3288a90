"""
Orchestrator Agent for coordinating all agents
"""

import shutil
import time
from pathlib import Path
from typing import Dict, Any, List, Optional

from src.agents.base_agent import BaseAgent, EXIT_IO, EXIT_OK, EXIT_VIOLATION
from src.agents.constellation_agent import ConstellationAgent
from src.agents.ensemble_agent import EnsembleAgent
from src.services.config import Settings, load_config
from src.services.errors import ConfigError
from src.services.experiments import write_frame
from src.services.manifest import MANIFEST_NAME, RunManifest

CURVES_FILE = "curves.csv"
SUMMARY_FILE = "summary.csv"
SWEEP_FILE = "sweep.csv"
TRAJECTORY_DIR = "trajectories"


class OrchestratorAgent(BaseAgent):
    """Agent for orchestrating the workflow between all other agents"""

    def __init__(self, settings: Optional[Settings] = None):
        super().__init__(settings)
        self.constellation_agent = ConstellationAgent(self.settings)
        self.ensemble_agent = EnsembleAgent(self.settings)

    def process(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Orchestrate validate -> ensemble -> outputs, keeping the manifest current"""
        written: List[Path] = []
        out_dir: Optional[Path] = None
        created_dir = False
        previous_manifest: Optional[bytes] = None
        try:
            mode = data.get('mode', 'run')
            workflow_steps = data.get('workflow_steps', ['validate', 'ensemble', 'outputs'])
            out_dir = Path(data.get('out_dir') or self.settings.out_dir)
            threads = data.get('threads') or self.settings.threads

            config_file = load_config(data['config_path']).with_overrides(
                seed=data.get('seed'), dt=data.get('dt'), horizon=data.get('horizon'),
            )
            config = config_file.to_experiment_config()

            self.log_activity("Starting orchestration", {"mode": mode, "steps": workflow_steps, "out": str(out_dir)})

            created_dir = not out_dir.exists()
            out_dir.mkdir(parents=True, exist_ok=True)
            if (out_dir / MANIFEST_NAME).is_file():
                previous_manifest = (out_dir / MANIFEST_NAME).read_bytes()
            manifest = RunManifest(
                config_checksum=config_file.checksum(),
                seed=config.seed,
                config_path=str(data['config_path']),
                command=mode,
            )
            written.append(manifest.write(out_dir))

            results: Dict[str, Any] = {}

            # Step 1: Validation
            if 'validate' in workflow_steps:
                started = time.perf_counter()
                validation = self.constellation_agent.process({'config': config_file})
                self.raise_on_error(validation)
                if validation['exit_code'] == EXIT_VIOLATION:
                    raise ConfigError("; ".join(validation['report'].describe()))
                manifest.constellation = validation['constellation'].to_dict()
                manifest.timings['validate'] = time.perf_counter() - started

            # Step 2: Ensemble
            if 'ensemble' in workflow_steps:
                started = time.perf_counter()
                results = self.ensemble_agent.process({
                    'config': config,
                    'threads': threads,
                    'mode': mode,
                    'rates': data.get('rates') or config_file.experiment.rates,
                })
                self.raise_on_error(results)
                manifest.timings['ensemble'] = time.perf_counter() - started

            # Step 3: Outputs
            if 'outputs' in workflow_steps and results:
                started = time.perf_counter()
                for name, path in self.write_outputs(results, out_dir, written).items():
                    manifest.outputs[name] = str(path)
                manifest.timings['outputs'] = time.perf_counter() - started

            manifest.finalize(out_dir)
            return {
                "workflow_steps": workflow_steps,
                "manifest": manifest,
                "results": results,
                "exit_code": EXIT_OK,
            }

        except Exception as e:
            self.remove_partial_outputs(written, out_dir, created_dir, previous_manifest)
            return self.handle_error(e, "Workflow orchestration")

    def raise_on_error(self, step_result: Dict[str, Any]) -> None:
        """Re-raise a sub-agent failure so that one clean-up path handles it"""
        if 'error' in step_result:
            if step_result.get('exit_code') == EXIT_IO:
                raise OSError(step_result['error'])
            raise ConfigError(step_result['error'])

    def write_outputs(self, results: Dict[str, Any], out_dir: Path, written: List[Path]) -> Dict[str, Path]:
        """CSV files for whatever the ensemble step produced"""
        outputs: Dict[str, Path] = {}
        if 'sweep' in results:
            outputs['sweep'] = write_frame(results['sweep'], out_dir / SWEEP_FILE)
            written.append(outputs['sweep'])
            return outputs

        outputs['curves'] = write_frame(results['curves'], out_dir / CURVES_FILE)
        written.append(outputs['curves'])
        outputs['summary'] = write_frame(results['summary'], out_dir / SUMMARY_FILE)
        written.append(outputs['summary'])

        for cell in results['result'].cells.values():
            for i, record in enumerate(cell.trajectories):
                trajectory_dir = out_dir / TRAJECTORY_DIR
                trajectory_dir.mkdir(exist_ok=True)
                name = f"{cell.strategy}_a{cell.alpha:g}_{label_slug(cell.label)}_{i}"
                path = record.to_csv(trajectory_dir / f"{name}.csv")
                written.append(path)
                outputs[f"trajectory:{name}"] = path
        return outputs

    def remove_partial_outputs(
        self,
        written: List[Path],
        out_dir: Optional[Path],
        created_dir: bool = False,
        previous_manifest: Optional[bytes] = None,
    ) -> None:
        """Undo this run: its files go, a directory it created goes, an earlier manifest comes back"""
        for path in reversed(written):
            try:
                path.unlink(missing_ok=True)
            except OSError as e:
                self.logger.warning(f"Could not remove partial output {path}: {e}")
        if out_dir is None:
            return
        if created_dir:
            shutil.rmtree(out_dir, ignore_errors=True)
            return
        if previous_manifest is not None:
            try:
                (out_dir / MANIFEST_NAME).write_bytes(previous_manifest)
            except OSError as e:
                self.logger.warning(f"Could not restore the earlier manifest in {out_dir}: {e}")
        trajectory_dir = out_dir / TRAJECTORY_DIR
        if trajectory_dir.is_dir() and not any(trajectory_dir.iterdir()):
            trajectory_dir.rmdir()


def label_slug(label: str) -> str:
    """'+-' -> 'pm', safe in file names"""
    return label.replace('+', 'p').replace('-', 'm')
