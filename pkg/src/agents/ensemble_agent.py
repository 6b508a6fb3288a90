"""
Ensemble Agent for running Monte Carlo discrimination experiments
"""

from typing import Dict, Any, List, Optional

from src.agents.base_agent import BaseAgent, EXIT_OK
from src.services.config import Settings
from src.services.experiments import (
    ExperimentConfig,
    run_ensemble,
    strategy_sweep,
    summary_frame,
)


class EnsembleAgent(BaseAgent):
    """Agent for running ensembles and heterodyne rate sweeps"""

    def __init__(self, settings: Optional[Settings] = None):
        super().__init__(settings)
        self.completed_cells: List[str] = []

    def process(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Run the ensemble ('run') or a heterodyne rate sweep ('sweep')"""
        try:
            config: ExperimentConfig = data['config']
            threads = data.get('threads') or self.settings.threads
            mode = data.get('mode', 'run')

            self.log_activity(f"Starting {mode}", {"seed": config.seed, "threads": threads})

            if mode == 'sweep':
                return self.run_sweep(config, data.get('rates') or [], threads)
            if mode != 'run':
                raise ValueError(f"Unknown ensemble mode {mode!r}")

            result = run_ensemble(config, threads=threads, on_cell_complete=self.track_cell)
            return {
                "result": result,
                "curves": result.curves_frame(),
                "summary": summary_frame(result),
                "cells_completed": list(self.completed_cells),
                "exit_code": EXIT_OK,
            }

        except Exception as e:
            return self.handle_error(e, "Ensemble run")

    def run_sweep(self, config: ExperimentConfig, rates: List[float], threads: int) -> Dict[str, Any]:
        """Heterodyne rate sweep over the config's amplitudes and times"""
        if not rates:
            raise ValueError("Sweep needs at least one heterodyne rate")
        self.log_activity("Sweeping heterodyne rates", {"rates": rates})
        return {
            "sweep": strategy_sweep(config, rates, threads=threads),
            "exit_code": EXIT_OK,
        }

    def track_cell(self, cell) -> None:
        self.completed_cells.append(f"{cell.strategy}/{cell.alpha:g}/{cell.label}")
