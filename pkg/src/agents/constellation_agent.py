"""
Constellation Agent for building and checking hypothesis sets
"""

from typing import Dict, Any, List

from src.agents.base_agent import BaseAgent, EXIT_OK, EXIT_VIOLATION
from src.services.config import load_config
from src.services.constellation import format_label, validate_unique


class ConstellationAgent(BaseAgent):
    """Agent for reviewing a configured constellation before any simulation"""

    def process(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Build the constellation from a config and check phase uniqueness"""
        try:
            config = data.get('config')
            if config is None:
                config = load_config(data['config_path'])
            tolerance = data.get('tolerance', 1e-9)

            constellation = config.constellation.build()
            self.log_activity("Validating constellation", {"pulls": constellation.pulls, "size": constellation.size})

            report = validate_unique(constellation, tolerance)
            return {
                "constellation": constellation,
                "report": report,
                "lines": self.format_report(constellation, report),
                "exit_code": EXIT_OK if report.ok else EXIT_VIOLATION,
            }

        except Exception as e:
            return self.handle_error(e, "Constellation validation")

    def format_report(self, constellation, report) -> List[str]:
        """Human-readable listing of phases, labels and the uniqueness verdict"""
        lines = [
            f"{constellation.size} phases, amplitude {constellation.amplitude:g}, "
            f"pulls {[round(p, 6) for p in constellation.pulls]}"
        ]
        for label, phase in zip(constellation.labels, constellation.phases):
            lines.append(f"  {format_label(label)}  {phase: .9f} rad")
        lines.extend(report.describe())
        return lines
