"""
Plot Agent for rendering result CSVs as SVG charts
"""

from pathlib import Path
from typing import Dict, Any

from src.agents.base_agent import BaseAgent, EXIT_OK
from src.services.plotting import load_results, render_svg

TITLES = {
    "time": "Mean posterior of the correct phase vs time",
    "snr": "Mean posterior of the correct phase vs α",
    "ttt": "Time to threshold vs α",
}


class PlotAgent(BaseAgent):
    """Agent for generating figures from experiment outputs"""

    def process(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Render a CSV to SVG in the requested style"""
        try:
            csv_path = Path(data['csv_path'])
            style = data.get('style', 'time')
            out_path = Path(data.get('out_path') or csv_path.with_name(f"{csv_path.stem}_{style}.svg"))

            self.log_activity("Rendering plot", {"csv": str(csv_path), "style": style})

            frame = load_results(csv_path, style)
            chart = render_svg(frame, style, data.get('title', TITLES[style]))
            out_path.write_text(chart.svg, encoding="utf-8")

            return {
                "output": str(out_path),
                "series": chart.series,
                "style": style,
                "exit_code": EXIT_OK,
            }

        except Exception as e:
            return self.handle_error(e, "Plot generation")
