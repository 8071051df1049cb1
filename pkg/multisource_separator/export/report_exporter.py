"""
Report Exporter - Metric reports as JSON and as a plain-text table.

The table has one row per processing stage and one column per source, each
cell reading "LSD/SegSNR" in dB.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence, Union
import logging

from multisource_separator.core.metrics import STAGE_TITLES, MetricReport
from multisource_separator.exceptions import ConfigError

logger = logging.getLogger(__name__)


class ReportExporter:
    """Read and write report.json files and render them as tables."""

    def __init__(self, precision: int = 2):
        self.precision = precision

    def export_json(self, report: MetricReport, output_path: Union[str, Path]) -> Path:
        """
        Write report.json.

        Returns:
            Path to created file
        """
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        logger.info(f"Exported report to: {output_path}")
        return output_path

    @staticmethod
    def load(path: Union[str, Path]) -> MetricReport:
        """
        Read a report.json file.

        Raises:
            OSError: If the file cannot be opened
            ConfigError: If the content is not a valid report
        """
        path = Path(path)
        with open(path, "r") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} does not contain a report object")
        try:
            return MetricReport.from_dict(data)
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e

    def format_table(self, report: MetricReport, title: str = "") -> str:
        """
        Render one report as an aligned table.

        Args:
            report: Report to render
            title: Optional heading line

        Returns:
            Table text, one line per stage after the header
        """
        fmt = f"{{:.{self.precision}f}}"
        header = ["LSD/SegSNR (dB)"] + list(report.sources)
        rows = [header]
        for stage in report.stages:
            cells = [
                f"{fmt.format(s.lsd_db)}/{fmt.format(s.segsnr_db)}" for s in stage.per_source
            ]
            rows.append([STAGE_TITLES.get(stage.name, stage.name)] + cells)

        width = max(len(row) for row in rows)
        rows = [row + [""] * (width - len(row)) for row in rows]
        widths = [max(len(row[i]) for row in rows) for i in range(width)]
        lines = [
            "  ".join(
                cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                for i, cell in enumerate(row)
            ).rstrip()
            for row in rows
        ]
        if title:
            lines.insert(0, title)
        return "\n".join(lines)

    def format_tables(self, reports: Sequence[MetricReport], titles: Sequence[str] = ()) -> str:
        """Tables for several reports, separated by blank lines."""
        heads: List[str] = list(titles) + [""] * (len(reports) - len(titles))
        return "\n\n".join(self.format_table(r, t) for r, t in zip(reports, heads))
