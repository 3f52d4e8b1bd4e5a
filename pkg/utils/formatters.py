"""
Formatting utilities for the TDC toolkit.
Demonstrates: Formatting patterns, String manipulation, Data presentation
"""

from numbers import Real
from typing import Any, Dict, List, Sequence


def format_number(value: Any, digits: int = 3) -> str:
    """Format numbers compactly; everything else goes through str()"""
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Real):
        magnitude = abs(float(value))
        if magnitude != 0 and (magnitude >= 1e7 or magnitude < 10 ** -digits):
            return f"{float(value):.{digits}e}"
        return f"{float(value):.{digits}f}"
    return str(value)


class TableFormatter:
    """
    Utility class for formatting rows into fixed-width text tables.
    Demonstrates: Formatting patterns, String manipulation
    """

    @staticmethod
    def format_table(headers: List[str], rows: Sequence[Sequence[Any]],
                     title: str = "", max_width: int = 110, digits: int = 3) -> str:
        """Format data into a table; numeric cells are right-aligned"""
        if not headers or not rows:
            return "No data to display"

        cells = [[format_number(cell, digits) for cell in row] for row in rows]
        numeric = [all(isinstance(row[i], Real) for row in rows if i < len(row))
                   for i in range(len(headers))]

        col_widths = [len(header) for header in headers]
        for row in cells:
            for i, cell in enumerate(row):
                if i < len(col_widths):
                    col_widths[i] = max(col_widths[i], len(cell))

        total_width = sum(col_widths) + len(headers) * 3 - 1
        if total_width > max_width:
            reduction = (total_width - max_width) / len(col_widths)
            col_widths = [max(8, int(width - reduction)) for width in col_widths]

        def render(row: Sequence[str]) -> str:
            parts = []
            for i, cell in enumerate(row):
                width = col_widths[i]
                if len(cell) > width:
                    cell = cell[:width - 3] + "..."
                parts.append(cell.rjust(width) if numeric[i] else cell.ljust(width))
            return " | ".join(parts)

        lines = []
        if title:
            lines.append(f"\n{title}")
            lines.append("=" * len(title))

        lines.append(render(headers))
        lines.append("-+-".join("-" * width for width in col_widths))
        for row in cells:
            lines.append(render(row))

        return "\n".join(lines)


class ReportFormatter:
    """Console summaries for analysis and experiment reports (dictionary based)"""

    @staticmethod
    def format_key_values(data: Dict[str, Any], title: str = "") -> str:
        """Two-column table of scalar entries; nested values are skipped"""
        rows = [[key, value] for key, value in sorted(data.items())
                if not isinstance(value, (list, dict, tuple))]
        return TableFormatter.format_table(["Field", "Value"], rows, title)

    @staticmethod
    def format_linearity(report: Dict[str, Any]) -> str:
        """Summary of a linearity (DNL/tDNL) report"""
        dnl_min, dnl_max = report["dnl_range"]
        rows = [
            ["bins (N_c)", len(report["dnl"])],
            ["DNL min", dnl_min],
            ["DNL max", dnl_max],
            ["bins with DNL > 1", report["bins_above_one"]],
            ["tDNL min", min(report["tdnl"])],
            ["tDNL max", max(report["tdnl"])],
        ]
        return TableFormatter.format_table(["Metric", "Value"], rows, "Linearity")

    @staticmethod
    def format_sweep(rows: List[Dict[str, Any]]) -> str:
        """Temperature sweep rows grouped as a single table"""
        headers = ["T [C]", "strategy", "FWHM [ps]", "<dt>_trunc [ps]", "N_c"]
        table_rows = [[row["temperature"], row["strategy"], row["fwhm_ps"],
                       row["mean_truncated_delay_ps"], row["n_c"]] for row in rows]
        return TableFormatter.format_table(headers, table_rows, "Temperature sweep")

    @staticmethod
    def format_strategy_summary(summary: Dict[str, Dict[str, float]]) -> str:
        """Per-strategy mean and spread of FWHM over temperature"""
        rows = [[name, stats["mean_fwhm_ps"], stats["std_fwhm_ps"],
                 stats["min_fwhm_ps"], stats["max_fwhm_ps"]]
                for name, stats in summary.items()]
        headers = ["strategy", "mean FWHM", "std FWHM", "min", "max"]
        return TableFormatter.format_table(headers, rows, "Strategy summary [ps]")
