"""
Export module for LeakFilter.

Provides writers for:
- WAV (16-bit PCM or 32-bit float)
- Metric reports (JSON and text table)
"""

from multisource_separator.export.wav_exporter import WavExporter, WavExportOptions
from multisource_separator.export.report_exporter import ReportExporter

__all__ = ["WavExporter", "WavExportOptions", "ReportExporter"]
