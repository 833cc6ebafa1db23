"""Figure rendering for pathlaw experiment outputs.

Consumes only the public file interface of the simulation package:
per-experiment directories holding ``manifest.json`` plus result CSVs.
"""

__version__ = "0.1.0"

from .render import RenderError, SchemaError, render_report

__all__ = ["RenderError", "SchemaError", "render_report", "__version__"]
