"""Figure rendering for relay capacity sweep CSVs."""

from .render import (EXPECTED_COLUMNS, FigureSpec, SchemaError, build_figure,
                     main, read_sweep_csv, render)

__all__ = ["EXPECTED_COLUMNS", "FigureSpec", "SchemaError", "build_figure",
           "main", "read_sweep_csv", "render"]
