"""Turn a sweep CSV into a two-panel figure.

The input is the CSV written by the sweep runner: one row per swept noise
value, mean capacity and mean power-splitting ratio for the uniform-source
case ("Case I") and the joint-design case ("Case II").  The top panel shows
the two capacity curves, the bottom panel the two split-ratio curves.

This tool only ever reads the file; the CSV column contract is re-declared
here and checked before anything is drawn.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

EXPECTED_COLUMNS = (
    "sweep_value_dbm",
    "mean_capacity_case1",
    "mean_capacity_case2",
    "mean_eps_case1",
    "mean_eps_case2",
    "trials_converged_case1",
    "trials_converged_case2",
)

NUMERIC_COLUMNS = EXPECTED_COLUMNS[:5]


class SchemaError(ValueError):
    """The CSV does not match the documented sweep schema."""


@dataclass
class FigureSpec:
    input_csv: str
    output_image: str
    title: str | None = None
    capacity_panel_title: str = "Mean capacity"
    eps_panel_title: str = "Mean power-splitting ratio"
    x_label: str = "swept noise variance (dBm)"
    capacity_label: str = "capacity (bits / channel use)"
    eps_label: str = "power-splitting ratio"
    dpi: int = 120
    figsize: tuple = (7.0, 7.5)


def read_sweep_csv(path: str) -> dict:
    """Load the documented columns; unknown columns are ignored with a warning.

    Raises SchemaError naming the first missing column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in EXPECTED_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r} "
                                  f"(found {header})")
        extra = [c for c in header if c not in EXPECTED_COLUMNS]
        if extra:
            print(f"warning: {path}: ignoring unexpected columns {extra}",
                  file=sys.stderr)
        data = {col: [] for col in EXPECTED_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            for col in NUMERIC_COLUMNS:
                try:
                    data[col].append(float(row[col]))
                except (TypeError, ValueError):
                    raise SchemaError(f"{path}, line {lineno}: column {col!r} "
                                      f"has non-numeric value {row[col]!r}") from None
            for col in EXPECTED_COLUMNS[5:]:
                try:
                    data[col].append(int(row[col]))
                except (TypeError, ValueError):
                    raise SchemaError(f"{path}, line {lineno}: column {col!r} "
                                      f"has non-integer value {row[col]!r}") from None
    if not data["sweep_value_dbm"]:
        raise SchemaError(f"{path}: no data rows")
    return data


def build_figure(spec: FigureSpec, data: dict):
    """Assemble the two stacked panels; returns the matplotlib figure."""
    fig, (ax_cap, ax_eps) = plt.subplots(2, 1, sharex=True, figsize=spec.figsize)
    x = data["sweep_value_dbm"]
    ax_cap.plot(x, data["mean_capacity_case1"], marker="o", label="Case I")
    ax_cap.plot(x, data["mean_capacity_case2"], marker="s", label="Case II")
    ax_cap.set_ylabel(spec.capacity_label)
    ax_cap.set_title(spec.capacity_panel_title)
    ax_cap.grid(True, alpha=0.4)
    ax_cap.legend()

    ax_eps.plot(x, data["mean_eps_case1"], marker="o", label="Case I")
    ax_eps.plot(x, data["mean_eps_case2"], marker="s", label="Case II")
    ax_eps.set_ylabel(spec.eps_label)
    ax_eps.set_xlabel(spec.x_label)
    ax_eps.set_title(spec.eps_panel_title)
    ax_eps.grid(True, alpha=0.4)
    ax_eps.legend()

    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Read the CSV and write the figure; returns the output path.

    Output bytes are deterministic for identical inputs and settings (the
    Agg PNG writer embeds no timestamps; SVG output has its date stripped).
    """
    data = read_sweep_csv(spec.input_csv)
    fig = build_figure(spec, data)
    try:
        metadata = {"Date": None} if spec.output_image.endswith(".svg") else None
        fig.savefig(spec.output_image, dpi=spec.dpi, metadata=metadata)
    finally:
        plt.close(fig)
    return spec.output_image


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render a sweep CSV as a two-panel figure")
    parser.add_argument("input_csv")
    parser.add_argument("output_image")
    parser.add_argument("--title", default=None)
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = FigureSpec(input_csv=ns.input_csv, output_image=ns.output_image,
                      title=ns.title)
    try:
        render(spec)
        return 0
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())
