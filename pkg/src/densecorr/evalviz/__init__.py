"""Evaluation metrics and feature visualizations."""

from densecorr.evalviz.pck import (
    PckReport,
    ResponseHistogram,
    format_pck_table,
    offset_lattice,
    pck,
    response_histogram,
)
from densecorr.evalviz.viz import (
    PatchDatabase,
    contrast_stretch,
    covered_cells,
    patch_reconstruction,
    rf_average,
    uniform_offsets,
    uniform_rf_baseline,
)

__all__ = [
    "PatchDatabase",
    "PckReport",
    "ResponseHistogram",
    "contrast_stretch",
    "covered_cells",
    "format_pck_table",
    "offset_lattice",
    "patch_reconstruction",
    "pck",
    "response_histogram",
    "rf_average",
    "uniform_offsets",
    "uniform_rf_baseline",
]
