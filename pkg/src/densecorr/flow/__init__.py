"""Dense MRF alignment of feature grids and everything downstream of a flow."""

from densecorr.flow.bp import (
    EnergyBreakdown,
    FlowConfig,
    FlowField,
    bp_align,
    flow_energy,
    label_offsets,
    unary_costs,
)
from densecorr.flow.dt import dt1d_quadratic, dt2d_quadratic
from densecorr.flow.io import read_flow, write_flow
from densecorr.flow.warp import (
    aggregate_median,
    flow_at,
    pixel_flow,
    rank_by_deformation,
    sample_bicubic,
    transfer_keypoints,
    warp_image,
)

__all__ = [
    "EnergyBreakdown",
    "FlowConfig",
    "FlowField",
    "aggregate_median",
    "bp_align",
    "dt1d_quadratic",
    "dt2d_quadratic",
    "flow_at",
    "flow_energy",
    "label_offsets",
    "pixel_flow",
    "rank_by_deformation",
    "read_flow",
    "sample_bicubic",
    "transfer_keypoints",
    "unary_costs",
    "warp_image",
    "write_flow",
]
