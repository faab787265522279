"""Zero-shot video restoration with a trajectory-aware diffusion transformer.

The package splits into small layers: ``numerics`` (grids, warping, PSNR-style
helpers), ``flow`` (block-matching estimation, .flo files, trajectory
construction), ``stnc`` (the spatiotemporal neighbor cache), ``dit`` (the toy
transformer with trajectory cross-attention), ``sampler`` (wavelet-domain DDIM
with data fidelity and flow-guided alignment), ``metrics`` (frame and temporal
scores plus CSV reports), ``synthetic`` (clips with closed-form flow), and
``harness`` (benchmark runs, ablation grid, layer analysis). ``cli`` wires it
all to argparse.
"""

from .dit import (
    DenoiseContext,
    DiTConfig,
    TrajectoryDiT,
    load_weights,
    read_config,
    recommend_vital_layers,
    save_weights,
    vital_layer_analysis,
    write_config,
)
from .flow import (
    FlowField,
    TrajectorySet,
    build_trajectories,
    downsample_flow,
    estimate_flow_block_matching,
    forward_map,
    occlusion_mask,
    read_flo,
    sample_flow,
    uniform_flow,
    write_flo,
)
from .frame_io import read_frame, read_ppm, write_png, write_ppm
from .harness import (
    ABLATION_METHODS,
    RunConfig,
    restore_with_toggles,
    run_ablation_grid,
    run_benchmark,
    run_single,
    run_vital_analysis,
)
from .metrics import (
    REPORT_COLUMNS,
    MetricReport,
    fsim_temporal,
    psnr,
    read_report_csv,
    ssim,
    warping_error,
    write_report_csv,
)
from .numerics import (
    Frame,
    add_gaussian_noise,
    avg_pool_downsample,
    bilinear_warp,
    clamp01,
    frame_like,
    pseudo_inverse_upsample,
)
from .sampler import (
    DegradationOperator,
    DiffusionSchedule,
    WaveletBands,
    align_ll_bands,
    correct_ll_bands,
    ddim_step,
    dwt_haar,
    flow_guided_residual_alignment,
    forward_noising,
    idwt_haar,
    low_freq_data_fidelity,
    make_operator,
    make_schedule,
    restore_video,
    uniform_stride_steps,
    warp_blend_video,
)
from .stnc import (
    BlockGrid,
    KVCache,
    partition_blocks,
    spatial_neighbors,
    temporal_neighbor,
    temporal_neighbor_map,
    temporal_neighbors_topk,
    write_occupancy_csv,
)
from .synthetic import MOTIONS, PATTERNS, SyntheticSpec, degrade, gen_synthetic, gt_flow_fields

__version__ = "0.1.0"

__all__ = [
    "ABLATION_METHODS",
    "BlockGrid",
    "DegradationOperator",
    "DenoiseContext",
    "DiTConfig",
    "DiffusionSchedule",
    "FlowField",
    "Frame",
    "KVCache",
    "MOTIONS",
    "MetricReport",
    "PATTERNS",
    "REPORT_COLUMNS",
    "RunConfig",
    "SyntheticSpec",
    "TrajectoryDiT",
    "TrajectorySet",
    "WaveletBands",
    "__version__",
    "add_gaussian_noise",
    "align_ll_bands",
    "avg_pool_downsample",
    "bilinear_warp",
    "build_trajectories",
    "clamp01",
    "correct_ll_bands",
    "ddim_step",
    "degrade",
    "downsample_flow",
    "dwt_haar",
    "estimate_flow_block_matching",
    "flow_guided_residual_alignment",
    "forward_map",
    "forward_noising",
    "frame_like",
    "fsim_temporal",
    "gen_synthetic",
    "gt_flow_fields",
    "idwt_haar",
    "load_weights",
    "low_freq_data_fidelity",
    "make_operator",
    "make_schedule",
    "occlusion_mask",
    "partition_blocks",
    "pseudo_inverse_upsample",
    "psnr",
    "read_config",
    "read_flo",
    "read_frame",
    "read_ppm",
    "read_report_csv",
    "recommend_vital_layers",
    "restore_video",
    "restore_with_toggles",
    "run_ablation_grid",
    "run_benchmark",
    "run_single",
    "run_vital_analysis",
    "sample_flow",
    "save_weights",
    "spatial_neighbors",
    "ssim",
    "temporal_neighbor",
    "temporal_neighbor_map",
    "temporal_neighbors_topk",
    "uniform_flow",
    "uniform_stride_steps",
    "vital_layer_analysis",
    "warp_blend_video",
    "warping_error",
    "write_config",
    "write_flo",
    "write_occupancy_csv",
    "write_png",
    "write_ppm",
]
