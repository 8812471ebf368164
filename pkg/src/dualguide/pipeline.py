"""End-to-end fusion: refine, extract instances, match, enhance, fuse."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .enhance import (
    Projection,
    enhance_camera_grid,
    enhance_lidar_grid,
    fuse_grids,
)
from .formats import load_projection
from .grid import BevGrid, ContextWeights, global_context_refine
from .instances import SAMPLES_PER_STRATEGY, InstanceFeature, Proposal, build_instances
from .losses import pair_cosine_loss
from .matching import MatchConfig, PairSets, match_pairs


@dataclass
class FusionProjections:
    """The three affine maps the enhancement stages and cosine loss use."""

    lidar_squeeze: Projection   # lidar instance features -> camera channels
    camera_squeeze: Projection  # camera instance features -> camera channels
    excitation: Projection      # camera instance features -> lidar channels


@dataclass
class FusionResult:
    refined_camera: BevGrid
    enhanced_camera: BevGrid
    enhanced_lidar: BevGrid
    fused: BevGrid
    pairs: PairSets
    lidar_instances: list[InstanceFeature]
    camera_instances: list[InstanceFeature]
    cosine: float | None


def build_projections(config: PipelineConfig) -> FusionProjections:
    """Load projection weights from configured paths or seed them."""
    k = SAMPLES_PER_STRATEGY[config.sampling_strategy]
    c_cam, c_lid = config.camera_channels, config.lidar_channels

    def load_or_seed(path: str | None, source: int, target: int, seed: int) -> Projection:
        if path:
            return load_projection(Path(path))
        return Projection.seeded(source, target, seed)

    return FusionProjections(
        lidar_squeeze=load_or_seed(
            config.lidar_squeeze_path, k * c_lid, c_cam, config.projection_seed
        ),
        camera_squeeze=load_or_seed(
            config.camera_squeeze_path, k * c_cam, c_cam, config.projection_seed + 1
        ),
        excitation=load_or_seed(
            config.excitation_path, k * c_cam, c_lid, config.projection_seed + 2
        ),
    )


def build_context_weights(config: PipelineConfig) -> ContextWeights:
    """Seeded uniform(-s, s) context weights with s = 1/sqrt(channels)."""
    rng = np.random.default_rng(config.context_weights_seed)
    c = config.camera_channels
    s = 1.0 / np.sqrt(c)
    return ContextWeights(
        value_proj=rng.uniform(-s, s, size=(c, c)),
        key_proj=rng.uniform(-s, s, size=c),
    )


def run_fusion(
    camera_grid: BevGrid,
    lidar_grid: BevGrid,
    camera_proposals: list[Proposal],
    lidar_proposals: list[Proposal],
    config: PipelineConfig = PipelineConfig(),
    enhance: bool = True,
    threads: int = 1,
) -> FusionResult:
    """Run the full fusion pipeline on in-memory inputs.

    Camera instances are extracted from the context-refined camera grid, the
    LiDAR side from its raw grid. With enhance=False the input grids are
    fused directly (the no-enhancement baseline); matching still runs so the
    pair sets and cosine value stay reportable.
    """
    projections = build_projections(config)
    context = build_context_weights(config)
    refined_camera = global_context_refine(camera_grid, context)

    camera_instances = build_instances(
        refined_camera, camera_proposals, config.gamma, config.sampling_strategy, threads
    )
    lidar_instances = build_instances(
        lidar_grid, lidar_proposals, config.gamma, config.sampling_strategy, threads
    )
    pairs = match_pairs(
        lidar_instances,
        camera_instances,
        MatchConfig(config.eta, config.grouping_strategy),
    )
    cosine = pair_cosine_loss(
        pairs.easy, projections.lidar_squeeze, projections.camera_squeeze
    )

    if enhance:
        enhance_source = camera_grid if config.camera_enhance_input == "original" else refined_camera
        enhanced_camera = enhance_camera_grid(
            enhance_source, pairs.easy, pairs.camera_hard, projections.lidar_squeeze
        )
        enhanced_lidar = enhance_lidar_grid(
            lidar_grid, pairs.lidar_hard, projections.excitation
        )
    else:
        enhanced_camera = camera_grid.copy()
        enhanced_lidar = lidar_grid.copy()
    fused = fuse_grids(enhanced_camera, enhanced_lidar)
    return FusionResult(
        refined_camera=refined_camera,
        enhanced_camera=enhanced_camera,
        enhanced_lidar=enhanced_lidar,
        fused=fused,
        pairs=pairs,
        lidar_instances=lidar_instances,
        camera_instances=camera_instances,
        cosine=cosine,
    )
