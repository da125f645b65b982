# Copyright Contributors to the pe3d Project
# SPDX-License-Identifier: Apache-2.0
"""Positional encodings for multi-camera 3D detection, with a toy detector."""

from ._pe3d import (
    CameraParams,
    Error,
    Mlp,
    PerceptionRegion,
    back_project,
    bracket,
    default_rig,
    discrepancy,
    encode_point,
    gradcheck,
    load_rig,
    make_bins,
    normalize_point,
    pe_camera_ray,
    pe_lidar_ray,
    pe_oracle_point,
    project,
    render_depth,
    run_cli,
    sine_encode,
    train_toy,
)

__all__ = [
    "CameraParams",
    "Error",
    "Mlp",
    "PerceptionRegion",
    "back_project",
    "bracket",
    "default_rig",
    "discrepancy",
    "encode_point",
    "gradcheck",
    "load_rig",
    "make_bins",
    "normalize_point",
    "pe_camera_ray",
    "pe_lidar_ray",
    "pe_oracle_point",
    "project",
    "render_depth",
    "run_cli",
    "sine_encode",
    "train_toy",
]
