# Copyright (c) 2026 The YOGO-cpp Authors
# SPDX-License-Identifier: Apache-2.0
"""Point-cloud relation inference networks (C++ core)."""

from ._core import (
    Model,
    ParseError,
    ball_query_group,
    cloud_iou,
    evaluate,
    farthest_point_sampling,
    generate_synthetic,
    knn_group,
    normalize,
    random_sampling,
    train,
    write_synthetic_dataset,
)

__all__ = [
    "Model",
    "ParseError",
    "ball_query_group",
    "cloud_iou",
    "evaluate",
    "farthest_point_sampling",
    "generate_synthetic",
    "knn_group",
    "normalize",
    "random_sampling",
    "train",
    "write_synthetic_dataset",
]
