"""Query-group ensemble detection: clustering, aggregation and metrics.

Thin layer over the compiled ``_qens`` module. Functions that exchange whole
files take and return the same dicts the CLI reads and writes as JSON.
"""

import json

from ._qens import (
    Box,
    CapacityError,
    ClusterError,
    ConfigurationError,
    CovarianceError,
    DataError,
    Detection,
    DimensionError,
    ParameterizationError,
    QensError,
    ReferenceError,
    ValidationError,
    aggregate,
    bivariate_normal_cdf,
    bsas_cluster,
    convert,
    decode_groups,
    final_confidence,
    group_mask,
    hungarian_assign,
    iou,
    softmax_weights,
)
from . import _qens

__all__ = [
    "Box", "Detection", "iou", "convert", "bsas_cluster", "final_confidence", "aggregate",
    "softmax_weights", "hungarian_assign", "bivariate_normal_cdf", "group_mask", "decode_groups",
    "synth", "pipeline", "evaluate", "decode",
    "QensError", "ParameterizationError", "DimensionError", "CovarianceError", "ConfigurationError",
    "ClusterError", "CapacityError", "DataError", "ReferenceError", "ValidationError",
]


def synth(seed=0, images=1, groups=5, box_sigma=0.05, miss_prob=0.1, fp_rate=0.5,
          conf_base=0.8, conf_jitter=0.1):
    """Synthetic scenes and a simulated ensemble. Returns (gt, ensemble) dicts."""
    out = json.loads(_qens._synth(seed, images, groups, box_sigma, miss_prob, fp_rate,
                                  conf_base, conf_jitter))
    return out["gt"], out["ensemble"]


def pipeline(ensemble, theta=0.7, strategy="max_conf_scaled", conf_threshold=0.3):
    """Cluster and aggregate an ensemble dict into a detections dict."""
    return json.loads(_qens._pipeline(json.dumps(ensemble), theta, strategy, conf_threshold))


def evaluate(detections, gt, conf_threshold=0.3, bins=10, match_iou=0.5, epsilon=1.0):
    """mAP, D-ECE and PDQ report for a detections dict against COCO ground truth."""
    return json.loads(_qens._evaluate(json.dumps(detections), json.dumps(gt), conf_threshold,
                                      bins, match_iou, epsilon))


def decode(mode="group_ensemble", layout="batched_groups", groups=5, queries=100, embed_dim=64,
           heads=4, layers=2, num_classes=8, features=64, dropout=0.1, seed=0):
    """One decoder pass over random weights and features; returns an ensemble dict."""
    return json.loads(_qens._decode(mode, layout, groups, queries, embed_dim, heads, layers,
                                    num_classes, features, dropout, seed))
