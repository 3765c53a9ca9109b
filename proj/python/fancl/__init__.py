"""Python interface to the fancl unsupervised re-identification pipeline.

The heavy lifting lives in the compiled extension; this package re-exports
the operations scripts actually reach for: tensor file io, feature-aware
pepper noise, density clustering, retrieval metrics and the CLI entry point.
"""

from ._core import (
    activation_map,
    apply_pepper_noise,
    average_precision,
    dbscan,
    evaluate_retrieval,
    fana,
    l2_normalize_rows,
    load_tensor,
    noise_mask,
    pairwise_cosine_distance,
    run_cli,
    save_tensor,
)

__all__ = [
    "activation_map",
    "apply_pepper_noise",
    "average_precision",
    "dbscan",
    "evaluate_retrieval",
    "fana",
    "l2_normalize_rows",
    "load_tensor",
    "noise_mask",
    "pairwise_cosine_distance",
    "run_cli",
    "save_tensor",
]
