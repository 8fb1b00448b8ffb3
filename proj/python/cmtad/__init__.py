"""Context-aware multivariate KPI anomaly detection."""

try:
    from ._cmtad import (
        ValidationError,
        calibrate,
        canonical_config,
        checkpoint_info,
        config_hash,
        evaluate,
        generate,
        random_baseline,
        score,
        train,
    )
except ImportError:  # dev tree: extension built next to the package, not inside it
    from _cmtad import (
        ValidationError,
        calibrate,
        canonical_config,
        checkpoint_info,
        config_hash,
        evaluate,
        generate,
        random_baseline,
        score,
        train,
    )

__all__ = [
    "ValidationError",
    "calibrate",
    "canonical_config",
    "checkpoint_info",
    "config_hash",
    "evaluate",
    "generate",
    "random_baseline",
    "score",
    "train",
]
