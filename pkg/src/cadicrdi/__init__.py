"""Two-variable discount functions F(t, T) for intertemporal choice.

The CADI/CRDI families, the hyperbolic and exponential baselines, axiom and
impatience checks, a logistic choice model with least-squares estimation,
and TIPI survey scoring.
"""

from .discount import (
    DEFAULT_EPSILON,
    FAMILIES,
    CadiCadi,
    CadiCrdi,
    CrdiCadi,
    CrdiCrdi,
    DiscountModel,
    Exponential,
    Hyperbolic,
    TimePoint,
    evaluate,
    evaluate_eta,
    make_model,
    model_from_dict,
    present_value,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_EPSILON",
    "FAMILIES",
    "CadiCadi",
    "CadiCrdi",
    "CrdiCadi",
    "CrdiCrdi",
    "DiscountModel",
    "Exponential",
    "Hyperbolic",
    "TimePoint",
    "evaluate",
    "evaluate_eta",
    "make_model",
    "model_from_dict",
    "present_value",
    "validate",
]
