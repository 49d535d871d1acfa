"""Two-variable discount functions F(t, T).

``t`` is the delay until the sooner outcome and ``T`` the extra interval
until the later one, both in days. Four CADI/CRDI families plus the
Loewenstein-Prelec hyperbola and Samuelson's exponential are provided.

Every family is evaluated in log space first; ``F = exp(log F)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np

from .errors import (
    InvalidParamsError,
    InvalidTimePointError,
    NonFiniteError,
    OrderViolationError,
)

DEFAULT_EPSILON = 1e-3
# below this |gamma| the gamma = 0 closed form is used
GAMMA_ZERO = 1e-12

FAMILIES = (
    "cadi-cadi",
    "crdi-crdi",
    "cadi-crdi",
    "crdi-cadi",
    "hyperbolic",
    "exponential",
)

PARAM_NAMES = {
    "cadi-cadi": ("r", "delta", "gamma"),
    "crdi-crdi": ("r", "alpha", "beta"),
    "cadi-crdi": ("r", "delta", "beta"),
    "crdi-cadi": ("r", "alpha", "gamma"),
    "hyperbolic": ("alpha", "beta"),
    "exponential": ("beta",),
}

# families whose delay factor is t**alpha and therefore need t > 0
CRDI_IN_T = frozenset({"crdi-crdi", "crdi-cadi"})


def _cadi_interval(gamma, T):
    """(1 - exp(-gamma T)) / gamma, with the gamma = 0 limit T."""
    small = np.abs(gamma) < GAMMA_ZERO
    safe = np.where(small, 1.0, gamma)
    return np.where(small, T, -np.expm1(-safe * T) / safe)


def _crdi_interval(beta, T):
    return T ** (beta + 1.0) / (beta + 1.0)


def _crdi_delay(alpha, t, epsilon):
    return np.where(t == 0, epsilon, t) ** alpha


def _hyperbolic_log(alpha, beta, t, T):
    small = alpha == 0
    safe = np.where(small, 1.0, alpha)
    ratio = (np.log1p(safe * t) - np.log1p(safe * (t + T))) * (beta / safe)
    return np.where(small, -beta * T, ratio)


def log_discount_raw(family: str, params: dict, t, T, epsilon: float = DEFAULT_EPSILON):
    """ln F(t, T) with no validation, broadcasting over params, t and T.

    Used by the fitting code, which needs to evaluate theory-violating and
    per-record parameter arrays without raising.
    """
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    p = {k: np.asarray(v, dtype=float) for k, v in params.items()}
    with np.errstate(all="ignore"):
        if family == "cadi-cadi":
            out = -p["r"] * np.exp(-p["delta"] * t) * _cadi_interval(p["gamma"], T)
        elif family == "crdi-crdi":
            out = -p["r"] * _crdi_delay(p["alpha"], t, epsilon) * _crdi_interval(p["beta"], T)
        elif family == "cadi-crdi":
            out = -p["r"] * np.exp(-p["delta"] * t) * _crdi_interval(p["beta"], T)
        elif family == "crdi-cadi":
            out = -p["r"] * _crdi_delay(p["alpha"], t, epsilon) * _cadi_interval(p["gamma"], T)
        elif family == "hyperbolic":
            out = _hyperbolic_log(p["alpha"], p["beta"], t, T)
        elif family == "exponential":
            out = -p["beta"] * T + 0.0 * t
        else:
            raise InvalidParamsError(f"unknown family {family!r}")
        # Axiom 6 holds exactly, whatever the parameters
        return np.where(T == 0, 0.0, out)


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def status(self) -> str:
        return "Valid" if self.valid else "TheoryViolating"

    def __str__(self) -> str:
        if self.valid:
            return "Valid"
        return f"TheoryViolating({', '.join(self.violations)})"


@dataclass(frozen=True)
class DiscountModel:
    """Base class for the six families. Instances are immutable."""

    family: ClassVar[str] = ""

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.family]

    @property
    def crdi_in_t(self) -> bool:
        return self.family in CRDI_IN_T

    def params(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    def log_discount(self, t, T, epsilon: float = DEFAULT_EPSILON):
        return log_discount_raw(self.family, self.params(), t, T, epsilon)

    def __call__(self, t, T, epsilon: float = DEFAULT_EPSILON):
        return evaluate(self, t, T, epsilon)

    @property
    def validity(self) -> ValidityReport:
        return validate(self)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params()}

    def replace(self, **changes) -> "DiscountModel":
        values = asdict(self)
        values.update(changes)
        return type(self)(**values)


@dataclass(frozen=True)
class CadiCadi(DiscountModel):
    r: float
    delta: float
    gamma: float
    family: ClassVar[str] = "cadi-cadi"


@dataclass(frozen=True)
class CrdiCrdi(DiscountModel):
    r: float
    alpha: float
    beta: float
    family: ClassVar[str] = "crdi-crdi"


@dataclass(frozen=True)
class CadiCrdi(DiscountModel):
    r: float
    delta: float
    beta: float
    family: ClassVar[str] = "cadi-crdi"


@dataclass(frozen=True)
class CrdiCadi(DiscountModel):
    r: float
    alpha: float
    gamma: float
    family: ClassVar[str] = "crdi-cadi"


@dataclass(frozen=True)
class Hyperbolic(DiscountModel):
    """Loewenstein-Prelec: F = [(1 + a t) / (1 + a (t + T))] ** (b / a)."""

    alpha: float
    beta: float
    family: ClassVar[str] = "hyperbolic"


@dataclass(frozen=True)
class Exponential(DiscountModel):
    """Samuelson: F = exp(-b T), independent of the delay."""

    beta: float
    family: ClassVar[str] = "exponential"


MODEL_CLASSES: dict[str, type[DiscountModel]] = {
    cls.family: cls for cls in (CadiCadi, CrdiCrdi, CadiCrdi, CrdiCadi, Hyperbolic, Exponential)
}


def normalize_family(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    if key in MODEL_CLASSES:
        return key
    compact = key.replace("-", "")
    for family in FAMILIES:
        if family.replace("-", "") == compact:
            return family
    if compact in ("loewensteinprelec", "hyperbola"):
        return "hyperbolic"
    if compact == "samuelson":
        return "exponential"
    raise InvalidParamsError(f"unknown family {name!r}; expected one of {', '.join(FAMILIES)}")


def make_model(family: str, **params: float) -> DiscountModel:
    family = normalize_family(family)
    expected = set(PARAM_NAMES[family])
    if set(params) != expected:
        raise InvalidParamsError(
            f"{family} takes parameters {sorted(expected)}, got {sorted(params)}"
        )
    return MODEL_CLASSES[family](**{k: float(v) for k, v in params.items()})


def model_from_dict(data: dict) -> DiscountModel:
    """Inverse of ``DiscountModel.to_dict``."""
    try:
        return make_model(data["family"], **data["params"])
    except (KeyError, TypeError) as exc:
        raise InvalidParamsError(f"malformed model object: {exc}") from exc


@dataclass(frozen=True)
class TimePoint:
    t: float
    T: float

    def __post_init__(self):
        _check_times(self.t, self.T)


def _check_times(t, T):
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(T))):
        raise InvalidTimePointError("t and T must be finite")
    if np.any(t < 0) or np.any(T < 0):
        raise InvalidTimePointError("t and T must be non-negative")
    return t, T


def validate(model: DiscountModel) -> ValidityReport:
    """List every sign/domain constraint the parameters break.

    Never raises: fitted models are allowed to leave the theory region.
    """
    p = model.params()
    checks = {
        "r": ("r > 0", lambda v: v > 0),
        "delta": ("delta > 0", lambda v: v > 0),
        "alpha": ("alpha < 0", lambda v: v < 0),
        "beta": ("beta > -1", lambda v: v > -1),
    }
    if model.family == "hyperbolic":
        checks["alpha"] = ("alpha > 0", lambda v: v > 0)
        checks["beta"] = ("beta > 0", lambda v: v > 0)
    elif model.family == "exponential":
        checks["beta"] = ("beta > 0", lambda v: v > 0)
    violations = []
    for name, value in p.items():
        if not math.isfinite(value):
            violations.append(f"{name} finite")
            continue
        if name in checks:
            label, ok = checks[name]
            if not ok(value):
                violations.append(label)
    return ValidityReport(tuple(violations))


def effective_delay(model: DiscountModel, t: float, epsilon: float = DEFAULT_EPSILON) -> float:
    """Delay actually used by ``evaluate`` (t = 0 becomes epsilon for CRDI-in-t)."""
    if model.crdi_in_t and t == 0:
        return epsilon
    return t


def evaluate(model: DiscountModel, t, T, epsilon: float = DEFAULT_EPSILON):
    """Discount factor F(t, T); scalars in, float out, arrays broadcast."""
    if not epsilon > 0:
        raise InvalidParamsError("epsilon must be positive")
    t_arr, T_arr = _check_times(t, T)
    if "beta" in model.param_names and model.family in ("crdi-crdi", "cadi-crdi"):
        if model.beta == -1:
            raise InvalidParamsError("beta = -1 is excluded")
    log_f = model.log_discount(t_arr, T_arr, epsilon)
    if not np.all(np.isfinite(log_f)):
        raise NonFiniteError(f"non-finite exponent for {model} at t={t}, T={T}")
    out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def evaluate_eta(model: DiscountModel, t1, t2, epsilon: float = DEFAULT_EPSILON):
    """eta(t2, t1) = F(t1, t2 - t1) for t1 <= t2."""
    if np.any(np.asarray(t2) < np.asarray(t1)):
        raise OrderViolationError(f"need t2 >= t1, got t1={t1}, t2={t2}")
    return evaluate(model, t1, np.asarray(t2, dtype=float) - np.asarray(t1, dtype=float), epsilon)


def present_value(model: DiscountModel, y, t, T, epsilon: float = DEFAULT_EPSILON):
    if np.any(np.asarray(y) < 0):
        raise ValueError("amount must be non-negative")
    return y * evaluate(model, t, T, epsilon)
