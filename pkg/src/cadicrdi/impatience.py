"""Prelec impatience measures, closed form and by finite differences.

Absolute measures: lambda1 = -d2/d1 of ln F in t, lambda2 the same in T.
Relative measures multiply by the coordinate: mu1 = t * lambda1,
mu2 = T * lambda2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .discount import DEFAULT_EPSILON, DiscountModel, TimePoint
from .errors import DegenerateDerivativeError, EmptyGridError

MEASURES = ("lambda1", "lambda2", "mu1", "mu2")
LAMBDA_TOL = 1e-5
MU_TOL = 1e-4
DEGENERATE_SLOPE = 1e-12
RELATIVE_STEP = 1e-2

# which measures the constancy theorems declare constant, per family
DECLARED_CONSTANT = {
    "cadi-cadi": ("lambda1", "lambda2"),
    "crdi-crdi": ("mu1", "mu2"),
    "cadi-crdi": ("lambda1", "mu2"),
    "crdi-cadi": ("mu1", "lambda2"),
    "hyperbolic": (),
    "exponential": ("lambda2", "mu2"),
}


@dataclass(frozen=True)
class PrelecMeasures:
    """One value per measure; ``None`` means not constant or not defined."""

    lambda1: float | None = None
    lambda2: float | None = None
    mu1: float | None = None
    mu2: float | None = None
    theory_violating: bool = False

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in MEASURES}


@dataclass(frozen=True)
class FdScheme:
    """Central-difference stencil. ``h=None`` picks max(1e-3, 1e-2 * coordinate).

    The relative step keeps the second difference of ln F well above
    round-off where ln F is nearly flat (e.g. exp(-gamma T) ~ 1e-9).
    """

    h: float | None = None
    richardson: bool = True

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ValueError("step h must be positive")

    def step(self, coord):
        if self.h is not None:
            return np.full_like(np.asarray(coord, dtype=float), self.h)
        return np.maximum(1e-3, RELATIVE_STEP * np.abs(np.asarray(coord, dtype=float)))


def analytic_measures(model: DiscountModel) -> PrelecMeasures:
    p = model.params()
    fam = model.family
    violating = not model.validity.valid
    if fam == "cadi-cadi":
        return PrelecMeasures(lambda1=p["delta"], lambda2=p["gamma"], theory_violating=violating)
    if fam == "crdi-crdi":
        return PrelecMeasures(mu1=1 - p["alpha"], mu2=-p["beta"], theory_violating=violating)
    if fam == "cadi-crdi":
        return PrelecMeasures(lambda1=p["delta"], mu2=-p["beta"], theory_violating=violating)
    if fam == "crdi-cadi":
        return PrelecMeasures(mu1=1 - p["alpha"], lambda2=p["gamma"], theory_violating=violating)
    if fam == "exponential":
        return PrelecMeasures(lambda2=0.0, mu2=0.0, theory_violating=violating)
    return PrelecMeasures(theory_violating=violating)


def analytic_measures_at(model: DiscountModel, t, T) -> dict[str, np.ndarray]:
    """Pointwise closed-form measures; NaN where a measure is undefined."""
    t = np.asarray(t, dtype=float)
    T = np.asarray(T, dtype=float)
    t, T = np.broadcast_arrays(t, T)
    p = model.params()
    fam = model.family
    nan = np.full(t.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam in ("cadi-cadi", "cadi-crdi"):
            lam1 = np.full(t.shape, p["delta"])
        elif fam in ("crdi-crdi", "crdi-cadi"):
            lam1 = (1 - p["alpha"]) / t
        elif fam == "hyperbolic":
            a = p["alpha"]
            lam1 = a * (1 / (1 + a * t) + 1 / (1 + a * (t + T)))
        else:
            lam1 = nan
        if fam in ("cadi-cadi", "crdi-cadi"):
            lam2 = np.full(t.shape, p["gamma"])
        elif fam in ("crdi-crdi", "cadi-crdi"):
            lam2 = -p["beta"] / T
        elif fam == "hyperbolic":
            lam2 = p["alpha"] / (1 + p["alpha"] * (t + T))
        else:
            lam2 = np.zeros(t.shape)
        return {"lambda1": lam1, "lambda2": lam2, "mu1": t * lam1, "mu2": T * lam2}


def _derivatives(logf, t, T, axis, h):
    if axis == "t":
        up, mid, down = logf(t + h, T), logf(t, T), logf(t - h, T)
    else:
        up, mid, down = logf(t, T + h), logf(t, T), logf(t, T - h)
    d1 = (up - down) / (2 * h)
    d2 = (up - 2 * mid + down) / (h * h)
    return d1, d2


def _axis_measures(logf, t, T, axis, scheme: FdScheme):
    coord = t if axis == "t" else T
    h = scheme.step(coord)
    d1, d2 = _derivatives(logf, t, T, axis, h)
    if scheme.richardson:
        d1_half, d2_half = _derivatives(logf, t, T, axis, h / 2)
        d1 = d1_half + (d1_half - d1) / 3
        d2 = d2_half + (d2_half - d2) / 3
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = -d2 / d1
    return lam, coord * lam, d1


def numeric_measures(
    F: Callable,
    at: TimePoint,
    scheme: FdScheme = FdScheme(),
    *,
    log_values: bool = False,
    axes: Sequence[str] = ("t", "T"),
) -> PrelecMeasures:
    """Finite-difference Prelec measures of a black-box surface at one point.

    ``F(t, T)`` must return the discount factor (or ln F with
    ``log_values=True``). Raises ``DegenerateDerivativeError`` when the first
    derivative of ln F vanishes at the stencil centre.
    """
    logf = F if log_values else (lambda t, T: np.log(F(t, T)))
    t = np.asarray(at.t, dtype=float)
    T = np.asarray(at.T, dtype=float)
    out = {}
    for axis in axes:
        lam, mu, d1 = _axis_measures(logf, t, T, axis, scheme)
        if abs(float(d1)) < DEGENERATE_SLOPE:
            raise DegenerateDerivativeError(
                f"d ln F / d{axis} = {float(d1):.3g} at (t={at.t}, T={at.T})"
            )
        suffix = "1" if axis == "t" else "2"
        out["lambda" + suffix] = float(lam)
        out["mu" + suffix] = float(mu)
    return PrelecMeasures(**out)


def interior_grid(n: int = 10, lo: float = 5.0, hi: float = 365.0) -> list[TimePoint]:
    coords = np.linspace(lo, hi, n)
    return [TimePoint(float(t), float(T)) for t in coords for T in coords]


@dataclass
class MeasureScan:
    analytic: float | None
    numeric_min: float
    numeric_max: float
    max_abs_dev: float
    constant: bool
    declared_constant: bool
    relative_spread: float
    failed_points: int = 0

    def as_json(self) -> dict:
        return {
            "analytic": self.analytic,
            "numericMin": self.numeric_min,
            "numericMax": self.numeric_max,
            "maxAbsDev": self.max_abs_dev,
            "constant": self.constant,
            "declaredConstant": self.declared_constant,
            "relativeSpread": self.relative_spread,
            "failedPoints": self.failed_points,
        }


@dataclass
class ConstancyReport:
    family: str
    measures: dict[str, MeasureScan] = field(default_factory=dict)
    n_points: int = 0

    @property
    def passed(self) -> bool:
        # only measures with an analytic constant are judged
        for name, scan in self.measures.items():
            if scan.analytic is None:
                continue
            tol = _tolerance(name)
            if np.isfinite(scan.max_abs_dev) and scan.max_abs_dev >= tol:
                return False
            if scan.declared_constant and not scan.constant:
                return False
        return True

    def as_json(self) -> dict:
        return {
            "family": self.family,
            "points": self.n_points,
            "pass": self.passed,
            "measures": {k: v.as_json() for k, v in self.measures.items()},
        }


def _tolerance(name: str) -> float:
    return LAMBDA_TOL if name.startswith("lambda") else MU_TOL


def constancy_scan(
    model: DiscountModel,
    grid: Iterable[TimePoint],
    scheme: FdScheme = FdScheme(),
    epsilon: float = DEFAULT_EPSILON,
) -> ConstancyReport:
    """Compare finite-difference measures with the closed forms over a grid.

    Degenerate points are counted per measure rather than aborting the scan.
    """
    grid = list(grid)
    if not grid:
        raise EmptyGridError("constancy scan needs at least one grid point")
    t = np.array([p.t for p in grid], dtype=float)
    T = np.array([p.T for p in grid], dtype=float)

    def logf(tt, TT):
        return model.log_discount(tt, TT, epsilon)

    exact = analytic_measures_at(model, t, T)
    constants = analytic_measures(model).as_dict()
    declared = DECLARED_CONSTANT[model.family]
    report = ConstancyReport(model.family, n_points=len(grid))
    for axis, suffix in (("t", "1"), ("T", "2")):
        lam, mu, d1 = _axis_measures(logf, t, T, axis, scheme)
        ok = np.abs(d1) >= DEGENERATE_SLOPE
        for name, values in (("lambda" + suffix, lam), ("mu" + suffix, mu)):
            good = values[ok]
            if good.size == 0:
                report.measures[name] = MeasureScan(
                    constants[name], np.nan, np.nan, np.nan, False,
                    name in declared, np.nan, failed_points=len(grid),
                )
                continue
            lo, hi = float(good.min()), float(good.max())
            dev = np.abs(good - exact[name][ok])
            max_dev = float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else np.nan
            scale = max(abs(float(np.mean(good))), 1e-300)
            report.measures[name] = MeasureScan(
                analytic=constants[name],
                numeric_min=lo,
                numeric_max=hi,
                max_abs_dev=max_dev,
                constant=(hi - lo) < _tolerance(name),
                declared_constant=name in declared,
                relative_spread=(hi - lo) / scale,
                failed_points=int(np.count_nonzero(~ok)),
            )
    return report
