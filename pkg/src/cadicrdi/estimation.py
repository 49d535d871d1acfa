"""Nonlinear least-squares fitting of discount models to binary choices.

The objective is sum_i (c_i - P_i(theta))^2 with P the logistic choice
probability. Optimisation is Levenberg-Marquardt from several seeded
starts; standard errors are heteroskedasticity-consistent sandwiches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .choice import ChoiceRecord, record_arrays
from .discount import (
    DEFAULT_EPSILON,
    FAMILIES,
    PARAM_NAMES,
    DiscountModel,
    log_discount_raw,
    make_model,
    normalize_family,
)
from .errors import (
    DiscountError,
    EmptyDataError,
    MissingProfileError,
    RankDeficientCovariatesError,
)
from .lm import COND_LIMIT, fd_steps, jacobian, levenberg_marquardt

UNCONSTRAINED = "Unconstrained"
THEORY_CONSTRAINED = "TheoryConstrained"
BOUNDS_MODES = (UNCONSTRAINED, THEORY_CONSTRAINED)

# magnitudes used to size difference steps for parameters near zero
TYPICAL = {"r": 1e-2, "delta": 1e-4, "gamma": 1e-2, "alpha": 1e-1, "beta": 1e-1}


@dataclass(frozen=True)
class FitSpec:
    """How to fit one family.

    ``initial=None`` means multi-start only; with an initial vector it is
    the first start and ``n_starts - 1`` random starts follow. Random starts
    are the lowest-SSE ``n_starts`` of ``n_starts * screen`` seeded draws,
    since most draws land on a saturated plateau of the logistic.
    """

    family: str
    initial: Mapping[str, float] | None = None
    bounds: str = UNCONSTRAINED
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = 500
    gtol: float = 1e-10
    xtol: float = 1e-12
    n_starts: int = 8
    seed: int = 42
    screen: int = 32

    def __post_init__(self):
        object.__setattr__(self, "family", normalize_family(self.family))
        if self.bounds not in BOUNDS_MODES:
            raise ValueError(f"bounds must be one of {BOUNDS_MODES}, got {self.bounds!r}")
        if not (self.gtol > 0 and self.xtol > 0 and self.epsilon > 0):
            raise ValueError("tolerances and epsilon must be positive")
        if self.max_iter < 1 or self.n_starts < 1 or self.screen < 1:
            raise ValueError("max_iter, n_starts and screen must be at least 1")
        if self.initial is not None and set(self.initial) != set(PARAM_NAMES[self.family]):
            raise ValueError(f"initial must give {PARAM_NAMES[self.family]}")


@dataclass(frozen=True)
class CovariateSpec:
    """Covariates and which structural parameters load on them.

    ``loadings=None`` loads every parameter on every covariate.
    """

    names: tuple[str, ...]
    loadings: Mapping[str, tuple[str, ...]] | None = None

    def for_param(self, param: str) -> tuple[str, ...]:
        if self.loadings is None:
            return tuple(self.names)
        return tuple(self.loadings.get(param, ()))


@dataclass
class FitResult:
    family: str
    names: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    r2: float
    adj_r2: float
    sse: float
    n_obs: int
    n_iter: int
    status: str
    validity: str
    residuals: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    flags: tuple[str, ...] = ()
    start_sse: tuple[float, ...] = ()
    covariates: tuple[str, ...] = ()
    jac: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"

    @property
    def n_params(self) -> int:
        return len(self.names)

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.estimates)))

    @property
    def se(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.std_errors)))

    def model(self) -> DiscountModel:
        """Fitted model; for covariate fits, the subject with all covariates at zero."""
        p = self.params
        return make_model(self.family, **{k: p[k] for k in PARAM_NAMES[self.family]})

    def coefficient(self, param: str, covariate: str | None = None) -> float:
        return self.params[param if covariate is None else f"{param}:{covariate}"]

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "params": _json_floats(self.params),
            "se": _json_floats(self.se),
            "r2": _json_float(self.r2),
            "adjR2": _json_float(self.adj_r2),
            "sse": _json_float(self.sse),
            "nObs": self.n_obs,
            "nParams": self.n_params,
            "nIter": self.n_iter,
            "status": self.status,
            "validity": self.validity,
            "epsilon": self.epsilon,
            "flags": list(self.flags),
            "covariates": list(self.covariates),
        }


def _json_float(v: float):
    return None if v is None or not math.isfinite(v) else float(v)


def _json_floats(d: Mapping[str, float]) -> dict:
    return {k: _json_float(v) for k, v in d.items()}


# --- fit statistics ----------------------------------------------------------

@dataclass(frozen=True)
class GoodnessOfFit:
    r2: float
    adj_r2: float


def goodness_of_fit(residuals, observed, p: int) -> GoodnessOfFit:
    """R^2 on the raw outcomes and its adjusted form; NaN where undefined."""
    e = np.asarray(residuals, dtype=float)
    c = np.asarray(observed, dtype=float)
    n = len(c)
    if n < 1:
        raise EmptyDataError("goodness of fit needs at least one observation")
    sse = float(e @ e)
    sst = float(np.sum((c - c.mean()) ** 2))
    if sst > 0:
        r2 = 1.0 - sse / sst
    else:
        r2 = 1.0 if sse == 0 and n > 1 else math.nan
    dof = n - p - 1
    adj = 1.0 - (1.0 - r2) * (n - 1) / dof if dof > 0 and math.isfinite(r2) else math.nan
    return GoodnessOfFit(r2, adj)


@dataclass(frozen=True)
class RobustSE:
    se: np.ndarray
    cov: np.ndarray
    kind: str
    flags: tuple[str, ...] = ()


def robust_se(jac, residuals, kind: str = "HC1") -> RobustSE:
    """Sandwich standard errors (J'J)^-1 J' diag(e^2) J (J'J)^-1.

    HC1 scales by n / (n - p). When n <= p that factor is undefined and the
    unscaled HC0 matrix is returned with a flag. A near-singular J'J is
    inverted with the pseudo-inverse, also flagged.
    """
    J = np.asarray(jac, dtype=float)
    e = np.asarray(residuals, dtype=float)
    if kind not in ("HC0", "HC1"):
        raise ValueError(f"unknown robust SE flavour {kind!r}")
    n, p = J.shape
    flags = []
    A = J.T @ J
    cond = np.linalg.cond(A) if p else 1.0
    if not np.isfinite(cond) or cond > COND_LIMIT:
        flags.append("near_singular")
        bread = np.linalg.pinv(A)
    else:
        bread = np.linalg.inv(A)
    meat = (J * (e**2)[:, None]).T @ J
    cov = bread @ meat @ bread
    if kind == "HC1":
        if n > p:
            cov = cov * n / (n - p)
        else:
            flags.append("hc1_undefined")
            kind = "HC0"
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RobustSE(se, cov, kind, tuple(flags))


# --- parameter transforms and starts -----------------------------------------

def _transform_kind(family: str, name: str) -> str:
    """How TheoryConstrained maps an internal coordinate to a parameter."""
    if name in ("r", "delta"):
        return "exp"
    if family in ("hyperbolic", "exponential"):
        return "exp"
    if name == "alpha":
        return "negexp"
    if name == "beta":
        return "shifted_exp"
    return "identity"


def _to_natural(family: str, names, z):
    out = np.empty_like(z)
    for i, name in enumerate(names):
        kind = _transform_kind(family, name)
        if kind == "exp":
            out[i] = math.exp(min(z[i], 700.0))
        elif kind == "negexp":
            out[i] = -math.exp(min(z[i], 700.0))
        elif kind == "shifted_exp":
            out[i] = -1.0 + math.exp(min(z[i], 700.0))
        else:
            out[i] = z[i]
    return out


def _to_internal(family: str, names, theta):
    out = np.empty(len(theta))
    for i, name in enumerate(names):
        kind = _transform_kind(family, name)
        v = float(theta[i])
        if kind == "exp":
            arg = v
        elif kind == "negexp":
            arg = -v
        elif kind == "shifted_exp":
            arg = v + 1.0
        else:
            out[i] = v
            continue
        if not arg > 0:
            raise ValueError(f"start {name}={v} lies outside the theory region")
        out[i] = math.log(arg)
    return out


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def draw_start(family: str, rng: np.random.Generator, bounds: str = UNCONSTRAINED) -> dict[str, float]:
    """One random start over plausible ranges for ``family``."""
    out = {}
    for name in PARAM_NAMES[family]:
        if family == "hyperbolic":
            out[name] = _log_uniform(rng, 1e-4, 1.0)
        elif family == "exponential":
            out[name] = _log_uniform(rng, 1e-4, 0.2)
        elif name == "r":
            out[name] = _log_uniform(rng, 1e-4, 0.2)
        elif name == "delta":
            out[name] = _log_uniform(rng, 1e-5, 0.05)
        elif name == "gamma":
            out[name] = float(rng.uniform(-0.1, 0.5))
        elif name == "alpha":
            if bounds == THEORY_CONSTRAINED:
                out[name] = -_log_uniform(rng, 1e-3, 1.0)
            else:
                out[name] = float(rng.uniform(-1.0, 1.0))
        else:
            out[name] = float(rng.uniform(-0.99, 1.0))
    return out


def candidate_starts(spec: FitSpec) -> list[dict[str, float]]:
    """Seeded draws to screen; the explicit initial vector (if any) comes first."""
    rng = np.random.default_rng(spec.seed)
    n_random = (spec.n_starts - (spec.initial is not None)) * spec.screen
    starts = [dict(spec.initial)] if spec.initial is not None else []
    starts.extend(draw_start(spec.family, rng, spec.bounds) for _ in range(n_random))
    return starts


def _screen(resid, candidates, spec: FitSpec):
    """Keep the initial vector plus the best random candidates by SSE."""
    keep = 1 if spec.initial is not None else 0
    sse = []
    for theta in candidates[keep:]:
        e = resid(np.asarray(theta, dtype=float))
        sse.append(float(e @ e) if np.all(np.isfinite(e)) else math.inf)
    order = np.argsort(sse, kind="stable")[: spec.n_starts - keep]
    return candidates[:keep] + [candidates[keep + i] for i in sorted(order)]


# --- fitting -----------------------------------------------------------------

def _check_data(data: Sequence[ChoiceRecord]):
    if len(data) == 0:
        raise EmptyDataError("no choice records to fit")
    return record_arrays(data)


def _run_starts(resid_natural, family, names, starts, spec: FitSpec, typical):
    """LM from each start; returns (best natural vector, best LM result, start SSEs)."""
    constrained = spec.bounds == THEORY_CONSTRAINED
    if constrained:
        def fun(z):
            return resid_natural(_to_natural(family, names, z))
    else:
        fun = resid_natural
    best = None
    start_sse = []
    flags = []
    for start in starts:
        theta0 = np.array(start, dtype=float)
        e0 = resid_natural(theta0)
        start_sse.append(float(e0 @ e0) if np.all(np.isfinite(e0)) else math.inf)
        z0 = _to_internal(family, names, theta0) if constrained else theta0
        res = levenberg_marquardt(
            fun, z0, typical=np.ones_like(z0) if constrained else typical,
            max_iter=spec.max_iter, gtol=spec.gtol, xtol=spec.xtol,
        )
        flags.extend(f for f in res.flags if f not in flags)
        if best is None or res.cost < best.cost:
            best = res
    theta = _to_natural(family, names, best.x) if constrained else best.x
    return theta, best, tuple(start_sse), flags


def _finish(family, names, theta, best, start_sse, flags, resid_natural, typical, c, spec, covariates=()):
    e = resid_natural(theta)
    sse = float(e @ e)
    J = jacobian(resid_natural, theta, fd_steps(theta, typical))
    rse = robust_se(J, e)
    gof = goodness_of_fit(e, c, len(names))
    flags = list(flags) + [f for f in rse.flags if f not in flags] + [f"stop:{best.status}"]
    status = "Converged" if best.converged else "NonConvergence"
    base = {k: v for k, v in zip(names, theta) if k in PARAM_NAMES[family]}
    validity = make_model(family, **base).validity.status
    return FitResult(
        family=family,
        names=tuple(names),
        estimates=np.asarray(theta, dtype=float),
        std_errors=rse.se,
        r2=gof.r2,
        adj_r2=gof.adj_r2,
        sse=sse,
        n_obs=len(c),
        n_iter=best.n_iter,
        status=status,
        validity=validity,
        residuals=-e,
        epsilon=spec.epsilon,
        flags=tuple(flags),
        start_sse=start_sse,
        covariates=tuple(covariates),
        jac=J,
    )


def fit(data: Sequence[ChoiceRecord], spec: FitSpec) -> FitResult:
    """Least-squares fit of ``spec.family``; best of the multi-start runs by SSE.

    Non-convergence is reported in ``status``, never raised. Residuals in the
    result are observed minus predicted.
    """
    x, y, t, T, c = _check_data(data)
    family = spec.family
    names = PARAM_NAMES[family]
    typical = np.array([TYPICAL[n] for n in names])

    def resid(theta):
        logf = log_discount_raw(family, dict(zip(names, theta)), t, T, spec.epsilon)
        with np.errstate(over="ignore", invalid="ignore"):
            return expit(x - y * np.exp(logf)) - c

    starts = _screen(resid, [[s[n] for n in names] for s in candidate_starts(spec)], spec)
    theta, best, start_sse, flags = _run_starts(resid, family, names, starts, spec, typical)
    return _finish(family, names, theta, best, start_sse, flags, resid, typical, c, spec)


def fit_with_covariates(
    data: Sequence[ChoiceRecord],
    profiles: Mapping[str, Mapping[str, float]],
    spec: FitSpec,
    cov: CovariateSpec,
) -> FitResult:
    """Fit with each structural parameter linear in subject covariates.

    theta_k = theta_k0 + sum_i theta_ki X_i per subject. Coefficients are
    named ``param`` (intercept) and ``param:covariate``. A covariate that is
    zero for every record cannot move the fit; its coefficients are fixed at
    zero with SE zero and flagged, so the fit reduces exactly to ``fit``.
    """
    if spec.bounds != UNCONSTRAINED:
        raise ValueError("covariate fits are unconstrained; theory region depends on X")
    x, y, t, T, c = _check_data(data)
    family = spec.family
    base = PARAM_NAMES[family]
    unknown = [p for p in (cov.loadings or {}) if p not in base]
    if unknown:
        raise ValueError(f"{family} has no parameters {unknown}")

    X = np.empty((len(data), len(cov.names)))
    for i, rec in enumerate(data):
        prof = profiles.get(rec.subject_id)
        if prof is None:
            raise MissingProfileError(f"no profile for subject {rec.subject_id!r}")
        for j, name in enumerate(cov.names):
            if name not in prof:
                raise MissingProfileError(f"subject {rec.subject_id!r} lacks covariate {name!r}")
            X[i, j] = float(prof[name])
    if not np.all(np.isfinite(X)):
        raise ValueError("covariate values must be finite")

    active = [j for j in range(len(cov.names)) if np.any(X[:, j] != 0)]
    inert = [cov.names[j] for j in range(len(cov.names)) if j not in active]
    design = np.column_stack([np.ones(len(data))] + [X[:, j] for j in active])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficientCovariatesError("covariate design matrix is not full column rank")
    for param in base:
        loaded = [cov.names.index(n) for n in cov.for_param(param) if n in cov.names and cov.names.index(n) in active]
        sub = np.column_stack([np.ones(len(data))] + [X[:, j] for j in loaded])
        if np.linalg.matrix_rank(sub) < sub.shape[1]:
            raise RankDeficientCovariatesError(f"covariates of {param} are collinear")

    # parameter layout: intercepts, then each parameter's active slopes
    names = list(base)
    slot = []  # (param index, covariate column)
    fixed = []
    for k, param in enumerate(base):
        for cname in cov.for_param(param):
            if cname not in cov.names:
                raise ValueError(f"loading names unknown covariate {cname!r}")
            j = cov.names.index(cname)
            if j in active:
                names.append(f"{param}:{cname}")
                slot.append((k, j))
            else:
                fixed.append(f"{param}:{cname}")
    typical = np.array([TYPICAL[n.split(":")[0]] for n in names])

    def resid(theta):
        per = {p: np.full(len(c), theta[k]) for k, p in enumerate(base)}
        for m, (k, j) in enumerate(slot):
            per[base[k]] = per[base[k]] + theta[len(base) + m] * X[:, j]
        logf = log_discount_raw(family, per, t, T, spec.epsilon)
        with np.errstate(over="ignore", invalid="ignore"):
            return expit(x - y * np.exp(logf)) - c

    starts = _screen(resid, [[s[n] for n in base] + [0.0] * len(slot) for s in candidate_starts(spec)], spec)
    theta, best, start_sse, flags = _run_starts(resid, family, names, starts, spec, typical)
    flags = flags + [f"inert_covariate:{n}" for n in inert]
    res = _finish(family, names, theta, best, start_sse, flags, resid, typical, c, spec, cov.names)
    if fixed:
        res.names = res.names + tuple(fixed)
        res.estimates = np.concatenate([res.estimates, np.zeros(len(fixed))])
        res.std_errors = np.concatenate([res.std_errors, np.zeros(len(fixed))])
    return res


# --- model comparison --------------------------------------------------------

@dataclass
class ComparisonTable:
    """Fits ranked best first; ``failures`` maps family to error message."""

    results: list[FitResult]
    failures: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.results)

    @property
    def ranking(self) -> list[str]:
        return [r.family for r in self.results]

    def in_family_order(self) -> list[FitResult]:
        order = {f: i for i, f in enumerate(FAMILIES)}
        return sorted(self.results, key=lambda r: order[r.family])

    def rows(self) -> list[list[str]]:
        """Parameters row-wise, families column-wise in canonical order.

        Estimates carry robust SEs in parentheses; a Rank row gives the
        adjusted-R^2 ordering.
        """
        fits = self.in_family_order()
        rank = {r.family: i + 1 for i, r in enumerate(self.results)}
        out = [["", *(r.family for r in fits)]]
        seen = []
        for r in fits:
            seen.extend(n for n in r.names if n not in seen)
        for name in seen:
            row = [name]
            for r in fits:
                if name in r.params:
                    row.append(f"{r.params[name]:.4g} ({r.se[name]:.2g})")
                else:
                    row.append("")
            out.append(row)
        out.append(["R2", *(_fmt(r.r2) for r in fits)])
        out.append(["Adjusted R2", *(_fmt(r.adj_r2) for r in fits)])
        out.append(["SSE", *(_fmt(r.sse) for r in fits)])
        out.append(["Observations", *(str(r.n_obs) for r in fits)])
        out.append(["Rank", *(str(rank[r.family]) for r in fits)])
        out.append(["Status", *(r.status for r in fits)])
        out.append(["Validity", *(r.validity for r in fits)])
        return out

    def write_csv(self, target, delimiter: str = ",") -> None:
        close = isinstance(target, str)
        fh = open(target, "w", newline="") if close else target
        try:
            csv.writer(fh, delimiter=delimiter, lineterminator="\n").writerows(self.rows())
        finally:
            if close:
                fh.close()

    def to_json(self) -> dict:
        return {
            "ranking": self.ranking,
            "fits": [r.to_json() for r in self.results],
            "failures": dict(self.failures),
        }


def _fmt(v: float) -> str:
    return "NaN" if not math.isfinite(v) else f"{v:.4f}"


def _rank_key(r: FitResult):
    adj = r.adj_r2 if math.isfinite(r.adj_r2) else -math.inf
    return (-adj, r.n_params, r.family)


def default_specs(**overrides) -> list[FitSpec]:
    return [FitSpec(family, **overrides) for family in FAMILIES]


def compare_models(data: Sequence[ChoiceRecord], specs: Sequence[FitSpec] | None = None) -> ComparisonTable:
    """Fit each spec on the same data and rank by adjusted R^2.

    Ties go to fewer parameters, then family name. A family whose fit
    raises is recorded in ``failures`` and skipped.
    """
    specs = default_specs() if specs is None else list(specs)
    results, failures = [], {}
    for spec in specs:
        try:
            results.append(fit(data, spec))
        except (DiscountError, ValueError, np.linalg.LinAlgError) as exc:
            failures[spec.family] = str(exc)
    results.sort(key=_rank_key)
    return ComparisonTable(results, failures)


__all__ = [
    "BOUNDS_MODES",
    "ComparisonTable",
    "CovariateSpec",
    "FitResult",
    "FitSpec",
    "GoodnessOfFit",
    "RobustSE",
    "THEORY_CONSTRAINED",
    "UNCONSTRAINED",
    "compare_models",
    "default_specs",
    "draw_start",
    "fit",
    "fit_with_covariates",
    "goodness_of_fit",
    "robust_se",
    "candidate_starts",
]
