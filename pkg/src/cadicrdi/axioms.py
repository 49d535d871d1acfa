"""Numeric falsification harness for the structural axioms.

Every check works on ln F. Equality premises (Axioms 3 to 5') are built
exactly by root-finding and then the conclusion is tested, so no equality
ever has to be hit by chance.

Axiom labels: "1", "2", "3", "3'", "4", "4'", "5", "5'", "6", "7".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discount import DEFAULT_EPSILON, DiscountModel
from .errors import BracketFailureError

AXIOMS = ("1", "2", "3", "3'", "4", "4'", "5", "5'", "6", "7")

BUNDLES = {
    "a": ("1", "2", "3", "4", "5", "6", "7"),
    "b": ("1", "2", "3'", "4'", "5'", "6", "7"),
    "c": ("1", "2", "3'", "4", "5", "6", "7"),
    "d": ("1", "2", "3", "4'", "5'", "6", "7"),
}
BUNDLE_FAMILY = {"a": "cadi-cadi", "b": "crdi-crdi", "c": "cadi-crdi", "d": "crdi-cadi"}
FAMILY_BUNDLE = {v: k for k, v in BUNDLE_FAMILY.items()}

AXIOM_NAMES = {
    "1": "Time interval monotonicity",
    "2": "Delay monotonicity",
    "3": "Time interval CADI condition",
    "3'": "Time interval CRDI condition",
    "4": "Delay CADI condition",
    "4'": "Delay CRDI condition",
    "5": "Weak total delay CADI condition",
    "5'": "Weak total delay CRDI condition",
    "6": "Motionless time interval",
    "7": "Squeeze delay",
}

MOTIONLESS_TOL = 1e-12
RATIO_FLOOR = 1e-6


class Surface:
    """A discount surface seen through ln F.

    ``log_fn(t, T)`` must broadcast over numpy arrays. ``t_min`` is the
    smallest delay the surface is defined at.
    """

    def __init__(self, log_fn: Callable, t_min: float = 0.0, name: str = "surface"):
        self.log_fn = log_fn
        self.t_min = t_min
        self.name = name

    def log(self, t, T):
        with np.errstate(all="ignore"):
            return np.asarray(self.log_fn(np.asarray(t, dtype=float), np.asarray(T, dtype=float)), dtype=float)

    @classmethod
    def from_model(cls, model: DiscountModel, epsilon: float = DEFAULT_EPSILON) -> "Surface":
        t_min = epsilon if model.crdi_in_t else 0.0
        return cls(lambda t, T: model.log_discount(t, T, epsilon), t_min, model.family)

    @classmethod
    def from_function(cls, F: Callable, t_min: float = 0.0, name: str = "surface") -> "Surface":
        """Wrap a callable returning F itself (not its logarithm)."""
        return cls(lambda t, T: np.log(F(t, T)), t_min, name)


def as_surface(obj, epsilon: float = DEFAULT_EPSILON) -> Surface:
    if isinstance(obj, Surface):
        return obj
    if isinstance(obj, DiscountModel):
        return Surface.from_model(obj, epsilon)
    if callable(obj):
        return Surface.from_function(obj)
    raise TypeError(f"cannot build a surface from {type(obj).__name__}")


@dataclass(frozen=True)
class AxiomCheckConfig:
    t_range: tuple[float, float] = (1.0, 365.0)
    T_range: tuple[float, float] = (1.0, 365.0)
    additive_shift: tuple[float, float] = (1.0, 90.0)
    multiplicative_shift: tuple[float, float] = (0.5, 4.0)
    grid_count: int = 12
    samples: int = 250
    tolerance: float = 1e-7
    seed: int = 42
    horizon: float = 1e5
    # Axiom 7 escalates the horizon by decades up to this value
    horizon_max: float = 1e250
    squeeze_tolerance: float = 1e-4
    min_gap: float = 1.0
    max_batches: int = 20

    def __post_init__(self):
        for name in ("t_range", "T_range", "additive_shift", "multiplicative_shift"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be an increasing pair")
        if self.t_range[0] < 0 or self.T_range[0] < 0:
            raise ValueError("time ranges must be non-negative")
        if self.multiplicative_shift[0] <= 0:
            raise ValueError("multiplicative shifts must be positive")
        if self.grid_count < 2 or self.samples < 2:
            raise ValueError("grid and sample counts must be at least 2")


@dataclass
class AxiomReport:
    axiom: str
    passed: bool
    worst_violation: float
    witness: dict | None
    samples_tested: int
    samples_skipped: int = 0

    @property
    def name(self) -> str:
        return AXIOM_NAMES[self.axiom]

    def as_json(self) -> dict:
        return {
            "axiom": self.axiom,
            "name": self.name,
            "pass": self.passed,
            "worstViolation": self.worst_violation,
            "witness": self.witness,
            "samplesTested": self.samples_tested,
            "samplesSkipped": self.samples_skipped,
        }


def _rng(cfg: AxiomCheckConfig, axiom: str) -> np.random.Generator:
    # one independent stream per axiom, so checks can run in any order
    return np.random.default_rng([cfg.seed, AXIOMS.index(axiom)])


def _bisect(g: Callable, lo, hi, max_iter: int = 400):
    """Vectorised bisection for a root of g on [lo, hi].

    Returns NaN where g does not change sign over the bracket. Iterates
    until the bracket collapses to adjacent floats.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    g_lo, g_hi = g(lo), g(hi)
    ok = np.isfinite(g_lo) & np.isfinite(g_hi) & (np.sign(g_lo) * np.sign(g_hi) <= 0)
    exact_lo = ok & (g_lo == 0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        done = (mid <= lo) | (mid >= hi)
        if np.all(done | ~ok):
            break
        g_mid = g(mid)
        left = np.sign(g_mid) * np.sign(g_lo) <= 0
        hi = np.where(~done & left, mid, hi)
        lo_new = np.where(~done & ~left, mid, lo)
        g_lo = np.where(~done & ~left, g_mid, g_lo)
        lo = lo_new
    root = np.where(np.abs(g(lo)) <= np.abs(g(hi)), lo, hi)
    root = np.where(exact_lo, lo, root)
    return np.where(ok, root, np.nan)


def _third_point(surface: Surface, fixed, x1, x2, axis: str, horizon: float):
    """Vectorised solve of ln F(x3) = 2 ln F(x2) - ln F(x1) along one axis."""
    if axis == "T":
        def logf(x):
            return surface.log(fixed, x)
    else:
        def logf(x):
            return surface.log(x, fixed)
    target = 2 * logf(x2) - logf(x1)
    x3 = _bisect(lambda x: logf(x) - target, x2, np.full_like(np.asarray(x2, dtype=float), horizon))
    return np.where(np.asarray(x1) == np.asarray(x2), x2, x3)


def solve_geometric_third(
    F,
    fixed: float,
    x1: float,
    x2: float,
    axis: str = "T",
    horizon: float = 1e5,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Point x3 making F(x1)/F(x2) = F(x2)/F(x3) along ``axis``.

    With ``axis="T"`` the delay ``fixed`` is held and x are intervals; with
    ``axis="t"`` the interval ``fixed`` is held and x are delays.
    """
    if axis not in ("t", "T"):
        raise ValueError("axis must be 't' or 'T'")
    if x1 > x2:
        raise ValueError("need x1 <= x2")
    surface = as_surface(F, epsilon)
    x3 = float(_third_point(surface, float(fixed), np.float64(x1), np.float64(x2), axis, horizon))
    if not np.isfinite(x3):
        raise BracketFailureError(
            f"no {axis}3 in [{x2}, {horizon}] matches the geometric premise"
        )
    return x3


def _relative(a, b):
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return np.abs(a - b) / scale


def _sample_pairs(rng, lo, hi, n, min_gap):
    a = rng.uniform(lo, hi - min_gap, n)
    b = rng.uniform(a + min_gap, hi)
    return a, b


def _report_from(axiom, values, witness_cols, tested, skipped, tolerance):
    if tested == 0:
        return AxiomReport(axiom, False, float("nan"), None, 0, skipped)
    i = int(np.nanargmax(values))
    worst = float(values[i])
    witness = {k: float(v[i]) for k, v in witness_cols.items()}
    return AxiomReport(axiom, worst < tolerance, worst, witness, tested, skipped)


def check_monotonicity(F, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON):
    """Axioms 1 and 2 on random pairs plus adjacent pairs of a structured grid.

    Violations are signed relative gaps in ln F; a pass needs strict
    monotonicity at every sample, so a flat surface fails with violation 0.
    """
    surface = as_surface(F, epsilon)
    reports = []
    n = cfg.samples
    grid_t = np.linspace(*cfg.t_range, cfg.grid_count)
    grid_T = np.linspace(*cfg.T_range, cfg.grid_count)

    rng = _rng(cfg, "1")
    t = rng.uniform(*cfg.t_range, n)
    T1, T2 = _sample_pairs(rng, *cfg.T_range, n, cfg.min_gap)
    gt, gT = np.meshgrid(grid_t, grid_T[:-1], indexing="ij")
    gT2 = np.meshgrid(grid_t, grid_T[1:], indexing="ij")[1]
    t = np.concatenate([t, gt.ravel()])
    T1 = np.concatenate([T1, gT.ravel()])
    T2 = np.concatenate([T2, gT2.ravel()])
    L1, L2 = surface.log(t, T1), surface.log(t, T2)
    signed = (L2 - L1) / np.maximum(np.maximum(np.abs(L1), np.abs(L2)), 1e-300)
    rep = _report_from("1", np.maximum(signed, 0.0), {"t": t, "T1": T1, "T2": T2}, len(t), 0, np.inf)
    rep.passed = bool(np.all(L2 < L1))
    reports.append(rep)

    rng = _rng(cfg, "2")
    T = rng.uniform(*cfg.T_range, n)
    t_lo = max(cfg.t_range[0], surface.t_min)
    t1, t2 = _sample_pairs(rng, t_lo, cfg.t_range[1], n, cfg.min_gap)
    gT, gt1 = np.meshgrid(grid_T, grid_t[:-1], indexing="ij")
    gt2 = np.meshgrid(grid_T, grid_t[1:], indexing="ij")[1]
    T = np.concatenate([T, gT.ravel()])
    t1 = np.concatenate([t1, gt1.ravel()])
    t2 = np.concatenate([t2, gt2.ravel()])
    L1, L2 = surface.log(t1, T), surface.log(t2, T)
    signed = (L1 - L2) / np.maximum(np.maximum(np.abs(L1), np.abs(L2)), 1e-300)
    rep = _report_from("2", np.maximum(signed, 0.0), {"t1": t1, "t2": t2, "T": T}, len(T), 0, np.inf)
    rep.passed = bool(np.all(L1 < L2))
    reports.append(rep)
    return reports


def _collect(draw, cfg: AxiomCheckConfig):
    """Draw batches until ``cfg.samples`` evaluable samples are collected."""
    kept: dict[str, list] = {}
    skipped = 0
    have = 0
    for _ in range(cfg.max_batches):
        cols, ok = draw()
        skipped += int(np.count_nonzero(~ok))
        for k, v in cols.items():
            kept.setdefault(k, []).append(v[ok])
        have += int(np.count_nonzero(ok))
        if have >= cfg.samples:
            break
    out = {k: np.concatenate(v)[: cfg.samples] for k, v in kept.items()}
    return out, min(have, cfg.samples), skipped


def check_ratio_axiom(F, which: str, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON) -> AxiomReport:
    """Axioms 3, 3' (interval axis) and 4, 4' (delay axis).

    The violation is the mismatch of the two shifted log-ratios relative to
    the larger of them.
    """
    if which not in ("3", "3'", "4", "4'"):
        raise ValueError(f"not a ratio axiom: {which!r}")
    surface = as_surface(F, epsilon)
    rng = _rng(cfg, which)
    axis = "T" if which.startswith("3") else "t"
    multiplicative = which.endswith("'")
    fixed_range = cfg.t_range if axis == "T" else cfg.T_range
    x_range = cfg.T_range if axis == "T" else (max(cfg.t_range[0], surface.t_min), cfg.t_range[1])
    shift_range = cfg.multiplicative_shift if multiplicative else cfg.additive_shift
    n = cfg.samples

    def log_at(fixed, x):
        return surface.log(fixed, x) if axis == "T" else surface.log(x, fixed)

    def draw():
        fixed = rng.uniform(*fixed_range, n)
        x1, x2 = _sample_pairs(rng, *x_range, n, cfg.min_gap)
        shift = rng.uniform(*shift_range, n)
        x3 = _third_point(surface, fixed, x1, x2, axis, cfg.horizon)
        ok = np.isfinite(x3)
        return {"fixed": fixed, "x1": x1, "x2": x2, "x3": x3, "shift": shift}, ok

    s, tested, skipped = _collect(draw, cfg)
    if multiplicative:
        y = [s[k] * s["shift"] for k in ("x1", "x2", "x3")]
    else:
        y = [s[k] + s["shift"] for k in ("x1", "x2", "x3")]
    L1, L2, L3 = (log_at(s["fixed"], v) for v in y)
    d12, d23 = L1 - L2, L2 - L3
    # log-ratios below 1e-6 |ln F| are round-off dominated; floor the scale
    scale = np.maximum(
        np.maximum(np.abs(d12), np.abs(d23)),
        RATIO_FLOOR * np.maximum(np.abs(L1), np.abs(L3)),
    )
    dev = np.abs(d12 - d23) / np.maximum(scale, 1e-300)
    if axis == "T":
        witness = {"t": s["fixed"], "T1": s["x1"], "T2": s["x2"], "T3": s["x3"], "shift": s["shift"]}
    else:
        witness = {"T": s["fixed"], "t1": s["x1"], "t2": s["x2"], "t3": s["x3"], "shift": s["shift"]}
    return _report_from(which, dev, witness, tested, skipped, cfg.tolerance)


def check_total_delay(F, which: str, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON) -> AxiomReport:
    """Axioms 5 (additive delay shift) and 5' (multiplicative)."""
    if which not in ("5", "5'"):
        raise ValueError(f"not a total-delay axiom: {which!r}")
    surface = as_surface(F, epsilon)
    rng = _rng(cfg, which)
    multiplicative = which == "5'"
    shift_range = cfg.multiplicative_shift if multiplicative else cfg.additive_shift
    t_lo = max(cfg.t_range[0], surface.t_min)
    n = cfg.samples

    def draw():
        t1 = rng.uniform(t_lo, cfg.t_range[1], n)
        T1 = rng.uniform(*cfg.T_range, n)
        T2 = rng.uniform(*cfg.T_range, n)
        shift = rng.uniform(*shift_range, n)
        target = surface.log(t1, T1)
        t2 = _bisect(
            lambda x: surface.log(x, T2) - target,
            np.full(n, max(surface.t_min, 0.0)),
            np.full(n, cfg.horizon),
        )
        ok = np.isfinite(t2) & (t2 > surface.t_min)
        return {"t1": t1, "T1": T1, "t2": t2, "T2": T2, "shift": shift}, ok

    s, tested, skipped = _collect(draw, cfg)
    if multiplicative:
        a = surface.log(s["t1"] * s["shift"], s["T1"])
        b = surface.log(s["t2"] * s["shift"], s["T2"])
    else:
        a = surface.log(s["t1"] + s["shift"], s["T1"])
        b = surface.log(s["t2"] + s["shift"], s["T2"])
    return _report_from(which, _relative(a, b), s, tested, skipped, cfg.tolerance)


def check_boundary(F, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON):
    """Axiom 6 on a delay grid and Axiom 7 by escalating the delay horizon.

    Axiom 7 passes for an interval T once some horizon (cfg.horizon times a
    power of ten, at most cfg.horizon_max) gives F > 1 - squeeze_tolerance
    with F no smaller than a decade earlier.
    """
    surface = as_surface(F, epsilon)
    t = np.concatenate([[surface.t_min], np.linspace(*cfg.t_range, cfg.grid_count)])
    gap = np.abs(np.expm1(surface.log(t, np.zeros_like(t))))
    gap = np.where(np.isfinite(gap), gap, np.inf)
    i = int(np.argmax(gap))
    six = AxiomReport("6", bool(np.all(gap < MOTIONLESS_TOL)), float(gap[i]), {"t": float(t[i])}, len(t))

    T = np.linspace(*cfg.T_range, cfg.grid_count)
    floor = np.log1p(-cfg.squeeze_tolerance)
    n_dec = int(np.floor(np.log10(cfg.horizon_max / cfg.horizon))) + 1
    horizons = cfg.horizon * 10.0 ** np.arange(n_dec)
    logs = surface.log(horizons[:, None], T[None, :])
    prev = surface.log(horizons[:, None] / 10, T[None, :])
    good = (logs > floor) & (prev <= logs)
    reached = good.any(axis=0)
    first = np.argmax(good, axis=0)
    shortfall = np.where(reached, 0.0, -np.expm1(logs[-1]) - cfg.squeeze_tolerance)
    shortfall = np.where(np.isfinite(shortfall), shortfall, np.inf)
    j = int(np.argmax(shortfall))
    witness = {
        "T": float(T[j]),
        "horizon": float(horizons[first[j]] if reached[j] else horizons[-1]),
        "F": float(np.exp(logs[first[j] if reached[j] else -1, j])),
    }
    seven = AxiomReport("7", bool(reached.all()), float(max(shortfall[j], 0.0)), witness, len(T))
    return [six, seven]


@dataclass
class Classification:
    reports: dict[str, AxiomReport] = field(default_factory=dict)

    @property
    def bundles(self) -> list[str]:
        return [b for b, axioms in BUNDLES.items() if all(self.reports[a].passed for a in axioms)]

    @property
    def families(self) -> list[str]:
        return [BUNDLE_FAMILY[b] for b in self.bundles]

    def bundle_passes(self, family: str) -> bool:
        bundle = FAMILY_BUNDLE.get(family)
        return bundle is not None and bundle in self.bundles

    def as_json(self) -> dict:
        return {
            "bundles": self.bundles,
            "families": self.families,
            "axioms": {k: v.as_json() for k, v in self.reports.items()},
        }


def run_all(F, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON) -> dict[str, AxiomReport]:
    surface = as_surface(F, epsilon)
    reports = {}
    for rep in check_monotonicity(surface, cfg):
        reports[rep.axiom] = rep
    for which in ("3", "3'", "4", "4'"):
        reports[which] = check_ratio_axiom(surface, which, cfg)
    for which in ("5", "5'"):
        reports[which] = check_total_delay(surface, which, cfg)
    for rep in check_boundary(surface, cfg):
        reports[rep.axiom] = rep
    return {a: reports[a] for a in AXIOMS}


def classify(F, cfg: AxiomCheckConfig = AxiomCheckConfig(), epsilon: float = DEFAULT_EPSILON) -> Classification:
    """Run every check and report which axiom bundles the surface satisfies.

    Degenerate surfaces (e.g. gamma = 0) may satisfy several bundles; all of
    them are reported.
    """
    return Classification(run_all(F, cfg, epsilon))
