"""Respondent questionnaires: TIPI Big-Five scoring, profiles, summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateConstantVectorError,
    InsufficientDataError,
    LengthMismatchError,
    OutOfRangeError,
)

SCALES = ("extraversion", "agreeableness", "conscientiousness", "neuroticism", "openness")
SCALE_ABBREV = dict(zip(SCALES, "EACNO"))

# (direct item, reverse-keyed item), 1-based
TIPI_KEY = {
    "extraversion": (1, 6),
    "agreeableness": (7, 2),
    "conscientiousness": (3, 8),
    "neuroticism": (4, 9),
    "openness": (5, 10),
}

PROFILE_FIELDS = ("subject_id", "gender", "age", "sportweek", "alcoholweek", "smoker")
TIPI_FIELDS = tuple(f"tipi{i}" for i in range(1, 11))
PROFILE_HEADER = PROFILE_FIELDS + TIPI_FIELDS
SAVINGS_FIELD = "monthly_savings"

# default regressors; monthly savings is deliberately left out
COVARIATES = ("gender", "age", "sportweek", "alcoholweek", "smoker") + SCALES


def reverse(value: int) -> int:
    """Reverse-key a 7-point Likert answer."""
    return 8 - value


@dataclass(frozen=True)
class TipiResponse:
    items: tuple[int, ...]

    def __post_init__(self):
        items = tuple(self.items)
        if len(items) != 10:
            raise OutOfRangeError(f"TIPI needs exactly 10 items, got {len(items)}")
        for i, v in enumerate(items, start=1):
            if isinstance(v, bool) or not float(v).is_integer() or not 1 <= v <= 7:
                raise OutOfRangeError(f"tipi{i}={v!r} is not an integer in [1, 7]")
        object.__setattr__(self, "items", tuple(int(v) for v in items))

    def item(self, k: int) -> int:
        return self.items[k - 1]


@dataclass(frozen=True)
class BigFiveScores:
    extraversion: float
    agreeableness: float
    conscientiousness: float
    neuroticism: float
    openness: float

    def as_dict(self) -> dict[str, float]:
        return {s: getattr(self, s) for s in SCALES}


def score_tipi(raw: TipiResponse | Sequence[int]) -> BigFiveScores:
    """Each scale is the mean of its direct item and its reversed item."""
    if not isinstance(raw, TipiResponse):
        raw = TipiResponse(tuple(raw))
    return BigFiveScores(**{
        scale: (raw.item(direct) + reverse(raw.item(rev))) / 2
        for scale, (direct, rev) in TIPI_KEY.items()
    })


def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError(f"vectors differ in shape: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise LengthMismatchError("need at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateConstantVectorError("rank correlation undefined for a constant vector")
    rx = rankdata(x) - (len(x) + 1) / 2
    ry = rankdata(y) - (len(y) + 1) / 2
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    return min(1.0, max(-1.0, rho))


@dataclass(frozen=True)
class RespondentProfile:
    subject_id: str
    gender: int
    age: float
    sportweek: float
    alcoholweek: float
    smoker: int
    tipi: TipiResponse
    monthly_savings: float | None = None

    def __post_init__(self):
        for name in ("gender", "smoker"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")
        for name in ("age", "sportweek", "alcoholweek"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise OutOfRangeError(f"{name}={v} must be finite and non-negative")
        if self.monthly_savings is not None and not math.isfinite(self.monthly_savings):
            raise OutOfRangeError("monthly_savings must be finite")

    @property
    def big_five(self) -> BigFiveScores:
        return score_tipi(self.tipi)

    def covariates(self) -> dict[str, float]:
        out = {
            "gender": float(self.gender),
            "age": float(self.age),
            "sportweek": float(self.sportweek),
            "alcoholweek": float(self.alcoholweek),
            "smoker": float(self.smoker),
        }
        out.update(self.big_five.as_dict())
        if self.monthly_savings is not None:
            out[SAVINGS_FIELD] = float(self.monthly_savings)
        return out


def covariate_table(profiles: Iterable[RespondentProfile]) -> dict[str, dict[str, float]]:
    """subject id -> covariate values, the shape ``fit_with_covariates`` takes."""
    return {p.subject_id: p.covariates() for p in profiles}


# --- ingestion ---------------------------------------------------------------

@dataclass(frozen=True)
class RowError:
    line: int
    subject_id: str
    kind: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line} ({self.subject_id or '?'}): {self.kind}: {self.message}"


@dataclass
class IngestResult:
    profiles: list[RespondentProfile] = field(default_factory=list)
    errors: list[RowError] = field(default_factory=list)
    has_savings: bool = False


class _RowProblem(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _number(row, name) -> float:
    text = (row.get(name) or "").strip()
    if not text:
        raise _RowProblem("MissingField", f"{name} is empty")
    try:
        v = float(text)
    except ValueError:
        raise _RowProblem("NonNumeric", f"{name}={text!r} is not a number") from None
    if not math.isfinite(v):
        raise _RowProblem("NonNumeric", f"{name}={text!r} is not finite")
    return v


def _flag(row, name) -> int:
    text = (row.get(name) or "").strip()
    if not text:
        raise _RowProblem("MissingField", f"{name} is empty")
    if text not in ("0", "1"):
        raise _RowProblem("InvalidFlag", f"{name}={text!r}; flags must be 0 or 1")
    return int(text)


def _likert(row, name) -> int:
    v = _number(row, name)
    if not v.is_integer():
        raise _RowProblem("NonNumeric", f"{name}={v} is not an integer")
    if not 1 <= v <= 7:
        raise _RowProblem("OutOfRange", f"{name}={int(v)} outside [1, 7]")
    return int(v)


def _parse_row(row, has_savings) -> RespondentProfile:
    sid = (row.get("subject_id") or "").strip()
    if not sid:
        raise _RowProblem("MissingField", "subject_id is empty")
    values = {name: _number(row, name) for name in ("age", "sportweek", "alcoholweek")}
    for name, v in values.items():
        if v < 0:
            raise _RowProblem("OutOfRange", f"{name}={v} is negative")
    savings = None
    if has_savings and (row.get(SAVINGS_FIELD) or "").strip():
        savings = _number(row, SAVINGS_FIELD)
    return RespondentProfile(
        subject_id=sid,
        gender=_flag(row, "gender"),
        smoker=_flag(row, "smoker"),
        tipi=TipiResponse(tuple(_likert(row, f) for f in TIPI_FIELDS)),
        monthly_savings=savings,
        **values,
    )


def ingest_profiles(source) -> IngestResult:
    """Parse a profile CSV; bad rows are reported, good rows kept.

    ``source`` is a path or an open text stream.
    """
    close = isinstance(source, (str, Path))
    fh = open(source, newline="") if close else source
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [h for h in PROFILE_HEADER if h not in header]
        if missing:
            raise ValueError(f"profile CSV lacks columns: {missing}")
        result = IngestResult(has_savings=SAVINGS_FIELD in header)
        for line, row in enumerate(reader, start=2):
            try:
                result.profiles.append(_parse_row(row, result.has_savings))
            except _RowProblem as exc:
                result.errors.append(RowError(line, (row.get("subject_id") or "").strip(), exc.kind, str(exc)))
        return result
    finally:
        if close:
            fh.close()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_profiles_csv(profiles: Iterable[RespondentProfile], target, savings: bool | None = None) -> None:
    """Serialize profiles; ``savings=None`` adds the savings column if any profile has it."""
    profiles = list(profiles)
    if savings is None:
        savings = any(p.monthly_savings is not None for p in profiles)
    close = isinstance(target, (str, Path))
    fh = open(target, "w", newline="") if close else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER + ((SAVINGS_FIELD,) if savings else ()))
        for p in profiles:
            row = [p.subject_id, p.gender, _fmt(p.age), _fmt(p.sportweek), _fmt(p.alcoholweek), p.smoker]
            row.extend(p.tipi.items)
            if savings:
                row.append("" if p.monthly_savings is None else _fmt(p.monthly_savings))
            w.writerow(row)
    finally:
        if close:
            fh.close()


# --- summaries ---------------------------------------------------------------

@dataclass
class Summary:
    n: int
    mean: dict[str, float]
    sd: dict[str, float]
    spearman: np.ndarray
    degenerate: bool

    def to_json(self) -> dict:
        def clean(v):
            return None if not math.isfinite(v) else float(v)

        return {
            "n": self.n,
            "variables": {k: {"mean": clean(self.mean[k]), "sd": clean(self.sd[k])} for k in self.mean},
            "spearman": {
                "scales": [SCALE_ABBREV[s] for s in SCALES],
                "matrix": [[clean(v) for v in row] for row in self.spearman],
                "degenerate": self.degenerate,
            },
        }

    def rows(self) -> list[list[str]]:
        out = [["variable", "mean", "sd"]]
        out.extend([k, f"{self.mean[k]:.4f}", f"{self.sd[k]:.4f}"] for k in self.mean)
        return out


def summarize(profiles: Sequence[RespondentProfile]) -> Summary:
    """Sample means, SDs (n - 1) and the Big-Five Spearman matrix.

    A constant scale has undefined correlations: its off-diagonal entries
    are NaN and ``degenerate`` is set. The diagonal is always 1.
    """
    profiles = list(profiles)
    if len(profiles) < 2:
        raise InsufficientDataError("summaries need at least two profiles")
    table = [p.covariates() for p in profiles]
    names = [k for k in table[0] if all(k in row for row in table)]
    mean, sd = {}, {}
    for k in names:
        col = np.array([row[k] for row in table])
        mean[k] = float(np.mean(col))
        sd[k] = float(np.std(col, ddof=1))
    scores = np.array([[row[s] for s in SCALES] for row in table])
    m = np.eye(len(SCALES))
    degenerate = False
    for i in range(len(SCALES)):
        for j in range(i + 1, len(SCALES)):
            try:
                rho = spearman(scores[:, i], scores[:, j])
            except DegenerateConstantVectorError:
                rho = math.nan
                degenerate = True
            m[i, j] = m[j, i] = rho
    return Summary(len(profiles), mean, sd, m, degenerate)


def synthetic_profiles(n: int, seed: int = 42, smoker_share: float = 0.3) -> list[RespondentProfile]:
    """Random but plausible respondents for demos and tests."""
    rng = np.random.default_rng(seed)
    out = []
    width = max(3, len(str(n)))
    for i in range(n):
        out.append(RespondentProfile(
            subject_id=f"S{i + 1:0{width}d}",
            gender=int(rng.random() < 0.5),
            age=float(rng.integers(19, 30)),
            sportweek=float(rng.integers(0, 10)),
            alcoholweek=float(rng.integers(0, 8)),
            smoker=int(rng.random() < smoker_share),
            tipi=TipiResponse(tuple(int(v) for v in rng.integers(1, 8, size=10))),
        ))
    return out
