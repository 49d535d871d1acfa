"""Binary smaller-sooner / larger-later choices under a discount surface.

P(choose sooner) = 1 / (1 + exp(-(x - y F(t, T)))), with amounts in euros
and utility linear in money.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .discount import DEFAULT_EPSILON, DiscountModel, evaluate, log_discount_raw
from .errors import EmptyDataError, NoDominanceItemError

CHOICE_HEADER = ("subject_id", "x", "y", "t", "T", "chose_sooner")
DESIGN_HEADER = ("item", "x", "y", "t", "T")


@dataclass(frozen=True)
class Tradeoff:
    """``x`` euros after ``t`` days versus ``y`` euros after ``t + T`` days."""

    x: float
    y: float
    t: float
    T: float

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0):
            raise ValueError(f"amounts must be positive: x={self.x}, y={self.y}")
        if not (self.t >= 0 and self.T >= 0) or not all(map(math.isfinite, (self.t, self.T))):
            raise ValueError(f"times must be finite and non-negative: t={self.t}, T={self.T}")
        if self.T > 0 and self.x > self.y:
            raise ValueError(f"sooner amount exceeds later amount: x={self.x} > y={self.y}")

    @property
    def is_dominance(self) -> bool:
        """Same amount sooner or later: only the sooner option is sensible."""
        return self.x == self.y and self.T > 0


@dataclass(frozen=True)
class ChoiceRecord:
    subject_id: str
    tradeoff: Tradeoff
    chose_sooner: bool


@dataclass(frozen=True)
class QuestionnaireDesign:
    items: tuple[Tradeoff, ...]

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def dominance_items(self) -> tuple[Tradeoff, ...]:
        return tuple(tr for tr in self.items if tr.is_dominance)

    def arrays(self):
        x = np.array([tr.x for tr in self.items], dtype=float)
        y = np.array([tr.y for tr in self.items], dtype=float)
        t = np.array([tr.t for tr in self.items], dtype=float)
        T = np.array([tr.T for tr in self.items], dtype=float)
        return x, y, t, T

    def __add__(self, other: "QuestionnaireDesign") -> "QuestionnaireDesign":
        return QuestionnaireDesign(self.items + other.items)


def probability_arrays(model: DiscountModel, x, y, t, T, epsilon: float = DEFAULT_EPSILON, temperature: float = 1.0):
    """Vectorised choice probabilities; theory-violating models allowed."""
    F = np.exp(log_discount_raw(model.family, model.params(), t, T, epsilon))
    return expit(temperature * (np.asarray(x, dtype=float) - np.asarray(y, dtype=float) * F))


def choice_probability(model: DiscountModel, tr: Tradeoff, epsilon: float = DEFAULT_EPSILON, temperature: float = 1.0) -> float:
    """Probability of taking the sooner amount.

    ``temperature`` scales the logistic argument; 1 reproduces the
    noise-free specification and is the default.
    """
    F = evaluate(model, tr.t, tr.T, epsilon)
    return float(expit(temperature * (tr.x - tr.y * F)))


def record_arrays(data: Sequence[ChoiceRecord]):
    """(x, y, t, T, chose) arrays in record order."""
    x = np.array([r.tradeoff.x for r in data], dtype=float)
    y = np.array([r.tradeoff.y for r in data], dtype=float)
    t = np.array([r.tradeoff.t for r in data], dtype=float)
    T = np.array([r.tradeoff.T for r in data], dtype=float)
    c = np.array([1.0 if r.chose_sooner else 0.0 for r in data])
    return x, y, t, T, c


def residuals(model: DiscountModel, data: Sequence[ChoiceRecord], epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Observed minus predicted, one entry per record, in input order."""
    if len(data) == 0:
        raise EmptyDataError("no choice records")
    x, y, t, T, c = record_arrays(data)
    return c - probability_arrays(model, x, y, t, T, epsilon)


def subject_ids(n_subjects: int) -> list[str]:
    width = max(3, len(str(n_subjects)))
    return [f"S{i + 1:0{width}d}" for i in range(n_subjects)]


def generate_choices(
    model: DiscountModel,
    design: QuestionnaireDesign,
    n_subjects: int,
    seed: int = 42,
    noise: str = "bernoulli",
    epsilon: float = DEFAULT_EPSILON,
    ids: Sequence[str] | None = None,
) -> list[ChoiceRecord]:
    """Synthetic answers of ``n_subjects`` identical respondents.

    ``noise="deterministic"`` picks the sooner amount iff P > 0.5 (a tie goes
    to the later amount). ``"bernoulli"`` draws each answer from P with a
    generator seeded by (seed, subject index), so subjects are independent of
    generation order.
    """
    if n_subjects < 1:
        raise ValueError("need at least one subject")
    if noise not in ("bernoulli", "deterministic"):
        raise ValueError(f"unknown noise mode {noise!r}")
    ids = list(ids) if ids is not None else subject_ids(n_subjects)
    if len(ids) != n_subjects:
        raise ValueError("one id per subject required")
    p = probability_arrays(model, *design.arrays(), epsilon=epsilon)
    out = []
    for i, sid in enumerate(ids):
        if noise == "deterministic":
            sooner = p > 0.5
        else:
            sooner = np.random.default_rng([seed, i]).random(len(p)) < p
        out.extend(ChoiceRecord(sid, tr, bool(s)) for tr, s in zip(design.items, sooner))
    return out


def group_by_subject(data: Iterable[ChoiceRecord]) -> dict[str, list[ChoiceRecord]]:
    groups: dict[str, list[ChoiceRecord]] = {}
    for rec in data:
        groups.setdefault(rec.subject_id, []).append(rec)
    return groups


def consistency_screen(data: Iterable[ChoiceRecord], design: QuestionnaireDesign | None = None) -> list[str]:
    """Subjects who took the later amount on any equal-amount item.

    With ``design`` given, it must contain an equal-amount item. Without it,
    the records themselves must contain one unless there are no records.
    """
    data = list(data)
    if design is not None and not design.dominance_items:
        raise NoDominanceItemError("design has no item with x = y and T > 0")
    if design is None and data and not any(r.tradeoff.is_dominance for r in data):
        raise NoDominanceItemError("no record with x = y and T > 0")
    drop = []
    for sid, recs in group_by_subject(data).items():
        if any(r.tradeoff.is_dominance and not r.chose_sooner for r in recs):
            drop.append(sid)
    return drop


def apply_screen(data: Sequence[ChoiceRecord], dropped: Iterable[str]) -> list[ChoiceRecord]:
    dropped = set(dropped)
    return [r for r in data if r.subject_id not in dropped]


# --- designs -----------------------------------------------------------------

DESIGN_DELAYS = (0.0, 7.0, 30.0, 90.0, 180.0, 365.0)
DESIGN_INTERVALS = (7.0, 30.0, 90.0, 180.0, 365.0)
LATER_AMOUNTS = (100.0, 120.0, 150.0, 200.0, 250.0, 300.0)
OFFSETS = (-4.0, -1.5, 1.5, 4.0, -2.5, 2.5, 0.5)


def titrated_design(
    reference: DiscountModel,
    n_items: int = 43,
    epsilon: float = DEFAULT_EPSILON,
    min_amount: float = 80.0,
    max_amount: float = 300.0,
) -> QuestionnaireDesign:
    """Design whose sooner amounts sit a few euros from ``reference``'s indifference.

    Item 1 is the equal-amount screening item (100 today vs 100 in a week).
    The rest cycle through every (t, T) cell, later amounts and offsets;
    amounts stay within [min_amount, max_amount] and are whole euros.
    """
    items = [Tradeoff(100.0, 100.0, 0.0, 7.0)]
    cells = [(t, T) for T in DESIGN_INTERVALS for t in DESIGN_DELAYS]
    k = 0
    while len(items) < n_items:
        t, T = cells[k % len(cells)]
        F = float(np.exp(log_discount_raw(reference.family, reference.params(), t, T, epsilon)))
        y = LATER_AMOUNTS[k % len(LATER_AMOUNTS)]
        if y * F < min_amount + 5:
            y = min(max_amount, math.ceil((min_amount + 5) / max(F, 1e-12) / 10) * 10)
        x = round(y * F + OFFSETS[k % len(OFFSETS)])
        x = float(min(max(x, min_amount), y - 1))
        items.append(Tradeoff(x, float(y), t, T))
        k += 1
    return QuestionnaireDesign(tuple(items))


def default_design() -> QuestionnaireDesign:
    """The shipped 43-item design (package data ``default_design.csv``)."""
    text = resources.files("cadicrdi").joinpath("data/default_design.csv").read_text()
    return read_design_csv(io.StringIO(text))


# --- CSV ---------------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def _days(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _open_out(target):
    if isinstance(target, (str, Path)):
        return open(target, "w", newline=""), True
    return target, False


def _open_in(source):
    if isinstance(source, (str, Path)):
        return open(source, newline=""), True
    return source, False


def write_choices_csv(data: Iterable[ChoiceRecord], target) -> None:
    fh, close = _open_out(target)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHOICE_HEADER)
        for r in data:
            tr = r.tradeoff
            w.writerow([r.subject_id, _num(tr.x), _num(tr.y), _days(tr.t), _days(tr.T), int(r.chose_sooner)])
    finally:
        if close:
            fh.close()


def read_choices_csv(source) -> list[ChoiceRecord]:
    fh, close = _open_in(source)
    try:
        reader = csv.DictReader(fh)
        missing = set(CHOICE_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"choice CSV lacks columns: {sorted(missing)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                flag = row["chose_sooner"].strip()
                if flag not in ("0", "1"):
                    raise ValueError(f"chose_sooner must be 0 or 1, got {flag!r}")
                tr = Tradeoff(float(row["x"]), float(row["y"]), float(row["t"]), float(row["T"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {line}: {exc}") from exc
            out.append(ChoiceRecord(row["subject_id"], tr, flag == "1"))
        return out
    finally:
        if close:
            fh.close()


def write_design_csv(design: QuestionnaireDesign, target) -> None:
    fh, close = _open_out(target)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DESIGN_HEADER)
        for i, tr in enumerate(design.items, start=1):
            w.writerow([i, _num(tr.x), _num(tr.y), _days(tr.t), _days(tr.T)])
    finally:
        if close:
            fh.close()


def read_design_csv(source) -> QuestionnaireDesign:
    fh, close = _open_in(source)
    try:
        reader = csv.DictReader(fh)
        missing = set(DESIGN_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"design CSV lacks columns: {sorted(missing)}")
        rows = sorted(reader, key=lambda row: int(row["item"]))
        return QuestionnaireDesign(
            tuple(Tradeoff(float(r["x"]), float(r["y"]), float(r["t"]), float(r["T"])) for r in rows)
        )
    finally:
        if close:
            fh.close()
