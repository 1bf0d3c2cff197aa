"""Report containers shared by every bound calculator."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DomainError


@dataclass
class Assumption:
    """One hypothesis of a bound together with the number that decided it."""

    name: str
    satisfied: bool
    witness: Optional[float] = None


@dataclass
class BoundReport:
    """Outcome of a bound calculator.

    Attributes:
        theorem: tag naming the result that was applied.
        value: headline bound, ``inf`` when the bound does not apply.
        constants: named constants entering the bound.
        validity: closed-open window (lo, hi) on which the bound holds, or
            None when it holds nowhere.
        window_kind: "lambda" or "time".
        assumptions: checklist of hypotheses.
        trace: named intermediate quantities.
        notes: free-form remarks (for instance verbatim-constant flags).
        inputs: JSON-safe inputs, kept so that derived reports can recompute.
        context: non-serializable inputs (callables) used by rescaling.
    """

    theorem: str
    value: float
    constants: dict = field(default_factory=dict)
    validity: Optional[tuple] = None
    window_kind: str = "lambda"
    assumptions: list = field(default_factory=list)
    trace: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def valid(self) -> bool:
        return self.validity is not None and all(a.satisfied for a in self.assumptions) and math.isfinite(self.value)

    @property
    def failed_assumptions(self) -> list:
        return [a.name for a in self.assumptions if not a.satisfied]

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "value": _jsonable(self.value),
            "constants": {k: _jsonable(v) for k, v in self.constants.items()},
            "validity": None if self.validity is None else [_jsonable(v) for v in self.validity],
            "window_kind": self.window_kind,
            "assumptions": [
                {"name": a.name, "satisfied": bool(a.satisfied), "witness": _jsonable(a.witness)}
                for a in self.assumptions
            ],
            "trace": {k: _jsonable(v) for k, v in self.trace.items()},
            "notes": list(self.notes),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def csv_row(self, t: Optional[float] = None) -> dict:
        return {
            "t": "" if t is None else _fmt(t),
            "theorem": self.theorem,
            "value": _fmt(self.value),
            "valid": int(self.valid),
            "failed_assumptions": ";".join(self.failed_assumptions),
        }


def reports_to_csv(rows) -> str:
    """CSV text for an iterable of (t, BoundReport) pairs."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["t", "theorem", "value", "valid", "failed_assumptions"],
                            lineterminator="\n")
    writer.writeheader()
    for t, rep in rows:
        writer.writerow(rep.csv_row(t))
    return buf.getvalue()


def _fmt(v) -> str:
    return "%.17g" % v


def _jsonable(v):
    if v is None or isinstance(v, (bool, str)):
        return v
    try:
        v = float(v)
    except (TypeError, ValueError):
        return str(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class HessianBand:
    """Two-sided bound lower * Id <= grad^2 ln p_t <= upper * Id.

    ``lipschitz_estimate`` is sqrt(d) max(|lower|, |upper|), an upper bound on
    the Lipschitz constant of the score. ``branches`` records every bound that
    was intersected.
    """

    lower: float
    upper: float
    lipschitz_estimate: float
    branches: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError(f"empty Hessian band [{self.lower}, {self.upper}]")
        if self.lipschitz_estimate < 0:
            raise DomainError("lipschitz_estimate must be nonnegative")

    @classmethod
    def from_bounds(cls, lower: float, upper: float, dim: int, branches=None) -> "HessianBand":
        return cls(lower, upper, math.sqrt(dim) * max(abs(lower), abs(upper)), dict(branches or {}))

    def contains(self, eigenvalues, tol: float = 0.0) -> bool:
        ev = np.asarray(eigenvalues, dtype=float)
        return bool(np.all(ev >= self.lower - tol) and np.all(ev <= self.upper + tol))

    @property
    def width(self) -> float:
        return self.upper - self.lower
