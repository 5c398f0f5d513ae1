"""Named inequality checks and their serialization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

ABS_TOL = 1e-7
REL_TOL = 1e-9


@dataclass
class Check:
    """One inequality lhs <= rhs (or lhs >= rhs) with its measured slack.

    ``slack`` is always oriented so that a non-negative value means the
    inequality holds before tolerances are applied.
    """

    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    relation: str = "<="
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": _finite(self.lhs),
            "rhs": _finite(self.rhs),
            "slack": _finite(self.slack),
            "pass": bool(self.passed),
            "relation": self.relation,
            "note": self.note,
        }


def _finite(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def leq(name, lhs, rhs, abs_tol=ABS_TOL, rel_tol=REL_TOL, note="") -> Check:
    lhs, rhs = float(lhs), float(rhs)
    slack = rhs - lhs
    tol = abs_tol + rel_tol * max(abs(lhs), abs(rhs) if math.isfinite(rhs) else 0.0)
    ok = (not math.isnan(slack)) and slack >= -tol
    return Check(name, lhs, rhs, slack, ok, "<=", note)


def geq(name, lhs, rhs, abs_tol=ABS_TOL, rel_tol=REL_TOL, note="") -> Check:
    c = leq(name, rhs, lhs, abs_tol, rel_tol, note)
    return Check(name, float(lhs), float(rhs), c.slack, c.passed, ">=", note)


def close(name, lhs, rhs, tol, note="") -> Check:
    lhs, rhs = float(lhs), float(rhs)
    err = abs(lhs - rhs)
    return Check(name, lhs, rhs, tol - err, err <= tol, "==", note)


def vacuous(name, note) -> Check:
    """A row whose hypothesis is not met; it passes and says why."""
    return Check(name, float("nan"), float("nan"), float("nan"), True, "n/a", note)


@dataclass
class VerificationReport:
    rows: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.rows.append(check)
        return check

    def extend(self, other: "VerificationReport") -> None:
        self.rows.extend(other.rows)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[Check]:
        return [r for r in self.rows if not r.passed]

    def row(self, name: str) -> Check:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [r.as_dict() for r in self.rows]

    def to_text(self) -> str:
        if not self.rows:
            return "(no checks)"
        width = max(len(r.name) for r in self.rows)
        lines = []
        for r in self.rows:
            mark = "PASS" if r.passed else "FAIL"
            if r.relation == "n/a":
                body = r.note
            else:
                body = f"{r.lhs:.6g} {r.relation} {r.rhs:.6g}  slack={r.slack:.3g}"
                if r.note:
                    body += f"  ({r.note})"
            lines.append(f"{mark}  {r.name.ljust(width)}  {body}")
        return "\n".join(lines)
