"""Verification reports shared by the checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class Mismatch:
    where: dict[str, Any]
    expected: Any
    got: Any

    def to_dict(self) -> dict:
        return {
            "where": {k: list(v) if isinstance(v, tuple) else v for k, v in self.where.items()},
            "expected": str(self.expected),
            "got": str(self.got),
        }

    def __str__(self) -> str:
        loc = ", ".join(f"{k}={v}" for k, v in self.where.items())
        return f"at {loc}: expected {self.expected}, got {self.got}"


@dataclass
class Report:
    kind: str
    checked: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def add(self, where: dict, expected, got) -> None:
        self.mismatches.append(Mismatch(where, expected, got))

    def merge(self, other: "Report") -> "Report":
        self.checked += other.checked
        self.mismatches.extend(other.mismatches)
        self.notes.extend(other.notes)
        return self

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "checked": self.checked,
            "mismatches": [m.to_dict() for m in self.mismatches],
            "notes": list(self.notes),
        }

    def __str__(self) -> str:
        head = f"{self.kind}: {'pass' if self.passed else 'FAIL'} ({self.checked} checked, {len(self.mismatches)} mismatches)"
        return "\n".join([head] + [f"  {m}" for m in self.mismatches[:20]])
