"""Report records produced by the audits and their file formats.

Bound reports are written one per line to CSV (instance seed, lhs, rhs,
slack, violated, ...). Audit reports are written as a human-readable text
summary plus a flat ``key = value`` file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class BoundReport:
    """Outcome of one numerical check ``lhs <relation> rhs``.

    ``slack`` is signed so that a non-negative value means the relation holds:
    ``lhs - rhs`` for ``>=``, ``rhs - lhs`` for ``<=`` and ``-|lhs - rhs|`` for
    ``==``. The check is violated when ``slack < -tolerance`` or when any
    entry of ``conditions`` (secondary checks on the same instance) is false.
    """

    name: str
    lhs: float
    rhs: float
    relation: str = ">="
    tolerance: float = 0.0
    instance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    diagnostic: bool = False
    conditions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.relation not in (">=", "<=", "=="):
            raise ValueError(f"unknown relation {self.relation!r}")
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)

    @property
    def slack(self) -> float:
        if self.relation == ">=":
            return self.lhs - self.rhs
        if self.relation == "<=":
            return self.rhs - self.lhs
        return -abs(self.lhs - self.rhs)

    @property
    def violated(self) -> bool:
        return bool(self.slack < -self.tolerance) or not all(self.conditions.values())

    def as_record(self):
        record = {
            "name": self.name,
            "seed": self.instance.get("seed", ""),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relation": self.relation,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "violated": int(self.violated),
            "diagnostic": int(self.diagnostic),
        }
        for key, value in self.details.items():
            if np.isscalar(value):
                record[key] = value
        for key, ok in self.conditions.items():
            record[f"check_{key}"] = int(bool(ok))
        return record


@dataclass
class AuditReport:
    """Named collection of scalar findings plus the checks they support."""

    name: str
    values: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_text(self) -> str:
        lines = [f"[{self.name}] {'PASS' if self.passed else 'FAIL'}"]
        for key, value in self.values.items():
            lines.append(f"  {key}: {_fmt(value)}")
        for key, ok in self.checks.items():
            lines.append(f"  check {key}: {'ok' if ok else 'VIOLATED'}")
        return "\n".join(lines)

    def to_keyvalue(self) -> dict:
        out = {f"{self.name}.{k}": v for k, v in self.values.items()}
        out.update({f"{self.name}.check.{k}": int(bool(v)) for k, v in self.checks.items()})
        out[f"{self.name}.passed"] = int(self.passed)
        return out


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_records_csv(path, reports):
    """Write bound reports to ``path``; columns are the union of record keys."""
    records = [r.as_record() for r in reports]
    columns = []
    for record in records:
        for key in record:
            if key not in columns:
                columns.append(key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns or ["name"], restval="")
        writer.writeheader()
        writer.writerows(records)
    return path


def write_keyvalue(path, mapping):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key} = {value}\n")
    return path


def read_keyvalue(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


class TrainingError(RuntimeError):
    """Non-finite loss or parameters during training; ``dump`` holds the offending batch summary."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass
class TrainingRecord:
    """Per-iteration metrics of one training run, in column order."""

    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, row):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"row is missing columns {missing}")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v
                                 for k, v in row.items()})
        return path

    @classmethod
    def from_csv(cls, path):
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [{k: float(v) for k, v in row.items()} for row in reader]
            return cls(list(reader.fieldnames or []), rows)
