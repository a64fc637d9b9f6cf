"""Training traces and their CSV form.

A trace is a long table with one record per ``(step, row)`` pair. On disk it is a
CSV file preceded by ``# key = value`` metadata lines; floats are written with 17
significant digits so that reading a file back gives bit-identical arrays.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import metrics_table

COLUMNS = ("step", "t", "row", "l1", "l2sq", "l4p4", "m_prime", "loss")
_INT_COLUMNS = {"step", "row", "m_prime"}


def format_float(x: float) -> str:
    return "%.17g" % x


@dataclass
class TrainingTrace:
    meta: dict = field(default_factory=dict)
    columns: dict = field(default_factory=lambda: {c: [] for c in COLUMNS})
    final: np.ndarray | None = None

    def __post_init__(self):
        self._frozen = {}

    def record(self, step: int, t: float, W: np.ndarray, loss: float, eps_zero: float):
        """Append one record per row of ``W`` (sorted by row)."""
        mt = metrics_table(W, eps_zero)
        n = W.shape[0]
        cols = self.columns
        cols["step"].extend([step] * n)
        cols["t"].extend([t] * n)
        cols["row"].extend(range(n))
        cols["l1"].extend(mt["l1"].tolist())
        cols["l2sq"].extend(mt["l2sq"].tolist())
        cols["l4p4"].extend(mt["l4p4"].tolist())
        cols["m_prime"].extend(mt["m_prime"].tolist())
        cols["loss"].extend([loss] * n)
        self._frozen.clear()

    def __len__(self):
        return len(self.columns["step"])

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._frozen:
            dtype = np.int64 if name in _INT_COLUMNS else np.float64
            self._frozen[name] = np.asarray(self.columns[name], dtype=dtype)
        return self._frozen[name]

    def row(self, i: int) -> dict[str, np.ndarray]:
        sel = self["row"] == i
        return {c: self[c][sel] for c in COLUMNS}

    def steps(self) -> np.ndarray:
        return np.unique(self["step"])

    def row_mean(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """``(t, mean over rows of column name)`` at each recorded step."""
        steps, inv = np.unique(self["step"], return_inverse=True)
        total = np.bincount(inv, weights=self[name])
        count = np.bincount(inv)
        t = np.zeros(len(steps))
        t[inv] = self["t"]
        return t, total / count

    def equals(self, other: TrainingTrace) -> bool:
        return all(np.array_equal(self[c], other[c], equal_nan=c not in _INT_COLUMNS) for c in COLUMNS)

    # -- CSV ------------------------------------------------------------------

    def to_csv(self, path_or_buf=None) -> str | None:
        buf = io.StringIO()
        for key, value in self.meta.items():
            buf.write(f"# {key} = {value}\n")
        buf.write(",".join(COLUMNS) + "\n")
        arrays = [self[c] for c in COLUMNS]
        for rec in zip(*arrays):
            buf.write(",".join(
                str(int(v)) if c in _INT_COLUMNS else format_float(v)
                for c, v in zip(COLUMNS, rec)
            ))
            buf.write("\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        Path(path_or_buf).write_text(text)
        return None

    @classmethod
    def from_csv(cls, path_or_text) -> TrainingTrace:
        text = path_or_text
        if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
            text = Path(path_or_text).read_text()
        meta = {}
        lines = text.splitlines()
        pos = 0
        while pos < len(lines) and lines[pos].startswith("#"):
            key, _, value = lines[pos][1:].partition("=")
            meta[key.strip()] = value.strip()
            pos += 1
        header = lines[pos].split(",")
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        trace = cls(meta=meta)
        for line in lines[pos + 1:]:
            if not line:
                continue
            for c, v in zip(COLUMNS, line.split(",")):
                trace.columns[c].append(int(v) if c in _INT_COLUMNS else float(v))
        return trace


def write_table(path, header: list[str], rows, meta: dict | None = None):
    """Write a small CSV table with the same metadata/float conventions."""
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key} = {value}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(
            v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer)) and not isinstance(v, bool)
            else format_float(float(v))
            for v in row
        ))
        buf.write("\n")
    Path(path).write_text(buf.getvalue())


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    meta, rows, header = {}, [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, header, rows


def record_schedule(steps: int, record_every: int, record_at=None) -> np.ndarray:
    """Sorted unique step indices in ``[0, steps]`` at which to record."""
    if record_at is not None:
        sched = np.asarray(sorted(set(int(s) for s in record_at)), dtype=np.int64)
        return sched[(sched >= 0) & (sched <= steps)]
    sched = np.arange(0, steps + 1, record_every, dtype=np.int64)
    if sched[-1] != steps:
        sched = np.append(sched, steps)
    return sched


def log_schedule(steps: int, per_decade: int = 40) -> np.ndarray:
    """Roughly log-spaced step indices from 0 to ``steps`` inclusive."""
    if steps <= 0:
        return np.zeros(1, dtype=np.int64)
    pts = np.unique(np.round(np.logspace(0, np.log10(steps), per_decade * max(1, int(np.ceil(np.log10(steps + 1)))))))
    return np.unique(np.concatenate([[0], pts.astype(np.int64), [steps]]))
