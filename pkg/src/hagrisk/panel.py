"""Annual loss panel container and its text/JSON file formats.

Text format (line oriented, ``#`` starts a comment)::

    threshold=500000.0 years=2
    year=1 count=2
    exc=1234.5
    exc=99.25
    year=2 count=0

JSON mirror::

    {"threshold": 500000.0, "counts": [2, 0], "exceedances": [[1234.5, 99.25], []]}

Floats are written with ``repr`` so a round trip is lossless.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class PanelFormatError(ValueError):
    """Malformed panel file."""


@dataclass
class PanelDataset:
    threshold: float
    counts: np.ndarray
    exceedances: list = field(default_factory=list)

    def __post_init__(self):
        self.threshold = float(self.threshold)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.exceedances = [np.asarray(e, dtype=float).reshape(-1) for e in self.exceedances]
        if not (self.threshold > 0 and np.isfinite(self.threshold)):
            raise ValueError("threshold must be positive")
        if self.counts.ndim != 1 or self.counts.size < 1:
            raise ValueError("panel needs at least one year")
        if np.any(self.counts < 0):
            raise ValueError("negative event count")
        if len(self.exceedances) != self.counts.size:
            raise ValueError(
                f"{len(self.exceedances)} exceedance lists for {self.counts.size} years"
            )
        for t, (n, e) in enumerate(zip(self.counts, self.exceedances)):
            if e.size != n:
                raise ValueError(f"year {t + 1}: count {n} but {e.size} exceedances")
            if np.any(~(e > 0)) or np.any(~np.isfinite(e)):
                raise ValueError(f"year {t + 1}: exceedances must be positive and finite")

    @property
    def years(self) -> int:
        return int(self.counts.size)

    @property
    def flat_exceedances(self) -> np.ndarray:
        if not self.exceedances:
            return np.empty(0)
        return np.concatenate(self.exceedances)

    @property
    def year_index(self) -> np.ndarray:
        """Zero-based year of each entry of ``flat_exceedances``."""
        return np.repeat(np.arange(self.years), self.counts)

    def annual_losses(self) -> np.ndarray:
        """Aggregate loss per year, ``sum(u + Y)``."""
        return np.array([self.threshold * n + e.sum() for n, e in zip(self.counts, self.exceedances)])

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.threshold == other.threshold
            and np.array_equal(self.counts, other.counts)
            and all(np.array_equal(a, b) for a, b in zip(self.exceedances, other.exceedances))
        )


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def panel_to_text(data: PanelDataset) -> str:
    lines = [f"threshold={data.threshold!r} years={data.years}"]
    for t, (n, exc) in enumerate(zip(data.counts, data.exceedances), start=1):
        lines.append(f"year={t} count={int(n)}")
        lines.extend(f"exc={float(y)!r}" for y in exc)
    return "\n".join(lines) + "\n"


def panel_to_json(data: PanelDataset) -> str:
    return json.dumps(
        {
            "threshold": data.threshold,
            "counts": [int(n) for n in data.counts],
            "exceedances": [[float(y) for y in e] for e in data.exceedances],
        }
    )


def _fields(line: str, lineno: int) -> dict:
    out = {}
    for tok in line.split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise PanelFormatError(f"line {lineno}: expected key=value, got {tok!r}")
        out[key] = value
    return out


def parse_panel_text(text: str) -> PanelDataset:
    threshold = years = None
    counts, exceedances = [], []
    expected = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rec = _fields(line, lineno)
        try:
            if threshold is None:
                if set(rec) != {"threshold", "years"}:
                    raise PanelFormatError(f"line {lineno}: header must be 'threshold=<float> years=<int>'")
                threshold, years = float(rec["threshold"]), int(rec["years"])
            elif "year" in rec:
                if expected:
                    raise PanelFormatError(
                        f"line {lineno}: year {len(counts)} declared more exceedances than listed"
                    )
                t, n = int(rec["year"]), int(rec["count"])
                if t != len(counts) + 1:
                    raise PanelFormatError(f"line {lineno}: expected year={len(counts) + 1}, got {t}")
                if n < 0:
                    raise PanelFormatError(f"line {lineno}: negative count")
                counts.append(n)
                exceedances.append([])
                expected = n
            elif "exc" in rec:
                if not expected:
                    raise PanelFormatError(f"line {lineno}: exceedance beyond declared count")
                exceedances[-1].append(float(rec["exc"]))
                expected -= 1
            else:
                raise PanelFormatError(f"line {lineno}: unknown record {line!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, PanelFormatError):
                raise
            raise PanelFormatError(f"line {lineno}: {exc}") from None
    if threshold is None:
        raise PanelFormatError("empty panel file")
    if expected:
        raise PanelFormatError(f"year {len(counts)}: {expected} exceedances missing at end of file")
    if len(counts) != years:
        raise PanelFormatError(f"header declares {years} years, found {len(counts)}")
    try:
        return PanelDataset(threshold, counts, exceedances)
    except ValueError as exc:
        raise PanelFormatError(str(exc)) from None


def parse_panel_json(text: str) -> PanelDataset:
    try:
        obj = json.loads(text)
        return PanelDataset(obj["threshold"], obj["counts"], obj["exceedances"])
    except json.JSONDecodeError as exc:
        raise PanelFormatError(f"line {exc.lineno}: {exc.msg}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise PanelFormatError(f"invalid panel record: {exc}") from None


def export_panel(data: PanelDataset, path, fmt: str | None = None):
    """Write ``data`` to ``path``; ``.json`` suffix selects the JSON mirror."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "text")
    _atomic_write(path, panel_to_json(data) if fmt == "json" else panel_to_text(data))


def import_panel(path) -> PanelDataset:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return parse_panel_json(text)
    return parse_panel_text(text)
