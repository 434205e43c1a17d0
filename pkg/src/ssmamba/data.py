"""CSV ingestion, chronological splits, train-only standardization,
sliding-window construction, and synthetic series generators."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .temporal import InputError, calendar_descriptor


@dataclass
class SeriesRecord:
    """One named univariate daily series with strictly increasing dates."""
    name: str
    dates: list = field(default_factory=list)    # ISO day strings
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.dates)

    def validate(self):
        if len(self.dates) != len(self.values):
            raise InputError(f"{self.name}: dates/values length mismatch")
        prev = None
        for d in self.dates:
            cur = _dt.date.fromisoformat(d)
            if prev is not None and cur <= prev:
                raise InputError(f"{self.name}: dates not strictly increasing at {d}")
            prev = cur


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15

    def validate(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise InputError("all split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise InputError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass
class WindowBatch:
    """Standardized windows with aligned dates, names, and next-step targets."""
    inputs: np.ndarray       # (B, L) standardized
    targets: np.ndarray      # (B,) standardized next value
    dates: list              # (B, L) nested ISO day strings
    series_names: list       # (B,)


def load_series_csv(path, name: str) -> SeriesRecord:
    """Read a `date,value` CSV into a validated, sorted SeriesRecord."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise InputError(f"{path}: expected header 'date,value', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise InputError(f"{path}:{lineno}: expected two columns")
            dstr = row[0].strip()
            try:
                _dt.date.fromisoformat(dstr)
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad date {dstr!r}")
            try:
                v = float(row[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value {row[1]!r}")
            rows.append((dstr, v, lineno))
    rows.sort(key=lambda r: r[0])
    for (d1, _, _), (d2, _, ln) in zip(rows, rows[1:]):
        if d1 == d2:
            raise InputError(f"{path}:{ln}: duplicate date {d2}")
    rec = SeriesRecord(name=name, dates=[r[0] for r in rows],
                       values=np.array([r[1] for r in rows], dtype=np.float64))
    rec.validate()
    return rec


def load_manifest(path):
    """JSON list of {name, path} -> list of SeriesRecord."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, list):
        raise InputError(f"{path}: manifest must be a JSON list")
    records = []
    for item in spec:
        if "name" not in item or "path" not in item:
            raise InputError(f"{path}: manifest entries need 'name' and 'path'")
        records.append(load_series_csv(item["path"], item["name"]))
    return records


def chronological_split(rec: SeriesRecord, spec: SplitSpec):
    """Contiguous (train, val, test) index ranges covering the series."""
    spec.validate()
    n = len(rec)
    b1 = int(np.floor(n * spec.train_frac))
    b2 = int(np.floor(n * (spec.train_frac + spec.val_frac)))
    ranges = ((0, b1), (b1, b2), (b2, n))
    for lo, hi in ranges:
        if hi <= lo:
            raise InputError(
                f"{rec.name}: split produces an empty range with n={n}; "
                "supply more data or different fractions")
    return ranges


class Scaler:
    """Train-split mean/std (population n denominator)."""

    def __init__(self, mean: float, std: float):
        if std < 1e-12:
            raise InputError("constant series: refusing to standardize (std ~ 0)")
        self.mean = float(mean)
        self.std = float(std)

    @classmethod
    def fit(cls, values: np.ndarray) -> "Scaler":
        v = np.asarray(values, dtype=np.float64)
        if v.size < 2:
            raise InputError("need at least 2 values to fit a scaler")
        return cls(v.mean(), v.std())

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def make_windows(rec: SeriesRecord, index_range, L: int, stride: int = 1):
    """Sliding windows inside one split range (no straddling).

    Yields (input_values (L,), input_dates (L,), target_value, target_date)
    in raw (unstandardized) units; standardization happens at batching.
    """
    lo, hi = index_range
    if hi - lo < L + 1:
        warnings.warn(f"{rec.name}: range of {hi - lo} values too short for L={L}")
        return
    for i in range(lo, hi - L, stride):
        yield (rec.values[i:i + L], rec.dates[i:i + L],
               rec.values[i + L], rec.dates[i + L])


def window_count(index_range, L: int) -> int:
    lo, hi = index_range
    return max(0, hi - lo - L)


def synth_series(kind: str, n: int, seed: int, name: str,
                 noise: float = 0.05, start: str = "2015-01-01") -> SeriesRecord:
    """Deterministic synthetic daily series.

    kinds:
      sine+trend   v_t = sin(2*pi*t/365.25) + 0.002*t + noise*eps_t
      two-season   v_t = sin(2*pi*t/365.25) + 0.5*sin(2*pi*t/91.3) + noise*eps_t
      random-walk  v_t = v_{t-1} + noise*eps_t, v_0 = 0
    """
    if n < 200:
        raise InputError(f"synthetic series needs n >= 200, got {n}")
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    eps = rng.standard_normal(n)
    if kind == "sine+trend":
        values = np.sin(2 * np.pi * t / 365.25) + 0.002 * t + noise * eps
    elif kind == "two-season":
        values = (np.sin(2 * np.pi * t / 365.25)
                  + 0.5 * np.sin(2 * np.pi * t / 91.3) + noise * eps)
    elif kind == "random-walk":
        values = np.cumsum(noise * eps)
    else:
        raise InputError(f"unknown synthetic kind {kind!r}")
    d0 = _dt.date.fromisoformat(start)
    dates = [(d0 + _dt.timedelta(days=int(i))).isoformat() for i in range(n)]
    rec = SeriesRecord(name=name, dates=dates, values=values)
    rec.validate()
    return rec


def write_series_csv(rec: SeriesRecord, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "value"])
        for d, v in zip(rec.dates, rec.values):
            w.writerow([d, repr(float(v))])


def all_descriptors(rec: SeriesRecord, index_range):
    """Calendar descriptors for the dates inside one index range."""
    lo, hi = index_range
    return [calendar_descriptor(d) for d in rec.dates[lo:hi]]
