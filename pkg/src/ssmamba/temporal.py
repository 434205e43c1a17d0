"""Calendar features and the spline-based temporal encoder.

A date maps to a 7-component descriptor, each component passes through its
own learnable B-spline after normalization to [0, 1], and a linear mixer
produces the per-step temporal encoding vector (TEV) of the backbone's
state size.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

import numpy as np

from .autograd import ContractViolation, Parameter, Tensor
from .splines import SplineSpec, basis_matrix

FEATURE_NAMES = ("ordinal", "year", "month", "day", "dow", "doy", "quarter")
_EPOCH = _dt.date(1970, 1, 1)
_MIN_DATE = _dt.date(1900, 1, 1)
_MAX_DATE = _dt.date(2200, 12, 31)


class InputError(ValueError):
    """User-supplied data failed validation."""


@dataclass(frozen=True)
class CalendarDescriptor:
    ordinal: int   # days since 1970-01-01
    year: int
    month: int     # 1-12
    day: int       # 1-31
    dow: int       # 0-6, Monday=0
    doy: int       # 1-366
    quarter: int   # 1-4

    def as_array(self) -> np.ndarray:
        return np.array([self.ordinal, self.year, self.month, self.day,
                         self.dow, self.doy, self.quarter], dtype=np.float64)


def calendar_descriptor(date) -> CalendarDescriptor:
    """Descriptor for an ISO-8601 day string or datetime.date."""
    if isinstance(date, str):
        try:
            d = _dt.date.fromisoformat(date)
        except ValueError:
            raise InputError(f"unparseable ISO date: {date!r}")
    elif isinstance(date, _dt.date):
        d = date
    else:
        raise InputError(f"expected ISO string or date, got {type(date).__name__}")
    if not _MIN_DATE <= d <= _MAX_DATE:
        raise InputError(f"date {d.isoformat()} outside supported range "
                         f"[{_MIN_DATE}, {_MAX_DATE}]")
    return CalendarDescriptor(
        ordinal=(d - _EPOCH).days,
        year=d.year,
        month=d.month,
        day=d.day,
        dow=d.weekday(),
        doy=d.timetuple().tm_yday,
        quarter=(d.month - 1) // 3 + 1,
    )


class FeatureRanges:
    """Per-feature (lo, hi) bounds fitted on training dates.

    normalize() affinely maps each feature to [0, 1] and clamps out-of-range
    values (test dates beyond the training span), counting clamps.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.shape != (7,) or hi.shape != (7,):
            raise ContractViolation("ranges must cover the 7 calendar features")
        if np.any(hi <= lo):
            raise ContractViolation("feature range needs hi > lo for every feature")
        self.lo = lo
        self.hi = hi
        self.extrapolation_count = 0

    @classmethod
    def fit(cls, descriptors) -> "FeatureRanges":
        return cls.fit_array(np.stack([d.as_array() for d in descriptors]))

    @classmethod
    def fit_array(cls, arr: np.ndarray) -> "FeatureRanges":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1, 7)
        lo = arr.min(axis=0)
        hi = arr.max(axis=0)
        # constant features (e.g. a single year) get a unit-width span
        flat = hi <= lo
        hi = np.where(flat, lo + 1.0, hi)
        return cls(lo, hi)

    def normalize(self, arr: np.ndarray) -> np.ndarray:
        """(..., 7) raw descriptor values -> [0, 1]^7, clamped."""
        z = (np.asarray(arr, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        clipped = np.clip(z, 0.0, 1.0)
        self.extrapolation_count += int(np.sum(z != clipped))
        return clipped

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["lo"]), np.array(d["hi"]))


SINUSOIDAL_DIM = 4  # sin/cos of day-of-year phase and day-of-week phase


def sinusoidal_features(arr: np.ndarray) -> np.ndarray:
    """Fixed 4-dim encoding used when the spline encoder is ablated away.

    (..., 7) raw descriptors -> (..., 4): annual and weekly phase sin/cos.
    """
    doy = np.asarray(arr, dtype=np.float64)[..., 5]
    dow = np.asarray(arr, dtype=np.float64)[..., 4]
    ang_y = 2.0 * np.pi * doy / 365.25
    ang_w = 2.0 * np.pi * dow / 7.0
    return np.stack([np.sin(ang_y), np.cos(ang_y),
                     np.sin(ang_w), np.cos(ang_w)], axis=-1)


class KanParams:
    """Spline coefficients plus the linear mixer that yields the TEV.

    mode "kan" uses learnable B-splines per calendar feature; mode
    "sinusoidal" substitutes the fixed 4-dim encoding (ablation), keeping
    only the mixer trainable.
    """

    def __init__(self, state_size: int, degree: int = 3, basis_count: int = 8,
                 activation: str = "tanh", mode: str = "kan",
                 ranges: FeatureRanges | None = None, seed: int = 0,
                 prefix: str = "kan", feature_indices=None):
        if activation not in ("tanh", "identity"):
            raise ContractViolation(f"unknown activation {activation!r}")
        if mode not in ("kan", "sinusoidal"):
            raise ContractViolation(f"unknown temporal mode {mode!r}")
        self.state_size = state_size
        self.activation = activation
        self.mode = mode
        self.ranges = ranges
        self.feature_indices = (list(range(len(FEATURE_NAMES)))
                                if feature_indices is None else list(feature_indices))
        rng = np.random.default_rng(seed)
        if mode == "kan":
            self.splines = SplineSpec(degree, basis_count, len(self.feature_indices),
                                      name=f"{prefix}.alpha", rng=rng)
            in_dim = len(self.feature_indices)
        else:
            self.splines = None
            in_dim = SINUSOIDAL_DIM
        self.mix_W = Parameter(
            rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(state_size, in_dim)),
            f"{prefix}.mix_W")
        self.mix_b = Parameter(np.zeros(state_size), f"{prefix}.mix_b")

    def parameters(self):
        ps = [self.mix_W, self.mix_b]
        if self.splines is not None:
            ps.insert(0, self.splines.coefficients)
        return ps


def descriptor_array(dates) -> np.ndarray:
    """Nested date lists -> raw descriptor array of shape (..., 7)."""
    def rec(x):
        if isinstance(x, (list, tuple, np.ndarray)) and not isinstance(x, str):
            return [rec(v) for v in x]
        return calendar_descriptor(x).as_array()
    return np.asarray(rec(dates), dtype=np.float64)


def kan_features(raw: np.ndarray, params: KanParams) -> np.ndarray:
    """Constant (no-gradient) per-feature basis inputs for kan_forward.

    kan mode: shape (..., 7, R) of basis values at the normalized features.
    sinusoidal mode: shape (..., 4) fixed encoding.
    """
    if params.ranges is None:
        raise ContractViolation("FeatureRanges must be fitted before encoding")
    if params.mode == "sinusoidal":
        return sinusoidal_features(raw)
    z = params.ranges.normalize(raw)
    cols = [basis_matrix(z[..., j], params.splines)
            for j in params.feature_indices]
    return np.stack(cols, axis=-2)


def kan_forward(features: np.ndarray, params: KanParams, dtype=np.float32) -> Tensor:
    """TEV tensor of shape features.shape[:-2] + (N,) (or [:-1] in sinusoidal mode).

    kan mode: u_j = sum_r alpha[j, r] * basis[..., j, r], then
    z = act(u @ W^T + b).
    """
    if params.mode == "kan":
        basis = Tensor(features.astype(dtype))
        alpha = params.splines.coefficients
        u = (alpha * basis).sum(axis=-1)          # (..., 7)
    else:
        u = Tensor(features.astype(dtype))        # (..., 4)
    lead = u.data.shape[:-1]
    flat = u.reshape((-1, u.data.shape[-1]))
    z = flat.matmul(params.mix_W.T) + params.mix_b
    if params.activation == "tanh":
        z = z.tanh()
    return z.reshape(lead + (params.state_size,))
