"""Clamped B-spline basis evaluation (Cox-de Boor) on [0, 1].

Knots are fixed uniform clamped vectors; only coefficients train. Basis
values are computed in float64 outside the autodiff graph since inputs
(calendar features) carry no gradient.
"""

from __future__ import annotations

import numpy as np

from .autograd import ContractViolation, Parameter


def clamped_uniform_knots(degree: int, basis_count: int) -> np.ndarray:
    """Knot vector of length basis_count + degree + 1 on [0, 1].

    First and last knots repeated degree+1 times so the basis is a partition
    of unity on the whole interval.
    """
    if not 1 <= degree <= 3:
        raise ContractViolation(f"degree must be in [1, 3], got {degree}")
    if basis_count > 16 or basis_count < degree + 1:
        raise ContractViolation(
            f"basis_count must be in [degree+1, 16], got {basis_count}")
    interior = basis_count - degree - 1
    inner = np.linspace(0.0, 1.0, interior + 2)[1:-1]
    return np.concatenate([
        np.zeros(degree + 1),
        inner,
        np.ones(degree + 1),
    ])


class SplineSpec:
    """Per-feature spline family: shared degree/knots, trainable coefficients.

    coefficients has shape (n_features, basis_count); row j parameterizes the
    univariate function applied to feature j.
    """

    def __init__(self, degree: int, basis_count: int, n_features: int,
                 coefficients: Parameter | None = None, name: str = "kan.alpha",
                 rng: np.random.Generator | None = None):
        self.degree = degree
        self.basis_count = basis_count
        self.n_features = n_features
        self.knots = clamped_uniform_knots(degree, basis_count)
        if coefficients is None:
            rng = rng or np.random.default_rng(0)
            init = rng.uniform(-0.1, 0.1, size=(n_features, basis_count))
            coefficients = Parameter(init, name)
        if coefficients.data.shape != (n_features, basis_count):
            raise ContractViolation("coefficient shape mismatch")
        self.coefficients = coefficients

    def validate(self):
        if len(self.knots) != self.basis_count + self.degree + 1:
            raise ContractViolation("knot vector length != R + m + 1")
        if np.any(np.diff(self.knots) < 0):
            raise ContractViolation("knots must be non-decreasing")


def bspline_basis(x, degree: int, knots: np.ndarray) -> np.ndarray:
    """All basis values B_{r,degree}(x) for x in [0, 1], vectorized over x.

    Returns an array of shape x.shape + (R,) where R = len(knots)-degree-1.
    Inputs outside the knot span are clamped. At most degree+1 entries per
    point are nonzero; rows sum to 1 on clamped knots.
    """
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    flat = np.clip(x.reshape(-1), knots[0], knots[-1])
    n_basis = len(knots) - degree - 1
    # right endpoint belongs to the last nonempty interval
    last = np.searchsorted(knots, knots[-1], side="left") - 1
    eps = np.finfo(np.float64).tiny
    # degree 0: half-open interval indicators
    b = np.zeros((flat.size, len(knots) - 1))
    for i in range(len(knots) - 1):
        if i == last:
            b[:, i] = (knots[i] <= flat) & (flat <= knots[i + 1])
        else:
            b[:, i] = (knots[i] <= flat) & (flat < knots[i + 1])
    for k in range(1, degree + 1):
        nb = np.zeros((flat.size, len(knots) - k - 1))
        for i in range(len(knots) - k - 1):
            d1 = knots[i + k] - knots[i]
            d2 = knots[i + k + 1] - knots[i + 1]
            term = 0.0
            if d1 > eps:
                term = (flat - knots[i]) / d1 * b[:, i]
            if d2 > eps:
                term = term + (knots[i + k + 1] - flat) / d2 * b[:, i + 1]
            nb[:, i] = term
        b = nb
    out = b[:, :n_basis]
    if scalar:
        return out[0]
    return out.reshape(x.shape + (n_basis,))


def basis_matrix(x, spec: SplineSpec) -> np.ndarray:
    """Basis values for one feature column; shape x.shape + (R,)."""
    spec.validate()
    return bspline_basis(x, spec.degree, spec.knots)


def export_spline(spec: SplineSpec, feature_index: int) -> str:
    """Text dump of one learned univariate function: knots + coefficients."""
    coeffs = spec.coefficients.data[feature_index]
    lines = [
        f"degree\t{spec.degree}",
        f"basis_count\t{spec.basis_count}",
        "knots\t" + " ".join(repr(float(k)) for k in spec.knots),
        "coefficients\t" + " ".join(repr(float(c)) for c in coeffs),
    ]
    return "\n".join(lines) + "\n"
