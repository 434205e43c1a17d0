# B-spline basis functions and the learnable temporal encoder.
#
# The encoder normalizes calendar features of each date into [0, 1] and
# passes them through per-feature learnable spline activations; a linear
# mixer turns the spline outputs into the temporal encoding vector.

import numpy as np

from ssmamba.splines import bspline_basis, clamped_uniform_knots
from ssmamba.temporal import (FEATURE_NAMES, FeatureRanges, KanParams,
                              descriptor_array, kan_features, kan_forward)

# a cubic basis with 8 functions on a clamped uniform knot vector
degree, R = 3, 8
knots = clamped_uniform_knots(degree, R)
xs = np.linspace(0.0, 1.0, 9)
basis = bspline_basis(xs, degree, knots)

print("knots:", np.round(knots, 3))
print("basis rows sum to one:", np.allclose(basis.sum(axis=1), 1.0))

# crude character plot of the 8 basis functions
grid = np.linspace(0, 1, 61)
B = bspline_basis(grid, degree, knots)
for r in range(R):
    row = "".join("#" if v > 0.4 else ("+" if v > 0.1 else ".")
                  for v in B[:, r])
    print(f"B_{r}: {row}")

# dates -> 7 calendar features -> normalized -> splined -> mixed
dates = [[f"2024-{m:02d}-15" for m in range(1, 13)]]
raw = descriptor_array(dates)                        # (1, 12, 7)
ranges = FeatureRanges.fit_array(raw.reshape(-1, 7))
params = KanParams(state_size=6, degree=degree, basis_count=R,
                   ranges=ranges, seed=0)
feats = kan_features(raw, params)                    # constant basis values
tev = kan_forward(feats, params)                     # (1, 12, 6) Tensor

print("feature names:", FEATURE_NAMES)
print("encoding for Jan 15 vs Jul 15:")
print(np.round(tev.data[0, 0], 3))
print(np.round(tev.data[0, 6], 3))
