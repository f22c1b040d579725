"""Closed-form capacity bounds side by side for a few example systems.

Run: python demos/bounds_demo.py
"""

import math

import numpy as np

from estent import (ar_rate_distortion, catalog, conditional_entropy_rate, density_norm,
                    gl_capacity_upper, linear_entropy, shannon_lower_bound, zoom_capacity_upper)

lam = [3.2, 0.9, -1.5]
print(f"eigenvalues {lam}: sum of log2 |unstable| = {linear_entropy(lam):.3f}, "
      f"zoom needs {zoom_capacity_upper(lam):.0f} bits/step")

walk = catalog("linear", {"A": [[1.0]], "noise": {"kind": "gaussian", "variance": 1.0}})
h = conditional_entropy_rate(walk)
print(f"\nGaussian random walk: noise entropy {h:.3f} bits")
for eps in (1e-1, 1e-2, 1e-3, 1e-4):
    print(f"    mse {eps:<7} needs at least {shannon_lower_bound(h, 1, eps):6.2f} bits/step")

print("\nAR(1) x_t = 2 x_(t-1) + w_t, rate needed at distortion theta:")
for theta in (1.0, 0.1, 0.01):
    D, R, corr = ar_rate_distortion([-2.0], 1.0, theta)
    print(f"    theta {theta:<5} D={D:.4f}  R={R:.3f} bits (unstable root adds {corr:.0f})")

gauss = lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi)
norm = density_norm(gauss, 1, (-12, 12))
print("\nstandard Gaussian source, memoryless quantizer rate at high resolution:")
for eps in (1e-2, 1e-3, 1e-4):
    print(f"    mse {eps:<7} {gl_capacity_upper(norm, 1, eps):6.2f} bits")
