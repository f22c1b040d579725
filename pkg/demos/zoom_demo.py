"""The zoom scheme on x -> 2x over erasure channels of decreasing quality.

The bracket shrinks when R (1 - p) > log2 2 and blows up otherwise.
Run: python demos/zoom_demo.py
"""

import warnings

import numpy as np

from estent import build_zoom_scheme, catalog, erasure, evaluate, stability_margin

system = catalog("linear", {"A": [[2.0]]})
R = 6
for p in (0.2, 0.5, 0.8, 0.9):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scheme = build_zoom_scheme([2.0], [R], p, [1.0])
    rep, runs = evaluate(system, erasure(p, 2 ** R), scheme, 1e-3, 20, 1000, master_seed=3,
                         keep_runs=True)
    margin, _ = stability_margin(2.0, R, p)
    hw = np.median([r.records["log2_halfwidth"][-1, 0] for r in runs])
    print(f"p={p:<4} capacity {R * (1 - p):4.1f}  min kappa {margin:.3f}  "
          f"e2 pass {rep.e2_pass_fraction:4.2f}  median final log2 half-width {hw:7.1f}")
