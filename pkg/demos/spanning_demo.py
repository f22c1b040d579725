"""Pipelined spanning-set coding for an irrational rotation over binary channels.

Run: python demos/spanning_demo.py   (about half a minute)
"""

import warnings

from estent import build_spanning_scheme, bsc, catalog, evaluate, noiseless

rotation = catalog("rotation_noise", {"alpha": 0.3819660112501051, "noise": {"kind": "none"}})
eps = 0.05
for channel in (noiseless(2), bsc(0.05)):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scheme = build_spanning_scheme(rotation, eps, channel, max_block=80, seed=7)
    rep, runs = evaluate(rotation, channel, scheme, eps, 20, 2000, master_seed=1, keep_runs=True)
    sizes = [len(scheme.centers[j]) for j in sorted(scheme.centers)[:6]]
    print(f"{channel.kind:9s} start block {scheme.start_block}, lock-on t={scheme.lock_on}, "
          f"first cover sizes {sizes}")
    print(f"          e1 {rep.e1_pass_fraction:.2f}  e2 {rep.e2_pass_fraction:.2f}  "
          f"tail mse {rep.e3_tail_mse:.2e}")
