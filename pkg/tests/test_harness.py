import math
from contextlib import nullcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estent.channels import bsc, erasure, noiseless
from estent.coding import build_memoryless_quantizer, build_spanning_scheme, build_zoom_scheme
from estent.harness import (CopyScheme, MemorylessScheme, capacity_sweep, evaluate, run_scheme,
                            tail_window_start)
from estent.systems import catalog, simulate

GOLDEN = 0.3819660112501051


def rotation():
    return catalog("rotation_noise", {"alpha": GOLDEN, "noise": {"kind": "none"}})


def test_copy_scheme_is_exact():
    rep = evaluate(catalog("doubling"), noiseless(2), CopyScheme(), 1e-9, 5, 200, master_seed=1)
    assert rep.e1_pass_fraction == rep.e2_pass_fraction == 1.0
    assert rep.e3_tail_mse == 0.0 and rep.lock_on == 0
    with pytest.raises(ValueError):
        evaluate(catalog("doubling"), bsc(0.1), CopyScheme(), 0.1, 1, 10, master_seed=1)


def test_window_start():
    assert tail_window_start(1000) == 800
    assert tail_window_start(3000) == 2400
    assert tail_window_start(7) == 5


def test_validation():
    sys_ = catalog("doubling")
    with pytest.raises(ValueError):
        evaluate(sys_, noiseless(2), CopyScheme(), 0.1, 0, 10, master_seed=0)
    with pytest.raises(ValueError):
        evaluate(sys_, noiseless(2), CopyScheme(), 0.1, 1, 1, master_seed=0)
    with pytest.raises(TypeError):
        run_scheme(object(), sys_, noiseless(2), 10, 0)


@pytest.fixture(scope="module")
def rotation_quantizer():
    sys_ = rotation()
    x = simulate(sys_, 20_000, 3).states[:, 0]
    return sys_, build_memoryless_quantizer(x, 16, central_range=(0, 100))


def test_memoryless_scheme_error_scale(rotation_quantizer):
    sys_, q = rotation_quantizer
    rep, runs = evaluate(sys_, noiseless(16), MemorylessScheme(q), 1 / 16, 4, 400,
                         master_seed=5, keep_runs=True)
    # 16 cells on the circle: error at most about a half cell
    assert rep.e2_pass_fraction == 1.0
    assert max(r.errors.max() for r in runs) <= 1 / 32 + 0.01
    assert np.array_equal(runs[0].records["symbols_sent"], runs[0].records["symbols_received"])


def test_memoryless_scheme_validation(rotation_quantizer):
    sys_, q = rotation_quantizer
    with pytest.raises(ValueError):
        evaluate(sys_, noiseless(8), MemorylessScheme(q), 0.1, 1, 50, master_seed=0)
    cat = catalog("cat_map")
    with pytest.raises(ValueError):
        evaluate(cat, noiseless(16), MemorylessScheme(q), 0.1, 1, 50, master_seed=0)


@pytest.mark.parametrize("scheme_kind", ["memoryless", "zoom"])
def test_objective_ordering(scheme_kind, rotation_quantizer):
    if scheme_kind == "memoryless":
        sys_, q = rotation_quantizer
        ch = noiseless(16)
        scheme = MemorylessScheme(q)
        eps_list = [0.01, 0.03, 0.05]
    else:
        sys_ = catalog("linear", {"A": [[2.0]]})
        ch = erasure(0.3)
        scheme = build_zoom_scheme([2.0], [4], 0.3, [1.0])
        eps_list = [1e-1, 1e-3, 1e-6]
    for eps in eps_list:
        rep = evaluate(sys_, ch, scheme, eps, 10, 300, master_seed=2)
        assert rep.e1_pass_fraction <= rep.e2_pass_fraction
        if rep.e2_pass_fraction == 1.0:
            assert rep.e3_tail_mse <= eps ** 2
        assert rep.tail_start <= rep.window_start


def test_report_is_independent_of_worker_count():
    sys_ = catalog("linear", {"A": [[2.0]]})
    scheme = build_zoom_scheme([2.0], [3], 0.2, [1.0])
    one = evaluate(sys_, erasure(0.2), scheme, 1e-3, 12, 200, master_seed=9, workers=1)
    two = evaluate(sys_, erasure(0.2), scheme, 1e-3, 12, 200, master_seed=9, workers=2)
    assert one == two


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1e-6, 0.5))
def test_e1_never_exceeds_e2(seed, eps):
    sys_ = catalog("linear", {"A": [[1.5]]})
    scheme = build_zoom_scheme([1.5], [2], 0.4, [1.0])
    rep = evaluate(sys_, erasure(0.4), scheme, eps, 4, 120, master_seed=seed)
    assert rep.e1_pass_fraction <= rep.e2_pass_fraction


def test_zoom_sweep_threshold():
    sys_ = catalog("linear", {"A": [[2.0]]})
    chans = [erasure(p, 64) for p in (0.95, 0.9, 0.8, 0.5)]

    def factory(system, ch, eps):
        with pytest.warns(UserWarning) if 6 * (1 - ch.p) <= 1 else nullcontext():
            return build_zoom_scheme([2.0], [6], ch.p, [1.0])

    table = capacity_sweep(sys_, factory, chans, [1e-2, 1e-4], 20, 600, master_seed=4)
    # capacity 6 (1 - p) must exceed log2 2 = 1: p = 0.8 (capacity 1.2) is the first stable channel
    assert table[1e-2] == pytest.approx(1.2)
    assert table[1e-4] == pytest.approx(1.2)


def test_sweep_reports_inf_when_nothing_passes():
    sys_ = catalog("linear", {"A": [[4.0]]})

    def factory(system, ch, eps):
        raise ValueError("no scheme")

    table = capacity_sweep(sys_, factory, [erasure(0.5, 4)], [0.1, 0.01], 2, 50, master_seed=0)
    assert table == {0.1: math.inf, 0.01: math.inf}


@pytest.mark.slow
def test_rotation_sweep_is_monotone_and_finite(quiet):
    sys_ = rotation()

    def factory(system, ch, eps):
        return build_spanning_scheme(system, eps, ch, max_block=40, seed=3)

    chans = [noiseless(2 ** k) for k in (1, 2)]
    table = capacity_sweep(sys_, factory, chans, [0.2, 0.1], 10, 400, master_seed=3)
    values = [table[e] for e in (0.2, 0.1)]
    assert all(math.isfinite(v) for v in values)
    assert values[0] <= values[1]


def test_noisy_rotation_needs_ever_more_capacity():
    sys_ = catalog("rotation_noise", {"alpha": GOLDEN,
                                      "noise": {"kind": "gaussian", "variance": 1e-4}})
    chans = [noiseless(2 ** k) for k in (1, 2, 3, 4, 5)]

    def factory(system, ch, eps):
        x = simulate(system, 20_000, 11).states[:, 0]
        return MemorylessScheme(build_memoryless_quantizer(x, ch.input_alphabet_size,
                                                           central_range=(0, 100)))

    table = capacity_sweep(sys_, factory, chans, [0.1, 1e-4], 5, 200, master_seed=1)
    assert math.isfinite(table[0.1])
    assert table[1e-4] == math.inf
