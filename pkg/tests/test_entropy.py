import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estent.entropy import (LOG_BASE, EntropyGridSpec, count_separated, count_spanning,
                            entropy_growth_curve, estimate_fibered_entropy,
                            estimate_katok_metric_entropy, estimate_topological_entropy, fit_rate,
                            greedy_cover, greedy_cover_from_pairs, katok_discard, neighbour_pairs,
                            trajectory_growth_estimate)
from estent.systems import SystemModel, catalog, orbits, wrap_unit

DOUBLING = catalog("doubling")
SMALL = dict(epsilons=tuple(2.0 ** -k for k in range(1, 6)), sample_size=8000)


def brute_force_greedy(orb, eps, space="torus"):
    """Pairwise in-order greedy scan; returns kept indices."""
    kept = []
    for i in range(len(orb)):
        ok = True
        for k in kept:
            d = np.abs(orb[i] - orb[k])
            if space == "torus":
                d = np.minimum(d, 1 - d)
            if d.max() <= eps:
                ok = False
                break
        if ok:
            kept.append(i)
    return kept


def doubling_orbits(pts, n):
    return np.stack([(pts * 2 ** i) % 1 for i in range(n)], axis=1)


# counting ---------------------------------------------------------------


def test_single_point_counts_one():
    assert count_separated(DOUBLING, [[0.3]], 5, 0.01) == 1
    assert count_spanning(DOUBLING, [[0.3]], 5, 0.01) == 1


@pytest.mark.parametrize("grid", [np.arange(1024) / 1024, (np.arange(1024) + 0.5) / 1024])
def test_doubling_grid_count_matches_brute_force(grid):
    got = count_separated(DOUBLING, grid[:, None], 3, 0.2)
    assert got == len(brute_force_greedy(doubling_orbits(grid, 3), 0.2))
    assert got == count_spanning(DOUBLING, grid[:, None], 3, 0.2)
    assert got == 19


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_counts_match_brute_force_small_n(n):
    pts = np.random.default_rng(n).random(700)
    for eps in (0.3, 0.1, 0.03):
        want = len(brute_force_greedy(doubling_orbits(pts, n), eps))
        assert count_separated(DOUBLING, pts[:, None], n, eps) == want


def test_offset_equals_last_time_slice_count():
    pts = np.random.default_rng(0).random(2000)
    n = 5
    last = (pts * 2 ** (n - 1)) % 1
    want = len(brute_force_greedy(last[:, None], 0.05))
    assert count_separated(DOUBLING, pts[:, None], n, 0.05, offset=n - 1) == want


def test_offset_window_matches_brute_force():
    pts = np.random.default_rng(1).random(1500)
    orb = doubling_orbits(pts, 6)
    want = len(brute_force_greedy(orb[:, 2:], 0.1))
    assert count_separated(DOUBLING, pts[:, None], 6, 0.1, offset=2) == want


def test_cat_map_counts_match_brute_force():
    cat = catalog("cat_map")
    pts = np.random.default_rng(2).random((600, 2))
    orb = orbits(cat, pts, 4)
    want = len(brute_force_greedy(orb, 0.1))
    assert count_separated(cat, pts, 4, 0.1) == want


def test_strict_separation_at_exactly_epsilon():
    pts = np.array([[0.0], [0.25], [0.5]])
    # 0.25 sits exactly eps from 0 and is absorbed; 0.5 is farther and kept
    assert count_separated(DOUBLING, pts, 1, 0.25) == 2
    assert count_separated(DOUBLING, pts, 1, 0.2499) == 3


def test_euclidean_counts_match_brute_force():
    lin = catalog("linear", {"A": [[1.5]]})
    pts = np.random.default_rng(3).uniform(-1, 1, 800)
    orb = orbits(lin, pts[:, None], 4)
    want = len(brute_force_greedy(orb, 0.05, space="euclidean"))
    assert count_separated(lin, pts[:, None], 4, 0.05) == want


def test_large_epsilon_spans_with_one_point():
    pts = np.random.default_rng(4).random((300, 1))
    assert count_spanning(DOUBLING, pts, 6, 0.5) == 1


def test_counting_errors():
    with pytest.raises(ValueError):
        count_separated(DOUBLING, [[0.1]], 3, 0.0)
    with pytest.raises(ValueError):
        count_separated(DOUBLING, [[0.1]], 3, 0.1, offset=3)
    with pytest.raises(ValueError):
        count_separated(DOUBLING, np.zeros((0, 1)), 3, 0.1)
    with pytest.raises(ValueError):
        count_separated(catalog("rotation_noise"), [[0.1], [0.2]], 3, 0.1)


def test_neighbour_graph_scan_equals_tree_scan():
    pts = np.random.default_rng(5).random((3000, 1))
    seg = orbits(DOUBLING, pts, 7)
    for eps in (0.05, 0.01):
        pairs = neighbour_pairs(seg, eps, "torus")
        a = greedy_cover(seg, eps, "torus", keep_members=True)
        b = greedy_cover_from_pairs(len(seg), pairs, keep_members=True)
        assert np.array_equal(a.kept, b.kept)
        assert all(np.array_equal(np.sort(x), y) for x, y in zip(a.members, b.members))


# duality and monotonicity ------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 6), st.sampled_from([0.3, 0.1, 0.04, 0.01]),
       st.sampled_from(["doubling", "cat_map", "rotation"]))
def test_greedy_separated_set_covers_the_sample(seed, n, eps, name):
    system = catalog(name) if name != "rotation" else catalog(
        "rotation_noise", {"alpha": 0.3819660112501051, "noise": {"kind": "none"}})
    pts = np.random.default_rng(seed).random((1000, system.state_dim))
    seg = orbits(system, pts, n)
    cover = greedy_cover(seg, eps, system.space)
    kept = seg[cover.kept]
    # every point is within eps of some kept point (exhaustive check)
    d = np.abs(seg[:, None] - kept[None])
    d = np.minimum(d, 1 - d).max(axis=(2, 3))
    assert (d.min(axis=1) <= eps).all()
    # kept points are pairwise more than eps apart
    dk = d[cover.kept]
    np.fill_diagonal(dk, np.inf)
    assert (dk > eps).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_counts_are_monotone_on_catalog_samples(seed):
    pts = np.random.default_rng(seed).random((1500, 1))
    eps_grid = [0.2, 0.1, 0.05, 0.02]
    table = np.array([[count_separated(DOUBLING, pts, n, e) for n in range(1, 8)] for e in eps_grid])
    assert (np.diff(table, axis=1) >= 0).all()
    assert (np.diff(table, axis=0) >= 0).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 6), st.sampled_from([0.2, 0.05, 0.02]))
def test_greedy_count_bounded_by_spanning_at_double_radius(seed, n, eps):
    pts = np.random.default_rng(seed).random((1200, 1))
    seg = orbits(DOUBLING, pts, n)
    sep = greedy_cover(seg, eps, "torus").count
    # any separated set injects into a cover at half the separation
    assert greedy_cover(seg, 2 * eps, "torus").count <= sep


# estimators --------------------------------------------------------------


def test_rate_identity_uses_base_two():
    g = EntropyGridSpec(horizons=tuple(range(1, 9)), sample_size=3000, **{"epsilons": (0.25, 0.1)})
    est = estimate_topological_entropy(DOUBLING, g, seed=0)
    assert LOG_BASE == 2.0
    expected = np.log2(est.counts) / np.asarray(g.horizons)[None, :]
    assert np.array_equal(est.rates, expected) or np.allclose(est.rates, expected, rtol=0, atol=1e-15)


def test_fit_rate_recovers_exact_slope():
    n = np.arange(1, 11)
    slope, se, resid = fit_rate(n, 3.0 * 2.0 ** (1.5 * n), limit=np.inf)
    assert slope == pytest.approx(1.5, abs=1e-12) and resid < 1e-9 and se < 1e-9
    assert math.isnan(fit_rate(n, np.full(10, 1e9), limit=10)[0])


def test_offset_consistency_on_doubling():
    base = estimate_topological_entropy(
        DOUBLING, EntropyGridSpec(horizons=tuple(range(3, 15)), **SMALL), seed=0)
    shifted = estimate_topological_entropy(
        DOUBLING, EntropyGridSpec(horizons=tuple(range(3, 15)), offset=2, **SMALL), seed=0)
    assert abs(base.extrapolated_rate - shifted.extrapolated_rate) <= 0.1
    both = np.isfinite(base.per_epsilon_rate) & np.isfinite(shifted.per_epsilon_rate)
    assert np.all(np.abs(base.per_epsilon_rate[both] - shifted.per_epsilon_rate[both]) <= 0.1)


def test_conjugacy_by_rotation_leaves_estimate_unchanged():
    # y = x + 0.37 conjugates the doubling map to y -> 2y - 0.37 mod 1
    shifted = SystemModel("doubling_shifted", 1, lambda x, w: wrap_unit(2.0 * x - 0.37),
                          DOUBLING.noise, 1, DOUBLING.initial_sampler, space="torus")
    g = EntropyGridSpec(**SMALL)
    a = estimate_topological_entropy(DOUBLING, g, seed=0).extrapolated_rate
    b = estimate_topological_entropy(shifted, g, seed=0).extrapolated_rate
    assert abs(a - b) <= 0.05 and 0.9 <= a <= 1.1


def test_counts_relabelled_by_rotation_match():
    pts = np.random.default_rng(6).random((4000, 1))
    moved = wrap_unit(pts + 0.37)
    for n in (4, 8):
        a = count_separated(DOUBLING, pts, n, 0.05)
        b = count_separated(DOUBLING, moved, n, 0.05)
        assert abs(math.log2(a) - math.log2(b)) / n <= 0.05


def test_rotation_counts_constant_in_n():
    rot = catalog("rotation_noise", {"alpha": 0.3819660112501051, "noise": {"kind": "none"}})
    est = estimate_topological_entropy(rot, EntropyGridSpec(**SMALL), seed=0)
    assert (est.counts == est.counts[:, :1]).all()
    assert 0.0 <= est.extrapolated_rate <= 0.05


def test_topological_refuses_noisy_systems():
    with pytest.raises(ValueError, match="fibered"):
        estimate_topological_entropy(catalog("rotation_noise"), EntropyGridSpec(), 0)


def test_katok_without_discard_equals_plain_spanning():
    g = EntropyGridSpec(horizons=(1, 2, 3, 4, 5), epsilons=(0.2, 0.05), sample_size=1500)
    est = estimate_katok_metric_entropy(DOUBLING, g, seed=3)
    pts = DOUBLING.initial_sampler(np.random.default_rng(3), 1500)
    want = [[count_spanning(DOUBLING, pts, n, e) for n in g.horizons] for e in g.epsilons]
    assert np.array_equal(est.counts, want)


def test_katok_discard_respects_budget_and_lowers_counts():
    pts = np.random.default_rng(7).random((2000, 1))
    seg = orbits(DOUBLING, pts, 6)
    cover = greedy_cover(seg, 0.05, "torus", keep_members=True)
    assert katok_discard(cover, 0) == cover.count
    small = katok_discard(cover, 100)
    assert small < cover.count
    # removing k elements must free at least the points only they cover
    lone = sorted(int((np.bincount(np.concatenate(cover.members), minlength=2000)[m] == 1).sum())
                  for m in cover.members)
    assert cover.count - small <= np.searchsorted(np.cumsum(lone), 100, side="right")


def test_katok_point_mass_at_fixed_point():
    fixed = catalog("doubling", {"x0": [0.0]})
    g = EntropyGridSpec(horizons=(1, 2, 3, 4), epsilons=(0.1, 0.01), sample_size=200,
                        discard_fraction=0.05)
    est = estimate_katok_metric_entropy(fixed, g, seed=0)
    assert (est.counts == 1).all()


@pytest.mark.slow
def test_katok_doubling_rate():
    g = EntropyGridSpec(discard_fraction=0.05, sample_size=10000,
                        epsilons=tuple(2.0 ** -k for k in range(2, 7)))
    est = estimate_katok_metric_entropy(DOUBLING, g, seed=0)
    assert 0.9 <= est.extrapolated_rate <= 1.1


FIB = EntropyGridSpec(sample_size=3000, discard_fraction=0.05,
                      epsilons=tuple(2.0 ** -k for k in range(2, 7)))


def test_fibered_rotation_is_flat():
    est = estimate_fibered_entropy(catalog("rotation_noise"), FIB, n_noise_paths=2, seed=0)
    assert (est.counts == est.counts[:, :1]).all()
    finite = est.path_rates[np.isfinite(est.path_rates)]
    assert np.all(np.abs(finite) <= 1e-9)


@pytest.mark.slow
def test_fibered_linear_expansion_rate():
    lin = catalog("linear", {"A": [[2.0]], "noise": {"kind": "gaussian", "variance": 1.0}})
    est = estimate_fibered_entropy(lin, FIB, n_noise_paths=3, seed=0)
    finite = est.path_rates[np.isfinite(est.path_rates)]
    assert 0.9 <= est.extrapolated_rate <= 1.1
    assert np.all((finite >= 0.8) & (finite <= 1.2))


def test_fibered_contraction_rate():
    lin = catalog("linear", {"A": [[0.5]], "noise": {"kind": "gaussian", "variance": 1.0}})
    est = estimate_fibered_entropy(lin, FIB, n_noise_paths=2, seed=0)
    assert 0.0 <= est.extrapolated_rate <= 0.05


def test_fibered_refuses_deterministic_systems():
    with pytest.raises(ValueError):
        estimate_fibered_entropy(DOUBLING, FIB, 2, 0)


def test_fibered_shared_noise_oracle():
    # small-T fibered counts equal a brute-force scan over orbits driven by one path
    lin = catalog("linear", {"A": [[2.0]], "noise": {"kind": "gaussian", "variance": 1.0}})
    rng = np.random.default_rng(9)
    pts = rng.uniform(-1, 1, (600, 1))
    path = rng.normal(size=(4, 1))
    orb = orbits(lin, pts, 5, path)
    want = len(brute_force_greedy(orb, 0.1, space="euclidean"))
    assert count_separated(lin, pts, 5, 0.1, noise_path=path) == want


def test_growth_curve_point_mass_noise_matches_deterministic():
    rot_alpha = {"alpha": 0.3819660112501051}
    noisy = catalog("rotation_noise", {**rot_alpha, "noise": {"kind": "finite", "support": [0.0]}})
    det = catalog("rotation_noise", {**rot_alpha, "noise": {"kind": "none"}})
    g = EntropyGridSpec(horizons=(1, 2, 3, 4, 5, 6), sample_size=2000, sampling="random",
                        epsilons=(0.25, 0.1, 0.05))
    curve = entropy_growth_curve(noisy, g, seed=0)
    est = estimate_katok_metric_entropy(det, g, seed=0)
    assert np.allclose(list(curve.values()), est.per_epsilon_rate, equal_nan=True)
    with pytest.raises(ValueError):
        entropy_growth_curve(det, g, seed=0)


def test_growth_curve_small_scale():
    g = EntropyGridSpec(horizons=(1, 2, 3, 4, 5), epsilons=(0.25, 0.125), sample_size=4000)
    est = trajectory_growth_estimate(catalog("rotation_noise"), g, seed=1)
    # trajectories of i.i.d. uniform points: a greedy packing has between
    # (1/(2 eps))^n and (1/eps)^n members
    for eps, rate in zip(g.epsilons, est.per_epsilon_rate):
        assert math.log2(1 / (2 * eps)) - 0.2 <= rate <= math.log2(1 / eps)


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        EntropyGridSpec(epsilons=(0.1, 0.2))
    with pytest.raises(ValueError):
        EntropyGridSpec(horizons=(3, 2))
    with pytest.raises(ValueError):
        EntropyGridSpec(offset=1, horizons=(1, 2))
    with pytest.raises(ValueError):
        EntropyGridSpec(sample_size=0)
    with pytest.raises(ValueError):
        EntropyGridSpec(discard_fraction=1.0)
