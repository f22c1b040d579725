"""Separated/spanning set counting and entropy-rate estimates.

Everything is counted on finite point samples with a greedy scan in input
order: a point is kept iff its orbit is more than epsilon away (in the Bowen
metric) from every point kept before it.  The kept set is a maximal
separated subset and, by maximality, also a spanning set of the sample, so
one scan serves both counts.

Rates are in bits per time step throughout.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from estent.systems import SystemModel, child_seed, orbits

__all__ = [
    "LOG_BASE",
    "EntropyGridSpec",
    "EntropyEstimate",
    "GreedyCover",
    "greedy_cover",
    "count_separated",
    "count_spanning",
    "katok_discard",
    "fit_rate",
    "sample_points",
    "estimate_topological_entropy",
    "estimate_katok_metric_entropy",
    "estimate_fibered_entropy",
    "entropy_growth_curve",
    "trajectory_growth_estimate",
]

LOG_BASE = 2.0


def _log(x):
    return np.log(x) / np.log(LOG_BASE)


@dataclass(frozen=True)
class EntropyGridSpec:
    """Grid of resolutions and horizons for an entropy estimate.

    ``saturation`` is the fraction of ``sample_size`` above which a count is
    considered limited by the sample rather than by the dynamics; such cells
    are reported but excluded from the slope fits.
    """

    epsilons: tuple[float, ...] = tuple(2.0 ** -k for k in range(1, 8))
    horizons: tuple[int, ...] = tuple(range(1, 15))
    offset: int = 0
    sample_size: int = 20000
    discard_fraction: float = 0.0
    saturation: float = 0.05
    sampling: str = "auto"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        hor = tuple(int(n) for n in self.horizons)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "horizons", hor)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if not hor or hor[0] < 1 or any(a >= b for a, b in zip(hor, hor[1:])):
            raise ValueError("horizons must be strictly increasing positive integers")
        if self.offset < 0 or self.offset >= hor[0]:
            raise ValueError("offset must satisfy 0 <= offset < min(horizons)")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not 0.0 <= self.discard_fraction < 1.0:
            raise ValueError("discard_fraction must lie in [0, 1)")
        if self.sampling not in ("auto", "grid", "random"):
            raise ValueError("sampling must be auto, grid or random")

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "horizons": list(self.horizons),
            "offset": self.offset,
            "sample_size": self.sample_size,
            "discard_fraction": self.discard_fraction,
            "saturation": self.saturation,
            "sampling": self.sampling,
        }


@dataclass(frozen=True, eq=False)
class EntropyEstimate:
    """Count and rate tables over an (epsilon, n) grid.

    ``counts[i, j]`` belongs to ``grid.epsilons[i]`` and ``grid.horizons[j]``.
    ``per_epsilon_rate[i]`` is the least-squares slope of log2 count against n
    over the upper half of the unsaturated horizons (NaN if fewer than two).
    ``extrapolated_rate`` is the largest finite per-epsilon rate.
    For ``kind == "fibered"`` the tables hold the per-cell median over noise
    paths and ``per_epsilon_spread`` the standard deviation of the per-path
    slopes.
    """

    grid: EntropyGridSpec
    counts: np.ndarray
    rates: np.ndarray
    per_epsilon_rate: np.ndarray
    per_epsilon_stderr: np.ndarray
    extrapolated_rate: float
    kind: str
    fit_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_epsilon_spread: np.ndarray | None = None
    path_rates: np.ndarray | None = None

    def rate_table(self) -> dict[float, float]:
        return dict(zip(self.grid.epsilons, self.per_epsilon_rate.tolist()))


# greedy scan -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GreedyCover:
    """Result of one greedy scan: kept indices and, optionally, who covers whom."""

    kept: np.ndarray
    owner: np.ndarray
    members: list[np.ndarray] | None = None

    @property
    def count(self) -> int:
        return len(self.kept)


# The kd-tree only prefilters candidates on a few evenly spaced time slices
# (about _FILTER_DIMS coordinates in total); the exact check is done in numpy.
_FILTER_DIMS = 6
# Switch a table row to the neighbour-graph scan once counts pass M / this.
_GRAPH_SWITCH = 16
_MAX_CANDIDATE_PAIRS = 30_000_000
_PAIR_CHUNK = 500_000


def _circle(d, space):
    d = np.abs(d)
    if space == "torus":
        d = np.mod(d, 1.0)
        d = np.minimum(d, 1.0 - d)
    return d


def _bowen(segment_a, segment_b, space):
    d = _circle(segment_a - segment_b, space)
    return d.reshape(d.shape[0], -1).max(axis=1) if d.ndim > 2 else d.max(axis=-1)


def _filter_tree(seg, space):
    M, k, N = seg.shape
    n_slices = min(k, max(2, _FILTER_DIMS // N))
    slices = np.unique(np.linspace(0, k - 1, n_slices).round().astype(int))
    feats = np.ascontiguousarray(seg[:, slices].reshape(M, -1))
    return feats, cKDTree(feats, boxsize=1.0 if space == "torus" else None)


def _radius(epsilon):
    return epsilon * (1 + 1e-9) + 1e-12


def greedy_cover(segments: np.ndarray, epsilon: float, space: str,
                 keep_members: bool = False) -> GreedyCover:
    """Greedy maximal (epsilon)-separated subset of orbit segments.

    ``segments`` has shape ``(M, k, N)``; the distance between two segments
    is the max over time and coordinates (circle distance on the torus).
    Points at distance exactly epsilon are not separated.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    seg = np.ascontiguousarray(segments, dtype=float)
    M = seg.shape[0]
    feats, tree = _filter_tree(seg, space)
    radius = _radius(epsilon)
    covered = np.zeros(M, dtype=bool)
    owner = np.full(M, -1, dtype=np.int64)
    kept: list[int] = []
    members: list[np.ndarray] = []
    for i in range(M):
        if covered[i]:
            continue
        cand = np.asarray(tree.query_ball_point(feats[i], radius, p=np.inf), dtype=np.int64)
        close = cand[_bowen(seg[cand], seg[i][None], space) <= epsilon]
        owner[close[~covered[close]]] = len(kept)
        covered[close] = True
        kept.append(i)
        if keep_members:
            members.append(close)
    return GreedyCover(np.asarray(kept, dtype=np.int64), owner,
                       members if keep_members else None)


def neighbour_pairs(segments: np.ndarray, epsilon: float, space: str):
    """All index pairs ``(a, b)``, ``a < b``, at Bowen distance <= epsilon.

    Returns None when the prefilter would produce more than
    ``_MAX_CANDIDATE_PAIRS`` candidates (estimated from a small probe).
    """
    seg = np.ascontiguousarray(segments, dtype=float)
    M = seg.shape[0]
    feats, tree = _filter_tree(seg, space)
    radius = _radius(epsilon)
    probe = np.linspace(0, M - 1, min(M, 256)).astype(int)
    hits = tree.query_ball_point(feats[probe], radius, p=np.inf, return_length=True)
    if hits.mean() * M / 2 > _MAX_CANDIDATE_PAIRS:
        return None
    pairs = tree.query_pairs(radius, p=np.inf, output_type="ndarray")
    return refine_pairs(pairs, seg, epsilon, space, range(seg.shape[1]))


def refine_pairs(pairs, segments, epsilon, space, times):
    """Keep the pairs whose distance stays <= epsilon at every index in ``times``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    out = []
    for s in range(0, len(pairs), _PAIR_CHUNK):
        chunk = pairs[s:s + _PAIR_CHUNK]
        for t in times:
            if not len(chunk):
                break
            d = _circle(segments[chunk[:, 0], t] - segments[chunk[:, 1], t], space).max(axis=-1)
            chunk = chunk[d <= epsilon]
        out.append(chunk)
    pairs = np.concatenate(out) if out else pairs
    pairs = np.sort(pairs, axis=1)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def greedy_cover_from_pairs(M: int, pairs: np.ndarray, keep_members: bool = False) -> GreedyCover:
    """Same in-order greedy scan as :func:`greedy_cover`, on a precomputed
    neighbour graph (sorted pairs ``a < b``)."""
    ptr = np.searchsorted(pairs[:, 0], np.arange(M + 1))
    fwd_all = pairs[:, 1]
    covered = np.zeros(M, dtype=bool)
    owner = np.full(M, -1, dtype=np.int64)
    kept: list[int] = []
    for i in range(M):
        if covered[i]:
            continue
        fwd = fwd_all[ptr[i]:ptr[i + 1]]
        fwd = fwd[~covered[fwd]]
        owner[i] = len(kept)
        owner[fwd] = len(kept)
        covered[i] = True
        covered[fwd] = True
        kept.append(i)
    members = None
    if keep_members:
        both = np.concatenate([pairs, pairs[:, ::-1]])
        both = both[np.argsort(both[:, 0], kind="stable")]
        bptr = np.searchsorted(both[:, 0], np.arange(M + 1))
        members = [np.sort(np.append(both[bptr[i]:bptr[i + 1], 1], i)) for i in kept]
    return GreedyCover(np.asarray(kept, dtype=np.int64), owner, members)


def _segments(system, points, n, offset, noise_path):
    if offset < 0 or offset >= n:
        raise ValueError(f"offset must satisfy 0 <= offset < n (got offset={offset}, n={n})")
    if noise_path is None and not system.is_deterministic and n > 1:
        raise ValueError("noisy system: supply the noise path for fibered counting")
    orb = orbits(system, points, n, noise_path)
    return orb[:, offset:n]


def count_separated(system: SystemModel, points, n: int, epsilon: float,
                    offset: int = 0, noise_path=None) -> int:
    """Size of the greedy maximal (n, epsilon; offset)-separated subset of ``points``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(np.atleast_1d(points)) == 0:
        raise ValueError("points must be nonempty")
    seg = _segments(system, points, n, offset, noise_path)
    return greedy_cover(seg, epsilon, system.space).count


def count_spanning(system: SystemModel, points, n: int, epsilon: float,
                   noise_path=None) -> int:
    """Size of a greedy (n, epsilon)-spanning subset of ``points``.

    The greedy separated set is maximal, hence spans the sample; the scan
    asserts the coverage before returning.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    seg = _segments(system, points, n, 0, noise_path)
    cover = greedy_cover(seg, epsilon, system.space)
    assert (cover.owner >= 0).all(), "greedy scan left a point uncovered"
    return cover.count


def katok_discard(cover: GreedyCover, budget: int) -> int:
    """Cover size after discarding at most ``budget`` points.

    Repeatedly drops the cover element whose removal costs the fewest
    discarded points (points covered by no other remaining element), cheapest
    first, while the budget allows.  Requires ``cover.members``.
    """
    if cover.members is None:
        raise ValueError("cover was computed without member lists")
    if budget <= 0:
        return cover.count
    M = len(cover.owner)
    mult = np.zeros(M, dtype=np.int64)
    for mem in cover.members:
        mult[mem] += 1
    # point -> covering elements, needed when a multiplicity drops to 1
    flat_pts = np.concatenate(cover.members)
    flat_own = np.repeat(np.arange(cover.count), [len(m) for m in cover.members])
    order = np.argsort(flat_pts, kind="stable")
    flat_pts, flat_own = flat_pts[order], flat_own[order]
    starts = np.searchsorted(flat_pts, np.arange(M + 1))
    alive = np.ones(cover.count, dtype=bool)
    discarded = np.zeros(M, dtype=bool)
    cost = np.array([(mult[m] == 1).sum() for m in cover.members], dtype=np.int64)
    heap = [(int(c), j) for j, c in enumerate(cost)]
    heapq.heapify(heap)
    remaining = budget
    removed = 0
    while heap:
        c, j = heapq.heappop(heap)
        if not alive[j] or c != cost[j]:
            continue
        if c > remaining:
            break
        mem = cover.members[j]
        live = mem[~discarded[mem]]
        lone = live[mult[live] == 1]
        discarded[lone] = True
        remaining -= len(lone)
        alive[j] = False
        removed += 1
        shared = live[mult[live] > 1]
        mult[shared] -= 1
        for p in shared[mult[shared] == 1]:
            for o in flat_own[starts[p]:starts[p + 1]]:
                if alive[o]:
                    cost[o] += 1
                    heapq.heappush(heap, (int(cost[o]), int(o)))
    return cover.count - removed


# rate extraction -------------------------------------------------------


def fit_rate(horizons: Sequence[int], counts: Sequence[float], limit: float):
    """Slope of log2 count versus n over the upper half of the cells below ``limit``.

    Returns ``(slope, stderr, rms_residual)``; NaNs when fewer than two cells
    qualify.
    """
    n = np.asarray(horizons, dtype=float)
    c = np.asarray(counts, dtype=float)
    ok = np.flatnonzero(c <= limit)
    # counts grow with n, so the usable cells form a prefix of the grid
    if len(ok):
        ok = ok[: np.argmax(np.diff(np.append(ok, -1)) != 1) + 1]
    if len(ok) < 2:
        return math.nan, math.nan, math.nan
    take = ok[min(len(ok) // 2, len(ok) - 2):]
    x, y = n[take], _log(c[take])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        stderr = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    else:
        stderr = 0.0
    return float(coef[0]), stderr, float(np.sqrt(np.mean(resid ** 2)))


def _assemble(grid: EntropyGridSpec, counts: np.ndarray, kind: str, **extra) -> EntropyEstimate:
    limit = grid.saturation * grid.sample_size
    counts = np.asarray(counts)
    hor = np.asarray(grid.horizons, dtype=float)
    rates = _log(counts.astype(float)) / hor[None, :]
    fits = [fit_rate(grid.horizons, row, limit) for row in counts]
    slopes = np.array([f[0] for f in fits])
    stderr = np.array([f[1] for f in fits])
    resid = np.array([f[2] for f in fits])
    if "per_epsilon_rate" in extra:
        slopes = extra.pop("per_epsilon_rate")
    # h(eps) is nonincreasing in eps, so its limit is a supremum; sample
    # saturation only biases the small-eps fits downwards.
    valid = np.flatnonzero(np.isfinite(slopes))
    extrapolated = float(slopes[valid].max()) if len(valid) else math.nan
    return EntropyEstimate(grid=grid, counts=counts, rates=rates, per_epsilon_rate=slopes,
                           per_epsilon_stderr=stderr, extrapolated_rate=extrapolated,
                           kind=kind, fit_residuals=resid, **extra)


# sampling --------------------------------------------------------------


def _torus_grid(size: int, dim: int) -> np.ndarray:
    side = max(1, int(round(size ** (1.0 / dim))))
    axis = (np.arange(side) + 0.5) / side
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_points(system: SystemModel, grid: EntropyGridSpec, rng: np.random.Generator,
                  prefer: str = "grid") -> np.ndarray:
    """Initial-point sample: a midpoint grid on the torus, pi_0 draws otherwise."""
    mode = grid.sampling if grid.sampling != "auto" else prefer
    if system.space == "torus" and mode == "grid":
        return _torus_grid(grid.sample_size, system.state_dim)
    return np.asarray(system.initial_sampler(rng, grid.sample_size), dtype=float)


def _count_table(system, points, grid, noise_path=None, discard=0.0):
    nmax = max(grid.horizons)
    orb = orbits(system, points, nmax, noise_path)
    budget = int(math.floor(discard * len(points)))
    return _fill_table(orb, grid, system.space, budget)


def _fill_table(orb, grid, space, budget=0):
    """Count table over the grid from precomputed orbits ``orb`` (M, nmax, N).

    Each epsilon row starts with the per-point tree scan.  Once the counts
    are large (small Bowen balls) the exact neighbour graph is built and
    then only pruned as n grows, since Bowen neighbourhoods shrink with n.
    """
    M = len(orb)
    keep_members = budget > 0
    table = np.zeros((len(grid.epsilons), len(grid.horizons)), dtype=np.int64)
    full = np.zeros_like(table, dtype=bool)
    for i, eps in enumerate(grid.epsilons):
        pairs, upto = None, grid.offset
        for j, n in enumerate(grid.horizons):
            # A fully separated sample stays so for larger n and smaller eps.
            if (i > 0 and full[i - 1, j]) or (j > 0 and full[i, j - 1]):
                full[i, j] = True
                table[i, j] = M - budget if keep_members else M
                continue
            seg = orb[:, grid.offset:n]
            if pairs is not None:
                pairs = refine_pairs(pairs, orb, eps, space, range(upto, n))
                upto = n
                cover = greedy_cover_from_pairs(M, pairs, keep_members)
            else:
                cover = greedy_cover(seg, eps, space, keep_members)
                if cover.count * _GRAPH_SWITCH >= M and cover.count < M:
                    pairs, upto = neighbour_pairs(seg, eps, space), n
            full[i, j] = cover.count == M
            table[i, j] = katok_discard(cover, budget) if keep_members else cover.count
    return table


def estimate_topological_entropy(system: SystemModel, grid: EntropyGridSpec,
                                 seed: int) -> EntropyEstimate:
    """Separated-set counts over the grid and fitted growth rates."""
    if not system.is_deterministic:
        raise ValueError("system is noisy; use estimate_fibered_entropy or entropy_growth_curve")
    rng = np.random.default_rng(seed)
    # Midpoint lattices are invariant under toral automorphisms, which makes
    # the counts arithmetic rather than geometric; use them in 1-d only.
    points = sample_points(system, grid, rng,
                           prefer="grid" if system.state_dim == 1 else "random")
    g = replace(grid, sample_size=len(points))
    return _assemble(g, _count_table(system, points, g), "topological")


def estimate_katok_metric_entropy(system: SystemModel, grid: EntropyGridSpec,
                                  seed: int) -> EntropyEstimate:
    """Spanning counts of pi_0 samples after discarding a delta-fraction of points."""
    if not system.is_deterministic:
        raise ValueError("system is noisy; use estimate_fibered_entropy")
    rng = np.random.default_rng(seed)
    points = sample_points(system, grid, rng, prefer="random")
    return _assemble(grid, _count_table(system, points, grid, discard=grid.discard_fraction),
                     "katok_metric")


def estimate_fibered_entropy(system: SystemModel, grid: EntropyGridSpec,
                             n_noise_paths: int, seed: int) -> EntropyEstimate:
    """Katok-style spanning counts along independently drawn noise paths.

    For each path all initial points are driven by the same noise sequence;
    per-path slopes are averaged.
    """
    if system.is_deterministic:
        raise ValueError("system is deterministic; use the non-fibered estimators")
    if n_noise_paths < 1:
        raise ValueError("n_noise_paths must be >= 1")
    nmax = max(grid.horizons)
    limit = grid.saturation * grid.sample_size
    tables, slopes = [], []
    for k in range(n_noise_paths):
        rng = np.random.default_rng(child_seed(seed, k))
        points = sample_points(system, grid, rng, prefer="random")
        path = system.noise_sampler(rng, nmax - 1)
        table = _count_table(system, points, grid, noise_path=path,
                             discard=grid.discard_fraction)
        tables.append(table)
        slopes.append([fit_rate(grid.horizons, row, limit)[0] for row in table])
    tables = np.array(tables)
    slopes = np.array(slopes)
    finite = np.isfinite(slopes)
    n_ok = finite.sum(axis=0)
    filled = np.where(finite, slopes, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n_ok > 0, filled.sum(axis=0) / n_ok, math.nan)
        var = np.where(finite, (filled - mean) ** 2, 0.0).sum(axis=0) / n_ok
    spread = np.where(n_ok > 0, np.sqrt(var), math.nan)
    median = np.rint(np.median(tables, axis=0)).astype(np.int64)
    return _assemble(grid, median, "fibered", per_epsilon_rate=mean,
                     per_epsilon_spread=spread, path_rates=slopes)


def entropy_growth_curve(system: SystemModel, grid: EntropyGridSpec,
                         seed: int) -> dict[float, float]:
    """Per-epsilon growth rates of separated sets in trajectory space.

    Points are length-n trajectory prefixes with independent initial states
    and independent noise; two trajectories are separated when they differ
    by more than epsilon at some time index.
    """
    if system.is_deterministic:
        raise ValueError("system is deterministic; use estimate_topological_entropy")
    return trajectory_growth_estimate(system, grid, seed).rate_table()


def trajectory_growth_estimate(system: SystemModel, grid: EntropyGridSpec, seed: int) -> EntropyEstimate:
    rng = np.random.default_rng(seed)
    M = grid.sample_size
    nmax = max(grid.horizons)
    x0 = np.asarray(system.initial_sampler(rng, M), dtype=float)
    noise = system.noise_sampler(rng, M * max(nmax - 1, 0))
    noise = noise.reshape(M, max(nmax - 1, 0), system.noise_dim).transpose(1, 0, 2)
    traj = orbits(system, x0, nmax, noise_path=noise)
    return _assemble(grid, _fill_table(traj, grid, system.space), "trajectory")
