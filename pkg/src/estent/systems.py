"""Discrete-time stochastic systems x_{t+1} = f(x_t, w_t).

States live either in R^N or on the N-torus [0, 1)^N.  All maps are
vectorised: ``step_map(x, w)`` accepts a batch of states of shape
``(..., N)`` and noise of shape ``(..., noise_dim)`` (broadcastable), so
the same code path serves single trajectories, clouds of initial points
driven by one shared noise path, and clouds with independent noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

__all__ = [
    "NoiseSpec",
    "SystemModel",
    "TrajectoryBlock",
    "CATALOG_NAMES",
    "catalog",
    "child_seed",
    "simulate",
    "orbit_distance",
    "orbits",
    "wrap_unit",
    "torus_distance",
    "sup_distance",
]

CATALOG_NAMES = (
    "doubling",
    "cat_map",
    "rotation_noise",
    "linear",
    "ar_gaussian",
    "additive_nonlinear",
)


def child_seed(master_seed: int, index: int) -> int:
    """Derive the seed of trial ``index`` from a 64-bit master seed.

    Uses numpy's ``SeedSequence`` spawn keys, so child seeds depend only on
    ``(master_seed, index)`` and never on the order trials are executed in.
    """
    ss = np.random.SeedSequence(int(master_seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def wrap_unit(x):
    """Reduce modulo 1 into [0, 1) exactly (np.mod can return 1.0 for -tiny)."""
    y = np.mod(x, 1.0)
    return np.where(y >= 1.0, 0.0, y)


def torus_distance(x, y):
    """Sup over coordinates of the circle distance; at most 0.5."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    d = np.mod(d, 1.0)
    d = np.minimum(d, 1.0 - d)
    return d.max(axis=-1)


def sup_distance(x, y):
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return d.max(axis=-1)


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the i.i.d. noise w_t.

    kind is one of ``none``, ``gaussian`` (per-coordinate ``variance``),
    ``uniform`` (per-coordinate interval ``[low, low + width)``) or
    ``finite`` (``support`` values with probabilities ``pmf``).
    """

    kind: str = "none"
    variance: float = 0.0
    width: float = 0.0
    low: float | None = None
    support: tuple[float, ...] = ()
    pmf: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform", "finite"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ValueError("gaussian noise needs a positive variance")
        if self.kind == "uniform" and not self.width > 0:
            raise ValueError("uniform noise needs a positive width")
        if self.kind == "finite":
            if len(self.support) == 0:
                raise ValueError("finite noise needs a nonempty support")
            pmf = self.pmf or tuple([1.0 / len(self.support)] * len(self.support))
            if len(pmf) != len(self.support):
                raise ValueError("pmf and support lengths differ")
            if min(pmf) < 0 or abs(sum(pmf) - 1.0) > 1e-12:
                raise ValueError("pmf must be a probability vector")
            object.__setattr__(self, "pmf", tuple(float(p) for p in pmf))

    @property
    def is_deterministic(self) -> bool:
        return self.kind == "none"

    def sample(self, rng: np.random.Generator, size: int, dim: int) -> np.ndarray:
        """Draw ``size`` i.i.d. noise vectors of length ``dim``."""
        if self.kind == "none":
            return np.zeros((size, dim))
        if self.kind == "gaussian":
            return rng.normal(0.0, np.sqrt(self.variance), size=(size, dim))
        if self.kind == "uniform":
            low = -self.width / 2 if self.low is None else self.low
            return low + self.width * rng.random((size, dim))
        idx = rng.choice(len(self.support), size=(size, dim), p=np.asarray(self.pmf))
        return np.asarray(self.support, dtype=float)[idx]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "gaussian":
            out["variance"] = self.variance
        elif self.kind == "uniform":
            out["width"] = self.width
            if self.low is not None:
                out["low"] = self.low
        elif self.kind == "finite":
            out["support"] = list(self.support)
            out["pmf"] = list(self.pmf)
        return out

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "NoiseSpec":
        if d is None:
            return cls()
        d = dict(d)
        kind = d.pop("kind", "none")
        if "sigma2" in d:
            d["variance"] = d.pop("sigma2")
        for key in ("support", "pmf"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        unknown = set(d) - {"variance", "width", "low", "support", "pmf"}
        if unknown:
            raise ValueError(f"unknown noise parameters {sorted(unknown)}")
        return cls(kind=kind, **d)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """A map f(x, w) with noise law, initial law and metric.

    ``initial_sampler(rng, size)`` returns an array ``(size, state_dim)``.
    ``additive`` marks systems of the form f(x) + w (used by the entropy
    rate bound); ``matrix`` holds A for linear systems.
    """

    name: str
    state_dim: int
    step_map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: NoiseSpec
    noise_dim: int
    initial_sampler: Callable[[np.random.Generator, int], np.ndarray]
    space: str = "euclidean"
    additive: bool = False
    matrix: np.ndarray | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        if self.space not in ("euclidean", "torus"):
            raise ValueError(f"unknown space {self.space!r}")

    @property
    def noise_kind(self) -> str:
        return self.noise.kind

    @property
    def is_deterministic(self) -> bool:
        return self.noise.is_deterministic

    def metric(self, x, y):
        if self.space == "torus":
            return torus_distance(x, y)
        return sup_distance(x, y)

    def noise_sampler(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.noise.sample(rng, size, self.noise_dim)

    def step(self, x, w=None):
        x = np.asarray(x, dtype=float)
        if w is None:
            w = np.zeros(self.noise_dim)
        return self.step_map(x, np.asarray(w, dtype=float))


@dataclass(frozen=True, eq=False)
class TrajectoryBlock:
    states: np.ndarray
    estimates: np.ndarray | None = None
    noise_draws: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.estimates is not None and len(self.estimates) != len(self.states):
            raise ValueError("estimates and states must have equal length")
        if self.noise_draws is not None and len(self.noise_draws) != max(len(self.states) - 1, 0):
            raise ValueError("noise_draws must have length len(states) - 1")

    def __len__(self):
        return len(self.states)

    def errors(self, system: SystemModel) -> np.ndarray:
        if self.estimates is None:
            raise ValueError("block carries no estimates")
        return system.metric(self.states, self.estimates)


def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise OverflowError(f"state became non-finite at step {t}")


def simulate(system: SystemModel, horizon: int, seed: int) -> TrajectoryBlock:
    """Generate x_0, ..., x_{horizon-1} with x_0 ~ pi_0 and recorded noise."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(system.initial_sampler(rng, 1), dtype=float)[0]
    noise = system.noise_sampler(rng, horizon - 1)
    states = np.empty((horizon, system.state_dim))
    states[0] = x0
    # overflow is reported by _check_finite, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(horizon - 1):
            states[t + 1] = system.step_map(states[t], noise[t])
            _check_finite(states[t + 1], t + 1)
    states.flags.writeable = False
    noise.flags.writeable = False
    return TrajectoryBlock(states=states, noise_draws=noise, seed=seed)


def orbits(system: SystemModel, points, n: int, noise_path=None) -> np.ndarray:
    """Orbit segments of a point cloud, shape ``(M, n, N)``.

    All points are driven by the same ``noise_path`` (length >= n - 1), or
    by zero noise for deterministic systems.  A ``noise_path`` of shape
    ``(n - 1, M, noise_dim)`` drives each point independently.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != system.state_dim:
        pts = pts.reshape(-1, system.state_dim)
    out = np.empty((len(pts), n, system.state_dim))
    out[:, 0] = pts
    path = _noise_for(system, noise_path, n)
    for t in range(n - 1):
        out[:, t + 1] = system.step_map(out[:, t], path[t])
    return out


def _noise_for(system: SystemModel, noise_path, n: int) -> np.ndarray:
    if noise_path is None or len(noise_path) == 0:
        if not system.is_deterministic and n > 1:
            raise ValueError("noisy system needs a noise path of length >= n - 1")
        return np.zeros((max(n - 1, 0), system.noise_dim))
    path = np.asarray(noise_path, dtype=float)
    if len(path) < n - 1:
        raise ValueError(f"noise path of length {len(path)} is too short for n={n}")
    if path.ndim == 1:
        path = path[:, None]
    return path


def orbit_distance(system: SystemModel, x, y, n: int, noise_path=()) -> float:
    """Bowen distance max_{0<=i<n} d(f^i x, f^i y), both orbits driven by the same noise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    orb = orbits(system, np.vstack([np.atleast_1d(x), np.atleast_1d(y)]), n, noise_path)
    return float(system.metric(orb[0], orb[1]).max())


# catalog ---------------------------------------------------------------


def _point_mass(x0, dim):
    x0 = np.asarray(x0, dtype=float).reshape(dim)

    def sampler(rng, size):
        return np.tile(x0, (size, 1))

    return sampler


def _uniform_box(low, high, dim):
    def sampler(rng, size):
        return low + (high - low) * rng.random((size, dim))

    return sampler


def _initial(params, dim, space):
    if "x0" in params:
        return _point_mass(params["x0"], dim)
    if space == "torus":
        return _uniform_box(0.0, 1.0, dim)
    hw = float(params.get("initial_halfwidth", 1.0))
    return _uniform_box(-hw, hw, dim)


def _noise(params, default):
    spec = params.get("noise", default)
    if isinstance(spec, NoiseSpec):
        return spec
    return NoiseSpec.from_dict(spec)


def catalog(name: str, params: Mapping[str, Any] | None = None) -> SystemModel:
    """Instantiate a named system.

    ``doubling``            x -> 2x mod 1 on the circle
    ``cat_map``             (x, y) -> (2x + y, x + y) mod 1
    ``rotation_noise``      x -> x + alpha + w mod 1 (uniform noise on [0,1) by default)
    ``linear``              x -> A x + w on R^N
    ``ar_gaussian``         x_t = -sum_k a_k x_{t-k} + w_t in companion form
    ``additive_nonlinear``  x -> a x + b sin(x) + w on R

    Every system accepts ``x0`` (point-mass initial law).
    """
    params = dict(params or {})
    if name == "doubling":
        def f(x, w):
            return wrap_unit(2.0 * x)

        return SystemModel(name, 1, f, NoiseSpec(), 1, _initial(params, 1, "torus"),
                           space="torus", params=params)

    if name == "cat_map":
        def f(x, w):
            out = np.empty_like(x)
            out[..., 0] = 2.0 * x[..., 0] + x[..., 1]
            out[..., 1] = x[..., 0] + x[..., 1]
            return wrap_unit(out)

        return SystemModel(name, 2, f, NoiseSpec(), 2, _initial(params, 2, "torus"),
                           space="torus", params=params)

    if name == "rotation_noise":
        alpha = float(params.get("alpha", 0.0))
        noise = _noise(params, {"kind": "uniform", "width": 1.0, "low": 0.0})

        def f(x, w):
            return wrap_unit(x + alpha + w)

        return SystemModel(name, 1, f, noise, 1, _initial(params, 1, "torus"),
                           space="torus", additive=True, params=params)

    if name == "linear":
        if "A" not in params:
            raise ValueError("linear system needs a matrix A")
        A = np.atleast_2d(np.asarray(params["A"], dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        noise = _noise(params, {"kind": "none"})

        def f(x, w):
            return x @ A.T + w

        return SystemModel(name, n, f, noise, n, _initial(params, n, "euclidean"),
                           additive=True, matrix=A, params=params)

    if name == "ar_gaussian":
        a = np.atleast_1d(np.asarray(params.get("a", []), dtype=float))
        if a.ndim != 1 or len(a) == 0:
            raise ValueError("ar_gaussian needs a nonempty coefficient list a")
        sigma2 = float(params.get("sigma2", 1.0))
        m = len(a)
        A = np.zeros((m, m))
        A[0] = -a
        A[1:, :-1] = np.eye(m - 1)

        def f(x, w):
            out = x @ A.T
            out[..., 0] = out[..., 0] + w[..., 0]
            return out

        return SystemModel(name, m, f, NoiseSpec("gaussian", variance=sigma2), 1,
                           _initial(params, m, "euclidean"), additive=True, matrix=A,
                           params=params)

    if name == "additive_nonlinear":
        a = float(params.get("a", 0.5))
        b = float(params.get("b", 1.0))
        noise = _noise(params, {"kind": "gaussian", "variance": 1.0})

        def f(x, w):
            return a * x + b * np.sin(x) + w

        return SystemModel(name, 1, f, noise, 1, _initial(params, 1, "euclidean"),
                           additive=True, params=params)

    raise ValueError(f"unknown system {name!r}; expected one of {', '.join(CATALOG_NAMES)}")
