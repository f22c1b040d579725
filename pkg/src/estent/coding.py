"""Coder/estimator schemes.

* random block codes with maximum-likelihood decoding,
* the pipelined spanning-set scheme for deterministic maps over a DMC,
* the adaptive zoom quantizer for linear systems over an erasure channel,
* memoryless scalar quantizers (uniform, optionally Lloyd-refined).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from estent.channels import Channel, capacity, erasure
from estent.entropy import greedy_cover
from estent.systems import SystemModel, TrajectoryBlock, child_seed, orbits, simulate

__all__ = [
    "BudgetError",
    "InvariantViolation",
    "BlockCode",
    "build_block_code",
    "SchemeRun",
    "SpanningScheme",
    "sampling_times",
    "build_spanning_scheme",
    "run_spanning_scheme",
    "ZoomScheme",
    "build_zoom_scheme",
    "run_zoom_scheme",
    "stability_margin",
    "kappa",
    "MemorylessQuantizer",
    "build_memoryless_quantizer",
    "lloyd_refine",
]


class BudgetError(RuntimeError):
    """Spanning sets do not fit the channel's message budget."""


class InvariantViolation(RuntimeError):
    """A scheme's online invariant failed (e.g. the state left the zoom bracket)."""


_LOG_FLOOR = 1e-300


# block codes -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockCode:
    """Codebook ``codewords[c]`` (message_count x block_length) with its decoder."""

    channel: Channel
    codewords: np.ndarray
    decode_rule: str
    empirical_error_rate: float

    @property
    def message_count(self) -> int:
        return self.codewords.shape[0]

    @property
    def block_length(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        if self.block_length == 0:
            return 0.0
        return math.log2(self.message_count) / self.block_length

    def encode(self, message: int) -> np.ndarray:
        return self.codewords[message]

    def decode(self, received, channel: Channel | None = None) -> np.ndarray:
        """Decode one block ``(n,)`` or a batch ``(B, n)``; ties go to the lower index.

        ``channel`` defaults to the design channel; passing another channel
        with the same input alphabet decodes by likelihood under that law.
        """
        ch = self.channel if channel is None else channel
        y = np.asarray(received, dtype=np.int64)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        if self.message_count == 1:
            out = np.zeros(len(y), dtype=np.int64)
            return out[0] if single else out
        if self.decode_rule == "min_hamming" and ch is self.channel:
            table = -(1.0 - np.eye(ch.input_alphabet_size, ch.output_alphabet_size))
        else:
            table = np.log(np.maximum(ch.transition, _LOG_FLOOR))
        Q = ch.input_alphabet_size
        n = self.block_length
        # score[b, c] = sum_t table[codeword[c, t], y[b, t]], as one matrix product
        onehot = np.zeros((self.message_count, n * Q))
        onehot[np.arange(self.message_count)[:, None], np.arange(n) * Q + self.codewords] = 1.0
        out = np.empty(len(y), dtype=np.int64)
        step = max(1, (1 << 22) // max(self.message_count, 1))
        for s in range(0, len(y), step):
            yb = y[s:s + step]
            weights = table[:, yb].transpose(1, 2, 0).reshape(len(yb), n * Q)
            out[s:s + step] = np.argmax(weights @ onehot.T, axis=1)
        return out[0] if single else out


def _distinct_codewords(rng, Q: int, M: int, n: int) -> np.ndarray:
    space = Q ** n
    if space == M:
        ints = np.arange(M)
    elif space <= 2 ** 62:
        ints = np.sort(rng.choice(space, size=M, replace=False))
        ints = rng.permutation(ints)
    else:
        words = rng.integers(0, Q, size=(M, n))
        while True:
            _, first = np.unique(words, axis=0, return_index=True)
            dup = np.setdiff1d(np.arange(M), first)
            if not len(dup):
                return words
            words[dup] = rng.integers(0, Q, size=(len(dup), n))
    digits = np.empty((M, n), dtype=np.int64)
    ints = np.asarray(ints, dtype=object if space > 2 ** 62 else np.int64)
    for t in range(n - 1, -1, -1):
        digits[:, t] = ints % Q
        ints = ints // Q
    return digits


def build_block_code(channel: Channel, message_count: int, block_length: int, seed: int,
                     mc_trials: int = 10_000, decode_rule: str | None = None) -> BlockCode:
    """Random codebook with distinct codewords; ML decoding (min-Hamming for a BSC).

    The error rate is measured by sending ``mc_trials`` uniformly random
    messages through the channel.
    """
    Q = channel.input_alphabet_size
    if message_count < 1 or block_length < 0:
        raise ValueError("message_count must be >= 1 and block_length >= 0")
    if message_count > Q ** block_length:
        raise ValueError(f"{message_count} messages cannot have distinct codewords of length "
                         f"{block_length} over {Q} symbols")
    if message_count > 1:
        rate = math.log2(message_count) / block_length
        cap = capacity(channel)
        if rate >= cap:
            warnings.warn(f"code rate {rate:.4f} is not below capacity {cap:.4f}", stacklevel=2)
    if decode_rule is None:
        decode_rule = "min_hamming" if channel.kind == "bsc" and channel.p <= 0.5 else "ml"
    rng = np.random.default_rng(child_seed(seed, 0))
    words = _distinct_codewords(rng, Q, message_count, block_length)
    code = BlockCode(channel, words, decode_rule, 0.0)
    if message_count == 1 or mc_trials <= 0:
        return code
    msgs = rng.integers(0, message_count, size=mc_trials)
    noise = np.random.default_rng(child_seed(seed, 1)).random((mc_trials, block_length))
    received = channel.respond(words[msgs], noise)
    err = float(np.mean(code.decode(received) != msgs))
    return BlockCode(channel, words, decode_rule, err)


# shared run record -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SchemeRun:
    """One closed-loop run: per-step errors plus scheme-specific records.

    ``block`` carries states and estimates when they are representable in
    floating point (None for zoom runs whose states overflow).
    """

    errors: np.ndarray
    lock_on: int
    block: TrajectoryBlock | None = None
    records: dict[str, Any] = field(default_factory=dict)


# spanning-set scheme ---------------------------------------------------


def sampling_times(count: int) -> np.ndarray:
    """tau_0 = 0, tau_{j+1} = tau_j + j + 1."""
    tau = np.zeros(count, dtype=np.int64)
    for j in range(count - 1):
        tau[j + 1] = tau[j] + j + 1
    return tau


@dataclass(frozen=True, eq=False)
class SpanningScheme:
    """Pipelined spanning-set coder/estimator for a deterministic map.

    ``centers[j]`` (j >= 1) holds the initial points of the (j, delta)-spanning
    set S_j and ``center_orbits[j]`` their orbits of length j.  ``codes[j]``
    carries an index of S_j in ``j * uses_per_step`` channel uses.
    """

    system: SystemModel
    epsilon: float
    delta: float
    channel: Channel
    code_rate: float
    uses_per_step: int
    max_block: int
    start_block: int
    centers: dict[int, np.ndarray]
    center_orbits: dict[int, np.ndarray]
    budgets: dict[int, int]
    codes: dict[int, BlockCode]
    sample_size: int

    @property
    def sampling_times(self) -> np.ndarray:
        return sampling_times(self.max_block + 2)

    @property
    def lock_on(self) -> int:
        return int(sampling_times(self.start_block + 2)[self.start_block + 1])

    def spanning_sizes(self) -> dict[int, int]:
        return {j: len(c) for j, c in self.centers.items()}


def _find_delta(system, epsilon, rng, probes=20000):
    delta = epsilon / 2.0
    while delta > 1e-12:
        x = np.asarray(system.initial_sampler(rng, probes), dtype=float)
        if system.space == "torus":
            x = rng.random((probes, system.state_dim))
        y = x + delta * (2.0 * rng.random(x.shape) - 1.0)
        if system.space == "torus":
            y = np.mod(y, 1.0)
        ok = system.metric(x, y) < delta
        fx, fy = system.step(x), system.step(y)
        if np.all(system.metric(fx[ok], fy[ok]) < epsilon):
            return delta
        delta /= 2.0
    raise ValueError("no admissible delta above 1e-12")


def _dense_sample(system, size):
    side = max(2, int(round(size ** (1.0 / system.state_dim))))
    axis = (np.arange(side) + 0.5) / side
    mesh = np.meshgrid(*([axis] * system.state_dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def build_spanning_scheme(system: SystemModel, epsilon: float, channel: Channel,
                          max_block: int, seed: int, uses_per_step: int = 1,
                          sample_size: int = 4096, rate_fraction: float | None = None,
                          mc_trials: int = 2000) -> SpanningScheme:
    """Spanning sets, budgets and per-block codes for the pipelined scheme.

    The code rate is the channel capacity on noiseless channels and
    ``rate_fraction`` (default 0.8) of it otherwise.  Raises BudgetError
    if no start block N has |S_j| <= 2^(R j uses) for every N <= j <= max_block.
    """
    if not system.is_deterministic:
        raise ValueError("the spanning scheme needs a deterministic system")
    if system.space != "torus":
        raise ValueError("the spanning scheme needs a compact (torus) state space")
    if max_block < 1 or uses_per_step < 1:
        raise ValueError("max_block and uses_per_step must be positive")
    rng = np.random.default_rng(child_seed(seed, 0))
    delta = _find_delta(system, epsilon, rng)
    cap = capacity(channel)
    if rate_fraction is None:
        rate_fraction = 1.0 if channel.kind == "noiseless" else 0.8
    code_rate = rate_fraction * cap

    sample = _dense_sample(system, sample_size)
    orb = orbits(system, sample, max_block)
    centers, center_orbits, budgets = {}, {}, {}
    for j in range(1, max_block + 1):
        cover = greedy_cover(orb[:, :j], delta, system.space)
        centers[j] = sample[cover.kept]
        center_orbits[j] = orb[cover.kept, :j]
        budgets[j] = int(math.floor(2.0 ** min(code_rate * j * uses_per_step, 62.0)))
    fits = [len(centers[j]) <= budgets[j] for j in range(1, max_block + 1)]
    if not fits[-1]:
        raise BudgetError(f"|S_j| exceeds the message budget 2^(R j) at every j <= {max_block} "
                          f"(R = {code_rate:.4f} bits per use)")
    start = max_block
    while start > 1 and fits[start - 2]:
        start -= 1
    for j in range(start, max_block + 1):
        if len(centers[j]) * 4 > len(sample):
            raise ValueError(f"sample of {len(sample)} points is too coarse for block {j}; "
                             "increase sample_size or lower max_block")
    codes = {}
    for j in range(start, max_block + 1):
        codes[j] = build_block_code(channel, len(centers[j]), j * uses_per_step,
                                    child_seed(seed, 1 + j), mc_trials=mc_trials)
    return SpanningScheme(system, float(epsilon), delta, channel, code_rate, uses_per_step,
                          max_block, start, centers, center_orbits, budgets, codes, len(sample))


def run_spanning_scheme(scheme: SpanningScheme, channel: Channel, horizon: int,
                        seed: int) -> SchemeRun:
    """Run the pipelined protocol for ``horizon`` steps from x_0 ~ pi_0.

    At tau_j the coder picks the element of S_{j+1} closest (Bowen metric) to
    the orbit starting at x_{tau_{j+1}} and sends its index during
    [tau_j, tau_{j+1}); the estimator replays that element's orbit during
    [tau_{j+1}, tau_{j+2}).  Blocks before the start block carry index 0 and
    the estimate there is the origin.
    """
    system = scheme.system
    if channel.input_alphabet_size != scheme.channel.input_alphabet_size:
        raise ValueError("channel input alphabet differs from the scheme's code alphabet")
    tau = sampling_times(scheme.max_block + 3)
    if horizon > tau[scheme.max_block + 1]:
        raise ValueError(f"horizon {horizon} needs blocks beyond max_block={scheme.max_block}")
    states = simulate(system, horizon, child_seed(seed, 0)).states
    estimates = np.zeros_like(states)
    # index of the latest channel output each estimate depends on (-1: none)
    info_index = np.full(horizon, -1, dtype=np.int64)
    decoded_ok = []
    u = scheme.uses_per_step
    j = 0
    while tau[j] < horizon:
        size = j + 1                     # block j carries S_{j+1}
        lo, hi = tau[j + 1], min(tau[j + 2], horizon)
        if j + 1 >= scheme.start_block + 1 and size in scheme.codes:
            code = scheme.codes[size]
            # coder: only x_{tau_j} is used; the target orbit is computed forward
            target = orbits(system, states[tau[j]], 2 * size)[0, size:]
            gaps = system.metric(scheme.center_orbits[size], target[None]).max(axis=1)
            msg = int(np.argmin(gaps))
            rng = np.random.default_rng(child_seed(seed, 1 + j))
            out = channel.respond(code.encode(msg), rng.random(size * u))
            got = int(code.decode(out, channel))
            decoded_ok.append(got == msg)
            if lo < horizon:
                replay = orbits(system, scheme.centers[size][got], size + 1)[0]
                estimates[lo:hi] = replay[:hi - lo]
                info_index[lo:hi] = tau[j + 1] - 1
        j += 1
    if np.any(info_index > np.arange(horizon)):
        raise InvariantViolation("an estimate used a channel output from its future")
    estimates.flags.writeable = False
    block = TrajectoryBlock(states=states, estimates=estimates, seed=seed)
    return SchemeRun(errors=block.errors(system), lock_on=scheme.lock_on, block=block,
                     records={"info_index": info_index,
                              "block_decoded": np.array(decoded_ok, dtype=bool)})


# zoom quantizer --------------------------------------------------------


def kappa(r, lambda_abs: float, R: int, p: float):
    """kappa(r) = p |lambda|^r + (1 - p) |lambda|^r 2^(-r R)."""
    r = np.asarray(r, dtype=float)
    return lambda_abs ** r * (p + (1.0 - p) * 2.0 ** (-r * R))


def _log_kappa(r, lambda_abs, R, p):
    # log kappa; the log1p form is accurate near r = 0 where kappa is close to 1
    a = r * math.log(lambda_abs)
    shrink = r * R * math.log(2.0)
    drop = (1.0 - p) * -math.expm1(-shrink)
    if drop < 0.5:
        return a + math.log1p(-drop)
    log_p = math.log(p) if p > 0 else -math.inf
    return a + float(np.logaddexp(log_p, math.log1p(-p) - shrink))


def stability_margin(lambda_abs: float, R: int, p: float,
                     r_max: float = 8.0, tol: float = 1e-8) -> tuple[float, float]:
    """Minimum of kappa(r) over (0, r_max] by golden-section search.

    kappa is log-convex in r, so the search is exact up to ``tol``.
    Returns ``(kappa_min, r_star)``.
    """
    if lambda_abs <= 0 or R <= 0 or not 0.0 <= p < 1.0:
        raise ValueError("need lambda_abs > 0, R > 0 and 0 <= p < 1")
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, float(r_max)
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = _log_kappa(c, lambda_abs, R, p), _log_kappa(d, lambda_abs, R, p)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = _log_kappa(c, lambda_abs, R, p)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = _log_kappa(d, lambda_abs, R, p)
    r_star = 0.5 * (a + b)
    return math.exp(_log_kappa(r_star, lambda_abs, R, p)), r_star


@dataclass(frozen=True, eq=False)
class ZoomScheme:
    """Per-mode uniform zoom quantizers for a diagonalizable linear map.

    Centers start at 0 and half-widths at ``initial_halfwidth``.
    """

    eigenvalues: tuple[float, ...]
    rates: tuple[int, ...]
    erasure_p: float
    initial_halfwidth: tuple[float, ...]

    @property
    def mode_count(self) -> int:
        return len(self.eigenvalues)

    @property
    def stable_modes(self) -> np.ndarray:
        """R_i (1 - p) > log2 |lambda_i| per mode (trivially true for |lambda_i| < 1)."""
        lam = np.abs(np.asarray(self.eigenvalues))
        return np.array([r * (1 - self.erasure_p) > math.log2(l) if l > 0 else True
                         for l, r in zip(lam, self.rates)])

    @property
    def unstable(self) -> bool:
        return not bool(self.stable_modes.all())

    def margins(self) -> list[tuple[float, float]]:
        return [stability_margin(abs(l), r, self.erasure_p) if l != 0 else (0.0, 0.0)
                for l, r in zip(self.eigenvalues, self.rates)]


def build_zoom_scheme(A_eigenvalues: Sequence[float], rates: Sequence[int], erasure_p: float,
                      initial_halfwidth: Sequence[float]) -> ZoomScheme:
    lam = tuple(float(np.real_if_close(v)) for v in A_eigenvalues)
    R = tuple(int(r) for r in rates)
    hw = tuple(float(h) for h in initial_halfwidth)
    if not (len(lam) == len(R) == len(hw)) or not lam:
        raise ValueError("eigenvalues, rates and initial_halfwidth must have equal nonzero length")
    if any(r <= 0 for r in R) or any(r != rr for r, rr in zip(R, rates)):
        raise ValueError("rates must be positive integers")
    if any(h <= 0 for h in hw):
        raise ValueError("initial half-widths must be positive")
    if not 0.0 <= erasure_p < 1.0:
        raise ValueError("erasure_p must lie in [0, 1)")
    scheme = ZoomScheme(lam, R, float(erasure_p), hw)
    if scheme.unstable:
        warnings.warn("some mode has R (1 - p) <= log2|lambda|; the zoom bracket will diverge",
                      stacklevel=2)
    return scheme


def _modal_basis(system: SystemModel, eigenvalues):
    A = system.matrix
    if A is None:
        raise ValueError("the zoom scheme needs a linear system with a matrix")
    if not system.is_deterministic:
        raise ValueError("the zoom scheme expects a noise-free linear system")
    lam, V = np.linalg.eig(A)
    if np.abs(lam.imag).max() > 1e-12 or np.abs(V.imag).max() > 1e-12:
        raise ValueError("complex eigenvalues are not supported by the zoom scheme")
    lam, V = lam.real, V.real
    order = []
    for target in eigenvalues:
        cand = [i for i in range(len(lam)) if i not in order and abs(lam[i] - target) < 1e-9]
        if not cand:
            raise ValueError(f"eigenvalue {target} not found in the system matrix")
        order.append(cand[0])
    V = V[:, order]
    if abs(np.linalg.det(V)) < 1e-12:
        raise ValueError("system matrix is not diagonalizable")
    return V, np.linalg.inv(V)


def run_zoom_scheme(scheme: ZoomScheme, system: SystemModel, channel: Channel, horizon: int,
                    seed: int, keep_states: bool = True) -> SchemeRun:
    """Closed-loop zoom coding over an erasure channel with feedback.

    Works in normalised modal coordinates u = (z - center) / halfwidth and
    keeps log2(halfwidth) separately, so long unstable runs do not overflow.
    Each step and mode sends one 2^R-ary symbol; it is erased or delivered as
    a whole.  The estimate at time t is the current center.
    """
    if channel.kind != "erasure":
        raise ValueError("the zoom scheme runs over an erasure channel")
    if abs(channel.p - scheme.erasure_p) > 1e-12:
        raise ValueError("channel erasure probability differs from the scheme's")
    V, Vinv = _modal_basis(system, scheme.eigenvalues)
    lam = np.asarray(scheme.eigenvalues)
    sign = np.sign(lam)
    log_lam = np.log2(np.abs(lam))
    R = np.asarray(scheme.rates)
    levels = 2 ** R
    mode_channels = [erasure(channel.p, int(L)) for L in levels]
    rng = np.random.default_rng(child_seed(seed, 0))
    x0 = np.asarray(system.initial_sampler(rng, 1), dtype=float)[0]
    z0 = Vinv @ x0
    hw0 = np.asarray(scheme.initial_halfwidth)
    if np.any(np.abs(z0) > hw0):
        raise ValueError("initial state violates the initial half-width bound")
    draws = np.random.default_rng(child_seed(seed, 1)).random((horizon, scheme.mode_count))

    u = z0 / hw0
    log_hw = np.log2(hw0)
    log_hw_path = np.empty((horizon, scheme.mode_count))
    u_path = np.empty((horizon, scheme.mode_count))
    erased = np.zeros((horizon, scheme.mode_count), dtype=bool)
    slack = 1e-9
    for t in range(horizon):
        if np.any(np.abs(u) > 1.0 + slack):
            raise InvariantViolation(f"state left the zoom bracket at step {t}")
        u_path[t] = u
        log_hw_path[t] = log_hw
        cell = np.minimum(np.floor((u + 1.0) * levels / 2.0), levels - 1).astype(np.int64)
        for i, ch in enumerate(mode_channels):
            erased[t, i] = ch.respond(cell[i], draws[t, i]) == ch.erasure_symbol
        mid = -1.0 + (2.0 * cell + 1.0) / levels
        got = ~erased[t]
        u = np.where(got, sign * levels * (u - mid), sign * u)
        log_hw = log_hw + log_lam - np.where(got, R, 0)
    with np.errstate(over="ignore", invalid="ignore"):
        modal_err = u_path * np.exp2(log_hw_path)
        errors = np.abs(modal_err @ V.T).max(axis=1)
    block = None
    if keep_states:
        with np.errstate(over="ignore", invalid="ignore"):
            powers = np.exp2(np.arange(horizon)[:, None] * log_lam[None, :])
            z = z0[None, :] * powers * sign[None, :] ** np.arange(horizon)[:, None]
            states = z @ V.T
            estimates = (z - modal_err) @ V.T
        if np.all(np.isfinite(states)) and np.all(np.isfinite(estimates)):
            block = TrajectoryBlock(states=states, estimates=estimates, seed=seed)
    return SchemeRun(errors=errors, lock_on=0, block=block,
                     records={"log2_halfwidth": log_hw_path, "erased": erased,
                              "normalised_offset": u_path})


# memoryless quantizer --------------------------------------------------


@dataclass(frozen=True, eq=False)
class MemorylessQuantizer:
    """Scalar quantizer: ``boundaries`` has level_count + 1 sorted edges."""

    boundaries: np.ndarray
    reproduction_points: np.ndarray
    measured_distortion: float

    @property
    def level_count(self) -> int:
        return len(self.reproduction_points)

    def index(self, x) -> np.ndarray:
        inner = self.boundaries[1:-1]
        return np.searchsorted(inner, np.asarray(x, dtype=float), side="right")

    def quantize(self, x) -> np.ndarray:
        return self.reproduction_points[self.index(x)]

    def distortion(self, sample) -> float:
        x = np.asarray(sample, dtype=float)
        return float(np.mean((x - self.quantize(x)) ** 2))


def build_memoryless_quantizer(sample, level_count: int, central_range=(1.0, 99.0),
                               lloyd: bool = False, max_iter: int = 500,
                               rtol: float = 1e-8) -> MemorylessQuantizer:
    """Uniform quantizer over the sample's central percentile range.

    Samples outside the range fall into the end cells.  With ``lloyd=True``
    the result is refined by :func:`lloyd_refine`.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if level_count < 1:
        raise ValueError("level_count must be positive")
    if len(x) < 10 * level_count:
        raise ValueError(f"need at least {10 * level_count} samples for {level_count} levels")
    lo, hi = np.percentile(x, central_range)
    if not hi > lo:
        raise ValueError("degenerate sample: zero range")
    edges = np.linspace(lo, hi, level_count + 1)
    q = MemorylessQuantizer(edges, 0.5 * (edges[:-1] + edges[1:]), 0.0)
    q = MemorylessQuantizer(edges, q.reproduction_points, q.distortion(x))
    if lloyd:
        q = lloyd_refine(x, q, max_iter=max_iter, rtol=rtol)
    return q


def _companded_points(xs, level_count):
    # reproduction points spaced by the CDF of density^(1/3), the
    # high-resolution optimum; the density is estimated on equal-count
    # intervals so sparse tails are not under-weighted
    k = int(min(4096, max(16, len(xs) // 200)))
    knots = xs[np.linspace(0, len(xs) - 1, k + 1).round().astype(np.int64)]
    width = np.diff(knots)
    mass = np.full(k, 1.0 / k)
    g = np.where(width > 0, mass ** (1.0 / 3.0) * width ** (2.0 / 3.0), 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(g)])
    cdf /= cdf[-1]
    targets = (np.arange(level_count) + 0.5) / level_count
    return np.interp(targets, cdf, knots)


def lloyd_refine(sample, quantizer: MemorylessQuantizer | None = None, level_count: int | None = None,
                 max_iter: int = 500, rtol: float = 1e-8) -> MemorylessQuantizer:
    """Lloyd iteration (centroid / midpoint updates) on a fixed sample.

    Starts from a companded initial codebook, stops when the relative change
    of the distortion drops below ``rtol``.
    """
    xs = np.sort(np.asarray(sample, dtype=float).ravel())
    n = level_count if level_count is not None else quantizer.level_count
    pts = _companded_points(xs, n)
    csum = np.concatenate([[0.0], np.cumsum(xs)])
    csq = np.concatenate([[0.0], np.cumsum(xs * xs)])
    prev = math.inf
    dist = math.inf
    for it in range(max_iter):
        inner = 0.5 * (pts[1:] + pts[:-1])
        cuts = np.concatenate([[0], np.searchsorted(xs, inner, side="right"), [len(xs)]])
        cnt = np.diff(cuts)
        s1 = csum[cuts[1:]] - csum[cuts[:-1]]
        s2 = csq[cuts[1:]] - csq[cuts[:-1]]
        # exact squared error of the current codebook on the sample
        dist = float((s2 - 2 * pts * s1 + cnt * pts * pts).sum() / len(xs))
        new = np.where(cnt > 0, s1 / np.maximum(cnt, 1), pts)
        pts = np.sort(new)
        if prev < math.inf and abs(prev - dist) <= rtol * max(dist, 1e-300):
            break
        prev = dist
    else:
        warnings.warn(f"Lloyd iteration stopped after {max_iter} iterations", stacklevel=2)
    inner = 0.5 * (pts[1:] + pts[:-1])
    edges = np.concatenate([[min(xs[0], pts[0])], inner, [max(xs[-1], pts[-1])]])
    q = MemorylessQuantizer(edges, pts, 0.0)
    return MemorylessQuantizer(edges, pts, q.distortion(xs))
