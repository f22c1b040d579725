"""Memoryless channels: noiseless, binary symmetric, erasure and generic DMCs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Channel",
    "ChannelTrace",
    "ConvergenceError",
    "noiseless",
    "bsc",
    "erasure",
    "general",
    "from_config",
    "transmit",
    "block_transmit",
    "capacity",
    "blahut_arimoto",
    "binary_entropy",
]


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic transition matrix P(q'|q) plus a kind tag.

    For ``erasure`` channels the last output symbol is the erasure symbol.
    """

    transition: np.ndarray
    kind: str = "general"
    p: float | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.size == 0:
            raise ValueError("transition must be a nonempty 2-d matrix")
        if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("transition matrix is not row-stochastic")
        P.flags.writeable = False
        object.__setattr__(self, "transition", P)

    @property
    def input_alphabet_size(self) -> int:
        return self.transition.shape[0]

    @property
    def output_alphabet_size(self) -> int:
        return self.transition.shape[1]

    @property
    def erasure_symbol(self) -> int | None:
        return self.output_alphabet_size - 1 if self.kind == "erasure" else None

    def respond(self, symbols, uniforms) -> np.ndarray:
        """Channel outputs for given inputs and U(0,1) draws (inverse-CDF sampling)."""
        cdf = np.cumsum(self.transition, axis=1)
        q = np.asarray(symbols, dtype=np.int64)
        out = (cdf[q] <= np.asarray(uniforms)[..., None]).sum(axis=-1)
        return np.minimum(out, self.output_alphabet_size - 1)

    def to_dict(self) -> dict:
        if self.kind == "noiseless":
            return {"kind": "noiseless", "alphabet_size": self.input_alphabet_size}
        if self.kind == "bsc":
            return {"kind": "bsc", "p": self.p}
        if self.kind == "erasure":
            return {"kind": "erasure", "p": self.p, "alphabet_size": self.input_alphabet_size}
        return {"kind": "general", "transition": self.transition.tolist()}


def noiseless(alphabet_size: int = 2) -> Channel:
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be positive")
    return Channel(np.eye(alphabet_size), "noiseless")


def bsc(p: float) -> Channel:
    if not 0.0 <= p <= 1.0:
        raise ValueError("crossover probability must lie in [0, 1]")
    return Channel(np.array([[1 - p, p], [p, 1 - p]]), "bsc", p)


def erasure(p: float, alphabet_size: int = 2) -> Channel:
    """P(q'|q) = (1-p) 1{q'=q} + p 1{q'=e}, with e the extra last symbol."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("erasure probability must lie in [0, 1]")
    P = np.zeros((alphabet_size, alphabet_size + 1))
    P[:, :alphabet_size] = (1 - p) * np.eye(alphabet_size)
    P[:, -1] = p
    return Channel(P, "erasure", p)


def general(transition) -> Channel:
    return Channel(np.asarray(transition, dtype=float), "general")


def from_config(spec: Mapping) -> Channel:
    kind = spec.get("kind")
    params = dict(spec.get("params", {}))
    params.update({k: v for k, v in spec.items() if k not in ("kind", "params")})
    if kind == "noiseless":
        return noiseless(int(params.get("alphabet_size", 2)))
    if kind == "bsc":
        return bsc(float(params["p"]))
    if kind == "erasure":
        return erasure(float(params["p"]), int(params.get("alphabet_size", 2)))
    if kind == "general":
        return general(params["transition"])
    raise ValueError(f"unknown channel kind {kind!r}")


@dataclass(frozen=True, eq=False)
class ChannelTrace:
    inputs: np.ndarray
    outputs: np.ndarray
    seed: int


def transmit(channel: Channel, inputs: Sequence[int], seed: int) -> ChannelTrace:
    """Pass symbols through the channel independently, one draw per use."""
    q = np.asarray(inputs, dtype=np.int64).ravel()
    if q.size and (q.min() < 0 or q.max() >= channel.input_alphabet_size):
        raise ValueError(f"input symbol outside alphabet of size {channel.input_alphabet_size}")
    rng = np.random.default_rng(seed)
    out = channel.respond(q, rng.random(q.size))
    return ChannelTrace(q, out, seed)


def block_transmit(channel: Channel, codeword: Sequence[int], seed: int) -> np.ndarray:
    return transmit(channel, codeword, seed).outputs


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def capacity(channel: Channel) -> float:
    """Capacity in bits per channel use."""
    if channel.kind == "noiseless":
        return math.log2(channel.input_alphabet_size)
    if channel.kind == "erasure":
        return (1 - channel.p) * math.log2(channel.input_alphabet_size)
    if channel.kind == "bsc":
        return 1.0 - binary_entropy(channel.p)
    return blahut_arimoto(channel.transition)[0]


def blahut_arimoto(P, tol: float = 1e-9, max_iter: int = 10_000):
    """Capacity (bits) and optimal input law of the DMC with transition rows ``P``.

    Starts from the uniform input law and stops once successive capacity
    iterates differ by less than ``tol``.
    """
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    r = np.full(m, 1.0 / m)
    logP = np.log2(np.where(P > 0, P, 1.0))
    prev = -np.inf
    for _ in range(max_iter):
        q = r @ P
        logq = np.log2(np.where(q > 0, q, 1.0))
        # D(P(.|x) || q) for each input x
        div = (P * (logP - logq[None, :])).sum(axis=1)
        cap = float(r @ div)
        if abs(cap - prev) < tol:
            return max(cap, 0.0), r
        prev = cap
        w = r * np.exp2(div)
        r = w / w.sum()
    raise ConvergenceError(f"Blahut-Arimoto did not converge in {max_iter} iterations")
