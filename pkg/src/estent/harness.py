"""Monte Carlo checks of the three estimation objectives and capacity sweeps.

Finite-horizon proxies:

* E1: sup of the error from ``tail_start`` to the end is <= epsilon,
* E2: sup of the error over the final 20% of the horizon is <= epsilon,
* E3: mean squared error over that final window, averaged over trials.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Callable, Sequence

import numpy as np

from estent.channels import Channel, capacity
from estent.coding import (BudgetError, MemorylessQuantizer, SchemeRun, SpanningScheme,
                           ZoomScheme, run_spanning_scheme, run_zoom_scheme)
from estent.systems import SystemModel, TrajectoryBlock, child_seed, simulate

__all__ = [
    "TAIL_FRACTION",
    "PASS_THRESHOLD",
    "CopyScheme",
    "MemorylessScheme",
    "ObjectiveReport",
    "run_scheme",
    "tail_window_start",
    "evaluate",
    "capacity_sweep",
]

TAIL_FRACTION = 0.2
PASS_THRESHOLD = 0.95


@dataclass(frozen=True)
class CopyScheme:
    """Sends the state itself; needs a noiseless channel (benchmark only)."""


@dataclass(frozen=True, eq=False)
class MemorylessScheme:
    """Quantize each scalar state with a fixed quantizer and send the cell index."""

    quantizer: MemorylessQuantizer


@singledispatch
def run_scheme(scheme, system: SystemModel, channel: Channel, horizon: int, seed: int) -> SchemeRun:
    raise TypeError(f"no runner for scheme type {type(scheme).__name__}")


@run_scheme.register
def _(scheme: CopyScheme, system, channel, horizon, seed):
    if channel.kind != "noiseless":
        raise ValueError("the copy scheme needs a noiseless channel")
    states = simulate(system, horizon, seed).states
    block = TrajectoryBlock(states=states, estimates=states.copy(), seed=seed)
    return SchemeRun(errors=block.errors(system), lock_on=0, block=block)


@run_scheme.register
def _(scheme: MemorylessScheme, system, channel, horizon, seed):
    q = scheme.quantizer
    if system.state_dim != 1:
        raise ValueError("the memoryless scheme quantizes scalar states")
    if channel.input_alphabet_size < q.level_count:
        raise ValueError("channel alphabet is smaller than the quantizer's level count")
    states = simulate(system, horizon, child_seed(seed, 0)).states
    sent = q.index(states[:, 0])
    rng = np.random.default_rng(child_seed(seed, 1))
    got = np.minimum(channel.respond(sent, rng.random(len(sent))), q.level_count - 1)
    estimates = q.reproduction_points[got][:, None]
    block = TrajectoryBlock(states=states, estimates=estimates, seed=seed)
    return SchemeRun(errors=block.errors(system), lock_on=0, block=block,
                     records={"symbols_sent": sent, "symbols_received": got})


@run_scheme.register
def _(scheme: SpanningScheme, system, channel, horizon, seed):
    return run_spanning_scheme(scheme, channel, horizon, seed)


@run_scheme.register
def _(scheme: ZoomScheme, system, channel, horizon, seed):
    run = run_zoom_scheme(scheme, system, channel, horizon, seed, keep_states=False)
    # the zoom scheme has no lock-on time of its own
    return SchemeRun(errors=run.errors, lock_on=None, block=run.block, records=run.records)


@dataclass(frozen=True)
class ObjectiveReport:
    epsilon: float
    trials: int
    horizon: int
    tail_start: int
    window_start: int
    e1_pass_fraction: float
    e2_pass_fraction: float
    e3_tail_mse: float
    per_trial_max_tail_error: list[float] = field(default_factory=list)
    lock_on: int | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "trials": self.trials,
            "horizon": self.horizon,
            "tail_start": self.tail_start,
            "window_start": self.window_start,
            "lock_on": self.lock_on,
            "e1_pass_fraction": self.e1_pass_fraction,
            "e2_pass_fraction": self.e2_pass_fraction,
            "e3_tail_mse": self.e3_tail_mse,
            "per_trial_max_tail_error": list(self.per_trial_max_tail_error),
        }


def tail_window_start(horizon: int) -> int:
    return int(math.floor((1.0 - TAIL_FRACTION) * horizon))


def evaluate(system: SystemModel, channel: Channel, scheme, epsilon: float, trials: int,
             horizon: int, master_seed: int, workers: int = 1,
             keep_runs: bool = False) -> ObjectiveReport | tuple[ObjectiveReport, list[SchemeRun]]:
    """Run ``trials`` independent closed-loop runs and score E1, E2 and E3.

    Trial k uses the seed ``child_seed(master_seed, k)``, so the report does
    not depend on execution order.  The E1 tail starts at the scheme's
    lock-on time, capped at the start of the final window.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if horizon < 2:
        raise ValueError("horizon must be >= 2")

    def one(k):
        return run_scheme(scheme, system, channel, horizon, child_seed(master_seed, k))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(trials)))
    else:
        runs = [one(k) for k in range(trials)]
    window = tail_window_start(horizon)
    lock_on = runs[0].lock_on
    tail_start = window if lock_on is None else min(int(lock_on), window)
    e1, e2, mse, worst = [], [], [], []
    for run in runs:
        err = np.asarray(run.errors, dtype=float)
        if len(err) != horizon:
            raise ValueError("scheme returned an error path of the wrong length")
        e1.append(bool(np.max(err[tail_start:]) <= epsilon))
        tail = err[window:]
        e2.append(bool(np.max(tail) <= epsilon))
        with np.errstate(over="ignore"):
            mse.append(float(np.mean(tail ** 2)))
        worst.append(float(np.max(tail)))
    report = ObjectiveReport(
        epsilon=float(epsilon), trials=trials, horizon=horizon, tail_start=tail_start,
        window_start=window, e1_pass_fraction=float(np.mean(e1)),
        e2_pass_fraction=float(np.mean(e2)), e3_tail_mse=float(np.mean(mse)),
        per_trial_max_tail_error=worst, lock_on=None if lock_on is None else int(lock_on))
    return (report, runs) if keep_runs else report


def capacity_sweep(system: SystemModel, scheme_factory: Callable, channels: Sequence[Channel],
                   epsilons: Sequence[float], trials: int, horizon: int, master_seed: int,
                   threshold: float = PASS_THRESHOLD, workers: int = 1) -> dict[float, float]:
    """Smallest swept capacity whose scheme reaches E2 >= ``threshold``, per epsilon.

    ``scheme_factory(system, channel, epsilon)`` builds the scheme; a
    BudgetError (or ValueError) from it counts as a failure.  Epsilons are
    processed from large to small and the scan never moves back down the
    capacity grid, so the result is nondecreasing as epsilon shrinks.
    Returns ``inf`` where no channel passes.
    """
    caps = [capacity(c) for c in channels]
    order = sorted(range(len(channels)), key=lambda i: (caps[i], i))
    eps_order = sorted(range(len(epsilons)), key=lambda i: -epsilons[i])
    result: dict[float, float] = {}
    pos = 0
    for e_idx in eps_order:
        eps = float(epsilons[e_idx])
        found = math.inf
        while pos < len(order):
            c_idx = order[pos]
            ch = channels[c_idx]
            try:
                scheme = scheme_factory(system, ch, eps)
                seed = child_seed(master_seed, e_idx * len(channels) + c_idx)
                rep = evaluate(system, ch, scheme, eps, trials, horizon, seed, workers=workers)
                ok = rep.e2_pass_fraction >= threshold
            except (BudgetError, ValueError):
                ok = False
            if ok:
                found = caps[c_idx]
                break
            pos += 1
        result[eps] = found
    return result
