"""Command-line entry point: ``estent {entropy,bounds,simulate,sweep} CONFIG.json``.

Exit codes: 0 success, 2 configuration error, 3 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Mapping

import numpy as np

from estent import bounds as B
from estent.channels import Channel, capacity, erasure, from_config as channel_from_config
from estent.coding import (InvariantViolation, build_memoryless_quantizer, build_spanning_scheme,
                           build_zoom_scheme)
from estent.entropy import (EntropyGridSpec, trajectory_growth_estimate, estimate_fibered_entropy,
                            estimate_katok_metric_entropy, estimate_topological_entropy)
from estent.harness import CopyScheme, MemorylessScheme, capacity_sweep, evaluate
from estent.systems import SystemModel, catalog, child_seed, simulate

__all__ = ["main", "ConfigError", "load_config"]

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


class ConfigError(ValueError):
    pass


# config loading --------------------------------------------------------


class _Config:
    """Parsed JSON plus its source text, for line-precise error messages."""

    def __init__(self, data: dict, text: str, path: str):
        self.data, self.text, self.path = data, text, path

    def line_of(self, *keys: str, value=None) -> int | None:
        """Line of the last key in the chain, or of ``value`` after it when given."""
        needles = [f'"{key}"' for key in keys]
        if value is not None:
            needles.append(json.dumps(value))
        pos = 0
        line = None
        for needle in needles:
            idx = self.text.find(needle, pos)
            if idx < 0:
                break
            pos = idx + 1
            line = self.text.count("\n", 0, idx) + 1
        return line

    def error(self, message: str, *keys: str, value=None) -> ConfigError:
        line = self.line_of(*keys, value=value) if keys else None
        where = f"{self.path}:{line}" if line else self.path
        return ConfigError(f"{where}: {message}")

    def section(self, key: str, required: bool = True) -> dict:
        if key not in self.data:
            if required:
                raise self.error(f"missing section {key!r}")
            return {}
        val = self.data[key]
        if not isinstance(val, dict):
            raise self.error(f"section {key!r} must be an object", key)
        return val


def load_config(path: str) -> _Config:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    return _Config(data, text, path)


def _resolve_seed(cfg: _Config, override: int | None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get("ESTENT_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"ESTENT_SEED={env!r} is not an integer") from None
    if "seed" not in cfg.data:
        raise cfg.error("missing 'seed' (set it in the config, with --seed or ESTENT_SEED)")
    seed = cfg.data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise cfg.error("seed must be an integer", "seed")
    return seed


def _system(cfg: _Config) -> tuple[SystemModel, dict]:
    spec = cfg.section("system")
    if "name" not in spec:
        raise cfg.error("system needs a 'name'", "system")
    params = spec.get("params", {})
    try:
        return catalog(spec["name"], params), {"name": spec["name"], "params": params}
    except (ValueError, KeyError, TypeError) as exc:
        raise cfg.error(f"system: {exc}", "system", "name") from None


def _channel_from(cfg: _Config, spec: Mapping, *keys) -> Channel:
    try:
        return channel_from_config(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise cfg.error(f"channel: {exc}", *keys) from None


def _grid(cfg: _Config) -> EntropyGridSpec:
    spec = dict(cfg.data.get("entropy_grid", {}))
    try:
        return EntropyGridSpec(**spec)
    except (ValueError, TypeError) as exc:
        raise cfg.error(f"entropy_grid: {exc}", "entropy_grid") from None


# output helpers ----------------------------------------------------------


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def write_json(path: Path, payload: dict) -> None:
    doc = dict(_clean(payload))
    doc["metadata"] = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# subcommands -------------------------------------------------------------


def cmd_entropy(cfg: _Config, out: Path, seed: int, threads: int) -> dict:
    system, sys_spec = _system(cfg)
    grid = _grid(cfg)
    spec = cfg.section("entropy", required=False)
    estimator = spec.get("estimator", "topological" if system.is_deterministic else "fibered")
    try:
        if estimator == "topological":
            est = estimate_topological_entropy(system, grid, seed)
        elif estimator == "katok_metric":
            est = estimate_katok_metric_entropy(system, grid, seed)
        elif estimator == "fibered":
            est = estimate_fibered_entropy(system, grid, int(spec.get("n_noise_paths", 5)), seed)
        elif estimator in ("growth", "trajectory"):
            est = trajectory_growth_estimate(system, grid, seed)
        else:
            raise cfg.error(f"unknown estimator {estimator!r}", "entropy", "estimator", value=estimator)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise cfg.error(f"entropy: {exc}", "entropy") from None
    rows = []
    for i, eps in enumerate(est.grid.epsilons):
        for j, n in enumerate(est.grid.horizons):
            rows.append([est.kind, float(eps), n, int(est.counts[i, j]), float(est.rates[i, j])])
    write_csv(out / "entropy_table.csv", ["kind", "epsilon", "n", "count", "rate"], rows)
    summary = {
        "kind": est.kind,
        "per_epsilon_rate": dict(zip(map(repr, est.grid.epsilons), est.per_epsilon_rate.tolist())),
        "per_epsilon_stderr": dict(zip(map(repr, est.grid.epsilons), est.per_epsilon_stderr.tolist())),
        "fit_residuals": dict(zip(map(repr, est.grid.epsilons), est.fit_residuals.tolist())),
        "extrapolated_rate": est.extrapolated_rate,
    }
    if est.per_epsilon_spread is not None:
        summary["per_epsilon_spread"] = dict(zip(map(repr, est.grid.epsilons),
                                                 est.per_epsilon_spread.tolist()))
    config = {"system": sys_spec, "entropy_grid": est.grid.to_dict(),
              "entropy": {**spec, "estimator": estimator}, "seed": seed}
    write_json(out / "entropy_summary.json", {"config": config, "summary": summary})
    return summary


def _eigs(cfg, values, *keys):
    try:
        return [complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in values]
    except (TypeError, ValueError, IndexError):
        raise cfg.error("eigenvalues must be numbers or [re, im] pairs", *keys) from None


def _named_density(cfg, spec, *keys):
    kind = spec.get("kind")
    if kind == "gaussian":
        var = float(spec.get("variance", 1.0))
        sd = math.sqrt(var)
        return (lambda x: np.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)), (-12 * sd, 12 * sd)
    if kind == "uniform":
        lo, width = float(spec.get("low", 0.0)), float(spec.get("width", 1.0))
        return (lambda x: np.full_like(x, 1.0 / width)), (lo, lo + width)
    raise cfg.error(f"unknown density kind {kind!r} (gaussian or uniform)", *keys)


def _norm_value(cfg, req, key, idx):
    if key in req:
        return float(req[key])
    if "density" in req:
        f, box = _named_density(cfg, req["density"], "bounds", "density")
        return B.density_norm(f, 1, box, int(req.get("quadrature_points", 20001)))
    raise cfg.error(f"bounds[{idx}] needs {key!r} or a 'density'", "bounds")


def _one_bound(cfg: _Config, req: Mapping, idx: int, system: SystemModel | None):
    kind = req.get("kind")
    curve = None
    if kind == "ha":
        lam = _eigs(cfg, req.get("eigenvalues", []), "bounds", "eigenvalues")
        value = B.linear_entropy(lam, req.get("multiplicities"))
        params = {"eigenvalues": lam, "multiplicities": req.get("multiplicities", [1] * len(lam))}
    elif kind == "zoom_upper":
        lam = _eigs(cfg, req.get("eigenvalues", []), "bounds", "eigenvalues")
        value = B.zoom_capacity_upper(lam)
        params = {"eigenvalues": lam}
    elif kind == "ar_rd":
        a = req.get("a", [])
        sigma2 = float(req.get("sigma2", 1.0))
        nodes = int(req.get("quadrature_points", 8192))
        params = {"a": a, "sigma2": sigma2, "quadrature_points": nodes}
        if "thetas" in req:
            th = req["thetas"]
            thetas = np.geomspace(float(th["min"]), float(th["max"]), int(th.get("count", 50)))
            curve = B.ar_rate_distortion_curve(a, sigma2, thetas, nodes)
            params["thetas"] = th
            value = curve[0][2]
        else:
            theta = float(req["theta"])
            D, R, corr = B.ar_rate_distortion(a, sigma2, theta, nodes)
            params.update(theta=theta)
            return B.BoundReport(kind, R, params, {"D": D, "R_bits": R, "correction_bits": corr}), None
    elif kind == "shannon_lb":
        N = int(req.get("N", system.state_dim if system else 1))
        eps = float(req["epsilon"])
        if "entropy_rate_bits" in req:
            h = float(req["entropy_rate_bits"])
        elif system is not None:
            h = B.conditional_entropy_rate(system)
        else:
            raise cfg.error(f"bounds[{idx}] needs 'entropy_rate_bits' or a system", "bounds")
        value = B.shannon_lower_bound(h, N, eps)
        params = {"entropy_rate_bits": h, "N": N, "epsilon": eps}
    elif kind in ("gl_upper", "gl_lower"):
        key = "density_norm" if kind == "gl_upper" else "noise_density_norm"
        norm = _norm_value(cfg, req, key, idx)
        N = int(req.get("N", 1))
        eps = float(req["epsilon"])
        K2 = float(req.get("K2", B.K2_SCALAR))
        fn = B.gl_capacity_upper if kind == "gl_upper" else B.gl_capacity_lower
        value = fn(norm, N, eps, K2)
        params = {key: norm, "N": N, "epsilon": eps, "K2": K2}
    else:
        raise cfg.error(f"unknown bound kind {kind!r}", "bounds", "kind", value=kind)
    return B.BoundReport(kind, value, params), curve


def cmd_bounds(cfg: _Config, out: Path, seed: int, threads: int) -> dict:
    requests = cfg.data.get("bounds")
    if not isinstance(requests, list) or not requests:
        raise cfg.error("'bounds' must be a nonempty list of requests")
    system = _system(cfg)[0] if "system" in cfg.data else None
    reports, curve_rows = [], []
    for idx, req in enumerate(requests):
        try:
            rep, curve = _one_bound(cfg, req, idx, system)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError, ArithmeticError) as exc:
            raise cfg.error(f"bounds[{idx}]: {exc}", "bounds") from None
        reports.append(rep.to_dict())
        if curve is not None:
            curve_rows.extend(curve)
    if curve_rows:
        write_csv(out / "ar_rd_curve.csv", ["theta", "D", "R_bits", "correction_bits"], curve_rows)
    config = {"bounds": requests, "seed": seed}
    if "system" in cfg.data:
        config["system"] = cfg.data["system"]
    write_json(out / "bounds.json", {"config": config, "reports": reports})
    return {"reports": reports}


def _scheme(cfg: _Config, system: SystemModel, channel: Channel, epsilon: float, seed: int):
    spec = cfg.section("scheme")
    kind = spec.get("kind")
    p = dict(spec.get("params", {}))
    try:
        if kind == "copy":
            return CopyScheme()
        if kind == "memoryless":
            sample = simulate(system, int(p.get("sample_size", 100_000)), child_seed(seed, 1 << 20)).states[:, 0]
            q = build_memoryless_quantizer(sample, int(p["levels"]),
                                           tuple(p.get("central_range", (1.0, 99.0))),
                                           lloyd=bool(p.get("lloyd", False)))
            return MemorylessScheme(q)
        if kind == "spanning":
            return build_spanning_scheme(system, float(p.get("epsilon", epsilon)), channel,
                                         int(p.get("max_block", 80)), child_seed(seed, 1 << 21),
                                         uses_per_step=int(p.get("uses_per_step", 1)),
                                         sample_size=int(p.get("sample_size", 4096)),
                                         mc_trials=int(p.get("mc_trials", 2000)))
        if kind == "zoom":
            if system.matrix is None:
                raise ValueError("the zoom scheme needs a linear system")
            lam = np.linalg.eigvals(system.matrix)
            if "eigenvalues" in p:
                lam = np.asarray(p["eigenvalues"], dtype=float)
            rates = p["rates"]
            hw = p.get("initial_halfwidth", [1.0] * len(rates))
            if channel.kind != "erasure":
                raise ValueError("the zoom scheme needs an erasure channel")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return build_zoom_scheme(np.real(lam), rates, channel.p, hw)
    except KeyError as exc:
        raise cfg.error(f"scheme {kind!r} needs parameter {exc}", "scheme") from None
    raise cfg.error(f"unknown scheme kind {kind!r}", "scheme", "kind", value=kind)


def _objective(cfg: _Config) -> tuple[float, int, int]:
    spec = cfg.section("objective")
    try:
        return float(spec["epsilon"]), int(spec["trials"]), int(spec["horizon"])
    except KeyError as exc:
        raise cfg.error(f"objective needs {exc}", "objective") from None


def cmd_simulate(cfg: _Config, out: Path, seed: int, threads: int) -> dict:
    system, sys_spec = _system(cfg)
    channel = _channel_from(cfg, cfg.section("channel"), "channel")
    eps, trials, horizon = _objective(cfg)
    try:
        scheme = _scheme(cfg, system, channel, eps, seed)
    except ConfigError:
        raise
    except ValueError as exc:
        raise cfg.error(f"scheme: {exc}", "scheme") from None
    report, runs = evaluate(system, channel, scheme, eps, trials, horizon, seed,
                            workers=threads, keep_runs=True)
    n_trace = int(cfg.section("objective").get("traces", 0))
    if n_trace > 0:
        rows = []
        for k, run in enumerate(runs[:n_trace]):
            for t, e in enumerate(run.errors):
                if run.block is not None:
                    rows.append([k, t, float(e), float(run.block.states[t, 0]),
                                 float(run.block.estimates[t, 0])])
                else:
                    rows.append([k, t, float(e), "", ""])
        write_csv(out / "traces.csv", ["trial", "t", "error", "x0", "xhat0"], rows)
    config = {"system": sys_spec, "channel": channel.to_dict(), "scheme": cfg.section("scheme"),
              "objective": cfg.section("objective"), "seed": seed}
    payload = report.to_dict()
    payload["channel_capacity_bits"] = capacity(channel)
    write_json(out / "objective_report.json", {"config": config, "report": payload})
    return payload


def _sweep_channels(cfg: _Config, spec) -> list[Channel]:
    fam = spec.get("channels")
    if isinstance(fam, list):
        return [_channel_from(cfg, c, "sweep", "channels") for c in fam]
    if isinstance(fam, dict) and fam.get("family") == "erasure":
        size = int(fam.get("alphabet_size", 2))
        return [erasure(float(p), size) for p in fam["p"]]
    if isinstance(fam, dict) and fam.get("family") == "noiseless":
        from estent.channels import noiseless
        return [noiseless(int(2 ** k)) for k in fam["bits"]]
    raise cfg.error("sweep.channels must be a list of channels or a family", "sweep", "channels")


def cmd_sweep(cfg: _Config, out: Path, seed: int, threads: int) -> dict:
    system, sys_spec = _system(cfg)
    spec = cfg.section("sweep")
    channels = _sweep_channels(cfg, spec)
    epsilons = [float(e) for e in spec.get("epsilons", [])]
    if not epsilons:
        raise cfg.error("sweep needs a nonempty 'epsilons' list", "sweep")
    trials = int(spec.get("trials", 20))
    horizon = int(spec.get("horizon", 1000))

    def factory(sys_, ch, eps):
        return _scheme(cfg, sys_, ch, eps, seed)

    table = capacity_sweep(system, factory, channels, epsilons, trials, horizon, seed,
                           workers=threads)
    rows = [[eps, table[eps]] for eps in sorted(table, reverse=True)]
    write_csv(out / "sweep.csv", ["epsilon", "capacity_bits"], rows)
    config = {"system": sys_spec, "scheme": cfg.section("scheme"), "sweep": spec, "seed": seed,
              "channels": [c.to_dict() for c in channels]}
    write_json(out / "sweep.json", {"config": config,
                                    "thresholds": [{"epsilon": e, "capacity_bits": c} for e, c in rows]})
    return {"thresholds": rows}


COMMANDS = {"entropy": cmd_entropy, "bounds": cmd_bounds, "simulate": cmd_simulate,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="estent", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="experiment configuration (JSON)")
    ap.add_argument("--output-dir", help="overrides the config's output_dir")
    ap.add_argument("--seed", type=int, help="overrides the config seed and ESTENT_SEED")
    ap.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seed = _resolve_seed(cfg, args.seed)
        out = Path(args.output_dir or cfg.data.get("output_dir") or ".")
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, out, seed, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, OverflowError, AssertionError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(json.dumps(_clean(result), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
