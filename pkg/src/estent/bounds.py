"""Closed-form and quadrature bounds on the rate needed for state estimation.

All values are in bits.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from estent.systems import SystemModel

__all__ = [
    "K2_SCALAR",
    "BoundReport",
    "linear_entropy",
    "ar_roots",
    "ar_rate_distortion",
    "ar_rate_distortion_curve",
    "shannon_lower_bound",
    "conditional_entropy_rate",
    "density_norm",
    "gl_capacity_upper",
    "gl_capacity_lower",
    "zoom_capacity_upper",
]

K2_SCALAR = 1.0 / 12.0
_UNIT_CIRCLE_TOL = 1e-8


def _jsonable(v):
    if isinstance(v, complex) or isinstance(v, np.complexfloating):
        return [float(v.real), float(v.imag)] if v.imag else float(v.real)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


@dataclass(frozen=True)
class BoundReport:
    kind: str
    value_bits: float
    params: dict[str, Any]
    details: dict[str, Any] | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "value_bits": _jsonable(self.value_bits),
               "params": _jsonable(self.params)}
        if self.details is not None:
            out["details"] = _jsonable(self.details)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def linear_entropy(eigenvalues: Sequence[complex], multiplicities: Sequence[int] | None = None) -> float:
    """Sum of max(0, n_lambda log2|lambda|) over the spectrum."""
    lam = np.abs(np.asarray(eigenvalues, dtype=complex))
    mult = np.ones(len(lam)) if multiplicities is None else np.asarray(multiplicities, dtype=float)
    if len(mult) != len(lam):
        raise ValueError("eigenvalues and multiplicities must have equal length")
    with np.errstate(divide="ignore"):
        logs = np.where(lam > 0, np.log2(np.where(lam > 0, lam, 1.0)), -np.inf)
    return float(np.sum(np.maximum(0.0, mult * logs)))


def zoom_capacity_upper(eigenvalues: Sequence[complex]) -> float:
    """Sum over unstable eigenvalues of log2 ceil|lambda|."""
    lam = np.abs(np.asarray(eigenvalues, dtype=complex))
    return float(sum(math.log2(math.ceil(v)) for v in lam if v > 1.0))


def ar_roots(a_coeffs: Sequence[float]) -> tuple[np.ndarray, bool]:
    """Roots of z^m + a_1 z^(m-1) + ... + a_m via companion eigenvalues.

    The second value flags roots within 1e-8 of the unit circle.
    """
    a = np.asarray(a_coeffs, dtype=float)
    if len(a) == 0:
        return np.zeros(0, dtype=complex), False
    C = np.zeros((len(a), len(a)))
    C[0] = -a
    C[1:, :-1] = np.eye(len(a) - 1)
    roots = np.linalg.eigvals(C)
    if not np.all(np.isfinite(roots)):
        raise ArithmeticError("root computation did not converge")
    near = bool(np.any(np.abs(np.abs(roots) - 1.0) < _UNIT_CIRCLE_TOL))
    return roots, near


def ar_rate_distortion(a_coeffs: Sequence[float], sigma2: float, theta: float,
                       quadrature_points: int = 8192) -> tuple[float, float, float]:
    """Parametric (D_theta, R(D_theta)) for the AR source driven by N(0, sigma2).

    With g(w) = |1 + sum_k a_k e^{-ikw}|^2 / sigma2,
        D = (1/2pi) int min(theta, 1/g),
        R = (1/2pi) int max(0, 1/2 log2(1/(theta g)))  +  sum_k 1/2 max(0, log2|rho_k|^2),
    the integrals by the composite trapezoid rule on [-pi, pi].
    Returns ``(D, R, correction)``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if quadrature_points < 512:
        raise ValueError("quadrature_points must be >= 512")
    a = np.asarray(a_coeffs, dtype=float)
    w = np.linspace(-np.pi, np.pi, quadrature_points + 1)
    k = np.arange(1, len(a) + 1)
    H = 1.0 + (a[None, :] * np.exp(-1j * np.outer(w, k))).sum(axis=1) if len(a) else np.ones_like(w)
    g = np.abs(H) ** 2 / sigma2
    with np.errstate(divide="ignore"):
        inv_g = np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), np.inf)
        D_int = np.minimum(theta, inv_g)
        R_int = np.maximum(0.0, 0.5 * np.log2(inv_g / theta))
    D = float(np.trapezoid(D_int, w) / (2 * np.pi))
    R0 = float(np.trapezoid(R_int, w) / (2 * np.pi))
    roots, near = ar_roots(a)
    if near:
        warnings.warn("AR polynomial has a root on or near the unit circle", stacklevel=2)
    mags = np.abs(roots)
    correction = float(np.sum(np.log2(mags[mags > 1.0])))
    return D, R0 + correction, correction


def ar_rate_distortion_curve(a_coeffs, sigma2: float, thetas: Sequence[float],
                             quadrature_points: int = 8192) -> list[tuple[float, float, float, float]]:
    """Rows ``(theta, D, R_bits, correction_bits)`` over the given thetas."""
    return [(float(t), *ar_rate_distortion(a_coeffs, sigma2, t, quadrature_points)) for t in thetas]


def shannon_lower_bound(entropy_rate_bits: float, N: int, epsilon: float) -> float:
    """h - (N/2) log2(2 pi e epsilon); may be negative."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return entropy_rate_bits - 0.5 * N * math.log2(2 * math.pi * math.e * epsilon)


def conditional_entropy_rate(system: SystemModel) -> float:
    """Differential entropy of the additive noise, h(x_t | x_{t-1}) = h(w)."""
    if not system.additive:
        raise ValueError("system is not of the form f(x) + w; supply the entropy rate manually")
    noise = system.noise
    dim = system.noise_dim
    if noise.kind == "gaussian":
        return 0.5 * dim * math.log2(2 * math.pi * math.e * noise.variance)
    if noise.kind == "uniform":
        return dim * math.log2(noise.width)
    raise ValueError(f"no closed form for noise kind {noise.kind!r}; supply the entropy rate manually")


def density_norm(density: Callable[[np.ndarray], np.ndarray], k: int, integration_box,
                 quadrature_points: int = 4097) -> float:
    """(int p^(k/(k+2)))^((k+2)/k) by the trapezoid rule on a box (k = 1 or 2).

    ``integration_box`` is ``(low, high)`` for k = 1 or a list of k such
    pairs.  The density must integrate to 1 within 1e-3 over the box.
    """
    box = np.atleast_2d(np.asarray(integration_box, dtype=float))
    if box.shape != (k, 2):
        raise ValueError(f"integration_box must give {k} (low, high) pairs")
    axes = [np.linspace(lo, hi, quadrature_points) for lo, hi in box]
    if k == 1:
        p = np.asarray(density(axes[0]), dtype=float)
        mass = np.trapezoid(p, axes[0])
        inner = np.trapezoid(p ** (k / (k + 2)), axes[0])
    elif k == 2:
        X, Y = np.meshgrid(*axes, indexing="ij")
        p = np.asarray(density(np.stack([X, Y], axis=-1)), dtype=float)
        mass = np.trapezoid(np.trapezoid(p, axes[1], axis=1), axes[0])
        pk = p ** (k / (k + 2))
        inner = np.trapezoid(np.trapezoid(pk, axes[1], axis=1), axes[0])
    else:
        raise ValueError("density_norm supports k = 1 or 2")
    if abs(mass - 1.0) > 1e-3:
        raise ValueError(f"density integrates to {mass:.6f} over the box, not 1")
    return float(inner ** ((k + 2) / k))


def _gl(norm_value, N, epsilon, K2):
    arg = K2 * norm_value / epsilon
    if not (norm_value > 0 and epsilon > 0 and K2 > 0) or not arg > 0:
        raise ValueError("the logarithm's argument must be positive")
    return 0.5 * N * math.log2(arg)


def gl_capacity_upper(density_norm_value: float, N: int, epsilon: float,
                      K2: float = K2_SCALAR) -> float:
    """(N/2) log2(K2 ||p|| / epsilon): rate sufficient for memoryless quantization."""
    return _gl(density_norm_value, N, epsilon, K2)


def gl_capacity_lower(noise_density_norm: float, N: int, epsilon: float,
                      K2: float = K2_SCALAR) -> float:
    """Same arithmetic on the noise density; below it no coder meets epsilon."""
    return _gl(noise_density_norm, N, epsilon, K2)
