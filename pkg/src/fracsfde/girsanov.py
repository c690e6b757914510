"""Drift discrepancies, their Cameron-Martin drivers and Girsanov log-weights.

For a drift ``phi`` on ``[0, T]`` the driver ``u = K_H^{-1}(int_0^. phi)`` is
evaluated from

.. math::

    u(r) = \\frac{[1 - C_0 (H - \\frac12)]\\, r^{1/2-H}\\phi(r)}{\\Gamma(\\frac32 - H)}
         + \\frac{(H - \\frac12)\\, r^{H-1/2}}{\\Gamma(\\frac32 - H)}
           \\int_0^r \\frac{s^{1/2-H}(\\phi(r) - \\phi(s))}{(r-s)^{H+1/2}} ds,

divided by the kernel normalization ``c_H Gamma(H - 1/2)``, so the running
integral is never differentiated numerically. Weights are accumulated in
log space by left-point Itô sums against the stored Wiener increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fbm_paths import WienerPath
from .fractional_ops import SampledFunction, _check_hurst, c0_constant, kh_inverse_matrix
from .grid import TimeGrid
from .sfde_models import ModelSpec, Segment


class WeightOverflow(FloatingPointError):
    """Raised when a log-weight is not finite."""


@dataclass(frozen=True)
class DriftDiscrepancy:
    """Samples of an ``R^m``-valued drift on the ``[0, T]`` nodes, shape ``(n_paths, n + 1, m)``."""

    grid: TimeGrid
    values: np.ndarray
    delta: Optional[float] = None

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1] != self.grid.n_steps + 1:
            raise ValueError("values must have shape (n_paths, n_steps + 1, m)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("drift discrepancy must be finite")

    def scaled(self, c: float) -> "DriftDiscrepancy":
        return DriftDiscrepancy(self.grid, c * self.values, self.delta)


@dataclass(frozen=True)
class WeightPath:
    """Log-weights on the ``[0, T]`` nodes, shape ``(n_paths, n + 1)``; ``log_weight[:, 0] = 0``."""

    grid: TimeGrid
    log_weight: np.ndarray
    stochastic: np.ndarray
    compensator: np.ndarray

    @property
    def weight(self) -> np.ndarray:
        return np.exp(self.log_weight)

    @property
    def terminal(self) -> np.ndarray:
        return np.exp(self.log_weight[:, -1])

    def at(self, t: float) -> np.ndarray:
        return np.exp(self.log_weight[:, self.grid.step_index(t)])


def compute_h(model: ModelSpec, y, delta: float) -> DriftDiscrepancy:
    """``h(t) = sigma_pinv (b(Y(t)) - b(Y(t_delta))) - Z(Y_hat_t)`` at every fine node of ``[0, T]``."""
    grid = y.grid
    s = grid.scheme_substeps(delta)
    n0, n = grid.n_hist, grid.n_steps
    Y = y.values
    d = model.d
    pos = Y[:, n0:]
    bY = np.asarray(model.b(pos.reshape(-1, d))).reshape(pos.shape)
    k = np.arange(n + 1)
    bd = bY[:, (k // s) * s]
    h = (bY - bd) @ model.structure.sigma_pinv.T
    for j in range(n + 1):
        seg = Segment(Y, n0 + j, n0, grid.dt, cap=n0 + (j // s) * s)
        h[:, j] -= model.Z(seg)
    return DriftDiscrepancy(grid, h, float(delta))


def segment_drift(model: ModelSpec, y) -> DriftDiscrepancy:
    """``Z(Y_t)`` along the full (untruncated) segments of ``y``."""
    grid = y.grid
    n0 = grid.n_hist
    out = np.empty((y.values.shape[0], grid.n_steps + 1, model.m))
    for j in range(grid.n_steps + 1):
        out[:, j] = model.Z(Segment(y.values, n0 + j, n0, grid.dt))
    return DriftDiscrepancy(grid, out)


def kh_inverse_of_running_integral(h, H: float):
    """``K_H^{-1}(int_0^. h ds)`` at the nodes; node 0 is undefined (NaN).

    Accepts a :class:`DriftDiscrepancy` (returns an array shaped like its
    values) or a :class:`SampledFunction` (returns a :class:`SampledFunction`).
    """
    H = _check_hurst(H)
    grid = h.grid
    K = kh_inverse_matrix(grid.n_steps, grid.dt, H, c0_constant(H))
    if isinstance(h, SampledFunction):
        return SampledFunction(grid, K @ h.values, defined_from=1)
    return np.einsum("ij,pjm->pim", K, h.values, optimize=True)


def girsanov_weight(kinv: np.ndarray, wiener: WienerPath, sign: int) -> WeightPath:
    """``sign sum <u_i, dB_i> - 1/2 sum |u_i|^2 dt`` accumulated over cells ``i >= 1``.

    ``kinv`` has shape ``(n_paths, n + 1, m)`` with an undefined node 0; the
    first cell is therefore left out of both sums.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    u = np.asarray(kinv, dtype=float)
    if u.ndim == 2:
        u = u[None]
    grid = wiener.grid
    if u.shape[:2] != (wiener.n_paths, grid.n_steps + 1):
        raise ValueError("driver and Wiener increments disagree in shape")
    ui = u[:, 1:-1]
    dB = wiener.increments[:, 1:]
    n = grid.n_steps
    stoch = np.zeros((u.shape[0], n + 1))
    comp = np.zeros((u.shape[0], n + 1))
    # overflow surfaces as WeightOverflow below
    with np.errstate(over="ignore", invalid="ignore"):
        stoch[:, 2:] = np.cumsum(np.sum(ui * dB, axis=-1), axis=1)
        comp[:, 2:] = np.cumsum(np.sum(ui**2, axis=-1), axis=1) * (0.5 * grid.dt)
        logw = sign * stoch - comp
    if not np.all(np.isfinite(logw)):
        raise WeightOverflow(f"non-finite log-weight (max |u| = {np.nanmax(np.abs(ui)):.3g})")
    return WeightPath(grid, logw, sign * stoch, comp)


def weight_R_delta(model: ModelSpec, y, delta: float, H: float) -> WeightPath:
    """Weight that turns the reference law into the EM law (minus sign)."""
    h = compute_h(model, y, delta)
    return girsanov_weight(kh_inverse_of_running_integral(h, H), y.fbm.wiener, -1)


def weight_R_xi(model: ModelSpec, y, H: float) -> WeightPath:
    """Weight that turns the reference law into the law of the full equation (plus sign)."""
    z = segment_drift(model, y)
    return girsanov_weight(kh_inverse_of_running_integral(z, H), y.fbm.wiener, +1)


def weight_moment(w: WeightPath, q: float) -> tuple[float, float]:
    """Monte Carlo ``E[R(T)^q]`` and its standard error."""
    v = np.exp(q * w.log_weight[:, -1])
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
