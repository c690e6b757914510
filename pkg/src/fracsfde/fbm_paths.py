"""Wiener and fractional Brownian paths on a :class:`TimeGrid`, plus path norms.

Paths are batched: arrays carry a leading path axis, then the node axis, then
the coordinate axis. Every path index owns its own counter-based Philox stream
keyed by ``(seed, path_index)``, so a path is identical whichever batch or
worker produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg

from .fractional_ops import _check_hurst, kh_primitive
from .grid import TimeGrid


def covariance(H: float, t, s):
    """fBm covariance ``R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2``."""
    if not 0 < H < 1:
        raise ValueError(f"H must lie in (0, 1), got {H}")
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("covariance is defined for non-negative times only")
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return out if out.ndim else float(out)


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based generator owned by one path of one run."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path_index])))


@dataclass(frozen=True)
class WienerPath:
    """Brownian increments on the ``[0, T]`` fine cells for a batch of paths.

    ``increments`` has shape ``(n_paths, n_steps, dim)``; path ``i`` of the
    batch is path ``first_index + i`` of the run keyed by ``seed``.
    """

    grid: TimeGrid
    increments: np.ndarray
    seed: int
    first_index: int = 0

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]

    @property
    def values(self) -> np.ndarray:
        """Cumulative path, starting at 0, shape ``(n_paths, n_steps + 1, dim)``."""
        out = np.zeros((self.n_paths, self.grid.n_steps + 1, self.dim))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


@dataclass(frozen=True)
class FbmPath:
    """Batch of fBm paths on the ``[0, T]`` nodes with the Wiener paths behind them.

    ``wiener`` is ``None`` for exact-law oracle samples (Cholesky), which
    cannot feed Girsanov integrals.
    """

    grid: TimeGrid
    H: float
    values: np.ndarray
    wiener: Optional[WienerPath] = None

    def __post_init__(self):
        _check_hurst(self.H)
        if self.values.ndim != 3 or self.values.shape[1] != self.grid.n_steps + 1:
            raise ValueError("values must have shape (n_paths, n_steps + 1, dim)")
        if self.wiener is not None and self.wiener.grid != self.grid:
            raise ValueError("fBm and Wiener paths must share the grid")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)


def sample_wiener(grid: TimeGrid, seed: int, dim: int = 1, n_paths: int = 1,
                  first_index: int = 0) -> WienerPath:
    """Draw paths ``first_index, ..., first_index + n_paths - 1`` of the run ``seed``."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    n = grid.n_steps
    sd = math.sqrt(grid.dt)
    inc = np.empty((n_paths, n, dim))
    for i in range(n_paths):
        inc[i] = path_rng(seed, first_index + i).standard_normal((n, dim))
    inc *= sd
    return WienerPath(grid, inc, int(seed), int(first_index))


@lru_cache(maxsize=4)
def volterra_matrix(n: int, dt: float, H: float) -> np.ndarray:
    """Cell-averaged kernel ``A[i, j] = (1/dt) int_{cell j} K_H(t_i, s) ds``, shape ``(n + 1, n)``.

    The cell integrals are differences of the exact primitive in ``s``, so the
    ``(t - s)^{H - 1/2}`` behaviour at the diagonal is integrated exactly.
    """
    H = _check_hurst(H)
    A = np.zeros((n + 1, n))
    t = np.arange(n + 1) * dt
    for i in range(1, n + 1):
        P = kh_primitive(H, t[i], t[:i + 1])
        A[i, :i] = np.diff(P) / dt
    A.setflags(write=False)
    return A


def fbm_from_wiener(w: WienerPath, H: float) -> FbmPath:
    """Volterra synthesis ``B^H(t_i) = sum_j A[i, j] dB_j`` on the fine nodes."""
    H = _check_hurst(H)
    A = volterra_matrix(w.grid.n_steps, w.grid.dt, H)
    vals = np.einsum("ij,pjd->pid", A, w.increments, optimize=True)
    return FbmPath(w.grid, H, vals, w)


def sample_fbm_cholesky(grid: TimeGrid, H: float, seed: int, dim: int = 1,
                        n_paths: int = 1) -> FbmPath:
    """Exact-law fBm by dense Cholesky of ``[R_H(t_i, t_j)]``; oracle use only."""
    H = _check_hurst(H)
    t = grid.fine_times[1:]
    if t.size > 4096:
        raise ValueError("Cholesky oracle limited to 4096 nodes")
    C = covariance(H, t[:, None], t[None, :])
    L = linalg.cholesky(C, lower=True)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x0C401])))
    z = rng.standard_normal((n_paths, t.size, dim))
    vals = np.zeros((n_paths, t.size + 1, dim))
    vals[:, 1:] = np.einsum("ij,pjd->pid", L, z)
    return FbmPath(grid, H, vals, None)


# -- path norms ---------------------------------------------------------------


@dataclass(frozen=True)
class HolderEstimate:
    """Grid estimate of ``sup |f(t) - f(s)| / (t - s)^beta`` over ``a <= s < t <= b``."""

    a: float
    b: float
    beta: float
    value: float


def _pointwise_abs(values: np.ndarray) -> np.ndarray:
    return np.abs(values) if values.ndim == 1 else np.linalg.norm(values, axis=-1)


def holder_norms(values: np.ndarray, dt: float, beta: float) -> np.ndarray:
    """Hölder seminorms of a batch ``(n_paths, n_nodes[, dim])`` over all node pairs."""
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    if n < 2:
        raise ValueError("need at least two nodes")
    best = np.zeros(values.shape[0])
    for lag in range(1, n):
        d = values[:, lag:] - values[:, :-lag]
        d = np.abs(d) if d.ndim == 2 else np.linalg.norm(d, axis=-1)
        np.maximum(best, d.max(axis=1) / (lag * dt) ** beta, out=best)
    return best


def holder_norm(values, times, beta: float, a: float | None = None,
                b: float | None = None) -> HolderEstimate:
    """Hölder seminorm of one sampled path restricted to ``[a, b]``."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    a = times[0] if a is None else a
    b = times[-1] if b is None else b
    m = (times >= a - 1e-12) & (times <= b + 1e-12)
    if m.sum() < 2:
        raise ValueError(f"interval [{a}, {b}] holds fewer than two nodes")
    t = times[m]
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9):
        raise ValueError("holder_norm expects uniformly spaced nodes")
    val = holder_norms(values[m][None], float(dt[0]), beta)[0]
    return HolderEstimate(float(a), float(b), float(beta), float(val))


def sup_norm(values) -> float:
    """``max |f|`` over the sampled nodes."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty path")
    return float(_pointwise_abs(values).max())


# -- Fernique-type checks -----------------------------------------------------


@dataclass(frozen=True)
class FerniqueReport:
    empirical_mean: float
    stderr: float
    bound: float
    threshold: float
    satisfied: bool


def fernique_threshold(H: float, beta: float, T: float) -> float:
    """Largest admissible coefficient ``1 / (128 (2T)^{2(H - beta)})`` for the Hölder form."""
    return 1.0 / (128.0 * (2 * T) ** (2 * (H - beta)))


def _sample_for_norms(H, T, n_samples, seed, n_steps):
    grid = TimeGrid.uniform(T, n_steps)
    return fbm_from_wiener(sample_wiener(grid, seed, 1, n_samples), H).values[..., 0], grid.dt


def fernique_check(H: float, beta: float, T: float, alpha_coef: float, n_samples: int,
                   seed: int, variant: str = "holder", n_steps: int = 256) -> FerniqueReport:
    """Monte Carlo ``E exp(alpha ||B^H||^2)`` against the Gaussian tail bound.

    ``variant="holder"`` uses the ``beta``-Hölder seminorm on ``[0, T]`` and the
    bound ``(1 - 128 alpha (2T)^{2(H-beta)})^{-1/2}``; ``variant="sup"`` uses the
    sup norm, for which only finiteness is asserted (``bound = inf``).
    """
    H = _check_hurst(H)
    if variant == "holder":
        if not 0 < beta < H:
            raise ValueError(f"beta must lie in (0, H), got {beta}")
        thr = fernique_threshold(H, beta, T)
    elif variant == "sup":
        thr = 1.0 / (2 * T)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if not 0 <= alpha_coef < thr:
        raise ValueError(f"alpha_coef must lie in [0, {thr:.6g}) for the {variant} form")
    if alpha_coef == 0:
        return FerniqueReport(1.0, 0.0, 1.0, thr, True)
    vals, dt = _sample_for_norms(H, T, n_samples, seed, n_steps)
    norms = holder_norms(vals, dt, beta) if variant == "holder" else np.abs(vals).max(axis=1)
    e = np.exp(alpha_coef * norms**2)
    mean, se = float(e.mean()), float(e.std(ddof=1) / math.sqrt(n_samples))
    if variant == "holder":
        bound = (1 - 128 * alpha_coef * (2 * T) ** (2 * (H - beta))) ** -0.5
    else:
        bound = math.inf
    ok = bool(np.isfinite(mean) and mean <= bound + 3 * se)
    return FerniqueReport(mean, se, bound, thr, ok)


def holder_moment_bound(H: float, beta: float, T: float, k: int) -> float:
    """``32^k (2T)^{2k(H-beta)} (2k)! / k!`` for ``E ||B^H||_beta^{2k}``."""
    return 32.0**k * (2 * T) ** (2 * k * (H - beta)) * math.factorial(2 * k) / math.factorial(k)


def holder_moment_check(H: float, beta: float, T: float, k: int, n_samples: int, seed: int,
                        n_steps: int = 256) -> FerniqueReport:
    """Monte Carlo ``E ||B^H||_beta^{2k}`` against :func:`holder_moment_bound`."""
    H = _check_hurst(H)
    vals, dt = _sample_for_norms(H, T, n_samples, seed, n_steps)
    m = holder_norms(vals, dt, beta) ** (2 * k)
    mean, se = float(m.mean()), float(m.std(ddof=1) / math.sqrt(n_samples))
    bound = holder_moment_bound(H, beta, T, k)
    return FerniqueReport(mean, se, bound, math.nan, mean <= bound + 3 * se)


# -- dumps --------------------------------------------------------------------


def dump_paths(fh, times: np.ndarray, values: np.ndarray, header: str = "t") -> None:
    """Write one CSV line per node: ``t, value components...`` for a single path."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    cols = [header] + [f"x{j}" for j in range(values.shape[1])]
    fh.write(",".join(cols) + "\n")
    for t, row in zip(times, values):
        fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
