"""Reference Euler solver and the truncated EM scheme on the fine grid.

All solvers work on batches of paths sharing one :class:`TimeGrid`. The
stored array covers ``[-tau, T]`` with the initial segment glued in front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .fbm_paths import FbmPath, fbm_from_wiener, sample_wiener
from .grid import TimeGrid
from .sfde_models import ModelSpec, Segment, phi_constants


class SolverDivergence(FloatingPointError):
    """Raised when a simulated state leaves the finite range."""


@dataclass(frozen=True)
class SolutionPath:
    """Simulated paths on ``[-tau, T]``, shape ``(n_paths, n_nodes, d)``."""

    grid: TimeGrid
    values: np.ndarray
    scheme: str
    fbm: Optional[FbmPath] = None
    delta: Optional[float] = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def at(self, t: float) -> np.ndarray:
        """State at grid time ``t`` for every path, shape ``(n_paths, d)``."""
        return self.values[:, self.grid.n_hist + self.grid.step_index(t)]

    @property
    def positive_part(self) -> np.ndarray:
        """Values on ``[0, T]``."""
        return self.values[:, self.grid.n_hist:]


def _allocate(model: ModelSpec, fbm: FbmPath) -> np.ndarray:
    grid = fbm.grid
    if fbm.dim != model.m:
        raise ValueError(f"fBm dimension {fbm.dim} does not match m={model.m}")
    if abs(grid.tau - model.tau) > 1e-12 * model.tau:
        raise ValueError(f"grid tau={grid.tau} differs from model tau={model.tau}")
    X = np.empty((fbm.n_paths, grid.n_nodes, model.d))
    X[:, :grid.n_hist + 1] = model.xi_on(grid)
    return X


def _check_finite(X: np.ndarray, n_hist: int) -> None:
    if np.all(np.isfinite(X)):
        return
    bad = ~np.all(np.isfinite(X), axis=(0, 2))
    k = int(np.argmax(bad)) - n_hist
    raise SolverDivergence(f"non-finite state at fine step {k}")


def solve_reference(model: ModelSpec, fbm: FbmPath) -> SolutionPath:
    """Explicit Euler on the fine grid for ``dY = b(Y) dt + sigma dB^H``, glued to ``xi``."""
    grid = fbm.grid
    X = _allocate(model, fbm)
    dt, n0 = grid.dt, grid.n_hist
    noise = fbm.increments @ model.sigma.T
    b = model.b
    for k in range(grid.n_steps):
        x = X[:, n0 + k]
        X[:, n0 + k + 1] = x + b(x) * dt + noise[:, k]
    _check_finite(X, n0)
    return SolutionPath(grid, X, "reference", fbm)


def solve_em_truncated(model: ModelSpec, fbm: FbmPath, delta: float) -> SolutionPath:
    """Truncated EM scheme with step ``delta`` realized on the fine grid of ``fbm``.

    On ``Ran(sigma)`` the drift ``pi b(X(t_delta)) + sigma Z(X_hat_t)`` is
    frozen per fine substep (``b`` at the left ``delta``-node, ``Z`` on the
    truncated segment). The complementary block is propagated by
    ``expm(A dt)`` with the ``b_star`` convolution by the trapezoid rule.
    """
    grid = fbm.grid
    s = grid.scheme_substeps(delta)
    X = _allocate(model, fbm)
    st = model.structure
    dt, n0 = grid.dt, grid.n_hist
    noise = fbm.increments @ model.sigma.T
    b, Z, sig = model.b, model.Z, model.sigma
    if st.full_range:
        bd = None
        for k in range(grid.n_steps):
            if k % s == 0:
                bd = b(X[:, n0 + k])
            z = Z(Segment(X, n0 + k, n0, dt, cap=n0 + (k // s) * s))
            X[:, n0 + k + 1] = X[:, n0 + k] + (bd + z @ sig.T) * dt + noise[:, k]
    else:
        P = st.pi_star
        Q = np.eye(model.d) - P
        E = Q @ linalg.expm(st.A * dt) @ Q
        bs = st.b_star
        PT, QT, ET = P.T, Q.T, E.T
        bd = None
        for k in range(grid.n_steps):
            x = X[:, n0 + k]
            if k % s == 0:
                bd = b(x) @ PT
            z = Z(Segment(X, n0 + k, n0, dt, cap=n0 + (k // s) * s))
            px = x @ PT
            px_new = px + (bd + z @ sig.T) * dt + noise[:, k]
            qx = x @ QT
            conv = 0.5 * dt * (bs(px) @ ET + bs(px_new) @ QT)
            X[:, n0 + k + 1] = px_new + qx @ ET + conv
    _check_finite(X, n0)
    return SolutionPath(grid, X, "truncated_em", fbm, float(delta))


# -- pathwise bounds ----------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """Per-path comparison of simulated paths with a pathwise upper bound."""

    violation_rate: float
    max_excess: float
    sup_violation_rate: float
    sup_max_excess: float
    n_paths: int


def _cum_trapz(y: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(y)
    out[:, 1:] = np.cumsum(0.5 * (y[:, 1:] + y[:, :-1]), axis=1) * dt
    return out


def pathwise_bound(model: ModelSpec, y: SolutionPath, growth: str = "display") -> np.ndarray:
    """Right-hand side of the pathwise growth estimate for the reference equation.

    ``exp(c t / 2) |Y(0)| + sqrt(K2bar) (int_0^t exp(K1bar (t - r)) |b(sigma B^H(r))|^2 dr)^{1/2}
    + |sigma B^H(t)|`` with ``c = K2bar`` (``growth="display"``) or ``c = K1bar``
    (``growth="proof"``, the rate produced by the Gronwall step).
    """
    grid = y.grid
    ph = phi_constants(model.K1, grid.T)
    t = grid.fine_times
    sB = y.fbm.values @ model.sigma.T
    g = np.sum(np.asarray(model.b(sB.reshape(-1, model.d))).reshape(sB.shape) ** 2, axis=-1)
    k1 = ph.K1bar
    integral = np.exp(k1 * t) * _cum_trapz(np.exp(-k1 * t) * g, grid.dt)
    if growth not in ("display", "proof"):
        raise ValueError(f"growth must be 'display' or 'proof', got {growth!r}")
    c = ph.K2bar if growth == "display" else k1
    y0 = np.linalg.norm(y.values[:, grid.n_hist], axis=-1)
    return (np.exp(c * t / 2) * y0[:, None] + math.sqrt(ph.K2bar) * np.sqrt(np.maximum(integral, 0))
            + np.linalg.norm(sB, axis=-1))


def sup_bound(model: ModelSpec, y: SolutionPath) -> np.ndarray:
    """``||xi||_inf + |b(0)| Phi + (L1 Phi + 1) ||sigma|| ||B^H||_inf`` per path."""
    grid = y.grid
    ph = phi_constants(model.K1, grid.T).Phi
    xi_sup = np.linalg.norm(model.xi_on(grid), axis=-1).max()
    b0 = float(np.linalg.norm(model.b(np.zeros((1, model.d)))))
    bsup = np.linalg.norm(y.fbm.values, axis=-1).max(axis=1)
    return xi_sup + b0 * ph + (model.L1 * ph + 1) * model.sigma_norm() * bsup


def moment_bound_check(model: ModelSpec, n_paths: int, seed: int, T: float,
                       H: float = 0.75, substeps: int = 256, slack: float = 1e-2,
                       growth: str = "display") -> BoundReport:
    """Simulate reference paths and count violations of the pathwise growth bounds.

    A node violates the bound when ``|Y| > bound + slack * max(1, bound)``.
    """
    grid = TimeGrid(model.tau, T, 1, substeps)
    fbm = fbm_from_wiener(sample_wiener(grid, seed, model.m, n_paths), H)
    y = solve_reference(model, fbm)
    rhs = pathwise_bound(model, y, growth)
    lhs = np.linalg.norm(y.positive_part, axis=-1)
    excess = lhs - rhs
    viol = np.any(excess > slack * np.maximum(1.0, rhs), axis=1)
    sup_rhs = sup_bound(model, y)
    sup_lhs = np.linalg.norm(y.values, axis=-1).max(axis=1)
    sup_ex = sup_lhs - sup_rhs
    sviol = sup_ex > slack * np.maximum(1.0, sup_rhs)
    return BoundReport(float(viol.mean()), float(excess.max()), float(sviol.mean()),
                       float(sup_ex.max()), n_paths)

