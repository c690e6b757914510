"""Path-dependent SDE models driven by fBm: specification, degenerate structure, conditions.

A model is the tuple ``(b, Z, sigma, xi, tau)`` of

.. math::

    dX(t) = \\{b(X(t)) + \\sigma Z(X_t)\\} dt + \\sigma dB^H(t), \\qquad X_0 = \\xi,

together with declared regularity constants. Functions act on batches:
``b`` maps ``(n, d)`` to ``(n, d)``, ``Z`` maps a batched :class:`Segment` to
``(n, m)`` and ``xi`` maps an array of times in ``[-tau, 0]`` to ``(len, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .fractional_ops import _check_hurst, beta_fn, c0_constant
from .grid import TimeGrid


# -- segments -----------------------------------------------------------------


class Segment:
    """Batched view ``u -> X(t + u)``, ``u in [-tau, 0]``, of stored paths.

    ``path`` has shape ``(n_paths, n_nodes, d)`` with node ``k`` at time
    ``(k - n_hist) * dt``. Segment node ``j`` (time ``u = (j - n_hist) dt``)
    reads path node ``min(index - n_hist + j, cap)``; the cap realizes the
    truncation ``(t + u) ^ t_delta``.
    """

    __slots__ = ("path", "index", "cap", "n_hist", "dt")

    def __init__(self, path: np.ndarray, index: int, n_hist: int, dt: float,
                 cap: Optional[int] = None):
        self.path = path
        self.index = int(index)
        self.n_hist = int(n_hist)
        self.dt = float(dt)
        self.cap = self.index if cap is None else int(cap)

    @classmethod
    def from_values(cls, values, tau: float) -> "Segment":
        """Standalone segment from node values on ``[-tau, 0]``, shape ``([n_paths,] nodes, d)``."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        n_hist = values.shape[1] - 1
        return cls(values, n_hist, n_hist, tau / n_hist)

    @property
    def tau(self) -> float:
        return self.n_hist * self.dt

    def _node(self, j):
        return np.minimum(self.index - self.n_hist + j, self.cap)

    def at(self, u: float) -> np.ndarray:
        """Values at ``u in [-tau, 0]`` (nearest grid node), shape ``(n_paths, d)``."""
        j = int(round(u / self.dt)) + self.n_hist
        if not 0 <= j <= self.n_hist:
            raise ValueError(f"u={u} outside [-{self.tau}, 0]")
        return self.path[:, self._node(j)]

    @property
    def values(self) -> np.ndarray:
        """All segment nodes, shape ``(n_paths, n_hist + 1, d)``."""
        return self.path[:, self._node(np.arange(self.n_hist + 1))]

    def sup_norm(self) -> np.ndarray:
        """``||segment||_inf`` per path."""
        return np.linalg.norm(self.values, axis=-1).max(axis=1)


def _path_arrays(path):
    values = path.values if hasattr(path, "values") else path
    if values.ndim == 2:
        values = values[None]
    return values, path.grid


def segment_at(path, t: float) -> Segment:
    """Segment ``u -> path(t + u)`` of a solution path (any object with ``grid`` and ``values``)."""
    values, grid = _path_arrays(path)
    k = grid.step_index(t)
    if k < 0:
        raise ValueError(f"t={t} must be >= 0")
    return Segment(values, grid.n_hist + k, grid.n_hist, grid.dt)


def truncated_segment(path, t: float, delta: float) -> Segment:
    """Segment ``u -> path((t + u) ^ t_delta)`` with ``t_delta = floor(t / delta) delta``.

    The floor is taken in integer fine-grid units, so exact multiples of
    ``delta`` are never rounded down.
    """
    values, grid = _path_arrays(path)
    k = grid.step_index(t)
    if k < 0:
        raise ValueError(f"t={t} must be >= 0")
    s = grid.scheme_substeps(delta)
    return Segment(values, grid.n_hist + k, grid.n_hist, grid.dt,
                   cap=grid.n_hist + (k // s) * s)


# -- model specification --------------------------------------------------------


@dataclass(frozen=True)
class DegenerateStructure:
    """Noise-range decomposition of ``R^d`` for a diffusion matrix ``sigma``.

    Attributes
    ----------
    pi_star : ndarray, (d, d)
        Orthogonal projection onto ``Ran(sigma)``.
    sigma_pinv : ndarray, (m, d)
        ``sigma^T ((sigma sigma^T)|_Ran)^{-1} pi_star``.
    A : ndarray, (d, d)
        Linear part on ``(I - pi_star) R^d`` (zero if the block is empty).
    b_star : callable or None
        Nonlinear part ``Ran(sigma) -> (I - pi_star) R^d``.
    """

    pi_star: np.ndarray
    sigma_pinv: np.ndarray
    A: np.ndarray
    b_star: Optional[Callable] = None
    rank: int = 0

    @property
    def full_range(self) -> bool:
        return self.rank == self.pi_star.shape[0]

    @property
    def sigma_pinv_norm(self) -> float:
        return float(np.linalg.norm(self.sigma_pinv, 2))


@dataclass(frozen=True)
class ModelSpec:
    """Drift, path-dependent drift, diffusion and initial segment with declared constants.

    ``K1`` is the one-sided Lipschitz constant of ``b``, ``L1`` its Lipschitz
    constant and ``C1, q0`` its growth bound ``|b(x)| <= C1 (1 + |x|^q0)``.
    ``Z`` is ``alpha``-Hölder with constant ``L2`` in the sup norm and ``xi`` is
    ``theta``-Hölder with constant ``L3``. ``q1, C3`` describe the optional
    one-sided bound on ``<sigma Z(eta1 + eta2), eta1(0)>``.
    """

    name: str
    d: int
    m: int
    b: Callable
    Z: Callable
    sigma: np.ndarray
    xi: Callable
    tau: float
    K1: float
    L1: float
    L2: float
    alpha: float
    L3: float
    theta: float
    C1: float = 1.0
    q0: float = 1.0
    q1: Optional[float] = None
    C3: Optional[float] = None
    A: Optional[np.ndarray] = None
    b_star: Optional[Callable] = None
    structure: Optional[DegenerateStructure] = field(default=None, compare=False)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "sigma", sigma)
        if not (self.d >= self.m >= 1):
            raise ValueError(f"need d >= m >= 1, got d={self.d}, m={self.m}")
        if sigma.shape != (self.d, self.m):
            raise ValueError(f"sigma must be {self.d}x{self.m}, got {sigma.shape}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.alpha <= 1 or not 0 < self.theta <= 1:
            raise ValueError("alpha and theta must lie in (0, 1]")
        if self.structure is None:
            object.__setattr__(self, "structure",
                               build_degenerate_structure(sigma, self.b, A=self.A,
                                                          b_star=self.b_star))

    def check_hurst(self, H: float) -> None:
        """Reject ``H`` for which the declared ``alpha`` or ``theta`` leave their windows."""
        H = _check_hurst(H)
        if not self.alpha > 1 - 1 / (2 * H):
            raise ValueError(f"alpha={self.alpha} must exceed 1 - 1/(2H) = {1 - 1 / (2 * H):.4g}")
        if not self.theta > (2 * H - 1) / (2 * self.alpha):
            raise ValueError(
                f"theta={self.theta} must exceed (2H-1)/(2 alpha) = {(2 * H - 1) / (2 * self.alpha):.4g}"
            )

    def xi_on(self, grid: TimeGrid) -> np.ndarray:
        """Initial segment sampled on the history nodes, shape ``(n_hist + 1, d)``."""
        v = np.asarray(self.xi(grid.hist_times), dtype=float)
        return v.reshape(grid.n_hist + 1, self.d)

    def sigma_norm(self) -> float:
        return float(np.linalg.norm(self.sigma, 2))


def theoretical_order(model: ModelSpec, H: float, beta: float) -> float:
    """Weak order ``alpha (beta ^ theta) + 1/2 - H``."""
    return model.alpha * min(beta, model.theta) + 0.5 - H


def build_degenerate_structure(sigma, b: Callable, A=None, b_star=None, probe_budget: int = 64,
                               seed: int = 0, tol: float = 1e-8) -> DegenerateStructure:
    """Projection, pseudo-inverse and validated ``(A, b_star)`` split for ``sigma``.

    The range of ``sigma`` comes from its SVD. When ``Ran(sigma) != R^d`` the
    author-supplied ``A`` and ``b_star`` are checked against
    ``(I - pi) b(x) = A (I - pi) x + b_star(pi x)`` at ``probe_budget`` random
    points.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d, m = sigma.shape
    U, S, Vt = linalg.svd(sigma)
    if S.size == 0 or S[0] == 0:
        raise ValueError("sigma must have a nonzero range")
    r = int(np.sum(S > max(d, m) * np.finfo(float).eps * S[0]))
    Ur = U[:, :r]
    pi = Ur @ Ur.T
    pinv = Vt[:r].T @ np.diag(1 / S[:r]) @ Ur.T
    Q = np.eye(d) - pi
    if r == d:
        return DegenerateStructure(pi, pinv, np.zeros((d, d)), None, r)
    if A is None or b_star is None:
        raise ValueError("degenerate sigma needs the linear part A and b_star of the drift")
    A = Q @ np.asarray(A, dtype=float) @ Q
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((probe_budget, d)) * rng.uniform(0.1, 10, (probe_budget, 1))
    lhs = np.asarray(b(x)) @ Q.T
    rhs = x @ Q.T @ A.T + np.asarray(b_star(x @ pi.T))
    res = np.abs(lhs - rhs).max()
    scale = max(1.0, np.abs(lhs).max())
    if res > tol * scale:
        raise ValueError(f"drift decomposition residual {res:.3g} exceeds {tol:g}")
    return DegenerateStructure(pi, pinv, A, b_star, r)


# -- constants and step-size conditions ---------------------------------------


@dataclass(frozen=True)
class PhiConstants:
    K1bar: float
    K2bar: float
    Phi: float


def phi_constants(K1: float, T: float) -> PhiConstants:
    """``K1bar``, ``K2bar`` and ``Phi = sqrt(K2bar (exp(K1bar T) - 1) / K1bar)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    if K1 >= 0:
        k1, k2 = 2 * K1 + 1.0, 1.0
    else:
        k1, k2 = 2 * K1 + abs(K1) / 2, 2 / abs(K1)
    x = k1 * T
    ratio = T * (1 + x / 2) if abs(x) < 1e-8 else T * math.expm1(x) / x
    return PhiConstants(k1, k2, math.sqrt(k2 * ratio))


@dataclass(frozen=True)
class ConditionReport:
    """Both sides of the two step-size conditions behind the weak-order estimate."""

    lhs_delay: float
    rhs_delay: float
    lhs_weight: float
    rhs_weight: float
    terms: dict
    q: float

    @property
    def pass_delay(self) -> bool:
        return self.lhs_delay < self.rhs_delay

    @property
    def pass_weight(self) -> bool:
        return self.lhs_weight < self.rhs_weight

    @property
    def passed(self) -> bool:
        return self.pass_delay and self.pass_weight

    def lines(self) -> list[str]:
        out = [f"{k} = {v!r}" for k, v in self.terms.items()]
        out += [
            f"lhs_delay = {self.lhs_delay!r}", f"rhs_delay = {self.rhs_delay!r}",
            f"pass_delay = {self.pass_delay}",
            f"lhs_weight = {self.lhs_weight!r}", f"rhs_weight = {self.rhs_weight!r}",
            f"pass_weight = {self.pass_weight}", f"weight_moment_q = {self.q!r}",
        ]
        return out


def beta_window(H: float, alpha: float) -> tuple[float, float]:
    return (2 * H - 1) / (2 * alpha), H


def check_stepsize_conditions(model: ModelSpec, H: float, T: float, delta: float,
                              beta: float) -> ConditionReport:
    """Evaluate both step-size conditions term by term as displayed.

    ``||sigma||`` and ``||sigma_pinv||`` are spectral norms. ``q`` is the
    largest exponent with ``(2q^2 - q) lhs_weight <= rhs_weight``, a margin-based
    guide to which weight moments stay finite (at least 1).
    """
    H = _check_hurst(H)
    lo, hi = beta_window(H, model.alpha)
    if not lo < beta < hi:
        raise ValueError(f"beta={beta} outside the admissible window ({lo:.6g}, {hi:.6g})")
    if not 0 < delta < T:
        raise ValueError("need 0 < delta < T")
    a, th = model.alpha, model.theta
    L1, L2, C1 = model.L1, model.L2, model.C1
    gate = 1.0 if a == 1 else 0.0
    C0 = c0_constant(H)
    ph = phi_constants(model.K1, T).Phi
    s = model.sigma_norm()
    si = model.structure.sigma_pinv_norm
    g2 = math.gamma(1.5 - H) ** 2
    bt = min(beta, th)
    plus = (1 + C0 * (H - 0.5)) ** 2
    P = L1 * ph + 1

    lhs_fz = 2 * L2**2 * T ** (2 - 2 * H) * (1 + (H - 0.5) ** 2 * C0**2) / ((1 - H) * g2) * s**2 * gate
    rhs_fz = (C1 * ph + 1) ** -2 / (2 * T)

    brk1 = 1 / (1 + 2 * beta - 2 * H) ** 2 + 16**H / (3 - 2 * H) ** 2 + 2 ** (2 * H + 1) / (2 * H - 1) ** 2
    brk2 = 16**H / (3 - 2 * H) ** 2 + 2 ** (2 * H + 1) / (2 * H - 1) ** 2
    inner = (plus * T ** (2 - 2 * H) * delta ** (2 * beta)
             + 8 * delta ** (2 * beta + 1 - 2 * H) * (T - delta) ** (2 - 2 * H) * T ** (2 * H - 1) * brk1
             + 4 * (1 - H) * delta ** (2 * beta + 4 - 4 * H) / (beta + 2 - 2 * H) ** 2)
    part1 = 16 * L1**2 * s**2 * si**2 * T ** (2 * beta) / (g2 * (1 - H)) * P**2 * inner
    z1 = 8 * L2**2 * s ** (2 * a) * plus * T ** (2 * (a * beta + 1 - H)) / (g2 * (1 - H)) * P ** (2 * a)
    z2 = (48 * L2**2 * s ** (2 * a) / g2 * (T * L1 * P + 1) ** (2 * a)
          * (beta_fn(1.5 - H, a * bt + 0.5 - H) ** 2 * T ** (2 * a * beta + 3 - 4 * H)
             / (2 * a * bt + 3 - 4 * H)
             + delta ** (2 * a * bt + 1 - 2 * H) * T ** (2 - 2 * H) / (1 - H) * brk2))
    part2 = (z1 + z2) * gate
    lhs_w = part1 + part2
    rhs_w = 1 / (128 * (2 * T) ** (2 * (H - beta)))

    rho = rhs_w / lhs_w if lhs_w > 0 else math.inf
    q = max(1.0, (1 + math.sqrt(1 + 8 * rho)) / 4) if math.isfinite(rho) else math.inf
    terms = dict(C0=C0, Phi=ph, sigma_norm=s, sigma_pinv_norm=si, weight_part1=part1,
                 weight_inner=inner, weight_z1=z1, weight_z2=z2)
    return ConditionReport(lhs_fz, rhs_fz, lhs_w, rhs_w, terms, q)


# -- assumption probes ----------------------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    max_ratio: float
    declared: float
    passed: bool
    witness: Optional[tuple] = None


def _random_segments(rng, n, n_nodes, d, tau):
    steps = rng.standard_normal((n, n_nodes, d)) * math.sqrt(tau / n_nodes)
    base = rng.standard_normal((n, 1, d)) * rng.uniform(0.1, 5, (n, 1, 1))
    return base + np.cumsum(steps, axis=1)


def assumption_probe(model: ModelSpec, n_points: int = 256, seed: int = 0,
                     n_nodes: int = 33) -> dict[str, ProbeResult]:
    """Spot-check declared constants at random points and segments (report only)."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    rng = np.random.default_rng(seed)
    d = model.d
    out = {}
    scale = rng.uniform(0.05, 5, (n_points, 1))
    x = rng.standard_normal((n_points, d)) * scale
    y = x + rng.standard_normal((n_points, d)) * rng.uniform(1e-3, 2, (n_points, 1))
    bx, by = np.asarray(model.b(x)), np.asarray(model.b(y))
    dxy = x - y
    n2 = np.sum(dxy**2, axis=1)

    def record(name, ratios, declared, pair):
        i = int(np.argmax(ratios))
        val = float(ratios[i])
        ok = val <= declared + 1e-9 * max(1.0, abs(declared))
        out[name] = ProbeResult(val, declared, ok, None if ok else pair(i))

    record("one_sided_lipschitz", np.sum((bx - by) * dxy, axis=1) / n2, model.K1, lambda i: (x[i], y[i]))
    record("lipschitz", np.linalg.norm(bx - by, axis=1) / np.sqrt(n2), model.L1, lambda i: (x[i], y[i]))
    record("growth", np.linalg.norm(bx, axis=1) / (1 + np.linalg.norm(x, axis=1) ** model.q0),
           model.C1, lambda i: (x[i],))

    e1 = _random_segments(rng, n_points, n_nodes, d, model.tau)
    e2 = e1 + _random_segments(rng, n_points, n_nodes, d, model.tau) * rng.uniform(1e-3, 1, (n_points, 1, 1))
    z1 = np.asarray(model.Z(Segment.from_values(e1, model.tau)))
    z2 = np.asarray(model.Z(Segment.from_values(e2, model.tau)))
    dist = np.linalg.norm(e1 - e2, axis=-1).max(axis=1)
    record("delay_holder", np.linalg.norm(z1 - z2, axis=1) / dist**model.alpha, model.L2,
           lambda i: (e1[i], e2[i]))

    u = np.linspace(-model.tau, 0, 257)
    xi = np.asarray(model.xi(u), dtype=float).reshape(u.size, d)
    i, j = np.triu_indices(u.size, 1)
    ratios = np.linalg.norm(xi[j] - xi[i], axis=1) / (u[j] - u[i]) ** model.theta
    record("initial_holder", ratios, model.L3, lambda k: (u[i[k]], u[j[k]]))

    if model.q1 is not None and model.C3 is not None:
        zs = np.asarray(model.Z(Segment.from_values(e1 + e2, model.tau))) @ model.sigma.T
        lhs = np.sum(zs * e1[:, -1], axis=1)
        n1 = np.linalg.norm(e1, axis=-1).max(axis=1)
        n2s = np.linalg.norm(e2, axis=-1).max(axis=1)
        record("delay_coercivity", lhs / (1 + n2s**model.q1 + n1**2), model.C3, lambda k: (e1[k], e2[k]))
    return out


# -- builtin models -------------------------------------------------------------


def _const_xi(value, d):
    v = np.atleast_1d(np.asarray(value, dtype=float))

    def xi(u):
        return np.broadcast_to(v, (np.size(u), d)).copy()

    return xi


def toy_model(tau: float = 0.5, sigma: float = 0.5, xi0: float = 0.1) -> ModelSpec:
    """``b(x) = -x``, ``Z(eta) = cos(eta(-tau))``, constant initial segment."""
    return ModelSpec(
        name="toy", d=1, m=1,
        b=lambda x: -x,
        Z=lambda seg: np.cos(seg.at(-seg.tau)),
        sigma=np.array([[sigma]]), xi=_const_xi(xi0, 1), tau=tau,
        K1=0.0, L1=1.0, L2=1.0, alpha=1.0, L3=0.0, theta=1.0, C1=1.0, q0=1.0,
    )


def fou_model(tau: float = 0.5, lam: float = 1.0, kappa: float = 0.5,
              sigma: float = 1.0) -> ModelSpec:
    """Fractional Ornstein-Uhlenbeck with delayed feedback ``Z(eta) = kappa eta(-tau)``."""
    return ModelSpec(
        name="fou", d=1, m=1,
        b=lambda x: -lam * x,
        Z=lambda seg: kappa * seg.at(-seg.tau) / sigma,
        sigma=np.array([[sigma]]),
        xi=lambda u: (0.5 + 0.2 * np.asarray(u, dtype=float)).reshape(-1, 1),
        tau=tau, K1=-lam, L1=lam, L2=abs(kappa / sigma), alpha=1.0, L3=0.2, theta=1.0,
        C1=lam, q0=1.0,
    )


def linear_model(tau: float = 0.5, L: float = 2.0, sigma: float = 1.0,
                 xi0: float = 1.0) -> ModelSpec:
    """``b(x) = -L x`` and ``Z = 0``: the drift discrepancy comes from freezing only."""
    return ModelSpec(
        name="linear", d=1, m=1,
        b=lambda x: -L * x,
        Z=lambda seg: np.zeros((seg.path.shape[0], 1)),
        sigma=np.array([[sigma]]), xi=_const_xi(xi0, 1), tau=tau,
        K1=-L, L1=L, L2=0.0, alpha=1.0, L3=0.0, theta=1.0, C1=L, q0=1.0,
    )


def hamiltonian_example(m: int, b0: Callable, Z0: Callable, sigma0, tau: float = 0.5,
                        xi=None, L1: float = 1.0, K1: float = 1.0, L2: float = 0.0,
                        alpha: float = 1.0, C1: float = 1.0) -> ModelSpec:
    """Stochastic Hamiltonian system on ``R^{2m}`` with noise in the momentum block.

    ``b(x) = (x2, b0(x1, x2))``, ``sigma = (0; sigma0)`` and
    ``Z = sigma0^{-1} Z0`` so that ``sigma Z = (0, Z0)``. The split has
    ``A = 0`` and ``b_star((0, x2)) = (x2, 0)``.
    """
    sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=float))
    if sigma0.shape != (m, m):
        raise ValueError(f"sigma0 must be {m}x{m}")
    if abs(np.linalg.det(sigma0)) < 1e-14 * max(1.0, np.abs(sigma0).max()) ** m:
        raise ValueError("sigma0 must be invertible")
    s0inv = np.linalg.inv(sigma0)
    d = 2 * m

    def b(x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x[:, m:], np.asarray(b0(x[:, :m], x[:, m:]))], axis=1)

    def Z(seg):
        return np.asarray(Z0(seg)) @ s0inv.T

    def b_star(px):
        px = np.asarray(px, dtype=float)
        return np.concatenate([px[:, m:], np.zeros_like(px[:, m:])], axis=1)

    sigma = np.vstack([np.zeros((m, m)), sigma0])
    if xi is None:
        xi = _const_xi(np.r_[np.ones(m), np.zeros(m)], d)
    return ModelSpec(
        name="hamiltonian", d=d, m=m, b=b, Z=Z, sigma=sigma, xi=xi, tau=tau,
        K1=K1, L1=L1, L2=L2, alpha=alpha, L3=0.0, theta=1.0, C1=C1, q0=1.0,
        A=np.zeros((d, d)), b_star=b_star,
    )


def _hamiltonian_default(tau: float = 0.5) -> ModelSpec:
    # damped oscillator with a delayed momentum feedback
    return hamiltonian_example(
        1, lambda x1, x2: -x1 - 0.5 * x2,
        lambda seg: 0.5 * np.sin(seg.at(-seg.tau)[:, 1:2]),
        [[0.5]], tau=tau, L1=1.5, K1=0.0, L2=1.0, C1=1.5,
    )


MODELS: dict[str, Callable[..., ModelSpec]] = {
    "toy": toy_model,
    "fou": fou_model,
    "linear": linear_model,
    "hamiltonian": _hamiltonian_default,
}


def get_model(name: str, **kwargs) -> ModelSpec:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**kwargs)
