"""Monte Carlo weak errors of the truncated EM scheme and log-log order fits.

Two estimators are available for ``|E f(X(t)) - E f(X^delta(t))|``:

``direct``
    common-noise difference against the scheme at ``delta_ref = delta_min / refinement``;
``girsanov``
    ``E[(R^xi(t) - R^{xi,delta}(t)) f(Y(t))]`` on reference paths.

Paths are simulated in fixed-size chunks; every path owns its own random
stream and per-path results are concatenated in path order, so the outcome
depends neither on the chunk-to-worker assignment nor on the thread count.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .fbm_paths import fbm_from_wiener, sample_wiener
from .girsanov import weight_R_delta, weight_R_xi
from .grid import TimeGrid
from .sfde_models import ModelSpec, check_stepsize_conditions, get_model, theoretical_order
from .solvers import solve_em_truncated, solve_reference

ESTIMATORS = ("direct", "girsanov")


def _cos1(x):
    return np.cos(x.sum(axis=-1))


def _cos2(x):
    return np.cos(2 * x.sum(axis=-1))


def _smooth_indicator(x):
    # logistic ramp around 0 of width 0.1
    return 0.5 * (1 + np.tanh(x[..., 0] / 0.1))


TEST_FUNCTIONS: dict[str, Callable] = {"cos1": _cos1, "cos2": _cos2, "smooth_ind": _smooth_indicator}


class InsufficientData(ValueError):
    """Fewer than three usable error estimates for an order fit."""


@dataclass(frozen=True)
class ConvergenceConfig:
    """Parameters of a weak-order study.

    ``M_values`` lists the EM resolutions, so ``delta = tau / M``; the fine grid
    is ``delta_ref / ref_substeps`` with ``delta_ref = tau / (max(M) * refinement)``.
    """

    model: str = "toy"
    H: float = 0.75
    T: float = 1.0
    t_eval: float | None = None
    tau: float | None = None
    M_values: tuple = (8, 16, 32, 64)
    n_paths: int = 10_000
    seed: int = 12345
    functions: tuple = ("cos1",)
    beta: float = 0.7
    refinement: int = 8
    ref_substeps: int = 4
    estimators: tuple = ESTIMATORS
    chunk_size: int = 1000
    threads: int = 1

    def __post_init__(self):
        if not self.M_values:
            raise ValueError("M_values must list at least one EM resolution")
        if any(int(M) != M or M < 1 for M in self.M_values):
            raise ValueError("M_values must be positive integers")
        object.__setattr__(self, "M_values", tuple(sorted(int(M) for M in self.M_values)))
        if not 0.5 < self.H < 1:
            raise ValueError(f"H must lie in (1/2, 1), got {self.H}")
        if self.n_paths < 2:
            raise ValueError("n_paths must be >= 2")
        if self.refinement < 1 or self.ref_substeps < 1 or self.chunk_size < 1 or self.threads < 1:
            raise ValueError("refinement, ref_substeps, chunk_size and threads must be >= 1")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}")
        for f in self.functions:
            if f not in TEST_FUNCTIONS:
                raise ValueError(f"unknown test function {f!r}")
        if self.t_eval is not None and not 0 < self.t_eval <= self.T:
            raise ValueError("t_eval must lie in (0, T]")

    def build_model(self) -> ModelSpec:
        return get_model(self.model) if self.tau is None else get_model(self.model, tau=self.tau)

    @property
    def evaluation_time(self) -> float:
        return self.T if self.t_eval is None else self.t_eval


@dataclass
class WeakErrorReport:
    """Per-delta weak errors, order fits and condition checks of one study."""

    config: ConvergenceConfig
    deltas: list
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    theoretical_order: float = math.nan
    conditions: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def conditions_pass(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def errors(self, estimator: str, function: str):
        rs = [r for r in self.rows if r["estimator"] == estimator and r["function"] == function]
        return (np.array([r["delta"] for r in rs]), np.array([r["error"] for r in rs]),
                np.array([r["stderr"] for r in rs]))

    def decreasing(self, estimator: str = "direct", function: str = "cos1",
                   nsigma: float = 2.0) -> list[tuple[float, float, bool]]:
        """For consecutive deltas (coarse to fine): error drop, its paired stderr, and pass flag."""
        per = self.samples[(estimator, function)]
        out = []
        ds = sorted(per, reverse=True)
        for a, b in zip(ds, ds[1:]):
            ea, eb = per[a], per[b]
            sa = 1.0 if ea.mean() >= 0 else -1.0
            sb = 1.0 if eb.mean() >= 0 else -1.0
            drop = sa * ea - sb * eb
            se = float(drop.std(ddof=1) / math.sqrt(drop.size))
            m = float(drop.mean())
            out.append((m, se, m > nsigma * se))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "estimator", "function", "error", "stderr", "n_paths"])
        for r in self.rows:
            w.writerow([repr(r["delta"]), r["estimator"], r["function"], repr(r["error"]),
                        repr(r["stderr"]), r["n_paths"]])
        w.writerow([])
        w.writerow(["estimator", "function", "fitted_order", "stderr", "theoretical_order",
                    "conditions_pass"])
        for (est, fn), fit in self.fits.items():
            slope = repr(fit.slope) if fit is not None else "nan"
            se = repr(fit.slope_stderr) if fit is not None else "nan"
            w.writerow([est, fn, slope, se, repr(self.theoretical_order), self.conditions_pass])
        return buf.getvalue()


@dataclass(frozen=True)
class OrderFit:
    slope: float
    slope_stderr: float
    intercept: float
    used: tuple
    excluded: tuple


def estimate_order(deltas: Sequence[float], errors: Sequence[float],
                   stderrs: Sequence[float] | None = None, nsigma: float = 2.0) -> OrderFit:
    """Least-squares slope of ``log|error|`` against ``log delta``.

    Estimates within ``nsigma`` standard errors of zero are excluded.
    """
    d = np.asarray(deltas, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    se = np.zeros_like(e) if stderrs is None else np.asarray(stderrs, dtype=float)
    keep = (e > nsigma * se) & (e > 0)
    if keep.sum() < 3:
        raise InsufficientData(f"only {int(keep.sum())} usable error estimates (need 3)")
    x, y = np.log(d[keep]), np.log(e[keep])
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    return OrderFit(float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))), float(coef[0]),
                    tuple(d[keep]), tuple(d[~keep]))


# -- simulation ---------------------------------------------------------------


def _study_grid(model: ModelSpec, T: float, M_values, refinement: int, ref_substeps: int) -> TimeGrid:
    M_ref = max(M_values) * refinement
    return TimeGrid(model.tau, T, M_ref, ref_substeps)


def _chunk(model, grid, H, seed, start, count, deltas, delta_ref, t_eval, fns, estimators):
    w = sample_wiener(grid, seed, model.m, count, start)
    fbm = fbm_from_wiener(w, H)
    out = {}
    if "direct" in estimators:
        ref = solve_em_truncated(model, fbm, delta_ref).at(t_eval)
        fref = {f: fn(ref) for f, fn in fns.items()}
        for dl in deltas:
            x = solve_em_truncated(model, fbm, dl).at(t_eval)
            for f in fns:
                out[("direct", f, dl)] = fref[f] - fns[f](x)
    if "girsanov" in estimators:
        y = solve_reference(model, fbm)
        k = grid.step_index(t_eval)
        rxi = np.exp(weight_R_xi(model, y, H).log_weight[:, k])
        yv = y.at(t_eval)
        fy = {f: fn(yv) for f, fn in fns.items()}
        for dl in deltas:
            rd = np.exp(weight_R_delta(model, y, dl, H).log_weight[:, k])
            for f in fns:
                out[("girsanov", f, dl)] = (rxi - rd) * fy[f]
    return out


def simulate_differences(model: ModelSpec, grid: TimeGrid, H: float, seed: int, n_paths: int,
                         deltas, delta_ref: float, t_eval: float, fns, estimators,
                         chunk_size: int = 1000, threads: int = 1) -> dict:
    """Per-path weak-error samples keyed by ``(estimator, function, delta)``, in path order.

    ``fns`` maps test-function names to callables on ``(n_paths, d)`` states.
    """
    starts = list(range(0, n_paths, chunk_size))

    def job(s):
        return _chunk(model, grid, H, seed, s, min(chunk_size, n_paths - s), deltas, delta_ref,
                      t_eval, fns, estimators)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def weak_error(model: ModelSpec, f: str | Callable, t_eval: float, delta: float, n_paths: int,
               seed: int, H: float = 0.75, T: float | None = None, delta_ref: float | None = None,
               ref_substeps: int = 4, estimator: str = "direct") -> dict:
    """Weak error at one step size with its Monte Carlo standard error.

    ``delta_ref`` defaults to ``delta / 8``; the fine grid is ``delta_ref / ref_substeps``.
    """
    T = t_eval if T is None else T
    delta_ref = delta / 8 if delta_ref is None else delta_ref
    M_ref = Fraction(model.tau / delta_ref).limit_denominator(1 << 20)
    if M_ref.denominator != 1:
        raise ValueError("delta_ref must divide tau")
    grid = TimeGrid(model.tau, T, int(M_ref), ref_substeps)
    name = f if isinstance(f, str) else getattr(f, "__name__", "f")
    fns = {name: TEST_FUNCTIONS[f] if isinstance(f, str) else f}
    s = simulate_differences(model, grid, H, seed, n_paths, [delta], delta_ref, t_eval, fns,
                             [estimator])[(estimator, name, delta)]
    return {"estimate": float(s.mean()), "error": float(abs(s.mean())),
            "stderr": float(s.std(ddof=1) / math.sqrt(s.size))}


def run_study(config: ConvergenceConfig) -> WeakErrorReport:
    """Condition checks, per-delta weak errors for every estimator and function, order fits."""
    model = config.build_model()
    model.check_hurst(config.H)
    tau, T, H = model.tau, config.T, config.H
    deltas = [tau / M for M in config.M_values]
    delta_ref = tau / (max(config.M_values) * config.refinement)
    grid = _study_grid(model, T, config.M_values, config.refinement, config.ref_substeps)
    t_eval = config.evaluation_time
    grid.step_index(t_eval)
    rep = WeakErrorReport(config, deltas, theoretical_order=theoretical_order(model, H, config.beta))
    for dl in deltas:
        try:
            rep.conditions[dl] = check_stepsize_conditions(model, H, T, dl, config.beta)
        except ValueError as exc:
            rep.warnings.append(f"condition check skipped at delta={dl!r}: {exc}")
    if not rep.conditions_pass:
        msg = "step-size conditions not met; run is outside the verified regime"
        rep.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    samples = simulate_differences(model, grid, H, config.seed, config.n_paths, deltas, delta_ref,
                                   t_eval, {f: TEST_FUNCTIONS[f] for f in config.functions},
                                   config.estimators,
                                   config.chunk_size, config.threads)
    for est in config.estimators:
        for fn in config.functions:
            rep.samples[(est, fn)] = {}
            for dl in sorted(deltas, reverse=True):
                s = samples[(est, fn, dl)]
                rep.samples[(est, fn)][dl] = s
                m = float(s.mean())
                rep.rows.append(dict(delta=dl, estimator=est, function=fn, error=abs(m), estimate=m,
                                     stderr=float(s.std(ddof=1) / math.sqrt(s.size)),
                                     n_paths=int(s.size)))
            d, e, se = rep.errors(est, fn)
            if len(deltas) < 3:
                rep.fits[(est, fn)] = None
                rep.warnings.append(f"no order fit for {est}/{fn}: fewer than three step sizes")
                continue
            try:
                rep.fits[(est, fn)] = estimate_order(d, e, se)
            except InsufficientData as exc:
                rep.fits[(est, fn)] = None
                rep.warnings.append(f"no order fit for {est}/{fn}: {exc}")
    return rep
