"""Command-line front end: ``fracsfde {paths,convergence,check-operators,check-conditions}``.

Options come from an optional flat ``key = value`` file (``--config``) and
are overridden by flags. Every run writes the resolved configuration, seed
and library version to ``<out>/run_config.txt``.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from . import __version__
from .fbm_paths import (covariance, dump_paths, fbm_from_wiener, fernique_check,
                        fernique_threshold, holder_moment_check, sample_fbm_cholesky,
                        sample_wiener)
from .fractional_ops import (SampledFunction, c0_constant, covariance_reconstruction, frac_derivative,
                             frac_integral, gamma_fn)
from .grid import TimeGrid
from .sfde_models import MODELS, check_stepsize_conditions, get_model
from .solvers import solve_em_truncated, solve_reference
from .weak_convergence import ConvergenceConfig, run_study

SUBCOMMANDS = ("paths", "convergence", "check-operators", "check-conditions")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str = "toy"
    H: float = 0.75
    T: float = 1.0
    tau: float | None = None
    M: int = 64
    beta: float = 0.7
    n_paths: int = 2000
    seed: int = 12345
    out: str = "fracsfde-out"
    threads: int = 0
    quick: bool = False
    estimators: str = "direct,girsanov"
    functions: str = "cos1"
    fault: str = ""

    def resolved_threads(self) -> int:
        return self.threads or os.cpu_count() or 1

    def lines(self) -> list[str]:
        out = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return out + [f"version = {__version__}"]


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


def _coerce(key: str, value: str):
    t = _TYPES[key]
    try:
        if t == "bool":
            v = value.strip().lower()
            if v not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return v in ("1", "true", "yes")
        if t == "int":
            return int(value)
        if t in ("float", "float | None"):
            return None if value.strip().lower() in ("", "none") else float(value)
        return value.strip()
    except ValueError:
        raise UsageError(f"invalid value for {key}: {value!r}") from None


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise UsageError(f"unknown key {key!r} in {path}")
        out[key] = _coerce(key, value)
    return out


def _validate(cfg: RunConfig) -> None:
    if not 0.5 < cfg.H < 1:
        raise UsageError(f"H must be in (1/2,1), got {cfg.H}")
    if cfg.model not in MODELS:
        raise UsageError(f"model must be one of {sorted(MODELS)}, got {cfg.model!r}")
    if not cfg.T > 0:
        raise UsageError("T must be positive")
    if cfg.tau is not None and not cfg.tau > 0:
        raise UsageError("tau must be positive")
    if cfg.M < 1:
        raise UsageError("M must be >= 1")
    if cfg.n_paths < 2:
        raise UsageError("n_paths must be >= 2")
    if cfg.threads < 0:
        raise UsageError("threads must be >= 0")
    if not 0 < cfg.beta < cfg.H:
        raise UsageError(f"beta must be in (0, H), got {cfg.beta}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracsfde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--model")
        sp.add_argument("--H", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--M", type=int, help="finest EM resolution, delta = tau / M")
        sp.add_argument("--beta", type=float)
        sp.add_argument("--n-paths", dest="n_paths", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--quick", action="store_true", default=None)
        sp.add_argument("--estimators")
        sp.add_argument("--functions")
        sp.add_argument("--fault", help=argparse.SUPPRESS)
    return p


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(command=args.command, **values)
    _validate(cfg)
    return cfg


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.txt").write_text("\n".join(cfg.lines()) + "\n")
    return out


def _model(cfg: RunConfig):
    return get_model(cfg.model) if cfg.tau is None else get_model(cfg.model, tau=cfg.tau)


# -- subcommands --------------------------------------------------------------


def cmd_paths(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    model = _model(cfg)
    grid = TimeGrid(model.tau, cfg.T, cfg.M, 8)
    n = min(cfg.n_paths, 4 if cfg.quick else 16)
    fbm = fbm_from_wiener(sample_wiener(grid, cfg.seed, model.m, n), cfg.H)
    y = solve_reference(model, fbm)
    x = solve_em_truncated(model, fbm, grid.delta)
    for i in range(n):
        with open(out / f"fbm_{i:03d}.csv", "w") as fh:
            dump_paths(fh, grid.fine_times, fbm.values[i])
        with open(out / f"reference_{i:03d}.csv", "w") as fh:
            dump_paths(fh, grid.times, y.values[i])
        with open(out / f"em_{i:03d}.csv", "w") as fh:
            dump_paths(fh, grid.times, x.values[i])
    print(f"wrote {3 * n} path files to {out}")
    return 0


def cmd_convergence(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    Ms = [M for M in (8, 16, 32, 64, 128, 256) if M <= cfg.M] or [cfg.M]
    conf = ConvergenceConfig(
        model=cfg.model, H=cfg.H, T=cfg.T, tau=cfg.tau, M_values=tuple(Ms),
        n_paths=min(cfg.n_paths, 500) if cfg.quick else cfg.n_paths, seed=cfg.seed,
        beta=cfg.beta, threads=cfg.resolved_threads(),
        estimators=tuple(s for s in cfg.estimators.split(",") if s),
        functions=tuple(s for s in cfg.functions.split(",") if s),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = run_study(conf)
    (out / "convergence.csv").write_text(rep.to_csv())
    lines = [f"theoretical_order = {rep.theoretical_order!r}",
             f"conditions_pass = {rep.conditions_pass}"]
    for (est, fn), fit in rep.fits.items():
        if fit is not None:
            lines.append(f"fitted_order[{est},{fn}] = {fit.slope!r} +- {fit.slope_stderr!r}")
    lines += [f"warning: {w}" for w in rep.warnings]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def operator_checks(quick: bool = False, fault: str = "") -> list[tuple[str, float, float, bool]]:
    """Operator identities and covariance checks as ``(name, value, tolerance, passed)``."""
    res = []
    n = 1 << (10 if quick else 12)

    def interior_rel(a, b, t):
        m = t >= 1 / 16
        return float(np.max(np.abs(a[m] - b[m]) / np.abs(b[m])))

    f = SampledFunction.from_callable(lambda x: x**2, 1.0, n)
    t = f.t
    comp = frac_integral(frac_integral(f, 0.4), 0.3).values
    res.append(("I0.3*I0.4=I0.7", interior_rel(comp, frac_integral(f, 0.7).values, t), 1e-2))
    inv = frac_derivative(frac_integral(f, 0.5), 0.5).values
    res.append(("D0.5*I0.5=id", interior_rel(inv, f.values, t), 1e-2))
    for a, mu in ((0.25, 1.0), (0.5, 0.8)):
        g = SampledFunction.from_callable(lambda x: x**mu, 1.0, n)
        ex = gamma_fn(mu + 1) / gamma_fn(mu + 1 + a) * t ** (mu + a)
        res.append((f"I^{a} x^{mu}", interior_rel(frac_integral(g, a).values, ex, t), 1e-2))
        with np.errstate(divide="ignore"):
            exd = gamma_fn(mu + 1) / gamma_fn(mu + 1 - a) * t ** (mu - a)
        res.append((f"D^{a} x^{mu}", interior_rel(frac_derivative(g, a).values, exd, t), 1e-2))
    scale = 1.01 if fault == "c_H" else 1.0
    Hs = (0.75,) if quick else (0.6, 0.75, 0.9)
    pts = (0.3, 1.0) if quick else (0.2, 0.4, 0.6, 0.8, 1.0)
    for H in Hs:
        worst = 0.0
        for ti in pts:
            for si in pts:
                r = covariance(H, ti, si)
                worst = max(worst, abs(scale**2 * covariance_reconstruction(H, ti, si) - r) / r)
        res.append((f"covariance H={H}", worst, 1e-4))
    out = [(name, val, tol, bool(val < tol)) for name, val, tol in res]
    c0 = c0_constant(0.75)
    out.append(("C0(0.75) positive", c0, 0.0, c0 > 0))
    return out


def cmd_check_operators(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = operator_checks(cfg.quick, cfg.fault)
        g = TimeGrid.uniform(1.0, 64)
        n = 2000 if cfg.quick else 20000
        fb = fbm_from_wiener(sample_wiener(g, cfg.seed, 1, n), cfg.H).values[:, :, 0]
        idx = [16, 32, 48, 64]
        C = np.cov(fb[:, idx].T)
        R = covariance(cfg.H, g.fine_times[idx][:, None], g.fine_times[idx][None, :])
        tol = 0.03 if not cfg.quick else 0.1
        err = float(np.max(np.abs(C - R) / R))
        rows.append((f"fBm empirical covariance ({n} paths)", err, tol, err < tol))
        ch = sample_fbm_cholesky(g, cfg.H, cfg.seed + 1, 1, n // 2).values[:, -1, 0]
        p = float(ks_2samp(ch, fb[: n // 2, -1]).pvalue)
        rows.append(("KS p-value Volterra vs Cholesky at T", p, 0.01, p > 0.01))
        thr = fernique_threshold(cfg.H, 0.6, 1.0)
        fr = fernique_check(cfg.H, 0.6, 1.0, thr / 2, 1000 if cfg.quick else 10000, cfg.seed)
        rows.append(("Fernique Holder bound", fr.empirical_mean - 3 * fr.stderr, fr.bound, fr.satisfied))
        mo = holder_moment_check(cfg.H, 0.6, 1.0, 1, 1000 if cfg.quick else 10000, cfg.seed)
        rows.append(("Holder moment k=1", mo.empirical_mean - 3 * mo.stderr, mo.bound, mo.satisfied))
    lines = ["check,value,tolerance,passed"] + [f"{n},{v!r},{t!r},{ok}" for n, v, t, ok in rows]
    (out / "operators.csv").write_text("\n".join(lines) + "\n")
    failed = [r[0] for r in rows if not r[3]]
    for name, val, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {val:.3g} (limit {tol:.3g})")
    return 1 if failed else 0


def cmd_check_conditions(cfg: RunConfig) -> int:
    out = _prepare_out(cfg)
    model = _model(cfg)
    delta = model.tau / cfg.M
    rep = check_stepsize_conditions(model, cfg.H, cfg.T, delta, cfg.beta)
    lines = [f"model = {cfg.model}", f"H = {cfg.H!r}", f"T = {cfg.T!r}", f"delta = {delta!r}",
             f"beta = {cfg.beta!r}"] + rep.lines() + [f"passed = {rep.passed}"]
    (out / "conditions.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if rep.passed else 1


COMMANDS = {
    "paths": cmd_paths,
    "convergence": cmd_convergence,
    "check-operators": cmd_check_operators,
    "check-conditions": cmd_check_conditions,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        build_parser().print_usage(sys.stderr)
        print(f"fracsfde: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[cfg.command](cfg)
    except OSError as exc:
        print(f"fracsfde: I/O error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FloatingPointError) as exc:
        print(f"fracsfde: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
