"""Uniform time grids on [-tau, T] with an EM step and a finer simulation substep."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform discretization of ``[-tau, T]``.

    The EM step is ``delta = tau / M`` and the simulation substep is
    ``dt = delta / substeps``. All node times are ``k * dt`` for integer ``k``,
    so index arithmetic is exact.

    Attributes
    ----------
    tau : float
        Delay horizon.
    T : float
        Terminal time; must be an integer multiple of ``dt``.
    M : int
        Number of EM steps per delay window.
    substeps : int
        Fine substeps per EM step.
    """

    tau: float
    T: float
    M: int
    substeps: int = 8

    def __post_init__(self):
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"T={self.T} is not an integer multiple of dt={self.dt} "
                f"(tau={self.tau}, M={self.M}, substeps={self.substeps})"
            )

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimeGrid":
        """Grid of ``n`` equal cells on ``[0, T]`` (history window of the same length)."""
        return cls(tau=T, T=T, M=1, substeps=n)

    @property
    def delta(self) -> float:
        return self.tau / self.M

    @property
    def dt(self) -> float:
        return self.tau / (self.M * self.substeps)

    @property
    def n_hist(self) -> int:
        """Number of fine cells in ``[-tau, 0]``; also the index of time 0."""
        return self.M * self.substeps

    @property
    def n_steps(self) -> int:
        """Number of fine cells in ``[0, T]``."""
        return int(round(self.T / self.dt))

    @property
    def n_nodes(self) -> int:
        return self.n_hist + self.n_steps + 1

    @property
    def times(self) -> np.ndarray:
        """All node times on ``[-tau, T]``."""
        return np.arange(-self.n_hist, self.n_steps + 1) * self.dt

    @property
    def fine_times(self) -> np.ndarray:
        """Node times on ``[0, T]``."""
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def hist_times(self) -> np.ndarray:
        """Node times on ``[-tau, 0]``."""
        return np.arange(-self.n_hist, 1) * self.dt

    def step_index(self, t: float) -> int:
        """Fine-step index ``k`` with ``t = k * dt``; raises if ``t`` is off-grid."""
        k = t / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, abs(k)):
            raise ValueError(f"t={t} is not a grid node (dt={self.dt})")
        if kr < -self.n_hist or kr > self.n_steps:
            raise ValueError(f"t={t} outside [-{self.tau}, {self.T}]")
        return kr

    def refined(self, M: int, substeps: int) -> "TimeGrid":
        """Grid with the same ``dt`` but EM step ``tau / M``."""
        if M * substeps != self.M * self.substeps:
            raise ValueError(
                f"M*substeps must equal {self.M * self.substeps}, got {M}*{substeps}"
            )
        return TimeGrid(self.tau, self.T, M, substeps)

    def scheme_substeps(self, delta: float) -> int:
        """Number of fine cells per EM step of length ``delta`` on this grid."""
        ratio = Fraction(delta / self.dt).limit_denominator(1 << 20)
        if ratio.denominator != 1 or abs(float(ratio) * self.dt - delta) > 1e-12 * delta:
            raise ValueError(f"delta={delta} is not a multiple of dt={self.dt}")
        s = int(ratio)
        if self.n_hist % s:
            raise ValueError(f"delta={delta} does not divide tau={self.tau}")
        return s
