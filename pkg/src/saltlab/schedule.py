"""Linear-beta noise schedule and closed-form forward noising."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep betas and their running product.

    ``beta[i]`` and ``alpha_bar[i]`` belong to timestep ``t = i + 1``; timestep
    0 is the clean-data boundary with ``alpha_bar = 1``. Both arrays are float64.
    """

    beta: np.ndarray
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if beta.size < 1:
            raise ParameterError("schedule needs at least one timestep")
        if not np.all((beta > 0) & (beta < 1)):
            raise ParameterError("every beta must lie in (0, 1)")
        beta.setflags(write=False)
        alpha_bar = np.cumprod(1.0 - beta)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def ab(self, t: int) -> float:
        """alpha_bar at integer timestep ``t`` in 0..T."""
        t = int(t)
        if not 0 <= t <= self.T:
            raise ContractError(f"timestep {t} outside 0..{self.T}")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def coefficients(self, t: int) -> tuple[float, float]:
        a = self.ab(t)
        return math.sqrt(a), math.sqrt(1.0 - a)


def build_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise ParameterError(f"T must be a positive integer, got {T!r}")
    if not (0 < beta_start <= beta_end < 1):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule(np.linspace(beta_start, beta_end, int(T), dtype=np.float64))


def _copy(x):
    return x.clone() if hasattr(x, "clone") else np.array(x, copy=True)


def q_sample(z0, t: int, eps, sched: NoiseSchedule):
    """Noise ``z0`` straight to timestep ``t``: sqrt(ab)*z0 + sqrt(1-ab)*eps.

    Works on numpy arrays and torch tensors alike.
    """
    if tuple(np.shape(z0)) != tuple(np.shape(eps)):
        raise ContractError(f"shape mismatch: z0 {tuple(np.shape(z0))} vs eps {tuple(np.shape(eps))}")
    if int(t) == 0:
        return _copy(z0)
    a, s = sched.coefficients(t)
    return a * z0 + s * eps
