"""Projected SGD with scheduled stepsizes and the discrete last-iterate bounds.

Stepsizes follow ``eta_t = eta * h((t - 1) / T)`` for shaped schedules and
``eta_t = eta / sqrt(t)`` for the inverse-square-root rule. Besides the last
iterate, each run keeps a uniform average and a polynomial average of
``x_1, ..., x_T`` as streaming state.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from anneal_lab.schedules import Schedule, ScheduleKind, TailFunctions

DEFAULT_GAMMA = 8.0


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite stochastic gradient at step {step}")
        self.step = step


class StepsizeTooLargeError(ValueError):
    def __init__(self, step: int, eta_t: float, limit: float):
        super().__init__(f"eta_{step} = {eta_t} exceeds 1/(2 beta) = {limit}")
        self.step = step


@dataclass(frozen=True)
class StepsizePlan:
    eta: float
    schedule: Schedule
    T: int

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"base stepsize must be positive, got {self.eta}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")

    def stepsize_at(self, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index must lie in [1, {self.T}], got {t}")
        if self.schedule.kind is ScheduleKind.INVERSE_SQRT:
            return self.eta / math.sqrt(t)
        return self.eta * self.schedule.h((t - 1) / self.T)

    def stepsizes(self) -> np.ndarray:
        """All ``T`` stepsizes as an array (index 0 holds ``eta_1``)."""
        t = np.arange(1, self.T + 1)
        if self.schedule.kind is ScheduleKind.INVERSE_SQRT:
            return self.eta / np.sqrt(t)
        return self.eta * np.asarray(self.schedule.h((t - 1) / self.T), dtype=float)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "schedule": self.schedule.name, "T": self.T}


def stepsize_at(plan: StepsizePlan, t: int) -> float:
    return plan.stepsize_at(t)


# --------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return x
        return self.center + offset * (self.radius / norm)

    def contains(self, x: np.ndarray, atol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(x - self.center) <= self.radius + atol)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError(f"malformed box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lo), self.hi)

    def contains(self, x: np.ndarray, atol: float = 1e-12) -> bool:
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))


def project(domain: Ball | Box | None, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return x if domain is None else domain.project(x)


# --------------------------------------------------------------------------
# runs


Oracle = Callable[[np.ndarray, int], np.ndarray]


class Problem(Protocol):
    domain: Ball | Box | None

    def value(self, x: np.ndarray) -> float: ...

    def oracle(self, rng: np.random.Generator) -> Oracle: ...


@dataclass
class SgdRun:
    seed: int
    plan: StepsizePlan
    last_iterate: np.ndarray
    uniform_average: np.ndarray
    polynomial_average: np.ndarray
    gamma: float = DEFAULT_GAMMA
    trajectory: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.plan.T

    def summary(self, problem: Problem) -> dict:
        return {
            "seed": self.seed,
            "plan": self.plan.to_dict(),
            "gamma": self.gamma,
            "loss_last": float(problem.value(self.last_iterate)),
            "loss_uniform_average": float(problem.value(self.uniform_average)),
            "loss_polynomial_average": float(problem.value(self.polynomial_average)),
        }


def run_sgd(
    problem: Problem,
    plan: StepsizePlan,
    x1,
    seed: int,
    gamma: float = DEFAULT_GAMMA,
    record_trajectory: bool = False,
) -> SgdRun:
    """Run ``T`` projected SGD steps from ``x1``.

    The oracle draws its noise from a generator seeded with ``seed`` only, so
    a run is reproducible bit for bit. With ``record_trajectory`` the iterates
    ``x_1, ..., x_{T+1}`` are stored as rows of ``SgdRun.trajectory``.
    """
    x = np.atleast_1d(np.asarray(x1, dtype=float)).copy()
    domain = problem.domain
    if domain is not None and not domain.contains(x):
        raise ValueError("initial point lies outside the problem domain")
    oracle = problem.oracle(np.random.default_rng(seed))
    etas = plan.stepsizes()
    T = plan.T

    traj = np.empty((T + 1, x.size)) if record_trajectory else None
    uniform = np.zeros_like(x)
    poly = x.copy()
    for t in range(1, T + 1):
        if traj is not None:
            traj[t - 1] = x
        uniform += (x - uniform) / t
        if t > 1:
            w = (gamma + 1.0) / (t + gamma)
            poly = (1.0 - w) * poly + w * x
        g = oracle(x, t)
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(t)
        x = x - etas[t - 1] * g
        if domain is not None:
            x = domain.project(x)
    if traj is not None:
        traj[T] = x
    return SgdRun(seed, plan, x, uniform, poly, gamma, traj)


# --------------------------------------------------------------------------
# discrete bounds


def _steps(plan: StepsizePlan | Sequence[float]) -> np.ndarray:
    if isinstance(plan, StepsizePlan):
        return plan.stepsizes()
    steps = np.asarray(plan, dtype=float)
    if steps.ndim != 1 or steps.size == 0 or np.any(steps <= 0):
        raise ValueError("stepsizes must be a non-empty 1-d sequence of positive values")
    return steps


def _suffix_sums(steps: np.ndarray) -> np.ndarray:
    # S[t] = sum_{s >= t} eta_s (0-based)
    return np.cumsum(steps[::-1])[::-1]


def _noise_sum(steps: np.ndarray) -> float:
    return float(np.sum(steps**2 / _suffix_sums(steps)))


def discrete_last_iterate_bound_lipschitz(
    plan: StepsizePlan | Sequence[float], D: float, G: float, start: int = 1
) -> float:
    """``D^2 / (2 sum eta) + 2 G^2 sum_t eta_t^2 / sum_{s>=t} eta_s`` over steps ``start..T``.

    Pass ``D = ||x_1 - x*||`` instead of the diameter when the minimiser is known.
    """
    steps = _steps(plan)[start - 1:]
    return D**2 / (2.0 * steps.sum()) + 2.0 * G**2 * _noise_sum(steps)


def discrete_last_iterate_bound_smooth(
    plan: StepsizePlan | Sequence[float], D: float, sigma: float, beta: float, start: int = 1
) -> float:
    steps = _steps(plan)[start - 1:]
    limit = 1.0 / (2.0 * beta)
    bad = np.flatnonzero(steps > limit)
    if bad.size:
        t = int(bad[0]) + start
        raise StepsizeTooLargeError(t, float(steps[bad[0]]), limit)
    return D**2 / (2.0 * steps.sum()) + sigma**2 * _noise_sum(steps)


def lemma3_gap(
    plan: StepsizePlan,
    k: int,
    c1: float,
    c2: float,
    tau: float,
    tails: TailFunctions | None = None,
) -> tuple[float, float]:
    """Both sides of the sum-to-integral comparison for the suffix starting at step ``k``.

    lhs = c1 / sum_{s>=k} eta_s + c2 sum_{t>=k} eta_t^2 / sum_{s>=t} eta_s
    rhs = c1 / (eta T H(tau)) + c2 eta int_tau^{1-1/T} h^2/H + 4 eta c2 p / T

    ``tau`` must lie in ``[(k-1)/T, k/T)``. The integral is signed, so for
    ``k = T`` (where ``tau >= 1 - 1/T``) it is non-positive.
    """
    schedule = plan.schedule
    if not schedule.annealed:
        raise ValueError("the sum-to-integral comparison needs an annealed schedule")
    T = plan.T
    if not 1 <= k <= T:
        raise ValueError(f"k must lie in [1, {T}], got {k}")
    if not (k - 1) / T <= tau < k / T:
        raise ValueError(f"tau must lie in [{(k - 1) / T}, {k / T}), got {tau}")
    if not (c1 > 0 and c2 > 0):
        raise ValueError("c1 and c2 must be positive")
    tails = tails or TailFunctions(schedule)

    steps = plan.stepsizes()[k - 1:]
    lhs = float(c1 / steps.sum() + c2 * _noise_sum(steps))

    signed_integral = tails.tail_integral(tau) - tails.tail_integral(1.0 - 1.0 / T)
    eta = plan.eta
    rhs = (
        c1 / (eta * T * tails.tail_mass(tau))
        + c2 * eta * signed_integral
        + 4.0 * eta * c2 * schedule.lipschitz_p / T
    )
    return lhs, float(rhs)


def v_weights(plan: StepsizePlan | Sequence[float]) -> np.ndarray:
    """Weights ``v_0, ..., v_T`` with ``v_t = eta_T / sum_{s>=t} eta_s`` and ``v_0 = v_1``."""
    steps = _steps(plan)
    v = steps[-1] / _suffix_sums(steps)
    return np.concatenate(([v[0]], v))


@dataclass(frozen=True)
class Lemma3Case:
    plan: StepsizePlan
    k: int
    tau: float
    c1: float
    c2: float

    def evaluate(self, tails: TailFunctions | None = None) -> tuple[float, float]:
        return lemma3_gap(self.plan, self.k, self.c1, self.c2, self.tau, tails)

    def to_dict(self) -> dict:
        return {**self.plan.to_dict(), "k": self.k, "tau": self.tau, "c1": self.c1, "c2": self.c2}


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_lemma3_case(rng: np.random.Generator) -> Lemma3Case:
    """Draw a case: cosine or polynomial decay with p in [1, 5], T in [50, 5000],
    k uniform, tau uniform in its cell, log-uniform eta in [1e-3, 1e3] and c1, c2 in [1e-2, 1e2]."""
    schedule = Schedule.cosine() if rng.random() < 0.5 else Schedule.polynomial(rng.uniform(1.0, 5.0))
    T = int(rng.integers(50, 5001))
    k = int(rng.integers(1, T + 1))
    tau = min((k - 1 + rng.random()) / T, math.nextafter(k / T, 0.0))
    plan = StepsizePlan(_log_uniform(rng, 1e-3, 1e3), schedule, T)
    return Lemma3Case(plan, k, tau, _log_uniform(rng, 1e-2, 1e2), _log_uniform(rng, 1e-2, 1e2))
