"""Tuned stepsizes and misspecification-robust last-iterate bounds.

Given a schedule's tail functionals and a misspecification factor ``rho >= 1``
(base stepsize ``eta = rho * eta_star``), the bound is a tuned rate times

    g(v) = H(0) / (rho H(v)) + rho I(v) / I(0)

minimised over the suffix point ``v``. ``g`` is stationary where
``H(v) H'(v) = -H(0) I(0) / rho^2``; the residual of that equation is
increasing in ``v``, so it has at most one root.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from anneal_lab.numerics import find_root
from anneal_lab.schedules import DivergentTailError, Schedule, TailFunctions

SCAN_POINTS = 1024
SCAN_TOP = 1.0 - 1e-9
LIPSCHITZ_LOW_ORDER = 8.0
SMOOTH_LOW_ORDER = 4.0


class NoValidSuffixError(ValueError):
    """The scheduled stepsize never drops below 1/(2 beta) within T steps."""


@dataclass(frozen=True)
class ProblemScales:
    """Problem constants: diameter ``D``, second-moment bound ``G``,
    smoothness ``beta``, noise level ``sigma`` and step count ``T``."""

    D: float = 1.0
    G: float = 1.0
    T: int = 1
    beta: float | None = None
    sigma: float = 0.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"D must be positive, got {self.D}")
        if not self.G > 0:
            raise ValueError(f"G must be positive, got {self.G}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if self.beta is not None and not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def require_smooth(self) -> float:
        if self.beta is None:
            raise ValueError("smooth bounds need beta")
        return self.beta


@dataclass(frozen=True)
class BoundReport:
    rho: float
    tau_star: float
    infimum_value: float
    eta_star: float
    rate_opt: float
    bound_main: float
    low_order: float
    coefficient: float
    mode: str = "lipschitz"
    tau_floor: float = 0.0
    branch: str | None = None

    CSV_COLUMNS = (
        "rho", "tau_star", "infimum", "eta_star", "rate_opt", "bound_main", "low_order", "coefficient",
    )

    def csv_row(self) -> tuple[float, ...]:
        return (
            self.rho, self.tau_star, self.infimum_value, self.eta_star,
            self.rate_opt, self.bound_main, self.low_order, self.coefficient,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _check_rho(rho: float) -> None:
    if not (math.isfinite(rho) and rho >= 1.0):
        raise ValueError(f"misspecification factor must satisfy rho >= 1, got {rho}")


def _require_annealed(tails: TailFunctions) -> None:
    if not tails.schedule.annealed:
        raise DivergentTailError(
            f"schedule {tails.schedule.name} is not annealed; its tail integral diverges"
        )


def tuned_stepsize_lipschitz(scales: ProblemScales, tails: TailFunctions) -> float:
    _require_annealed(tails)
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return scales.D / (2.0 * scales.G * math.sqrt(scales.T * h0 * i0))


def tuned_rate_lipschitz(scales: ProblemScales, tails: TailFunctions) -> float:
    _require_annealed(tails)
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return 2.0 * scales.D * scales.G / math.sqrt(scales.T) * math.sqrt(i0 / h0)


def stationarity_residual(tails: TailFunctions, rho: float, v: float) -> float:
    """``H(v) H'(v) + H(0) I(0) / rho^2``; negative left of the optimal suffix point."""
    _check_rho(rho)
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return tails.tail_mass(v) * tails.tail_mass_prime(v) + h0 * i0 / rho**2


def infimand(tails: TailFunctions, rho: float, v: float) -> float:
    if not 0.0 <= v < 1.0:
        raise ValueError(f"suffix point must lie in [0, 1), got {v}")
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return h0 / (rho * tails.tail_mass(v)) + rho * tails.tail_integral(v) / i0


def solve_optimal_tau(tails: TailFunctions, rho: float, tau_floor: float = 0.0) -> float:
    """Minimiser of the infimand over ``[tau_floor, 1)``."""
    _require_annealed(tails)
    _check_rho(rho)
    if not 0.0 <= tau_floor < 1.0:
        raise ValueError(f"tau_floor must lie in [0, 1), got {tau_floor}")

    def residual(v: float) -> float:
        return stationarity_residual(tails, rho, v)

    if residual(tau_floor) >= 0.0:
        return tau_floor
    grid = np.linspace(tau_floor, max(SCAN_TOP, tau_floor), SCAN_POINTS)
    lo = tau_floor
    hi = 1.0
    for v in grid[1:]:
        v = float(v)
        if residual(v) >= 0.0:
            hi = v
            break
        lo = v
    return find_root(residual, lo, hi, tol=1e-15).root


def lipschitz_bound(scales: ProblemScales, tails: TailFunctions, rho: float) -> BoundReport:
    _check_rho(rho)
    eta_star = tuned_stepsize_lipschitz(scales, tails)
    rate = tuned_rate_lipschitz(scales, tails)
    tau = solve_optimal_tau(tails, rho, 0.0)
    inf_value = infimand(tails, rho, tau)
    main = 0.5 * rate * inf_value
    p = tails.schedule.lipschitz_p
    low = LIPSCHITZ_LOW_ORDER * p * rho * eta_star * scales.G**2 / scales.T
    unit = scales.D * scales.G / math.sqrt(scales.T)
    return BoundReport(rho, tau, inf_value, eta_star, rate, main, low, main / unit)


def tuned_stepsize_smooth(scales: ProblemScales, tails: TailFunctions) -> float:
    _require_annealed(tails)
    beta = scales.require_smooth()
    cap = 1.0 / (2.0 * beta * tails.schedule.h(0.0))
    if scales.sigma == 0.0:
        return cap
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return min(cap, scales.D / (scales.sigma * math.sqrt(2.0 * scales.T * h0 * i0)))


def tuned_rate_smooth(scales: ProblemScales, tails: TailFunctions) -> float:
    eta = tuned_stepsize_smooth(scales, tails)
    h0, i0 = tails.mass_at_zero, tails.integral_at_zero
    return scales.D**2 / (2.0 * eta * scales.T * h0) + eta * scales.sigma**2 * i0


def compute_tau0(scales: ProblemScales, schedule: Schedule, eta: float) -> float:
    """Smallest grid point ``k/T`` at which ``eta * h(k/T) <= 1/(2 beta)``."""
    beta = scales.require_smooth()
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    T = int(scales.T)
    ok = eta * schedule.h(np.arange(T) / T) <= 1.0 / (2.0 * beta)
    if not ok.any():
        raise NoValidSuffixError(
            f"stepsize {eta} * h(u) stays above 1/(2 beta) = {1 / (2 * beta)} for all {T} steps"
        )
    return int(np.argmax(ok)) / T


def smooth_branch(schedule: Schedule, rho: float, tau0: float) -> str:
    """Which regime of the smooth corollaries applies: ``"rho_power"`` when
    ``rho^2 >= (1 - tau0)^-(2q+1)`` (q the decay exponent), else ``"short_suffix"``."""
    q = schedule.decay_exponent
    return "rho_power" if rho**2 >= (1.0 - tau0) ** (-(2.0 * q + 1.0)) else "short_suffix"


def smooth_bound(scales: ProblemScales, tails: TailFunctions, rho: float) -> BoundReport:
    _check_rho(rho)
    eta_star = tuned_stepsize_smooth(scales, tails)
    tau0 = compute_tau0(scales, tails.schedule, rho * eta_star)
    tau = solve_optimal_tau(tails, rho, tau0)
    inf_value = infimand(tails, rho, tau)
    rate = tuned_rate_smooth(scales, tails)
    main = rate * inf_value
    p = tails.schedule.lipschitz_p
    low = SMOOTH_LOW_ORDER * p * rho * eta_star * scales.sigma**2 / scales.T
    unit = scales.require_smooth() * scales.D**2 / scales.T + scales.D * scales.sigma / math.sqrt(scales.T)
    return BoundReport(
        rho, tau, inf_value, eta_star, rate, main, low, main / unit,
        mode="smooth", tau_floor=tau0, branch=smooth_branch(tails.schedule, rho, tau0),
    )


def coefficient_curve(
    tails: TailFunctions,
    rho_grid,
    mode: str = "lipschitz",
    scales: ProblemScales | None = None,
    threads: int = 1,
) -> list[BoundReport]:
    """Bound reports over ``rho_grid``, sorted by ``rho``."""
    rhos = sorted(float(r) for r in rho_grid)
    for r in rhos:
        _check_rho(r)
    if mode == "lipschitz":
        scales = scales or ProblemScales()

        def one(r):
            return lipschitz_bound(scales, tails, r)
    elif mode == "smooth":
        if scales is None:
            raise ValueError("smooth mode needs problem scales")

        def one(r):
            return smooth_bound(scales, tails, r)
    else:
        raise ValueError(f"mode must be 'lipschitz' or 'smooth', got {mode!r}")
    # warm the cached constants before fanning out
    tails.mass_at_zero, tails.integral_at_zero
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, rhos))
    return [one(r) for r in rhos]


