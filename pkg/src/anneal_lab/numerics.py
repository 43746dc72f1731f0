"""Adaptive Simpson quadrature and safeguarded bracketed root finding.

Both routines are pure Python and operate on scalar callables. They back the
tail functionals in :mod:`anneal_lab.schedules` and the suffix-point solver in
:mod:`anneal_lab.bounds`.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

MAX_DEPTH = 60
MAX_ITERATIONS = 200


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int


@dataclass(frozen=True)
class RootResult:
    root: float
    residual: float
    iterations: int


class QuadratureError(ArithmeticError):
    """Adaptive subdivision hit the depth limit before meeting the tolerance."""

    def __init__(self, message: str, best: QuadratureResult):
        super().__init__(message)
        self.best = best


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


class RootFindingError(ArithmeticError):
    """Iteration budget exhausted; carries the last bracket."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(message)
        self.bracket = bracket


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    rtol: float = 0.0,
    max_depth: int = MAX_DEPTH,
) -> QuadratureResult:
    """Integrate ``f`` over ``[a, b]`` with adaptive Simpson and Richardson extrapolation.

    The effective absolute tolerance is ``max(tol, rtol * |coarse estimate|)``,
    which lets callers ask for relative accuracy on integrals that are tiny
    (e.g. tails of a schedule close to ``u = 1``). Reversed limits return the
    negated integral.

    Raises:
        ValueError: on a non-positive tolerance or non-finite limits.
        QuadratureError: when some panel still fails the local test at
            ``max_depth``; the exception carries the best available estimate.
    """
    if tol <= 0 and rtol <= 0:
        raise ValueError("need tol > 0 or rtol > 0")
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"integration limits must be finite, got [{a}, {b}]")
    if a == b:
        return QuadratureResult(0.0, 0.0, 1)
    if a > b:
        res = integrate(f, b, a, tol, rtol, max_depth)
        return QuadratureResult(-res.value, res.error_estimate, res.evaluations)

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    evals = 3
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    eps = max(tol, rtol * abs(whole))
    if eps == 0.0:
        eps = 1e-300

    total = 0.0
    err = 0.0
    failed = False
    # explicit stack: (lo, hi, f(lo), f(mid), f(hi), simpson estimate, local tol, depth)
    stack = [(a, b, fa, fm, fb, whole, eps, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps_local, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flm, frm = f(lmid), f(rmid)
        evals += 2
        half = (hi - lo) / 12.0
        left = half * (flo + 4.0 * flm + fmid)
        right = half * (fmid + 4.0 * frm + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * eps_local or depth >= max_depth:
            if abs(delta) > 15.0 * eps_local:
                failed = True
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps_local, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps_local, depth + 1))

    if not math.isfinite(total):
        raise QuadratureError(
            f"non-finite integrand on [{a}, {b}]", QuadratureResult(total, math.inf, evals)
        )
    result = QuadratureResult(total, err, evals)
    if failed:
        raise QuadratureError(
            f"adaptive Simpson did not converge on [{a}, {b}] within depth {max_depth}",
            result,
        )
    return result


def find_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = MAX_ITERATIONS,
) -> RootResult:
    """Locate a sign change of ``f`` inside ``[lo, hi]``.

    Secant (false-position) steps are taken when they land well inside the
    bracket and the bracket keeps shrinking; otherwise the step falls back to
    bisection. Stops once ``|f(x)| <= tol`` or the bracket width is ``<= tol``.
    """
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return RootResult(lo, 0.0, 0)
    if fhi == 0.0:
        return RootResult(hi, 0.0, 0)
    if flo * fhi > 0.0:
        raise BracketError(f"f({lo})={flo} and f({hi})={fhi} have the same sign")

    prev_width = hi - lo
    for it in range(1, max_iter + 1):
        width = hi - lo
        x = hi - fhi * (hi - lo) / (fhi - flo)
        margin = 0.01 * width
        # bisect when the secant point hugs an endpoint or progress stalls
        if not (lo + margin < x < hi - margin) or width > 0.5 * prev_width:
            x = lo + 0.5 * width
        prev_width = width
        fx = f(x)
        if fx == 0.0:
            return RootResult(x, 0.0, it)
        if (fx < 0.0) == (flo < 0.0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if abs(fx) <= tol or hi - lo <= tol or not (lo < 0.5 * (lo + hi) < hi):
            if abs(flo) < abs(fhi):
                return RootResult(lo, flo, it)
            return RootResult(hi, fhi, it)
    raise RootFindingError(f"no convergence after {max_iter} iterations", (lo, hi))
