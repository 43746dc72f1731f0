"""Stepsize schedules ``h: [0, 1] -> [0, 1]`` and their tail functionals.

For a schedule ``h`` the tail mass is ``H(v) = int_v^1 h(u) du`` and the tail
integral is ``I(v) = int_v^1 h(u)^2 / H(u) du``. Both appear in the last-iterate
bounds of :mod:`anneal_lab.bounds`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from anneal_lab.numerics import integrate

# Upper cut for the tail-integral quadrature. The integrand is bounded by 2p,
# so the dropped piece is at most 2p * TAIL_EPS.
TAIL_EPS = 1e-12
# Quadrature-mode tail masses are accumulated from cached values at s = k / ANCHORS,
# where s = 1 - v is the remaining fraction of training.
ANCHORS = 64


class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    POLYNOMIAL = "poly"
    INVERSE_SQRT = "invsqrt"


class UnsupportedScheduleOperation(TypeError):
    """The schedule has no continuous shape for the requested operation."""


class DivergentTailError(ArithmeticError):
    """The tail integral diverges (schedule does not anneal to zero)."""


def _check_unit(u, name: str = "u") -> None:
    if isinstance(u, (float, int)):
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {u!r}")
        return
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {u!r}")


@dataclass(frozen=True)
class Schedule:
    """A named stepsize shape. Use the constructors rather than ``Schedule(...)``."""

    kind: ScheduleKind
    power: float | None = None

    def __post_init__(self):
        if self.kind is ScheduleKind.POLYNOMIAL:
            if self.power is None or not math.isfinite(self.power) or self.power < 1.0:
                raise ValueError(f"polynomial decay needs p >= 1, got {self.power!r}")
        elif self.power is not None:
            raise ValueError(f"{self.kind.value} schedule takes no power")

    @classmethod
    def constant(cls) -> Schedule:
        return cls(ScheduleKind.CONSTANT)

    @classmethod
    def cosine(cls) -> Schedule:
        return cls(ScheduleKind.COSINE)

    @classmethod
    def polynomial(cls, p: float) -> Schedule:
        return cls(ScheduleKind.POLYNOMIAL, float(p))

    @classmethod
    def inverse_sqrt(cls) -> Schedule:
        return cls(ScheduleKind.INVERSE_SQRT)

    @property
    def name(self) -> str:
        if self.kind is ScheduleKind.POLYNOMIAL:
            return f"poly:{self.power:g}"
        return self.kind.value

    @property
    def lipschitz_p(self) -> float:
        if self.kind is ScheduleKind.COSINE:
            return math.pi / 2
        if self.kind is ScheduleKind.POLYNOMIAL:
            return self.power
        if self.kind is ScheduleKind.CONSTANT:
            return 0.0
        raise UnsupportedScheduleOperation("inverse-sqrt is a discrete rule with no shape h(u)")

    @property
    def annealed(self) -> bool:
        return self.kind in (ScheduleKind.COSINE, ScheduleKind.POLYNOMIAL)

    @property
    def decay_exponent(self) -> float:
        """Exponent q with h(u) = Theta((1-u)^q) near u = 1 (2 for cosine)."""
        if self.kind is ScheduleKind.POLYNOMIAL:
            return self.power
        if self.kind is ScheduleKind.COSINE:
            return 2.0
        raise UnsupportedScheduleOperation(f"{self.name} does not decay to zero")

    def _require_shape(self) -> None:
        if self.kind is ScheduleKind.INVERSE_SQRT:
            raise UnsupportedScheduleOperation(
                "inverse-sqrt is defined only through per-step stepsizes eta/sqrt(t)"
            )

    def h(self, u):
        """Evaluate the schedule at ``u`` (scalar or array)."""
        self._require_shape()
        if isinstance(u, (float, int)):
            if not 0.0 <= u <= 1.0:
                raise ValueError(f"u must lie in [0, 1], got {u!r}")
            if self.kind is ScheduleKind.COSINE:
                return 0.5 * (1.0 + math.cos(math.pi * u))
            if self.kind is ScheduleKind.POLYNOMIAL:
                return (1.0 - u) ** self.power
            return 1.0
        _check_unit(u)
        if self.kind is ScheduleKind.CONSTANT:
            return np.ones_like(u, dtype=float) if np.ndim(u) else 1.0
        if self.kind is ScheduleKind.COSINE:
            out = 0.5 * (1.0 + np.cos(np.pi * np.asarray(u, dtype=float)))
        else:
            out = (1.0 - np.asarray(u, dtype=float)) ** self.power
        return out if np.ndim(out) else float(out)

    def h_from_end(self, s: float) -> float:
        """``h(1 - s)`` for scalar ``s``, computed without cancellation for small ``s``."""
        self._require_shape()
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {s!r}")
        if self.kind is ScheduleKind.COSINE:
            return math.sin(0.5 * math.pi * s) ** 2
        if self.kind is ScheduleKind.POLYNOMIAL:
            return s**self.power
        return 1.0

    def h_prime(self, u):
        """Derivative ``h'(u)``."""
        self._require_shape()
        _check_unit(u)
        if self.kind is ScheduleKind.CONSTANT:
            return np.zeros_like(u, dtype=float) if np.ndim(u) else 0.0
        u = np.asarray(u, dtype=float)
        if self.kind is ScheduleKind.COSINE:
            out = -0.5 * np.pi * np.sin(np.pi * u)
        else:
            out = -self.power * (1.0 - u) ** (self.power - 1.0)
        return out if np.ndim(out) else float(out)

    def __str__(self) -> str:
        return self.name


def parse_schedule(text: str) -> Schedule:
    """Parse ``constant``, ``cosine``, ``poly:<p>`` or ``invsqrt`` (case-insensitive)."""
    key = text.strip().lower()
    if key == "constant":
        return Schedule.constant()
    if key == "cosine":
        return Schedule.cosine()
    if key == "invsqrt":
        return Schedule.inverse_sqrt()
    if key.startswith("poly:"):
        try:
            p = float(key[5:])
        except ValueError:
            raise ValueError(f"bad polynomial power in {text!r}") from None
        return Schedule.polynomial(p)
    raise ValueError(
        f"unknown schedule {text!r}; expected constant, cosine, poly:<p> or invsqrt"
    )


def _cosine_tail_mass_end(s: float) -> float:
    # int_{1-s}^1 (1 + cos(pi u))/2 du = (x - sin x) / (2 pi), x = pi s
    x = math.pi * s
    if x > 0.5:
        return (x - math.sin(x)) / (2.0 * math.pi)
    # series for x - sin x avoids cancellation near v = 1
    term = x**3 / 6.0
    total = 0.0
    n = 3
    x2 = x * x
    while abs(term) > 1e-18 * abs(total) or total == 0.0:
        total += term
        term *= -x2 / ((n + 1) * (n + 2))
        n += 2
        if term == 0.0:
            break
    return total / (2.0 * math.pi)


class TailMode(enum.Enum):
    ANALYTIC = "analytic"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class TailFunctions:
    """Evaluator for ``H(v)``, ``H'(v)`` and ``I(v)`` of a schedule.

    ``ANALYTIC`` mode uses closed forms: both functionals for polynomial decay,
    ``H`` for cosine and constant. Whatever has no closed form falls back to
    adaptive quadrature at ``tolerance``. ``QUADRATURE`` mode integrates
    everything numerically, which is how the closed forms are cross-checked.
    """

    schedule: Schedule
    mode: TailMode = TailMode.ANALYTIC
    tolerance: float = 1e-12

    def __post_init__(self):
        self.schedule._require_shape()
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def tail_mass(self, v: float) -> float:
        _check_unit(v, "v")
        return self._mass_end(1.0 - float(v))

    def _mass_end(self, s: float) -> float:
        # H as a function of the remaining fraction s = 1 - v
        if s <= 0.0:
            return 0.0
        sched = self.schedule
        if self.mode is TailMode.ANALYTIC:
            if sched.kind is ScheduleKind.POLYNOMIAL:
                return s ** (sched.power + 1.0) / (sched.power + 1.0)
            if sched.kind is ScheduleKind.COSINE:
                return _cosine_tail_mass_end(s)
            return s
        k = min(math.floor(s * ANCHORS), ANCHORS)
        return self._anchor_masses[k] + self._mass_piece(k / ANCHORS, s)

    def _mass_piece(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        return integrate(self.schedule.h_from_end, lo, hi, tol=1e-300, rtol=self.tolerance).value

    @cached_property
    def _anchor_masses(self) -> list[float]:
        # masses[k] = int_0^{k/ANCHORS} h(1 - r) dr
        masses = [0.0] * (ANCHORS + 1)
        for k in range(1, ANCHORS + 1):
            masses[k] = masses[k - 1] + self._mass_piece((k - 1) / ANCHORS, k / ANCHORS)
        return masses

    def tail_mass_prime(self, v: float) -> float:
        return -self.schedule.h(v)

    def tail_integral(self, v: float) -> float:
        _check_unit(v, "v")
        v = float(v)
        sched = self.schedule
        if sched.kind is ScheduleKind.CONSTANT:
            raise DivergentTailError("tail integral of a constant schedule diverges")
        if v >= 1.0 - TAIL_EPS:
            return 0.0
        if self.mode is TailMode.ANALYTIC and sched.kind is ScheduleKind.POLYNOMIAL:
            return (sched.power + 1.0) / sched.power * (1.0 - v) ** sched.power
        return integrate(self._tail_integrand, TAIL_EPS, 1.0 - v, tol=self.tolerance).value

    def _tail_integrand(self, s: float) -> float:
        h = self.schedule.h_from_end(s)
        if h == 0.0:
            return 0.0
        mass = self._mass_end(s)
        bound = 2.0 * self.schedule.lipschitz_p
        if mass <= 0.0:
            return bound
        # exact integrand never exceeds 2p; clamp rounding noise
        return min(h * h / mass, bound)

    @cached_property
    def mass_at_zero(self) -> float:
        return self.tail_mass(0.0)

    @cached_property
    def integral_at_zero(self) -> float:
        return self.tail_integral(0.0)
