"""Convex test problems with known minimisers, and the lower-bound constructions.

* :class:`AbsProblem` -- ``f(x) = G|x|`` on ``[-D/2, D/2]``, optionally with noise.
* :class:`QuadProblem` -- ``f(x) = beta/2 ||x - x*||^2`` on a ball, Gaussian gradient noise.
* :class:`LogRegProblem` -- synthetic logistic regression with label flips.

:func:`fixed_step_adversary` and :func:`invsqrt_adversary` run the deterministic
constructions showing that fixed and ``1/sqrt(t)`` stepsizes lose a factor
linear in the misspecification ``rho``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from anneal_lab.schedules import Schedule
from anneal_lab.sgd import Ball, Box, StepsizePlan, run_sgd

NOISE_BLOCK = 1024


# --------------------------------------------------------------------------
# |x|


@dataclass(frozen=True)
class AbsProblem:
    """``f(x) = G|x|`` over ``[-D/2, D/2]``; the subgradient at 0 is ``+G``.

    Noise models (all unbiased):

    * ``None`` -- exact subgradient.
    * ``"rademacher"`` -- ``G sign(x) + G r`` with ``r`` uniform on ``{-1, +1}``;
      second moment ``2 G^2``.
    * ``"signflip"`` -- ``G sign(x) s`` with ``s = -c`` w.p. ``flip_prob`` and
      ``+c`` otherwise, ``c = 1 / (1 - 2 flip_prob)``; second moment ``c^2 G^2``.
    """

    G: float
    D: float
    noise: str | None = None
    flip_prob: float = 0.0

    def __post_init__(self):
        if not (self.G > 0 and self.D > 0):
            raise ValueError("G and D must be positive")
        if self.noise not in (None, "rademacher", "signflip"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.noise == "signflip" and not 0.0 <= self.flip_prob < 0.5:
            raise ValueError("signflip noise needs flip_prob in [0, 0.5)")

    @property
    def domain(self) -> Box:
        return Box([-self.D / 2], [self.D / 2])

    @property
    def minimizer(self) -> np.ndarray:
        return np.zeros(1)

    def initial_point(self) -> np.ndarray:
        return np.array([self.D / 2])

    @property
    def oracle_constant(self) -> float:
        """Declared bound ``G'`` with ``E g^2 <= G'^2``."""
        if self.noise == "rademacher":
            return math.sqrt(2.0) * self.G
        if self.noise == "signflip":
            return self.G / (1.0 - 2.0 * self.flip_prob)
        return self.G

    def value(self, x) -> float:
        return self.G * float(np.abs(np.asarray(x, dtype=float)).sum())

    def value_and_subgradient(self, x: float, rng: np.random.Generator | None = None) -> tuple[float, float]:
        sign = 1.0 if x >= 0 else -1.0
        g = self.G * sign
        if self.noise == "rademacher":
            g += self.G * (1.0 if _require(rng).random() < 0.5 else -1.0)
        elif self.noise == "signflip":
            c = 1.0 / (1.0 - 2.0 * self.flip_prob)
            g *= -c if _require(rng).random() < self.flip_prob else c
        return self.G * abs(x), g

    def oracle(self, rng: np.random.Generator):
        G = self.G
        noise = self.noise
        c = 1.0 / (1.0 - 2.0 * self.flip_prob)
        flip = self.flip_prob
        block: list[float] = []

        def draw() -> float:
            # uniforms drawn in blocks; the t-th call always sees the t-th variate
            if not block:
                block.extend(rng.random(NOISE_BLOCK)[::-1].tolist())
            return block.pop()

        def g(x: np.ndarray, t: int) -> np.ndarray:
            base = G if x[0] >= 0 else -G
            if noise == "rademacher":
                base += G if draw() < 0.5 else -G
            elif noise == "signflip":
                base *= -c if draw() < flip else c
            return np.array([base])

        return g


def _require(rng):
    if rng is None:
        raise ValueError("a random generator is required for noisy oracles")
    return rng


# --------------------------------------------------------------------------
# quadratic


@dataclass(frozen=True)
class QuadProblem:
    """``f(x) = beta/2 ||x - x*||^2`` on a ball of ``radius`` around the origin.

    The oracle adds Gaussian noise with ``E||noise||^2 = sigma^2``.
    """

    beta: float
    dim: int
    sigma: float = 0.0
    radius: float = 1.0
    minimizer: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (self.beta > 0 and self.dim >= 1 and self.radius > 0 and self.sigma >= 0):
            raise ValueError("need beta > 0, dim >= 1, radius > 0, sigma >= 0")
        xstar = np.zeros(self.dim) if self.minimizer is None else np.asarray(self.minimizer, dtype=float)
        if xstar.shape != (self.dim,) or np.linalg.norm(xstar) > self.radius:
            raise ValueError("minimizer must be a point of the ball")
        object.__setattr__(self, "minimizer", xstar)

    @property
    def domain(self) -> Ball:
        return Ball(np.zeros(self.dim), self.radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def initial_point(self) -> np.ndarray:
        """The point of the ball farthest along the first axis from the minimiser's side."""
        x = np.zeros(self.dim)
        x[0] = -self.radius if self.minimizer[0] >= 0 else self.radius
        return x

    def value(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.minimizer
        return 0.5 * self.beta * float(d @ d)

    def gradient(self, x) -> np.ndarray:
        return self.beta * (np.asarray(x, dtype=float) - self.minimizer)

    def oracle(self, rng: np.random.Generator):
        scale = self.sigma / math.sqrt(self.dim)

        def g(x: np.ndarray, t: int) -> np.ndarray:
            grad = self.gradient(x)
            if scale:
                grad = grad + scale * rng.standard_normal(self.dim)
            return grad

        return g


# --------------------------------------------------------------------------
# logistic regression


def _log1p_exp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class LogRegProblem:
    """Linear classifier with binary cross-entropy on synthetic Gaussian data.

    The model has no bias term. ``value`` is the test loss; ``train_loss`` and
    ``batch_loss`` evaluate on the training split.
    """

    n_samples: int
    dim: int
    flip_prob: float
    seed: int
    X_train: np.ndarray = field(repr=False)
    y_train: np.ndarray = field(repr=False)
    X_test: np.ndarray = field(repr=False)
    y_test: np.ndarray = field(repr=False)
    true_weights: np.ndarray = field(repr=False)
    batch_size: int = 1000
    domain: None = None

    @property
    def steps_per_epoch(self) -> int:
        return self.n_samples // self.batch_size

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    @staticmethod
    def _loss(w, X, y) -> float:
        z = X @ np.asarray(w, dtype=float)
        # y log(1+e^-z) + (1-y) log(1+e^z)
        return float(np.mean(_log1p_exp(z) - y * z))

    @staticmethod
    def _grad(w, X, y) -> np.ndarray:
        z = X @ w
        return X.T @ (_sigmoid(z) - y) / len(y)

    def value(self, w) -> float:
        return self._loss(w, self.X_test, self.y_test)

    def train_loss(self, w) -> float:
        return self._loss(w, self.X_train, self.y_train)

    def batch_loss(self, w, idx) -> float:
        return self._loss(w, self.X_train[idx], self.y_train[idx])

    def batch_gradient(self, w, idx) -> np.ndarray:
        return self._grad(np.asarray(w, dtype=float), self.X_train[idx], self.y_train[idx])

    def oracle(self, rng: np.random.Generator):
        """Minibatches from successive random permutations (epochs) of the training set."""
        n, b = self.n_samples, self.batch_size
        order: list[np.ndarray] = []

        def g(w: np.ndarray, t: int) -> np.ndarray:
            if not order:
                perm = rng.permutation(n)
                order.extend(perm[i:i + b] for i in range(n - b, -1, -b))
            return self.batch_gradient(w, order.pop())

        return g

    def with_batch_size(self, batch_size: int) -> LogRegProblem:
        if not 1 <= batch_size <= self.n_samples:
            raise ValueError(f"batch size must lie in [1, {self.n_samples}]")
        return LogRegProblem(
            self.n_samples, self.dim, self.flip_prob, self.seed, self.X_train, self.y_train,
            self.X_test, self.y_test, self.true_weights, batch_size,
        )


def make_logreg(
    n: int = 10_000, dim: int = 20, flip: float = 0.1, seed: int = 0, batch_size: int = 1000
) -> LogRegProblem:
    """Generate train and test sets of ``n`` Gaussian samples each.

    Labels are drawn from ``sigmoid(w_true . x)`` and then flipped with
    probability ``flip``.
    """
    if not 0.0 <= flip <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {flip}")
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(dim)

    def draw():
        X = rng.standard_normal((n, dim))
        y = (rng.random(n) < _sigmoid(X @ w_true)).astype(float)
        flips = rng.random(n) < flip
        y[flips] = 1.0 - y[flips]
        return X, y

    X_train, y_train = draw()
    X_test, y_test = draw()
    return LogRegProblem(n, dim, flip, seed, X_train, y_train, X_test, y_test, w_true, batch_size)


def save_dataset(problem: LogRegProblem, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (little-endian float64 arrays) and a ``<path>.json`` header."""
    path = Path(path)
    blob = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (problem.true_weights, problem.X_train, problem.y_train, problem.X_test, problem.y_test)
    )
    header = {
        "format": "anneal-lab-logreg/1",
        "n": problem.n_samples,
        "dim": problem.dim,
        "seed": problem.seed,
        "flip": problem.flip_prob,
        "batch_size": problem.batch_size,
        "checksum": hashlib.sha256(blob).hexdigest(),
    }
    bin_path, json_path = path.with_suffix(".bin"), path.with_suffix(".json")
    bin_path.write_bytes(blob)
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def load_dataset(path: str | Path) -> LogRegProblem:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    blob = path.with_suffix(".bin").read_bytes()
    if hashlib.sha256(blob).hexdigest() != header["checksum"]:
        raise ValueError(f"checksum mismatch for {path.with_suffix('.bin')}")
    n, dim = header["n"], header["dim"]
    flat = np.frombuffer(blob, dtype="<f8")
    sizes = [dim, n * dim, n, n * dim, n]
    if flat.size != sum(sizes):
        raise ValueError("dataset payload does not match header dimensions")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    w, Xtr, ytr, Xte, yte = (p.copy() for p in parts)
    return LogRegProblem(
        n, dim, header["flip"], header["seed"], Xtr.reshape(n, dim), ytr,
        Xte.reshape(n, dim), yte, w, header.get("batch_size", 1000),
    )


# --------------------------------------------------------------------------
# lower-bound constructions


@dataclass
class AdversaryReport:
    kind: str
    D: float
    G: float
    T: int
    rho: float
    iterates: np.ndarray = field(repr=False)
    stepsizes: np.ndarray = field(repr=False)
    average_suboptimality: float
    lower_bound: float
    checks: dict[str, bool]

    @property
    def bound_satisfied(self) -> bool:
        return self.average_suboptimality >= self.lower_bound - 1e-12 and all(self.checks.values())

    def verdict(self) -> dict:
        return {
            "kind": self.kind,
            "D": self.D,
            "G": self.G,
            "T": self.T,
            "rho": self.rho,
            "average_suboptimality": self.average_suboptimality,
            "lower_bound": self.lower_bound,
            "bound_satisfied": self.bound_satisfied,
            "checks": dict(self.checks),
        }


def _gd_on_abs(problem: AbsProblem, steps: np.ndarray, x1: float) -> np.ndarray:
    """Deterministic projected GD on ``G|x|``; returns ``x_1, ..., x_{T+1}``."""
    half = problem.D / 2
    xs = np.empty(len(steps) + 1)
    x = x1
    xs[0] = x
    for t, eta in enumerate(steps, start=1):
        g = problem.G if x >= 0 else -problem.G
        x = min(max(x - eta * g, -half), half)
        xs[t] = x
    return xs


def fixed_step_adversary(
    D: float, G: float, T: int, rho: float, weights=None
) -> AdversaryReport:
    """Fixed stepsize ``eta = rho D / (G sqrt T)`` on ``G|x|``: the iterates bounce
    between ``3/4 G eta`` and ``-1/4 G eta`` so any weighted average stays at
    suboptimality ``>= eta G^2 / 4``.

    With ``weights`` whose even-indexed mass exceeds the odd-indexed mass the
    construction starts from the mirrored point ``-1/4 G eta``.
    """
    if not 1.0 < rho < math.sqrt(T) / 2:
        raise ValueError(f"rho must lie in (1, sqrt(T)/2) = (1, {math.sqrt(T) / 2}), got {rho}")
    if weights is None:
        w = np.ones(T)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (T,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be T non-negative numbers with positive sum")
    eta = rho * D / (G * math.sqrt(T))
    odd_heavy = w[0::2].sum() >= w[1::2].sum()  # t = 1, 3, ... sit at even 0-based indices
    x1 = 0.75 * G * eta if odd_heavy else -0.25 * G * eta
    problem = AbsProblem(G, D)
    steps = np.full(T, eta)
    xs = _gd_on_abs(problem, steps, x1)

    high, low = 0.75 * G * eta, -0.25 * G * eta
    first, second = (high, low) if odd_heavy else (low, high)
    expected = np.where(np.arange(T + 1) % 2 == 0, first, second)
    xbar = float(w @ xs[:T] / w.sum())
    return AdversaryReport(
        kind="fixed",
        D=D, G=G, T=T, rho=rho,
        iterates=xs,
        stepsizes=steps,
        average_suboptimality=problem.value(xbar),
        lower_bound=eta * G**2 / 4,
        checks={
            "alternation": bool(np.max(np.abs(xs - expected)) <= 1e-12),
            "second_iterate": bool(abs(xs[1] - second) <= 1e-12),
        },
    )


def invsqrt_adversary(D: float, G: float, T: int, rho: float) -> AdversaryReport:
    """Stepsizes ``rho D / (G sqrt t)`` from ``x_1 = D/2``: after ``T0 = ceil(4 rho^2)``
    the projection is inactive and consecutive iterates straddle 0, so the mean
    suboptimality is at least ``rho D G (sqrt T - sqrt T0) / T``."""
    if not 1.0 < rho < math.sqrt(T / 16):
        raise ValueError(f"rho must lie in (1, sqrt(T/16)) = (1, {math.sqrt(T / 16)}), got {rho}")
    problem = AbsProblem(G, D)
    plan = StepsizePlan(rho * D / G, Schedule.inverse_sqrt(), T)
    steps = plan.stepsizes()
    xs = _gd_on_abs(problem, steps, D / 2)
    T0 = math.ceil(4 * rho**2)

    fx = G * np.abs(xs)
    avg = float(fx[:T].mean())
    # 1-based t in [T0, T]; arrays are 0-based
    t_idx = np.arange(T0 - 1, T)
    g = np.where(xs[t_idx] >= 0, G, -G)
    pre_projection = xs[t_idx] - steps[t_idx] * g
    return AdversaryReport(
        kind="invsqrt",
        D=D, G=G, T=T, rho=rho,
        iterates=xs,
        stepsizes=steps,
        average_suboptimality=avg,
        lower_bound=rho * D * G * (math.sqrt(T) - math.sqrt(T0)) / T,
        checks={
            "projection_inactive": bool(np.all(np.abs(pre_projection) <= D / 2 + 1e-12)),
            "straddles_zero": bool(
                np.all(np.abs(xs[t_idx]) + np.abs(xs[t_idx + 1]) >= G * steps[t_idx] - 1e-12)
            ),
        },
    )


def run_abs_sgd(problem: AbsProblem, plan: StepsizePlan, x1: float, seed: int):
    """Convenience wrapper: one SGD run on ``problem`` starting from scalar ``x1``."""
    return run_sgd(problem, plan, [x1], seed)
