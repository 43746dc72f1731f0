"""Learning-rate grid search and its sensitivity to grid resolution.

A full geometric grid is split into ``level`` interleaved sub-grids (index
classes modulo ``level``). A practitioner who searched only one sub-grid gets
that sub-grid's best loss; averaging over sub-grids and comparing across levels
shows how much each schedule loses when the grid gets coarser.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from anneal_lab.schedules import Schedule, parse_schedule
from anneal_lab.sgd import DEFAULT_GAMMA, NonFiniteGradientError, StepsizePlan, run_sgd

DEFAULT_MANTISSAS = (1.0, 2.2, 5.0)
DEFAULT_SEEDS = (1, 2, 3)
OUTPUTS = ("last", "uniform", "polyavg")


@dataclass(frozen=True)
class GridSpec:
    decade_lo: int
    decade_hi: int
    mantissas: tuple[float, ...] = DEFAULT_MANTISSAS
    resolution_level: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mantissas", tuple(float(m) for m in self.mantissas))
        if not self.mantissas or any(not (1.0 <= m < 10.0) for m in self.mantissas):
            raise ValueError("mantissas must be a non-empty list of values in [1, 10)")
        if len(set(self.mantissas)) != len(self.mantissas):
            raise ValueError("mantissas must be distinct")
        if self.decade_hi < self.decade_lo:
            raise ValueError(f"empty decade range {self.decade_lo}..{self.decade_hi}")
        if self.resolution_level < 1:
            raise ValueError("resolution level must be >= 1")

    @property
    def ratio(self) -> float:
        """Nominal adjacent ratio: one decade split into ``len(mantissas)`` steps."""
        return 10.0 ** (1.0 / len(self.mantissas))


def build_grid(spec: GridSpec) -> list[float]:
    """Sorted values ``m * 10^d`` over all mantissas and decades (inclusive)."""
    # format through a decimal literal so 2.2e-2 is the float nearest 0.022
    values = {
        float(f"{m!r}e{d}") for d in range(spec.decade_lo, spec.decade_hi + 1) for m in spec.mantissas
    }
    return sorted(values)


def subgrids(full: Sequence[float], level: int) -> list[list[float]]:
    if level < 1:
        raise ValueError("level must be >= 1")
    if level > len(full):
        raise ValueError(f"level {level} exceeds the grid length {len(full)}")
    return [list(full[i::level]) for i in range(level)]


def grid_ratio(full: Sequence[float]) -> float:
    """Geometric mean of adjacent ratios of the full grid."""
    if len(full) < 2:
        return 1.0
    return (full[-1] / full[0]) ** (1.0 / (len(full) - 1))


@dataclass(frozen=True)
class Variant:
    """A schedule together with the iterate that is scored."""

    schedule: Schedule
    output: str = "last"

    def __post_init__(self):
        if self.output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}, got {self.output!r}")

    @property
    def name(self) -> str:
        return self.schedule.name if self.output == "last" else f"{self.schedule.name}+{self.output}"


def default_variants(schedule_names: Sequence[str]) -> list[Variant]:
    """Last iterate for every schedule; the constant schedule also gets both averages."""
    out = []
    for text in schedule_names:
        s = parse_schedule(text)
        out.append(Variant(s))
        if s.name == "constant":
            out.extend([Variant(s, "uniform"), Variant(s, "polyavg")])
    return out


@dataclass
class GridOutcome:
    """Losses indexed ``[variant, learning rate, seed]``; divergent runs hold ``inf``."""

    grid: list[float]
    variants: list[str]
    seeds: list[int]
    losses: np.ndarray = field(repr=False)

    @property
    def mean(self) -> np.ndarray:
        return _nan_safe(lambda a: a.mean(axis=2), self.losses)

    @property
    def std(self) -> np.ndarray:
        return _nan_safe(lambda a: a.std(axis=2), self.losses)

    def best_per_subgrid(self, variant: str, level: int) -> list[float]:
        means = self.mean[self.variants.index(variant)]
        return [float(np.min(means[i::level])) for i in range(level)]

    def mean_of_bests(self, variant: str, level: int) -> float:
        subgrids(self.grid, level)
        return float(np.mean(self.best_per_subgrid(variant, level)))

    def raw_rows(self) -> list[tuple]:
        return [
            (v, lr, seed, float(self.losses[i, j, k]))
            for i, v in enumerate(self.variants)
            for j, lr in enumerate(self.grid)
            for k, seed in enumerate(self.seeds)
        ]


def _nan_safe(reduce, losses: np.ndarray) -> np.ndarray:
    # a cell with any divergent seed is divergent as a whole
    with np.errstate(invalid="ignore"):
        out = reduce(losses)
    out[~np.isfinite(losses).all(axis=2)] = math.inf
    return out


def evaluate_grid(
    problem,
    variants: Sequence[Variant],
    grid: Sequence[float],
    seeds: Sequence[int],
    T: int,
    x1=None,
    gamma: float = DEFAULT_GAMMA,
    threads: int = 1,
) -> GridOutcome:
    """Run every (schedule, learning rate, seed) cell and score each variant.

    ``x1`` defaults to ``problem.initial_point()``. A run whose gradient or
    final loss is non-finite scores ``+inf``.
    """
    if not grid or not seeds or not variants:
        raise ValueError("grid, seeds and variants must be non-empty")
    start = problem.initial_point() if x1 is None else x1
    variants = list(variants)
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise ValueError("duplicate variants")
    schedules = list(dict.fromkeys(v.schedule for v in variants))

    def cell(key):
        s, lr, seed = key
        try:
            run = run_sgd(problem, StepsizePlan(lr, s, T), start, seed, gamma=gamma)
        except NonFiniteGradientError:
            return {o: math.inf for o in OUTPUTS}
        points = {"last": run.last_iterate, "uniform": run.uniform_average, "polyavg": run.polynomial_average}
        out = {}
        for o, x in points.items():
            with np.errstate(all="ignore"):
                val = float(problem.value(x))
            out[o] = val if math.isfinite(val) else math.inf
        return out

    keys = [(s, lr, seed) for s in schedules for lr in grid for seed in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(zip(keys, pool.map(cell, keys)))
    else:
        results = {k: cell(k) for k in keys}

    losses = np.empty((len(variants), len(grid), len(seeds)))
    for i, v in enumerate(variants):
        for j, lr in enumerate(grid):
            for k, seed in enumerate(seeds):
                losses[i, j, k] = results[(v.schedule, lr, seed)][v.output]
    return GridOutcome(list(grid), names, list(seeds), losses)


@dataclass(frozen=True)
class DegradationRow:
    variant: str
    level: int
    grid_factor: float
    mean_best: float
    std_best: float


def degradation_curve(
    outcome: GridOutcome, levels: Sequence[int], ratio: float | None = None
) -> list[DegradationRow]:
    """Mean and spread over sub-grids of the sub-grid best, per variant and level.

    ``grid_factor`` is ``ratio ** level``; ``ratio`` defaults to the geometric
    mean of adjacent full-grid ratios (pass ``GridSpec.ratio`` for the nominal one).
    """
    ratio = grid_ratio(outcome.grid) if ratio is None else ratio
    rows = []
    for v in outcome.variants:
        for level in levels:
            subgrids(outcome.grid, level)
            bests = np.array(outcome.best_per_subgrid(v, level))
            with np.errstate(invalid="ignore"):
                mean, std = float(bests.mean()), float(bests.std())
            if not np.isfinite(bests).all():
                std = math.inf
            rows.append(DegradationRow(v, level, ratio**level, mean, std))
    return rows


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def raw_csv(outcome: GridOutcome) -> str:
    return _csv(("schedule", "lr", "seed", "loss"), outcome.raw_rows())


def aggregated_csv(rows: Sequence[DegradationRow]) -> str:
    return _csv(
        ("schedule", "level", "grid_factor", "mean_best", "std_best"),
        ((r.variant, r.level, r.grid_factor, r.mean_best, r.std_best) for r in rows),
    )
