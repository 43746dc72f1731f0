import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anneal_lab.problems import AbsProblem, QuadProblem
from anneal_lab.schedules import Schedule, TailFunctions
from anneal_lab.sgd import (
    Ball,
    Box,
    NonFiniteGradientError,
    StepsizePlan,
    StepsizeTooLargeError,
    discrete_last_iterate_bound_lipschitz,
    discrete_last_iterate_bound_smooth,
    lemma3_gap,
    project,
    random_lemma3_case,
    run_sgd,
    stepsize_at,
    v_weights,
)


class ZeroGradient:
    domain = Ball(np.zeros(2), 5.0)

    def value(self, x):
        return 0.0

    def oracle(self, rng):
        return lambda x, t: np.zeros_like(x)


class BrokenOracle:
    domain = None

    def value(self, x):
        return 0.0

    def oracle(self, rng):
        return lambda x, t: np.array([math.nan]) if t == 4 else np.array([1.0])


def test_stepsize_examples():
    assert stepsize_at(StepsizePlan(1, Schedule.cosine(), 2), 1) == pytest.approx(1.0)
    assert stepsize_at(StepsizePlan(1, Schedule.cosine(), 2), 2) == pytest.approx(0.5)
    assert stepsize_at(StepsizePlan(3, Schedule.inverse_sqrt(), 20), 9) == pytest.approx(1.0)


def test_stepsize_index_and_plan_validation():
    plan = StepsizePlan(1, Schedule.cosine(), 5)
    with pytest.raises(ValueError):
        plan.stepsize_at(0)
    with pytest.raises(ValueError):
        plan.stepsize_at(6)
    with pytest.raises(ValueError):
        StepsizePlan(-1, Schedule.cosine(), 5)
    with pytest.raises(ValueError):
        StepsizePlan(1, Schedule.cosine(), 0)


@pytest.mark.parametrize(
    "schedule", [Schedule.cosine(), Schedule.polynomial(2), Schedule.constant(), Schedule.inverse_sqrt()], ids=str
)
def test_stepsizes_positive_and_non_increasing(schedule):
    etas = StepsizePlan(0.7, schedule, 257).stepsizes()
    assert np.all(etas > 0)
    assert np.all(np.diff(etas) <= 1e-15)
    assert etas[10] == pytest.approx(StepsizePlan(0.7, schedule, 257).stepsize_at(11))


def test_project_examples():
    assert project(Box([-0.5], [0.5]), [0.7]) == pytest.approx([0.5])
    ball = Ball(np.zeros(2), 1.0)
    assert project(ball, [0.3, 0.4]) == pytest.approx([0.3, 0.4])
    assert project(ball, [3.0, 4.0]) == pytest.approx([0.6, 0.8])
    assert project(None, [7.0]) == pytest.approx([7.0])


def test_malformed_domains():
    with pytest.raises(ValueError):
        Ball(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


@settings(max_examples=100, deadline=None)
@given(
    x=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
    radius=st.floats(0.1, 10),
)
def test_ball_projection_is_nearest_point(x, radius):
    ball = Ball(np.zeros(3), radius)
    px = ball.project(np.array(x))
    assert ball.contains(px)
    # any other feasible point on the segment towards the centre is no closer
    for q in (np.zeros(3), px * 0.5):
        assert np.linalg.norm(np.array(x) - px) <= np.linalg.norm(np.array(x) - q) + 1e-9


def test_alternation_on_abs():
    D, G, T, eta = 1.0, 1.0, 10, 0.1
    run = run_sgd(AbsProblem(G, D), StepsizePlan(eta, Schedule.constant(), T), [0.75 * eta * G], 0, record_trajectory=True)
    expected = np.where(np.arange(T + 1) % 2 == 0, 0.75 * eta * G, -0.25 * eta * G)
    assert np.max(np.abs(run.trajectory[:, 0] - expected)) <= 1e-12
    assert run.last_iterate[0] == pytest.approx(0.75 * eta * G)
    run_odd = run_sgd(AbsProblem(G, D), StepsizePlan(eta, Schedule.constant(), T - 1), [0.75 * eta * G], 0)
    assert run_odd.last_iterate[0] == pytest.approx(-0.25 * eta * G)


def test_zero_gradient_keeps_start():
    x1 = np.array([1.0, -2.0])
    run = run_sgd(ZeroGradient(), StepsizePlan(1, Schedule.cosine(), 17), x1, 3)
    for x in (run.last_iterate, run.uniform_average, run.polynomial_average):
        assert x == pytest.approx(x1)


def test_quadratic_hand_iteration():
    run = run_sgd(QuadProblem(1.0, 1), StepsizePlan(0.1, Schedule.constant(), 3), [1.0], 0)
    assert run.last_iterate[0] == pytest.approx(0.729, abs=1e-15)


def test_averages_match_offline_formulas():
    q = QuadProblem(2.0, 3, sigma=0.5, radius=2.0)
    plan = StepsizePlan(0.05, Schedule.cosine(), 40)
    run = run_sgd(q, plan, [1.0, 0.0, 0.0], 11, record_trajectory=True)
    xs = run.trajectory[:-1]
    assert run.uniform_average == pytest.approx(xs.mean(axis=0), abs=1e-12)
    gamma = run.gamma
    bar = xs[0].copy()
    for t in range(2, len(xs) + 1):
        w = (gamma + 1) / (t + gamma)
        bar = (1 - w) * bar + w * xs[t - 1]
    assert run.polynomial_average == pytest.approx(bar, abs=1e-12)
    assert run.last_iterate == pytest.approx(run.trajectory[-1])


def test_determinism_and_seed_sensitivity():
    p = AbsProblem(1.0, 1.0, "rademacher")
    plan = StepsizePlan(0.05, Schedule.cosine(), 300)
    a = run_sgd(p, plan, [0.5], 7, record_trajectory=True)
    b = run_sgd(p, plan, [0.5], 7, record_trajectory=True)
    c = run_sgd(p, plan, [0.5], 8, record_trajectory=True)
    assert np.array_equal(a.trajectory, b.trajectory)
    assert not np.array_equal(a.trajectory, c.trajectory)


@pytest.mark.parametrize("problem, x1", [
    (AbsProblem(1.0, 1.0, "rademacher"), [0.5]),
    (QuadProblem(3.0, 4, sigma=2.0, radius=1.0, minimizer=np.array([0.9, 0, 0, 0])), [0, 1.0, 0, 0]),
])
def test_iterates_stay_feasible(problem, x1):
    run = run_sgd(problem, StepsizePlan(5.0, Schedule.constant(), 200), x1, 1, record_trajectory=True)
    assert all(problem.domain.contains(x, atol=1e-12) for x in run.trajectory)


def test_start_outside_domain_rejected():
    with pytest.raises(ValueError):
        run_sgd(AbsProblem(1.0, 1.0), StepsizePlan(0.1, Schedule.cosine(), 5), [0.9], 0)


def test_non_finite_gradient_reports_step():
    with pytest.raises(NonFiniteGradientError) as info:
        run_sgd(BrokenOracle(), StepsizePlan(0.1, Schedule.constant(), 10), [0.0], 0)
    assert info.value.step == 4


def test_summary_record():
    p = QuadProblem(1.0, 2)
    run = run_sgd(p, StepsizePlan(0.1, Schedule.cosine(), 10), [0.5, 0.5], 4)
    s = run.summary(p)
    assert s["seed"] == 4 and s["plan"]["schedule"] == "cosine" and s["gamma"] == 8
    assert set(s) >= {"loss_last", "loss_uniform_average", "loss_polynomial_average"}


# --------------------------------------------------------------- bounds


def test_discrete_lipschitz_examples():
    assert discrete_last_iterate_bound_lipschitz([0.3], 2.0, 1.5) == pytest.approx(4 / 0.6 + 2 * 2.25 * 0.3)
    assert discrete_last_iterate_bound_lipschitz([1.0, 1.0], 1.0, 1.0) == pytest.approx(1 / 4 + 3)
    assert discrete_last_iterate_bound_lipschitz([1.0, 1.0], 2.0, 0.5) == pytest.approx(1 + 3 * 0.25)


def test_discrete_lipschitz_scaling():
    etas = np.array([0.5, 0.3, 0.1])
    D, G, c = 1.3, 0.7, 4.0
    first = D**2 / (2 * etas.sum())
    second = discrete_last_iterate_bound_lipschitz(etas, D, G) - first
    scaled = discrete_last_iterate_bound_lipschitz(c * etas, D, G)
    assert scaled == pytest.approx(first / c + c * second)


def test_discrete_smooth_examples():
    assert discrete_last_iterate_bound_smooth([0.2, 0.1], 1.0, 0.0, 1.0) == pytest.approx(1 / 0.6)
    assert discrete_last_iterate_bound_smooth([0.2], 1.0, 3.0, 1.0) == pytest.approx(1 / 0.4 + 9 * 0.2)
    beta, T, D, sigma = 2.0, 30, 1.0, 0.5
    plan = StepsizePlan(1 / (2 * beta), Schedule.constant(), T)
    harmonic = sum(1 / k for k in range(1, T + 1))
    expected = D**2 * beta / T + sigma**2 / (2 * beta) * harmonic
    assert discrete_last_iterate_bound_smooth(plan, D, sigma, beta) == pytest.approx(expected)


def test_discrete_smooth_rejects_large_steps():
    with pytest.raises(StepsizeTooLargeError) as info:
        discrete_last_iterate_bound_smooth([0.1, 0.6, 0.7], 1.0, 1.0, 1.0)
    assert info.value.step == 2


def test_lemma3_examples():
    lhs, rhs = lemma3_gap(StepsizePlan(1.0, Schedule.polynomial(1), 100), 1, 1.0, 1.0, 0.0)
    assert lhs <= rhs
    for schedule in (Schedule.polynomial(1), Schedule.cosine(), Schedule.polynomial(4)):
        T = 200
        lhs, rhs = lemma3_gap(StepsizePlan(1.0, schedule, T), T, 1.0, 1.0, (T - 1) / T)
        assert math.isfinite(lhs) and math.isfinite(rhs) and lhs <= rhs
    lhs, rhs = lemma3_gap(StepsizePlan(1.0, Schedule.cosine(), 1000), 501, 1.0, 1.0, 0.5005)
    assert lhs <= rhs


def test_lemma3_validation():
    plan = StepsizePlan(1.0, Schedule.cosine(), 10)
    with pytest.raises(ValueError):
        lemma3_gap(plan, 3, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        lemma3_gap(plan, 11, 1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        lemma3_gap(StepsizePlan(1.0, Schedule.constant(), 10), 1, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        lemma3_gap(plan, 1, -1.0, 1.0, 0.0)


def test_lemma3_random_cases():
    rng = np.random.default_rng(2024)
    cosine = TailFunctions(Schedule.cosine())
    for _ in range(200):
        case = random_lemma3_case(rng)
        tails = cosine if case.plan.schedule == Schedule.cosine() else None
        lhs, rhs = case.evaluate(tails)
        assert lhs <= rhs, case.to_dict()


@settings(max_examples=60, deadline=None)
@given(T=st.integers(2, 400), frac=st.floats(0, 1), eta=st.floats(1e-3, 10), D=st.floats(0.1, 10), G=st.floats(0.1, 10))
def test_suffix_bound_equals_lemma3_lhs(T, frac, eta, D, G):
    plan = StepsizePlan(eta, Schedule.polynomial(2), T)
    k = 1 + int(frac * (T - 1))
    lhs, _ = lemma3_gap(plan, k, D**2 / 2, 2 * G**2, (k - 1) / T)
    suffix = discrete_last_iterate_bound_lipschitz(plan, D, G, start=k)
    assert abs(lhs - suffix) <= 1e-12 * max(1.0, abs(lhs))


def test_v_weights_examples():
    v = v_weights(StepsizePlan(1.0, Schedule.constant(), 4))
    assert v == pytest.approx([0.25, 0.25, 1 / 3, 0.5, 1.0])
    assert v_weights([0.4]) == pytest.approx([1.0, 1.0])


@settings(max_examples=60, deadline=None)
@given(
    T=st.integers(1, 300),
    eta=st.floats(1e-3, 100),
    schedule=st.sampled_from([Schedule.cosine(), Schedule.polynomial(1), Schedule.polynomial(3.5), Schedule.inverse_sqrt(), Schedule.constant()]),
)
def test_v_weights_properties(T, eta, schedule):
    plan = StepsizePlan(eta, schedule, T)
    v = v_weights(plan)
    etas = plan.stepsizes()
    assert v[-1] == pytest.approx(1.0)
    assert v[0] == v[1]
    assert np.all(np.diff(v) >= -1e-15)
    suffix = np.cumsum(etas[::-1])[::-1]
    for t in range(2, T + 1):
        lhs = etas[t - 2] * v[t - 1] - (v[t] - v[t - 1]) * suffix[t - 1]
        assert abs(lhs) <= 1e-10 * max(1.0, etas[t - 2] * v[t - 1])
