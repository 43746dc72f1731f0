import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anneal_lab.bounds import (
    BoundReport,
    NoValidSuffixError,
    ProblemScales,
    coefficient_curve,
    compute_tau0,
    infimand,
    lipschitz_bound,
    smooth_bound,
    smooth_branch,
    solve_optimal_tau,
    stationarity_residual,
    tuned_rate_lipschitz,
    tuned_rate_smooth,
    tuned_stepsize_lipschitz,
    tuned_stepsize_smooth,
)
from anneal_lab.schedules import DivergentTailError, Schedule, TailFunctions

RHOS = [1, 2, 5, 10, 20, 50]
POLY = {p: TailFunctions(Schedule.polynomial(p)) for p in (1, 2, 3)}


@pytest.fixture(scope="module")
def cosine():
    return TailFunctions(Schedule.cosine())


def closed_form_tau(p, rho):
    return 1 - ((p + 1) / (p * rho**2)) ** (1 / (2 * p + 1))


def test_tuned_stepsize_lipschitz_examples(cosine):
    assert tuned_stepsize_lipschitz(ProblemScales(D=1, G=1, T=100), POLY[1]) == pytest.approx(0.05)
    assert tuned_stepsize_lipschitz(ProblemScales(D=2, G=1, T=100), POLY[1]) == pytest.approx(0.1)
    i0 = cosine.integral_at_zero
    expected = 1 / (2 * math.sqrt(10_000 * 0.5 * i0))
    assert tuned_stepsize_lipschitz(ProblemScales(D=1, G=1, T=10_000), cosine) == pytest.approx(expected)


def test_non_annealed_rejected():
    with pytest.raises(DivergentTailError):
        tuned_stepsize_lipschitz(ProblemScales(), TailFunctions(Schedule.constant()))


def test_tuned_rate_lipschitz_examples(cosine):
    assert tuned_rate_lipschitz(ProblemScales(), POLY[1]) == pytest.approx(4.0)
    for p, tails in POLY.items():
        assert tuned_rate_lipschitz(ProblemScales(), tails) == pytest.approx(2 * (p + 1) / math.sqrt(p))
    assert tuned_rate_lipschitz(ProblemScales(), cosine) <= 10
    assert tuned_rate_lipschitz(ProblemScales(D=2), cosine) == pytest.approx(2 * tuned_rate_lipschitz(ProblemScales(), cosine))


def test_stationarity_examples(cosine):
    v = 1 - 0.5 ** (1 / 3)
    assert abs(stationarity_residual(POLY[1], 2, v)) <= 1e-10
    assert stationarity_residual(POLY[1], 1, 0.0) == pytest.approx(0.5)
    for tails in (cosine, *POLY.values()):
        near_one = stationarity_residual(tails, 3, 1 - 1e-9)
        assert near_one == pytest.approx(tails.mass_at_zero * tails.integral_at_zero / 9, rel=1e-6)


def test_solve_tau_examples(cosine):
    assert solve_optimal_tau(POLY[1], 1.0) == 0.0
    assert solve_optimal_tau(cosine, 10) < solve_optimal_tau(cosine, 100) < 1


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("rho", [1.5, 2, 5, 10, 50])
def test_solver_matches_closed_form(p, rho):
    if (p + 1) / (p * rho**2) > 1:
        pytest.skip("closed form needs (p+1)/(p rho^2) <= 1")
    tails = POLY[p]
    tau = solve_optimal_tau(tails, rho)
    exact = closed_form_tau(p, rho)
    assert abs(tau - exact) <= 1e-8
    assert infimand(tails, rho, tau) == pytest.approx(infimand(tails, rho, exact), rel=1e-6)


def test_rho_below_one_rejected(cosine):
    for fn in (lambda: solve_optimal_tau(cosine, 0.5), lambda: lipschitz_bound(ProblemScales(), cosine, 0.99)):
        with pytest.raises(ValueError):
            fn()


def test_infimand_examples(cosine):
    for tails in (cosine, *POLY.values()):
        assert infimand(tails, 1.0, 0.0) == pytest.approx(2.0)
    assert infimand(POLY[1], 8.0, 0.75) == pytest.approx(4.0)


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("rho", RHOS + [7.3, 1000])
def test_sublinear_choice_gives_two_rho_power(p, rho):
    v = 1 - rho ** (-2 / (2 * p + 1))
    assert infimand(POLY[p], rho, v) / rho ** (1 / (2 * p + 1)) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("schedule", [Schedule.cosine(), Schedule.polynomial(1), Schedule.polynomial(3)], ids=str)
@pytest.mark.parametrize("rho", [1, 3, 40])
def test_minimality(schedule, rho):
    tails = TailFunctions(schedule)
    tau = solve_optimal_tau(tails, rho)
    best = infimand(tails, rho, tau)
    for v in np.random.default_rng(rho).uniform(0, 1, 100):
        assert best <= infimand(tails, rho, float(v)) + 1e-10


def test_lipschitz_bound_cosine_rho10(cosine):
    r = lipschitz_bound(ProblemScales(), cosine, 10)
    assert 4 * 10**0.2 <= r.coefficient <= 5 * 10**0.2
    assert r.bound_main == pytest.approx(0.5 * r.rate_opt * r.infimum_value)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_lipschitz_bound_polynomial_rate(p):
    for rho in RHOS:
        r = lipschitz_bound(ProblemScales(T=100), POLY[p], rho)
        assert r.bound_main <= r.rate_opt * rho ** (1 / (2 * p + 1)) * (1 + 1e-12)


def test_rho_one_recovers_tuned_rate(cosine):
    for tails in (cosine, *POLY.values()):
        r = lipschitz_bound(ProblemScales(D=3, G=2, T=50), tails, 1.0)
        assert r.bound_main <= r.rate_opt * (1 + 1e-12)
        assert r.infimum_value <= 1 + 1 + 1e-12


def test_low_order_term(cosine):
    sc = ProblemScales(D=1, G=2, T=400)
    r = lipschitz_bound(sc, cosine, 5)
    assert r.low_order == pytest.approx(8 * (math.pi / 2) * 5 * r.eta_star * 4 / 400)


def test_report_serialisation(cosine):
    r = lipschitz_bound(ProblemScales(), cosine, 2)
    assert len(r.csv_row()) == len(BoundReport.CSV_COLUMNS)
    d = r.to_dict()
    assert d["rho"] == 2 and d["mode"] == "lipschitz"


def test_infimum_never_exceeds_tau_zero_value(cosine):
    for rho in RHOS:
        r = lipschitz_bound(ProblemScales(), cosine, rho)
        assert r.infimum_value <= 1 / rho + rho


def test_bound_monotone_in_rho(cosine):
    grid = np.geomspace(1, 200, 40)
    for tails in (cosine, POLY[2]):
        mains = [r.bound_main for r in coefficient_curve(tails, grid)]
        assert np.all(np.diff(mains) >= -1e-12)


def test_coefficient_curve_sorted_and_threaded(cosine):
    serial = coefficient_curve(cosine, [5, 1, 2])
    threaded = coefficient_curve(cosine, [2, 5, 1], threads=3)
    assert [r.rho for r in serial] == [1, 2, 5]
    assert [r.coefficient for r in serial] == [r.coefficient for r in threaded]


def test_coefficient_curve_cosine_band_and_poly_ratio(cosine):
    cos = coefficient_curve(cosine, RHOS)
    poly2 = coefficient_curve(POLY[2], RHOS)
    for c, q in zip(cos, poly2):
        assert 4 * c.rho**0.2 <= c.coefficient <= 5 * c.rho**0.2
        assert q.coefficient / c.coefficient <= 2


def test_coefficient_curve_rejects_bad_mode(cosine):
    with pytest.raises(ValueError):
        coefficient_curve(cosine, [1], mode="other")
    with pytest.raises(ValueError):
        coefficient_curve(cosine, [1], mode="smooth")


@pytest.mark.parametrize("rho", [math.e**2, math.e**5, math.e**10])
def test_log_rho_power_choice(rho):
    p = math.ceil(math.log(rho))
    r = lipschitz_bound(ProblemScales(), TailFunctions(Schedule.polynomial(p)), rho)
    assert r.bound_main <= 10 * math.sqrt(math.log(rho))


# ---------------------------------------------------------------- smooth


def test_tuned_stepsize_smooth_examples():
    assert tuned_stepsize_smooth(ProblemScales(beta=1.0), POLY[1]) == pytest.approx(0.5)
    assert tuned_stepsize_smooth(ProblemScales(beta=1e9, sigma=1, T=10), POLY[1]) == pytest.approx(1 / (2e9))
    # min{50, 1 / sqrt(2 * 100 * 0.5 * 2)}
    sc = ProblemScales(D=1, sigma=1, T=100, beta=0.01)
    assert tuned_stepsize_smooth(sc, POLY[1]) == pytest.approx(1 / math.sqrt(200))


def test_smooth_needs_beta():
    with pytest.raises(ValueError):
        tuned_stepsize_smooth(ProblemScales(), POLY[1])


def test_tuned_rate_smooth_formula():
    sc = ProblemScales(D=1, sigma=1, T=100, beta=0.01)
    eta = 1 / math.sqrt(200)
    assert tuned_rate_smooth(sc, POLY[1]) == pytest.approx(1 / (2 * eta * 100 * 0.5) + eta * 2)


def test_compute_tau0_examples():
    s = Schedule.polynomial(1)
    assert compute_tau0(ProblemScales(T=100, beta=1), s, 0.4) == 0.0
    assert compute_tau0(ProblemScales(T=100, beta=1), s, 2 / 2) == pytest.approx(0.5)
    with pytest.raises(NoValidSuffixError):
        compute_tau0(ProblemScales(T=100, beta=1), Schedule.constant(), 0.6)


def test_smooth_rho_one_tau0_zero():
    sc = ProblemScales(D=1, sigma=0.5, T=1000, beta=2)
    for tails in POLY.values():
        r = smooth_bound(sc, tails, 1.0)
        assert r.tau_floor == 0.0
        assert r.bound_main <= 2 * r.rate_opt * (1 + 1e-12)


def test_smooth_matches_lipschitz_infimum_when_floor_zero(cosine):
    sc = ProblemScales(D=1, sigma=1, T=10_000, beta=1e-3)
    for tails in (cosine, POLY[2]):
        for rho in (1.5, 4):
            s = smooth_bound(sc, tails, rho)
            assert s.tau_floor == 0.0
            assert s.infimum_value == pytest.approx(lipschitz_bound(sc, tails, rho).infimum_value, rel=1e-12)


def test_smooth_short_suffix_branch():
    tails = POLY[1]
    # noiseless: eta* = 1/(2 beta), so rho eta* (1 - u) <= 1/(2 beta) iff 1 - u <= 1/rho,
    # and rho^2 < (1 - tau0)^-3 = rho^3 always
    sc = ProblemScales(D=1, sigma=0.0, T=1000, beta=1.0)
    r = smooth_bound(sc, tails, 4.0)
    assert r.tau_floor == pytest.approx(0.75)
    assert r.branch == smooth_branch(tails.schedule, 4.0, 0.75) == "short_suffix"
    assert r.tau_star >= r.tau_floor
    assert r.infimum_value <= infimand(tails, 4.0, 0.75)


def test_smooth_rho_power_branch():
    tails = POLY[1]
    # noise-limited eta* = 1/sqrt(2T) = 0.01 against a cap 1/(2 beta) = 0.025
    sc = ProblemScales(D=1, sigma=1.0, T=5000, beta=20.0)
    assert tuned_stepsize_smooth(sc, tails) == pytest.approx(0.01)
    r = smooth_bound(sc, tails, 10.0)
    assert r.tau_floor == pytest.approx(0.75)
    assert r.branch == "rho_power"
    assert 10.0**2 >= (1 - r.tau_floor) ** -3
    assert r.infimum_value <= 2 * 10.0 ** (1 / 3) * (1 + 1e-12)


def test_smooth_no_valid_suffix():
    with pytest.raises(NoValidSuffixError):
        compute_tau0(ProblemScales(T=10, beta=1.0), Schedule.polynomial(1), 1e6)


@settings(max_examples=40, deadline=None)
@given(rho=st.floats(1.0, 500.0), p=st.sampled_from([1, 2, 3]))
def test_polynomial_infimum_closed_form(rho, p):
    tails = POLY[p]
    c = (p + 1) / p
    tau = solve_optimal_tau(tails, rho)
    if c / rho**2 <= 1:
        expected = rho ** (1 / (2 * p + 1)) * (c ** (-(p + 1) / (2 * p + 1)) + c ** (p / (2 * p + 1)))
        assert infimand(tails, rho, tau) == pytest.approx(expected, rel=1e-9)
    else:
        assert tau == 0.0
