import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from qkd_audit import bounds
from qkd_audit.errors import EmptyGrid, EpsOutOfRange, InvalidParameter
from qkd_audit.metrics import ClassicalDistribution, classical_cq_state, guessing_probability, variational_distance


# ---- 香农框架 ----

def test_shannon_requirement():
    assert bounds.shannon_requirement(1).value == 0.5
    req = bounds.shannon_requirement(10000)
    assert req.log2_value == -10000.0
    assert req.log10 == pytest.approx(-3010.3, abs=0.01)
    assert req.as_string == "5.012e-3011"
    assert bounds.shannon_requirement(256).log10 == pytest.approx(-77.06, abs=0.01)
    with pytest.raises(InvalidParameter):
        bounds.shannon_requirement(0)


def test_brute_force_count():
    assert bounds.brute_force_count(1).value == 2.0
    assert bounds.brute_force_count(10).value == 1024.0
    assert bounds.brute_force_count(256).log10 == pytest.approx(77.06, abs=0.01)


def test_log_prob_rendering_and_validation():
    assert bounds.LogProb.from_probability(0.5).as_string == "5.000e-1"
    assert bounds.LogProb.from_probability(1.0).as_string == "1.000e+0"
    assert bounds.LogProb.from_probability(0.0).as_string == "0"
    with pytest.raises(InvalidParameter):
        bounds.LogProb(0.5)
    with pytest.raises(EpsOutOfRange):
        bounds.LogProb.from_probability(1.5)


def test_render_log10_carries_into_exponent():
    assert bounds.render_log10(math.log10(9.9996), digits=4) == "1.000e+1"


# ---- 平均与个体猜测界 ----

def test_avg_guess_bound():
    assert bounds.avg_guess_bound(0.0, 4).value == pytest.approx(2 ** -4)
    assert bounds.avg_guess_bound(0.1, 2).value == pytest.approx(0.35)
    assert bounds.avg_guess_bound(1e-10, 10000).log10 == pytest.approx(-10.0, abs=1e-9)
    with pytest.raises(EpsOutOfRange):
        bounds.avg_guess_bound(1.5, 4)


def test_individual_guess_bound():
    big = bounds.individual_guess_bound(1e-10, 10000)
    assert big.value == pytest.approx(10 ** (-10 / 3), rel=1e-9)
    assert big.value == pytest.approx(4.64e-4, rel=1e-3)
    assert bounds.individual_guess_bound(0.0, 8).value == pytest.approx(2 ** -8)
    assert bounds.individual_guess_bound(1e-3, 64).value == pytest.approx(0.1, rel=1e-9)


@settings(deadline=None, max_examples=200)
@given(eps=st.floats(min_value=0.0, max_value=1.0), key_bits=st.integers(min_value=1, max_value=20000))
def test_individual_bound_dominates_average(eps, key_bits):
    assert bounds.individual_guess_bound(eps, key_bits).log2_value >= bounds.avg_guess_bound(eps, key_bits).log2_value - 1e-12


def test_markov_failure():
    assert bounds.markov_individual_failure(1e-9) == pytest.approx(1e-3)
    assert bounds.markov_individual_failure(0.0) == 0.0


# ---- 极值分布 ----

def test_extremal_distribution_examples():
    np.testing.assert_allclose(bounds.extremal_distribution(0.0, 3).probs, np.full(8, 0.125))
    np.testing.assert_allclose(bounds.extremal_distribution(0.1, 2).probs, [0.35, 0.65 / 3, 0.65 / 3, 0.65 / 3])
    np.testing.assert_allclose(bounds.extremal_distribution(0.5, 1).probs, [1.0, 0.0])
    with pytest.raises(EpsOutOfRange):
        bounds.extremal_distribution(0.6, 1)


def test_extremal_distribution_is_tight():
    rng = np.random.default_rng(4)
    for _ in range(200):
        l = int(rng.integers(1, 13))
        n = 2 ** l
        eps = float(rng.uniform(0.0, 1.0 - 1.0 / n))
        dist = bounds.extremal_distribution(eps, l)
        assert variational_distance(dist, ClassicalDistribution.uniform(n)) == pytest.approx(eps, abs=1e-12)
        assert dist.probs.max() == pytest.approx(eps + 2.0 ** -l, abs=1e-12)
        assert dist.probs.max() == pytest.approx(bounds.avg_guess_bound(eps, l).value, abs=1e-12)
        if l <= 6:
            embedded = guessing_probability(classical_cq_state(dist))
            assert embedded.value == pytest.approx(eps + 2.0 ** -l, abs=1e-9)


# ---- Tomamichel Δ 与放弃修正 ----

def test_tomamichel_delta_constant_curves():
    delta, argmin = bounds.tomamichel_delta(8, lambda e: 8.0)
    assert delta == pytest.approx(0.5)
    assert argmin == 0.0
    delta, argmin = bounds.tomamichel_delta(8, lambda e: 68.0)
    assert delta == pytest.approx(0.5 * 2 ** -30)
    assert delta == pytest.approx(4.66e-10, rel=1e-3)
    assert argmin == 0.0


def test_tomamichel_delta_matches_dense_brute_force():
    l = 16

    def curve(e):
        return l + 40 + 200 * e

    grid = np.linspace(0.0, 0.5, 5001)
    delta, argmin = bounds.tomamichel_delta(l, curve, grid)
    brute = 0.5 * np.exp2(-(40 + 200 * grid) / 2) + grid
    assert delta == pytest.approx(brute.min(), rel=1e-12)
    assert argmin == pytest.approx(grid[np.argmin(brute)])


def test_tomamichel_delta_balances_a_steep_curve():
    # 曲线足够陡时最优点落在网格内部
    l = 10

    def curve(e):
        return l - 20 + 4000 * e

    delta, argmin = bounds.tomamichel_delta(l, curve, np.linspace(0.0, 0.5, 50001))
    assert 0.0 < argmin < 0.5
    assert delta < 0.5 * 2 ** 10


def test_tomamichel_delta_errors():
    with pytest.raises(EmptyGrid):
        bounds.tomamichel_delta(4, lambda e: 4.0, [])
    with pytest.raises(EpsOutOfRange):
        bounds.tomamichel_delta(4, lambda e: 4.0, [0.0, 0.7])


def test_abort_adjust():
    assert bounds.abort_adjust(0.3, 0.0) == 0.3
    assert bounds.abort_adjust(0.3, 1.0) == 0.0
    assert bounds.abort_adjust(2e-10, 0.5) == pytest.approx(1e-10)
    with pytest.raises(EpsOutOfRange):
        bounds.abort_adjust(0.1, 1.5)


def test_tomamichel_check():
    check = bounds.tomamichel_check(d=1e-10, delta=2e-10, p_abort=0.5, eps=1e-10)
    assert check.d_within_delta
    assert check.within_eps
    assert check.adjusted_delta == pytest.approx(1e-10)
    assert not bounds.tomamichel_check(d=0.3, delta=0.2, p_abort=0.0, eps=0.1).d_within_delta


# ---- 正态尾与相位误差 ----

def test_gaussian_tail_values():
    assert bounds.gaussian_tail(0.0) == 0.5
    assert bounds.gaussian_tail(3.0) == pytest.approx(1.3499e-3, rel=1e-4)
    integral, _ = quad(lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi), 3.0, np.inf, epsabs=1e-15, epsrel=1e-12)
    assert bounds.gaussian_tail(3.0) == pytest.approx(integral, rel=1e-8)
    with pytest.raises(InvalidParameter):
        bounds.gaussian_tail(-1.0)


def test_gaussian_tail_inverse_reproduces_s_of_ten_and_a_half():
    s = bounds.gaussian_tail_inverse(4e-26)
    assert 10.45 <= s <= 10.55
    assert bounds.gaussian_tail_inverse(0.5) == 0.0


@pytest.mark.parametrize("eps", np.logspace(-30, math.log10(0.49), 40))
def test_gaussian_tail_roundtrip(eps):
    s = bounds.gaussian_tail_inverse(eps)
    assert bounds.gaussian_tail(s) == pytest.approx(eps, rel=1e-9)
    assert s == pytest.approx(norm.isf(eps), rel=1e-8)


@pytest.mark.parametrize("eps", [0.0, -1e-3, 0.6])
def test_gaussian_tail_inverse_domain(eps):
    with pytest.raises(EpsOutOfRange):
        bounds.gaussian_tail_inverse(eps)


def test_phase_error_to_distance():
    assert bounds.phase_error_to_distance(0.0) == 0.0
    assert bounds.phase_error_to_distance(0.5) == 1.0
    assert bounds.phase_error_to_distance(5e-21) == pytest.approx(1e-10, rel=0.01)


def test_phase_error_estimate():
    est = bounds.phase_error_estimate(sample_errors=0, sample_size=100, total_errors=0, key_size=1000, eps=1e-3)
    assert est.eps_hs == pytest.approx(1e-6)
    assert est.s == pytest.approx(norm.isf(1e-6), rel=1e-8)
    assert est.p_shift == 0.0
    assert est.p_shift_hat > 0.0
    assert est.covers

    est = bounds.phase_error_estimate(sample_errors=5, sample_size=100, total_errors=105, key_size=1000, eps=0.1)
    assert est.p_shift == pytest.approx(0.1)
    assert 0.05 < est.p_shift_hat <= 1.0
    with pytest.raises(InvalidParameter):
        bounds.phase_error_estimate(sample_errors=5, sample_size=100, total_errors=2, key_size=1000, eps=0.1)


def test_hayashi_tsurumaru_chain():
    chain = bounds.hayashi_tsurumaru_chain(2e-13, 5e-21)
    assert chain.eps_hs == pytest.approx(4e-26)
    assert 10.45 <= chain.s <= 10.55
    assert chain.distance_bound == pytest.approx(1e-10, rel=0.01)


# ---- 表 1 ----

def test_table1_reproduction():
    table = bounds.table1_from(1e-10, 10000)
    present, requirement = table.rows
    assert present.label == "Present QKD"
    assert present.log10_value == pytest.approx(-3.33, abs=0.01)
    assert present.rendered == "10^-3.33"
    assert requirement.label == "Requirement"
    assert requirement.log2_value == -10000.0
    assert requirement.log10_value == pytest.approx(-3010.3, abs=0.01)
    assert requirement.rendered == "10^-3010.30"
    assert table.header() == ["column", "log2", "log10", "decimal"]
    assert table.as_rows()[0][0] == "Present QKD"


def test_table1_degenerate_and_mid_cases():
    equal = bounds.table1_from(0.0, 64)
    assert equal.rows[0].log2_value == equal.rows[1].log2_value == -64.0
    mid = bounds.table1_from(1e-30, 256)
    assert mid.rows[0].log10_value == pytest.approx(-10.0, abs=1e-6)
    assert mid.rows[1].log10_value == pytest.approx(-77.06, abs=0.01)
