import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkd_audit.coupling import (
    Coupling,
    interpretation_counterexample,
    maximal_coupling,
    mismatch_probability,
    nonuniformity_witness,
    product_bias_distribution,
    random_transport_plan,
)
from qkd_audit.errors import (
    DimensionMismatch,
    EpsOutOfRange,
    InvalidDistribution,
    InvalidParameter,
    NotPowerOfTwo,
    SupportTooLarge,
)
from qkd_audit.metrics import ClassicalDistribution, variational_distance


def test_maximal_coupling_examples():
    p = ClassicalDistribution([0.75, 0.25])
    q = ClassicalDistribution([0.25, 0.75])
    c = maximal_coupling(p, q)
    assert mismatch_probability(c) == pytest.approx(0.5)
    np.testing.assert_allclose(c.row_marginal(), p.probs, atol=1e-12)
    np.testing.assert_allclose(c.column_marginal(), q.probs, atol=1e-12)
    assert np.trace(c.joint) == pytest.approx(0.5)

    same = maximal_coupling(p, p)
    assert mismatch_probability(same) == 0.0
    np.testing.assert_array_equal(same.joint, np.diag(p.probs))

    disjoint = maximal_coupling(ClassicalDistribution([1.0, 0.0]), ClassicalDistribution([0.0, 1.0]))
    assert mismatch_probability(disjoint) == 1.0


def test_independent_uniform_coupling():
    assert mismatch_probability(Coupling(np.full((2, 2), 0.25))) == pytest.approx(0.5)


def test_coupling_validation():
    with pytest.raises(DimensionMismatch):
        Coupling(np.ones((2, 3)) / 6)
    with pytest.raises(InvalidDistribution):
        Coupling(np.full((2, 2), 0.3))
    with pytest.raises(DimensionMismatch):
        maximal_coupling(ClassicalDistribution.uniform(2), ClassicalDistribution.uniform(3))


def test_coupling_lemma_on_random_pairs():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        p = ClassicalDistribution(rng.dirichlet(np.ones(n)))
        q = ClassicalDistribution(rng.dirichlet(np.ones(n)))
        delta = variational_distance(p, q)
        c = maximal_coupling(p, q)
        assert np.abs(c.row_marginal() - p.probs).max() <= 1e-12
        assert np.abs(c.column_marginal() - q.probs).max() <= 1e-12
        assert mismatch_probability(c) == pytest.approx(delta, abs=1e-12)
        alternative = random_transport_plan(p, q, rng)
        assert np.abs(alternative.row_marginal() - p.probs).max() <= 1e-12
        assert np.abs(alternative.column_marginal() - q.probs).max() <= 1e-12
        assert mismatch_probability(alternative) >= delta - 1e-12


weight_pairs = st.integers(min_value=1, max_value=12).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=n, max_size=n),
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=n, max_size=n),
    )
)


@settings(deadline=None, max_examples=100)
@given(pair=weight_pairs, seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_maximal_coupling_beats_transport_plans(pair, seed):
    a, b = (np.array(w) for w in pair)
    p = ClassicalDistribution(a / a.sum())
    q = ClassicalDistribution(b / b.sum())
    rng = np.random.default_rng(seed)
    best = mismatch_probability(maximal_coupling(p, q))
    assert best == pytest.approx(variational_distance(p, q), abs=1e-12)
    for _ in range(20):
        assert mismatch_probability(random_transport_plan(p, q, rng)) >= best - 1e-12


def test_witness_examples():
    uniform = nonuniformity_witness(ClassicalDistribution.uniform(8))
    assert uniform.excess_ratio == pytest.approx(1.0)
    assert uniform.delta_to_uniform == pytest.approx(0.0, abs=1e-15)

    rest = 0.65 / 3
    w = nonuniformity_witness(ClassicalDistribution([0.35, rest, rest, rest]))
    assert w.key_index == 0
    assert w.probability == pytest.approx(0.35)
    assert w.delta_to_uniform == pytest.approx(0.1)
    assert w.excess_ratio == pytest.approx(1.4)


def test_witness_for_biased_bits():
    dist = product_bias_distribution(8, 0.1)
    w = nonuniformity_witness(dist)
    assert w.key_index == 0
    assert w.excess_ratio == pytest.approx(1.2 ** 8)
    assert w.excess_ratio == pytest.approx(4.2998, abs=1e-4)
    exhaustive = 0.5 * sum(abs(p - 1 / 256) for p in dist.probs)
    assert w.delta_to_uniform == pytest.approx(exhaustive, abs=1e-14)


def test_witness_on_nearly_uniform_distribution():
    # 总质量差 1e-13，仍在分布容差内
    w = nonuniformity_witness(ClassicalDistribution([0.5, 0.5 - 1e-13]))
    assert w.key_index == 0
    assert w.excess_ratio == 1.0
    assert 0.0 < w.delta_to_uniform < 1e-12


def test_witness_requires_power_of_two():
    with pytest.raises(NotPowerOfTwo):
        nonuniformity_witness(ClassicalDistribution.uniform(3))


def test_product_bias_distribution_is_big_endian():
    dist = product_bias_distribution(2, 0.25)
    np.testing.assert_allclose(dist.probs, [0.5625, 0.1875, 0.1875, 0.0625])
    with pytest.raises(SupportTooLarge):
        product_bias_distribution(21, 0.1)


@pytest.mark.parametrize("key_bits, eps", [(8, 0.1), (2, 0.5), (1, 0.3), (4, 1e-4), (12, 0.9)])
def test_interpretation_counterexample(key_bits, eps):
    dist, witness = interpretation_counterexample(key_bits, eps)
    assert witness.delta_to_uniform == pytest.approx(eps, abs=1e-9)
    assert witness.excess_ratio > 1.0
    assert dist.support_size == 2 ** key_bits
    # 每个密钥都偏离均匀值
    assert np.all(np.abs(dist.probs * dist.support_size - 1.0) > 0)


def test_counterexample_small_eps_approaches_uniform():
    dist, _ = interpretation_counterexample(4, 1e-8)
    np.testing.assert_allclose(dist.probs, np.full(16, 1 / 16), atol=1e-7)


def test_counterexample_l2_half():
    dist, witness = interpretation_counterexample(2, 0.5)
    assert dist.probs.max() > 0.25
    assert 0.5 * np.abs(dist.probs - 0.25).sum() == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("eps", [0.0, -0.1, 0.75, 1.0])
def test_counterexample_eps_out_of_range(eps):
    with pytest.raises(EpsOutOfRange):
        interpretation_counterexample(2, eps)


@pytest.mark.parametrize("key_bits", [0, -3])
def test_counterexample_rejects_empty_key(key_bits):
    with pytest.raises(InvalidParameter):
        interpretation_counterexample(key_bits, 0.1)
