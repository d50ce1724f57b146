"""经典耦合实验：最大耦合的构造，以及说明 δ 并非事件概率的反例族。"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from qkd_audit.errors import (
    DimensionMismatch,
    EpsOutOfRange,
    InvalidDistribution,
    InvalidParameter,
    NotPowerOfTwo,
    SupportTooLarge,
)
from qkd_audit.metrics import DISTRIBUTION_TOLERANCE, ClassicalDistribution, variational_distance

logger = logging.getLogger(__name__)

MARGINAL_TOLERANCE = 1e-12
BISECTION_TOLERANCE = 1e-9
MAX_EXHAUSTIVE_BITS = 20


@dataclass(frozen=True, eq=False)
class Coupling:
    joint: np.ndarray

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float)
        if joint.ndim != 2 or joint.shape[0] != joint.shape[1]:
            raise DimensionMismatch(f"耦合矩阵须为方阵，实际形状 {joint.shape}")
        if np.any(joint < -MARGINAL_TOLERANCE):
            raise InvalidDistribution(f"耦合含负质量：{joint.min():.3e}")
        if abs(joint.sum() - 1.0) > 1e-10:
            raise InvalidDistribution(f"耦合总质量不为 1：{joint.sum():.15f}")
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)

    @property
    def n(self) -> int:
        return int(self.joint.shape[0])

    def row_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    def column_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)


@dataclass(frozen=True)
class NonuniformityWitness:
    key_index: int
    probability: float
    excess_ratio: float
    delta_to_uniform: float


def _check_same_support(p: ClassicalDistribution, q: ClassicalDistribution):
    if p.support_size != q.support_size:
        raise DimensionMismatch(f"支撑大小不一致：{p.support_size} vs {q.support_size}")


def maximal_coupling(p: ClassicalDistribution, q: ClassicalDistribution) -> Coupling:
    """对角取 min(P,Q)，剩余质量为两个残差的乘积再除以 δ。"""

    _check_same_support(p, q)
    overlap = np.minimum(p.probs, q.probs)
    joint = np.diag(overlap)
    res_p = p.probs - overlap
    res_q = q.probs - overlap
    mass = res_q.sum()
    if mass > 0:
        # 两个残差支撑不相交，乘积不会落在对角线上
        joint = joint + np.outer(res_p, res_q) / mass
    return Coupling(joint=joint)


def mismatch_probability(c: Coupling) -> float:
    return float(1.0 - np.trace(c.joint))


def random_transport_plan(
    p: ClassicalDistribution, q: ClassicalDistribution, rng: np.random.Generator
) -> Coupling:
    """随机行列顺序下的西北角贪心运输方案，边缘严格为 P 与 Q。"""

    _check_same_support(p, q)
    n = p.support_size
    rows = rng.permutation(n)
    cols = rng.permutation(n)
    supply = p.probs[rows].copy()
    demand = q.probs[cols].copy()
    joint = np.zeros((n, n))
    i = j = 0
    while i < n and j < n:
        moved = min(supply[i], demand[j])
        joint[rows[i], cols[j]] += moved
        supply[i] -= moved
        demand[j] -= moved
        if supply[i] <= demand[j]:
            i += 1
        else:
            j += 1
    return Coupling(joint=joint)


def _key_bits_of(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"支撑大小 {n} 不是 2 的幂")
    return n.bit_length() - 1


def nonuniformity_witness(p: ClassicalDistribution) -> NonuniformityWitness:
    n = p.support_size
    _key_bits_of(n)
    key = int(np.argmax(p.probs))
    prob = float(p.probs[key])
    delta = variational_distance(p, ClassicalDistribution.uniform(n))
    ratio = prob * n
    # 总质量偏差在容差内时 δ 不超过容差的一半
    if delta > DISTRIBUTION_TOLERANCE and ratio <= 1.0:
        raise InvalidDistribution(f"δ={delta} 超过容差但最大概率未超过均匀值")
    return NonuniformityWitness(key_index=key, probability=prob, excess_ratio=ratio, delta_to_uniform=delta)


def product_bias_distribution(key_bits: int, bias: float) -> ClassicalDistribution:
    """l 个独立比特，每位 P(0) = ½ + bias，密钥下标按大端读取。"""

    if key_bits > MAX_EXHAUSTIVE_BITS:
        raise SupportTooLarge(f"l={key_bits} 超过穷举上限 {MAX_EXHAUSTIVE_BITS}")
    if not 0.0 <= bias <= 0.5:
        raise EpsOutOfRange(f"偏置须在 [0, 0.5] 内，实际 {bias}")
    bit = np.array([0.5 + bias, 0.5 - bias])
    probs = np.ones(1)
    for _ in range(key_bits):
        probs = np.kron(probs, bit)
    return ClassicalDistribution(probs)


def interpretation_counterexample(
    key_bits: int, eps: float
) -> Tuple[ClassicalDistribution, NonuniformityWitness]:
    """构造每个密钥都有偏、但到均匀分布的 δ 恰为 eps 的乘积分布。"""

    if key_bits < 1:
        raise InvalidParameter(f"l 必须 >= 1，实际 {key_bits}")
    if key_bits > MAX_EXHAUSTIVE_BITS:
        raise SupportTooLarge(f"l={key_bits} 超过穷举上限 {MAX_EXHAUSTIVE_BITS}")
    ceiling = 1.0 - 2.0 ** (-key_bits)
    if not 0.0 < eps < ceiling:
        raise EpsOutOfRange(f"eps 须在 (0, {ceiling}) 内，实际 {eps}")
    uniform = ClassicalDistribution.uniform(2 ** key_bits)

    def delta_at(bias: float) -> float:
        return variational_distance(product_bias_distribution(key_bits, bias), uniform)

    # δ(b) 关于偏置 b 单调递增
    lo, hi = 0.0, 0.5
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        delta = delta_at(mid)
        if abs(delta - eps) <= 1e-13:
            lo = hi = mid
            break
        if delta < eps:
            lo = mid
        else:
            hi = mid
    bias = hi if abs(delta_at(hi) - eps) <= abs(delta_at(lo) - eps) else lo
    dist = product_bias_distribution(key_bits, bias)
    witness = nonuniformity_witness(dist)
    if abs(witness.delta_to_uniform - eps) > BISECTION_TOLERANCE:
        logger.warning("二分未达到容差：δ=%s, eps=%s", witness.delta_to_uniform, eps)
    logger.debug("l=%s eps=%s -> 每比特偏置 %s", key_bits, eps, bias)
    return dist, witness
