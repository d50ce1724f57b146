"""距离与熵度量：迹距离、变分距离、Holevo 量、猜测概率与经典光滑最小熵。

熵一律以比特为单位，约定 0·log0 = 0。猜测公式中 argmax 并列时取最小密钥下标。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from qkd_audit.errors import DimensionMismatch, EpsOutOfRange, InvalidDistribution, SupportTooLarge
from qkd_audit.qstate import DIM_CAP, CQState, DensityOperator, cq_assemble, tensor

logger = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-12
JOINT_TOLERANCE = 1e-9
COMMUTE_TOLERANCE = 1e-10
SUPPORT_CAP = 2 ** 16


class Method(str, Enum):
    EXACT_EIGEN = "exact_eigen"
    CLASSICAL = "classical"
    HELSTROM = "helstrom"
    PGM_BOUND = "pgm_bound"


@dataclass(frozen=True)
class MetricResult:
    value: float
    method: Method
    upper_bound: Optional[float] = None

    @property
    def log2_value(self) -> float:
        return float(np.log2(self.value)) if self.value > 0 else float("-inf")


@dataclass(frozen=True, eq=False)
class ClassicalDistribution:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidDistribution(f"分布必须为非空一维向量，实际形状 {probs.shape}")
        if np.any(probs < 0):
            raise InvalidDistribution(f"存在负概率：min = {probs.min():.3e}")
        total = probs.sum()
        if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
            raise InvalidDistribution(f"概率和不为 1：{total:.15f}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n: int) -> "ClassicalDistribution":
        return cls(np.full(n, 1.0 / n))

    @property
    def support_size(self) -> int:
        return int(self.probs.size)


def _entropy_bits(eigs: np.ndarray) -> float:
    eigs = eigs[eigs > 0]
    return float(-np.sum(eigs * np.log2(eigs)))


def von_neumann_entropy(rho: DensityOperator) -> float:
    return _entropy_bits(np.clip(rho.eigenvalues(), 0.0, None))


def trace_norm_hermitian(matrix: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(matrix))))


def trace_distance(rho: DensityOperator, sigma: DensityOperator) -> MetricResult:
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"维数不一致：{rho.dim} vs {sigma.dim}")
    value = 0.5 * trace_norm_hermitian(rho.matrix - sigma.matrix)
    return MetricResult(value=min(max(value, 0.0), 1.0), method=Method.EXACT_EIGEN)


def variational_distance(p: ClassicalDistribution, q: ClassicalDistribution) -> float:
    if p.support_size != q.support_size:
        raise DimensionMismatch(f"支撑大小不一致：{p.support_size} vs {q.support_size}")
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def holevo_chi(cq: CQState) -> float:
    """χ = S(ρ_E) − Σ_k p(k) S(ρ_E^k)。"""

    mixed = von_neumann_entropy(cq.eve_state())
    average = sum(p * von_neumann_entropy(rho) for p, rho in cq.entries if p > 0)
    chi = mixed - average
    if chi < -1e-9:
        logger.warning("Holevo 量出现明显负值 %s，数值可能失真", chi)
    return max(chi, 0.0)


def security_distance(cq: CQState, dim_cap: int = DIM_CAP) -> MetricResult:
    """d = ½‖ρ_KE − ρ_U ⊗ ρ_E‖₁。"""

    rho_ke = cq_assemble(cq, dim_cap=dim_cap)
    ideal = tensor(DensityOperator.maximally_mixed(len(cq.entries)), cq.eve_state(), dim_cap=dim_cap)
    return trace_distance(rho_ke, ideal)


def _all_commute(states: Sequence[DensityOperator]) -> bool:
    for i, a in enumerate(states):
        for b in states[i + 1:]:
            comm = a.matrix @ b.matrix - b.matrix @ a.matrix
            if np.max(np.abs(comm)) > COMMUTE_TOLERANCE:
                return False
    return True


def _common_eigenbasis(states: Sequence[DensityOperator]) -> np.ndarray:
    # 对两两对易的厄米矩阵，取通用线性组合的本征基即可同时对角化
    coeffs = np.random.default_rng(20240917).uniform(1.0, 2.0, size=len(states))
    combo = sum(c * s.matrix for c, s in zip(coeffs, states))
    _, vecs = np.linalg.eigh(combo)
    return vecs


def _pretty_good_measurement(cq: CQState) -> float:
    weighted = [p * rho.matrix for p, rho in cq.entries]
    total = sum(weighted)
    w, v = np.linalg.eigh(total)
    inv_sqrt = np.where(w > 1e-14, 1.0 / np.sqrt(np.clip(w, 1e-300, None)), 0.0)
    root = (v * inv_sqrt) @ v.conj().T
    success = 0.0
    for m in weighted:
        povm = root @ m @ root
        success += float(np.real(np.trace(m @ povm)))
    return success


def guessing_probability(cq: CQState, dim_cap: int = DIM_CAP) -> MetricResult:
    """Eve 对密钥的平均最优猜中概率。

    对易系综按经典公式精确求解；两态用 Helstrom；其余给出 PGM 值并附
    上界 2^{-l} + d。
    """

    states = cq.states
    probs = cq.probs
    if _all_commute(states):
        basis = _common_eigenbasis(states)
        table = np.array(
            [p * np.real(np.diag(basis.conj().T @ rho.matrix @ basis)) for p, rho in cq.entries]
        )
        return MetricResult(value=float(table.max(axis=0).sum()), method=Method.CLASSICAL)
    if len(states) == 2:
        diff = probs[0] * states[0].matrix - probs[1] * states[1].matrix
        value = 0.5 + 0.5 * trace_norm_hermitian(diff)
        return MetricResult(value=min(value, 1.0), method=Method.HELSTROM)
    d = security_distance(cq, dim_cap=dim_cap).value
    bound = min(1.0, 2.0 ** (-cq.key_bits) + d)
    logger.info("非对易 %s 态系综，采用 PGM 近似，理论上界 %s", len(states), bound)
    return MetricResult(value=_pretty_good_measurement(cq), method=Method.PGM_BOUND, upper_bound=bound)


# ---- 经典联合分布 P(K, Y)：行为密钥，列为 Eve 记录 ----

def _as_joint(joint: Union[np.ndarray, ClassicalDistribution]) -> np.ndarray:
    if isinstance(joint, ClassicalDistribution):
        table = joint.probs.reshape(-1, 1)
    else:
        table = np.asarray(joint, dtype=float)
        if table.ndim == 1:
            table = table.reshape(-1, 1)
    if table.ndim != 2 or table.size == 0:
        raise InvalidDistribution(f"联合分布必须为二维表，实际形状 {table.shape}")
    if np.any(table < 0) or abs(table.sum() - 1.0) > JOINT_TOLERANCE:
        raise InvalidDistribution(f"联合分布非法：min={table.min():.3e}, sum={table.sum():.12f}")
    return table


def classical_cq_state(joint: np.ndarray) -> CQState:
    """经典联合分布的对角嵌入：ρ_E^k = diag(P(y|k))。"""

    table = _as_joint(joint)
    n_keys, n_y = table.shape
    states = []
    for row in table:
        mass = row.sum()
        if mass > 0:
            states.append(DensityOperator.diagonal(row / mass))
        else:
            states.append(DensityOperator.maximally_mixed(n_y))
    return CQState.from_lists(table.sum(axis=1), states)


def classical_security_distance(joint: np.ndarray) -> MetricResult:
    table = _as_joint(joint)
    ideal = np.outer(np.full(table.shape[0], 1.0 / table.shape[0]), table.sum(axis=0))
    value = 0.5 * float(np.abs(table - ideal).sum())
    return MetricResult(value=min(value, 1.0), method=Method.CLASSICAL)


def classical_guessing_probability(joint: np.ndarray) -> MetricResult:
    table = _as_joint(joint)
    return MetricResult(value=float(table.max(axis=0).sum()), method=Method.CLASSICAL)


def min_entropy(joint: np.ndarray) -> float:
    return -float(np.log2(classical_guessing_probability(joint).value))


def mutual_information(joint: np.ndarray) -> float:
    table = _as_joint(joint)
    pk = table.sum(axis=1, keepdims=True)
    py = table.sum(axis=0, keepdims=True)
    mask = table > 0
    ratio = table[mask] / (pk @ py)[mask]
    return max(float(np.sum(table[mask] * np.log2(ratio))), 0.0)


def smooth_min_entropy(
    joint: Union[np.ndarray, ClassicalDistribution], eps: float, support_cap: int = SUPPORT_CAP
) -> float:
    """H^ε_min(K|Y)：在变分距离 ε 球内最大化条件最小熵，线性规划求解。

    变量 [P'(N), u(N), t(|Y|)]，最小化 Σ_y t_y，约束 t_y ≥ P'(k,y)、
    u ≥ |P − P'|、Σu ≤ 2ε、ΣP' = 1。
    """

    if not 0.0 <= eps < 1.0:
        raise EpsOutOfRange(f"光滑参数 eps 须在 [0,1) 内，实际 {eps}")
    table = _as_joint(joint)
    n_keys, n_y = table.shape
    plain = float(table.max(axis=0).sum())
    if eps == 0.0:
        return -float(np.log2(plain))
    n = table.size
    if n > support_cap:
        raise SupportTooLarge(f"联合分布支撑 {n} 超过线性规划上限 {support_cap}")

    flat = table.ravel()  # 行优先：下标 k*n_y + y
    eye = sparse.identity(n, format="csr")
    col_of = np.tile(np.arange(n_y), n_keys)
    t_select = sparse.csr_matrix((np.ones(n), (np.arange(n), col_of)), shape=(n, n_y))
    zeros_nn = sparse.csr_matrix((n, n))
    zeros_ny = sparse.csr_matrix((n, n_y))
    a_ub = sparse.vstack(
        [
            sparse.hstack([eye, zeros_nn, -t_select]),
            sparse.hstack([eye, -eye, zeros_ny]),
            sparse.hstack([-eye, -eye, zeros_ny]),
            sparse.hstack(
                [sparse.csr_matrix((1, n)), sparse.csr_matrix(np.ones((1, n))), sparse.csr_matrix((1, n_y))]
            ),
        ],
        format="csr",
    )
    b_ub = np.concatenate([np.zeros(n), flat, -flat, [2.0 * eps]])
    a_eq = sparse.hstack(
        [sparse.csr_matrix(np.ones((1, n))), sparse.csr_matrix((1, n)), sparse.csr_matrix((1, n_y))]
    )
    cost = np.concatenate([np.zeros(2 * n), np.ones(n_y)])
    bounds = [(0.0, 1.0)] * n + [(0.0, None)] * n + [(0.0, None)] * n_y
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not result.success:
        logger.warning("光滑最小熵线性规划未收敛（%s），退回无光滑值", result.message)
        return -float(np.log2(plain))
    # 最优值夹在 [1/|K|, plain] 之间，截掉求解器残差
    best = min(max(float(result.fun), 1.0 / n_keys), plain)
    return -float(np.log2(best))
