"""有限维量子态代数：密度算符、张量积、偏迹与经典-量子 (cq) 态组装。

计算基下标 k 按大端比特串解读密钥，cq 态的块布局依赖这一约定。
"""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from qkd_audit.errors import (
    DimensionMismatch,
    DimensionOverflow,
    InvalidDistribution,
    NonFinite,
    NotHermitian,
    NotPositive,
    TraceNotOne,
)

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
DIM_CAP = 4096


@dataclass(frozen=True, eq=False)
class DensityOperator:
    dim: int
    matrix: np.ndarray

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return make_density(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def diagonal(cls, probs: Sequence[float]) -> "DensityOperator":
        return make_density(np.diag(np.asarray(probs, dtype=complex)))

    @classmethod
    def pure(cls, vector: Sequence[complex]) -> "DensityOperator":
        vec = np.asarray(vector, dtype=complex)
        norm = np.linalg.norm(vec)
        if not np.isfinite(norm) or norm == 0:
            raise NonFinite(f"纯态向量范数非法：{norm}")
        vec = vec / norm
        return make_density(np.outer(vec, vec.conj()))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _freeze(matrix: np.ndarray) -> np.ndarray:
    matrix.setflags(write=False)
    return matrix


def make_density(matrix, tol: float = TOLERANCE) -> DensityOperator:
    """校验并构造密度算符。

    容差内的负特征值截断为 0 并重新归一化；超出容差的偏差直接报错，
    以区分舍入误差与非法输入。
    """

    arr = np.array(matrix, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"密度矩阵必须为方阵，实际形状 {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("密度矩阵含非有限元素")
    herm_defect = float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0
    if herm_defect > tol:
        raise NotHermitian(f"矩阵非厄米：max|A - A^H| = {herm_defect:.3e}")
    arr = (arr + arr.conj().T) / 2
    trace_defect = abs(np.trace(arr).real - 1.0)
    if trace_defect > tol:
        raise TraceNotOne(f"迹不为 1：|Tr - 1| = {trace_defect:.3e}")
    w, v = np.linalg.eigh(arr)
    if w[0] < -tol:
        raise NotPositive(f"矩阵非半正定：最小特征值 {w[0]:.3e}")
    if w[0] < 0 or w[-1] > 1:
        logger.debug("谱在容差内越界，截断到 [0,1] 并归一化：[%s, %s]", w[0], w[-1])
        w = np.clip(w, 0.0, 1.0)
        w = w / w.sum()
        arr = (v * w) @ v.conj().T
    return DensityOperator(dim=arr.shape[0], matrix=_freeze(arr))


def tensor(a: DensityOperator, b: DensityOperator, dim_cap: int = DIM_CAP) -> DensityOperator:
    dim = a.dim * b.dim
    if dim > dim_cap:
        raise DimensionOverflow(f"张量积维数 {dim} 超过上限 {dim_cap}")
    return DensityOperator(dim=dim, matrix=_freeze(np.kron(a.matrix, b.matrix)))


def partial_trace(
    rho: DensityOperator, dims: Tuple[int, int], keep: Literal["A", "B"] = "A"
) -> DensityOperator:
    d_a, d_b = dims
    if d_a * d_b != rho.dim:
        raise DimensionMismatch(f"子系统维数 {d_a}x{d_b} 与密度算符维数 {rho.dim} 不符")
    blocks = rho.matrix.reshape(d_a, d_b, d_a, d_b)
    if keep == "A":
        reduced = np.einsum("ijkj->ik", blocks)
    elif keep == "B":
        reduced = np.einsum("ijil->jl", blocks)
    else:
        raise ValueError(f"keep 只能为 A 或 B，实际 {keep!r}")
    return DensityOperator(dim=reduced.shape[0], matrix=_freeze(np.ascontiguousarray(reduced)))


@dataclass(frozen=True, eq=False)
class CQState:
    """经典-量子系综 {p(k), ρ_E^k}，k 取遍 l 比特密钥。"""

    key_bits: int
    entries: Tuple[Tuple[float, DensityOperator], ...]

    def __post_init__(self):
        if self.key_bits < 1:
            raise InvalidDistribution(f"密钥比特数必须 >= 1，实际 {self.key_bits}")
        if len(self.entries) != 2 ** self.key_bits:
            raise InvalidDistribution(
                f"cq 态需要 {2 ** self.key_bits} 个分量，实际 {len(self.entries)}"
            )
        probs = np.array([p for p, _ in self.entries], dtype=float)
        if np.any(probs < 0):
            raise InvalidDistribution(f"存在负概率：min p = {probs.min():.3e}")
        if abs(probs.sum() - 1.0) > TOLERANCE:
            raise InvalidDistribution(f"概率和不为 1：{probs.sum():.15f}")
        dims = {rho.dim for _, rho in self.entries}
        if len(dims) != 1:
            raise DimensionMismatch(f"各 ρ_E^k 维数不一致：{sorted(dims)}")

    @classmethod
    def from_lists(cls, probs: Sequence[float], states: Sequence[DensityOperator]) -> "CQState":
        n = len(probs)
        if n != len(states):
            raise DimensionMismatch(f"概率个数 {n} 与态个数 {len(states)} 不符")
        key_bits = max(1, int(round(np.log2(n)))) if n else 0
        return cls(key_bits=key_bits, entries=tuple((float(p), s) for p, s in zip(probs, states)))

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for p, _ in self.entries], dtype=float)

    @property
    def states(self) -> List[DensityOperator]:
        return [rho for _, rho in self.entries]

    @property
    def dim_e(self) -> int:
        return self.entries[0][1].dim

    def eve_state(self) -> DensityOperator:
        """ρ_E = Σ_k p(k) ρ_E^k。"""
        mixed = sum(p * rho.matrix for p, rho in self.entries)
        return DensityOperator(dim=self.dim_e, matrix=_freeze(np.asarray(mixed)))


def cq_assemble(cq: CQState, dim_cap: int = DIM_CAP) -> DensityOperator:
    """ρ_KE = Σ_k p(k)|k⟩⟨k| ⊗ ρ_E^k，块 k 为 p(k)·ρ_E^k。"""

    dim = len(cq.entries) * cq.dim_e
    if dim > dim_cap:
        raise DimensionOverflow(f"cq 态维数 {dim} 超过上限 {dim_cap}")
    matrix = block_diag(*[p * rho.matrix for p, rho in cq.entries]).astype(complex)
    return DensityOperator(dim=dim, matrix=_freeze(matrix))


# ---- 随机与构造型系综 ----

def random_density(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityOperator:
    """Ginibre 构造 G·G^H / Tr，rank 缺省为满秩。"""

    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return make_density(m / np.trace(m).real)


def _key_priors(key_bits: int, rng: np.random.Generator, uniform_key: bool) -> np.ndarray:
    n = 2 ** key_bits
    return np.full(n, 1.0 / n) if uniform_key else rng.dirichlet(np.ones(n))


def random_cq_state(key_bits: int, dim_e: int, rng: np.random.Generator, uniform_key: bool = True) -> CQState:
    """缺省密钥均匀；uniform_key=False 时先验取 Dirichlet(1) 随机分布。"""

    probs = _key_priors(key_bits, rng, uniform_key)
    return CQState.from_lists(probs, [random_density(dim_e, rng) for _ in probs])


def diagonal_cq_state(
    key_bits: int, dim_e: int, rng: np.random.Generator, uniform_key: bool = True
) -> CQState:
    """各 ρ_E^k 在计算基下对角，彼此对易。"""

    probs = _key_priors(key_bits, rng, uniform_key)
    return CQState.from_lists(probs, [DensityOperator.diagonal(rng.dirichlet(np.ones(dim_e))) for _ in probs])


def pure_overlap_cq_state(key_bits: int, dim_e: int, overlap: float) -> CQState:
    """均匀先验下的实平面纯态 cos(kθ)|0⟩ + sin(kθ)|1⟩，相邻两态 |⟨ψ_k|ψ_{k+1}⟩|² = overlap。"""

    if dim_e < 2:
        raise DimensionMismatch(f"纯态系综需要 dim_e >= 2，实际 {dim_e}")
    if not 0.0 <= overlap <= 1.0:
        raise InvalidDistribution(f"overlap 须在 [0,1] 内，实际 {overlap}")
    theta = float(np.arccos(np.sqrt(overlap)))
    n = 2 ** key_bits
    states = []
    for k in range(n):
        vec = np.zeros(dim_e, dtype=complex)
        vec[0], vec[1] = np.cos(k * theta), np.sin(k * theta)
        states.append(DensityOperator.pure(vec))
    return CQState.from_lists(np.full(n, 1.0 / n), states)
