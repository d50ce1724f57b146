"""桌面规模 BB84 流水线：一次一密、筛选、窃听模型、奇偶泄露纠错与 Toeplitz 隐私放大。

分布全部通过精确枚举得到，rng_seed 只决定公开记录（哪些位置被筛选、
被抽样以及默认的 Toeplitz 种子），不会影响任何报告中的概率。
Eve 的记录是经典的（测量结果与公开通信），量子存储攻击不在范围内。
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import binom

from qkd_audit import bounds, metrics
from qkd_audit.coupling import NonuniformityWitness, nonuniformity_witness
from qkd_audit.errors import (
    EnumerationTooLarge,
    InvalidParameter,
    KeyLongerThanSifted,
    LengthMismatch,
    OutputTooLong,
    SupportTooLarge,
)
from qkd_audit.metrics import ClassicalDistribution

logger = logging.getLogger(__name__)

ENUMERATION_CAP = 2 ** 26
SUPPORT_CAP = 2 ** 16
ABORT_THRESHOLD = 0.11
MAX_RAW_BITS = 24
MAX_KEY_BITS = 12
MAX_SECRECY_BITS = 12
PERFECT_TOLERANCE = 1e-12

Bits = Union[str, Sequence[int]]


class ECMode(str, Enum):
    NONE = "none"
    PARITY_REVEAL = "parity_reveal"


class AttackKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept_resend"
    CLASSICAL_COPY = "classical_copy"


@dataclass(frozen=True)
class ProtocolConfig:
    raw_bits: int
    key_bits: int
    sample_fraction: float = 0.0
    ec_mode: ECMode = ECMode.NONE
    ec_parity_bits: int = 2
    pa_seed: Optional[str] = None
    rng_seed: int = 0
    abort_threshold: float = ABORT_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "ec_mode", ECMode(self.ec_mode))
        if not 2 <= self.raw_bits <= MAX_RAW_BITS:
            raise InvalidParameter(f"raw_bits 须在 [2, {MAX_RAW_BITS}] 内，实际 {self.raw_bits}")
        if not 1 <= self.key_bits <= MAX_KEY_BITS:
            raise InvalidParameter(f"key_bits 须在 [1, {MAX_KEY_BITS}] 内，实际 {self.key_bits}")
        if not 0.0 <= self.sample_fraction < 1.0:
            raise InvalidParameter(f"sample_fraction 须在 [0,1) 内，实际 {self.sample_fraction}")
        if self.ec_parity_bits < 0:
            raise InvalidParameter(f"ec_parity_bits 须 >= 0，实际 {self.ec_parity_bits}")
        if self.pa_seed is not None and set(self.pa_seed) - {"0", "1"}:
            raise InvalidParameter(f"pa_seed 只能含 0/1：{self.pa_seed!r}")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise InvalidParameter(f"rng_seed 须为 64 位无符号整数，实际 {self.rng_seed}")


@dataclass(frozen=True)
class AttackModel:
    kind: AttackKind = AttackKind.NONE
    fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidParameter(f"攻击比例 f 须在 [0,1] 内，实际 {self.fraction}")

    def per_bit(self) -> Tuple[float, float]:
        """每个筛选比特的 (泄露概率, 误码概率)。"""

        if self.kind is AttackKind.INTERCEPT_RESEND:
            # 基矢猜对 (f/2) 时完全获知且不扰动；猜错时 Bob 以 ½ 出错
            return self.fraction / 2.0, self.fraction / 4.0
        if self.kind is AttackKind.CLASSICAL_COPY:
            return self.fraction, 0.0
        return 0.0, 0.0


@dataclass(frozen=True)
class Transcript:
    alice_bases: str
    bob_bases: str
    sifted_positions: Tuple[int, ...]
    sample_positions: Tuple[int, ...]
    key_positions: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ProtocolRun:
    config: ProtocolConfig
    attack: AttackModel
    transcript: Transcript
    pa_seed: str
    joint: np.ndarray
    y_labels: np.ndarray
    leaked_bits: Tuple[Tuple[int, ...], ...]
    qber_estimate: float
    abort: bool
    abort_probability: float
    hmin_sifted: float
    sifted_joint: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def key_bits(self) -> int:
        return self.config.key_bits

    @property
    def log2_joint(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(self.joint)


@dataclass(frozen=True)
class SecurityReport:
    key_bits: int
    trace_distance: metrics.MetricResult
    guessing_probability: metrics.MetricResult
    holevo_chi: float
    mutual_information: float
    witness: NonuniformityWitness
    key_uniform: bool
    guess_bound_residual: float
    hmin_sifted: float
    leftover_hash_bound: float
    abort: bool
    abort_probability: float
    qber_estimate: float
    delta: Optional[float] = None
    delta_argmin: Optional[float] = None
    d_within_delta: Optional[bool] = None
    notes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class SecrecyCheck:
    is_perfect: bool
    max_deviation: float
    plaintext_entropy: float
    equivocation: float
    key_entropy: float

    def __iter__(self):
        # 允许 is_perfect, deviation = verify_perfect_secrecy(...)
        yield self.is_perfect
        yield self.max_deviation


@dataclass(frozen=True)
class EnsembleSummary:
    seeds: int
    mean_distance: float
    leftover_hash_bound: float
    markov_violations: int
    markov_allowed_fraction: float

    @property
    def violation_fraction(self) -> float:
        return self.markov_violations / self.seeds if self.seeds else 0.0


# ---- 比特串工具 ----

def _to_array(bits: Bits) -> np.ndarray:
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise InvalidParameter(f"比特串只能含 0/1：{bits!r}")
        return np.array([int(b) for b in bits], dtype=np.uint8)
    arr = np.asarray(list(bits), dtype=np.int64)
    if np.any((arr != 0) & (arr != 1)):
        raise InvalidParameter(f"比特序列只能含 0/1：{list(bits)}")
    return arr.astype(np.uint8)


def _like(template: Bits, arr: np.ndarray) -> Bits:
    if isinstance(template, str):
        return "".join(str(int(b)) for b in arr)
    return [int(b) for b in arr]


def _bit_table(n: int) -> np.ndarray:
    """所有 n 比特串的大端比特表，形状 (2^n, n)。"""
    idx = np.arange(2 ** n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def _to_index(bit_rows: np.ndarray) -> np.ndarray:
    n = bit_rows.shape[1]
    weights = (1 << np.arange(n - 1, -1, -1)).astype(np.int64)
    return bit_rows.astype(np.int64) @ weights


def one_time_pad(x: Bits, k: Bits) -> Bits:
    """Y = X ⊕ K，对合运算。"""

    xa, ka = _to_array(x), _to_array(k)
    if xa.size != ka.size:
        raise LengthMismatch(f"明文长度 {xa.size} 与密钥长度 {ka.size} 不符")
    return _like(x, np.bitwise_xor(xa, ka))


def _entropy(probs: np.ndarray) -> float:
    probs = probs[probs > 0]
    return float(-np.sum(probs * np.log2(probs)))


def verify_perfect_secrecy(
    key_dist: ClassicalDistribution, plaintext_dist: ClassicalDistribution
) -> SecrecyCheck:
    """穷举一次一密下的 P(X|Y)，检查是否对所有 Y 都等于 P(X)。"""

    n = key_dist.support_size
    if n != plaintext_dist.support_size:
        raise LengthMismatch(f"密钥与明文支撑不一致：{n} vs {plaintext_dist.support_size}")
    m = n.bit_length() - 1
    if n & (n - 1):
        raise InvalidParameter(f"支撑大小 {n} 不是 2 的幂")
    if m > MAX_SECRECY_BITS:
        raise SupportTooLarge(f"m={m} 超过穷举上限 {MAX_SECRECY_BITS}")
    idx = np.arange(n)
    # joint[x, y] = P(x)·P_K(x ⊕ y)
    joint = plaintext_dist.probs[:, None] * key_dist.probs[np.bitwise_xor.outer(idx, idx)]
    py = joint.sum(axis=0)
    seen = py > 0
    conditional = joint[:, seen] / py[seen]
    deviation = float(np.max(np.abs(conditional - plaintext_dist.probs[:, None])))
    h_x = _entropy(plaintext_dist.probs)
    h_xy = _entropy(joint.ravel()) - _entropy(py)
    return SecrecyCheck(
        is_perfect=deviation <= PERFECT_TOLERANCE,
        max_deviation=deviation,
        plaintext_entropy=h_x,
        equivocation=h_xy,
        key_entropy=_entropy(key_dist.probs),
    )


# ---- 隐私放大 ----

def toeplitz_matrix(seed: Bits, n: int, l: int) -> np.ndarray:
    """l×n 的 GF(2) Toeplitz 矩阵，T[i][j] = seed[j − i + l − 1]。"""

    s = _to_array(seed)
    if s.size != n + l - 1:
        raise LengthMismatch(f"Toeplitz 种子长度应为 {n + l - 1}，实际 {s.size}")
    return toeplitz(s[l - 1::-1], s[l - 1:]).astype(np.uint8)


def privacy_amplify(bits: Bits, seed: Bits, l: int) -> Bits:
    x = _to_array(bits)
    if l > x.size:
        raise OutputTooLong(f"输出长度 {l} 超过输入长度 {x.size}")
    matrix = toeplitz_matrix(seed, x.size, l)
    return _like(bits, (matrix.astype(np.int64) @ x) % 2)


# ---- BB84 精确枚举 ----

def _layout(config: ProtocolConfig) -> Transcript:
    rng = np.random.default_rng(config.rng_seed)
    n = config.raw_bits
    n_sifted = n // 2
    order = rng.permutation(n)
    sifted = sorted(int(i) for i in order[:n_sifted])
    alice = rng.integers(0, 2, size=n)
    bob = 1 - alice
    bob[sifted] = alice[sifted]
    n_sample = int(round(config.sample_fraction * n_sifted))
    sample = sorted(int(i) for i in rng.choice(sifted, size=n_sample, replace=False)) if n_sample else []
    sampled = set(sample)
    key = [i for i in sifted if i not in sampled]
    to_str = lambda bases: "".join("ZX"[int(b)] for b in bases)  # noqa: E731
    return Transcript(
        alice_bases=to_str(alice),
        bob_bases=to_str(bob),
        sifted_positions=tuple(sifted),
        sample_positions=tuple(sample),
        key_positions=tuple(key),
    )


def _parity_blocks(n_key: int, config: ProtocolConfig) -> Tuple[Tuple[int, ...], ...]:
    if config.ec_mode is ECMode.NONE or config.ec_parity_bits == 0:
        return ()
    r = min(config.ec_parity_bits, n_key)
    if r < config.ec_parity_bits:
        logger.warning("奇偶校验位数 %s 超过密钥比特数 %s，截断为 %s", config.ec_parity_bits, n_key, r)
    return tuple(tuple(int(i) for i in block) for block in np.array_split(np.arange(n_key), r))


def _enumerate_masks(task) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """处理一段泄露掩码前缀，返回 (Eve 记录编码, 比特串下标, 概率, 猜中质量)。"""

    masks, n_key, q, parity_code, shift = task
    a = np.arange(2 ** n_key, dtype=np.int64)
    codes, indices, probs, guess = [], [], [], []
    for mask in masks:
        weight = bin(mask).count("1")
        p_mask = (q ** weight) * ((1.0 - q) ** (n_key - weight))
        y = (np.int64(mask) << (n_key + shift)) | ((a & mask) << shift) | parity_code
        codes.append(y)
        indices.append(a)
        probs.append(np.full(a.size, p_mask / a.size))
        # 同一 y 下所有相容比特串等概率
        guess.append(p_mask * np.unique(y).size / a.size)
    return np.concatenate(codes), np.concatenate(indices), np.concatenate(probs), np.array(guess)


def _partition(items: List[int], parts: int) -> List[List[int]]:
    parts = max(1, min(parts, len(items)))
    return [list(chunk) for chunk in np.array_split(np.array(items, dtype=np.int64), parts)]


def run_bb84(
    config: ProtocolConfig,
    attack: AttackModel,
    enumeration_cap: int = ENUMERATION_CAP,
    support_cap: int = SUPPORT_CAP,
    workers: int = 1,
) -> ProtocolRun:
    transcript = _layout(config)
    n_key = len(transcript.key_positions)
    l = config.key_bits
    if l > n_key:
        raise KeyLongerThanSifted(f"最终密钥长度 {l} 超过可用筛选比特 {n_key}")

    q, e = attack.per_bit()
    if q <= 0.0:
        masks = [0]
    elif q >= 1.0:
        masks = [2 ** n_key - 1]
    else:
        masks = list(range(2 ** n_key))
    branches = len(masks) * 2 ** n_key
    if branches > enumeration_cap:
        raise EnumerationTooLarge(f"枚举分支 {branches} 超过上限 {enumeration_cap}")

    if config.pa_seed is None:
        rng = np.random.default_rng([config.rng_seed, 1])
        pa_seed = "".join(str(int(b)) for b in rng.integers(0, 2, size=n_key + l - 1))
    else:
        pa_seed = config.pa_seed
    matrix = toeplitz_matrix(pa_seed, n_key, l).astype(np.int64)
    table = _bit_table(n_key)
    keys = _to_index((table.astype(np.int64) @ matrix.T) % 2)

    blocks = _parity_blocks(n_key, config)
    parity_code = np.zeros(2 ** n_key, dtype=np.int64)
    for block in blocks:
        parity_code = (parity_code << 1) | (table[:, list(block)].sum(axis=1) % 2).astype(np.int64)

    chunks = _partition(masks, workers)
    tasks = [(chunk, n_key, q, parity_code, len(blocks)) for chunk in chunks]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_enumerate_masks, tasks))
    else:
        parts = [_enumerate_masks(t) for t in tasks]
    # 按前缀顺序合并，保证与单进程逐位一致
    codes = np.concatenate([p[0] for p in parts])
    a_index = np.concatenate([p[1] for p in parts])
    probs = np.concatenate([p[2] for p in parts])
    guess_mass = float(np.sum(np.concatenate([p[3] for p in parts])))

    labels, inverse = np.unique(codes, return_inverse=True)
    cells = (2 ** l) * labels.size
    if cells > enumeration_cap:
        raise EnumerationTooLarge(f"联合分布单元数 {cells} 超过上限 {enumeration_cap}")
    joint = np.zeros((2 ** l, labels.size))
    np.add.at(joint, (keys[a_index], inverse), probs)

    sifted_joint = None
    if (2 ** n_key) * labels.size <= support_cap:
        sifted_joint = np.zeros((2 ** n_key, labels.size))
        np.add.at(sifted_joint, (a_index, inverse), probs)

    n_sample = len(transcript.sample_positions)
    if n_sample:
        qber = e
        tolerated = int(np.floor(config.abort_threshold * n_sample + 1e-12))
        abort_probability = float(binom.sf(tolerated, n_sample, e))
    else:
        logger.warning("抽样比特数为 0，无法估计 QBER，按 0 处理")
        qber = 0.0
        abort_probability = 0.0

    logger.info(
        "BB84 枚举完成：n=%s, 密钥位=%s, l=%s, 攻击=%s(f=%s), Eve 记录数=%s",
        config.raw_bits, n_key, l, attack.kind.value, attack.fraction, labels.size,
    )
    return ProtocolRun(
        config=config,
        attack=attack,
        transcript=transcript,
        pa_seed=pa_seed,
        joint=joint,
        y_labels=labels,
        leaked_bits=blocks,
        qber_estimate=qber,
        abort=qber > config.abort_threshold,
        abort_probability=abort_probability,
        hmin_sifted=-float(np.log2(guess_mass)),
        sifted_joint=sifted_joint,
    )


def evaluate_security(
    run: ProtocolRun,
    delta_grid: Optional[Sequence[float]] = None,
    support_cap: int = SUPPORT_CAP,
) -> SecurityReport:
    l = run.key_bits
    d = metrics.classical_security_distance(run.joint)
    p_guess = metrics.classical_guessing_probability(run.joint)
    info = metrics.mutual_information(run.joint)
    key_marginal = run.joint.sum(axis=1)
    witness = nonuniformity_witness(ClassicalDistribution(key_marginal / key_marginal.sum()))
    lhl = 0.5 * float(np.exp2((l - run.hmin_sifted) / 2.0))
    notes = [
        "illustrative desk-scale instance; parameters are not taken from any published protocol run",
        "eavesdropper record is classical (measurement outcomes and public transcript)",
    ]

    delta = argmin = within = None
    if delta_grid is not None:
        if run.sifted_joint is None or run.sifted_joint.size > support_cap:
            logger.warning("筛选联合分布过大，跳过 Tomamichel Δ 交叉检查")
        else:
            curve: Dict[float, float] = {}

            def hmin_curve(eps: float) -> float:
                if eps not in curve:
                    curve[eps] = metrics.smooth_min_entropy(run.sifted_joint, eps, support_cap=support_cap)
                return curve[eps]

            delta, argmin = bounds.tomamichel_delta(l, hmin_curve, delta_grid)
            within = d.value <= delta

    return SecurityReport(
        key_bits=l,
        trace_distance=d,
        guessing_probability=p_guess,
        holevo_chi=info,
        mutual_information=info,
        witness=witness,
        key_uniform=witness.delta_to_uniform <= 1e-12,
        guess_bound_residual=2.0 ** (-l) + d.value - p_guess.value,
        hmin_sifted=run.hmin_sifted,
        leftover_hash_bound=lhl,
        abort=run.abort,
        abort_probability=run.abort_probability,
        qber_estimate=run.qber_estimate,
        delta=delta,
        delta_argmin=argmin,
        d_within_delta=within,
        notes=tuple(notes),
    )


def seed_ensemble(
    config: ProtocolConfig, attack: AttackModel, seeds: Sequence[str], **kwargs
) -> List[Tuple[str, ProtocolRun, SecurityReport]]:
    results = []
    for seed in seeds:
        run = run_bb84(_with_seed(config, seed), attack, **kwargs)
        results.append((seed, run, evaluate_security(run)))
    return results


def _with_seed(config: ProtocolConfig, seed: str) -> ProtocolConfig:
    return ProtocolConfig(
        raw_bits=config.raw_bits,
        key_bits=config.key_bits,
        sample_fraction=config.sample_fraction,
        ec_mode=config.ec_mode,
        ec_parity_bits=config.ec_parity_bits,
        pa_seed=seed,
        rng_seed=config.rng_seed,
        abort_threshold=config.abort_threshold,
    )


def random_seeds(config: ProtocolConfig, count: int, rng: np.random.Generator) -> List[str]:
    n_key = len(_layout(config).key_positions)
    length = n_key + config.key_bits - 1
    return ["".join(str(int(b)) for b in rng.integers(0, 2, size=length)) for _ in range(count)]


def ensemble_summary(results: Sequence[Tuple[str, ProtocolRun, SecurityReport]]) -> EnsembleSummary:
    """随机哈希族上的平均距离、剩余哈希界以及 Markov 个体界违反情况。"""

    if not results:
        return EnsembleSummary(0, 0.0, 0.0, 0, 0.0)
    reports = [r for _, _, r in results]
    l = reports[0].key_bits
    mean_d = float(np.mean([r.trace_distance.value for r in reports]))
    individual = mean_d ** (1.0 / 3.0) + 2.0 ** (-l)
    violations = sum(1 for r in reports if r.guessing_probability.value > individual)
    return EnsembleSummary(
        seeds=len(reports),
        mean_distance=mean_d,
        leftover_hash_bound=reports[0].leftover_hash_bound,
        markov_violations=violations,
        markov_allowed_fraction=bounds.markov_individual_failure(min(mean_d, 1.0)),
    )
