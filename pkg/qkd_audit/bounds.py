"""标量安全界计算器。

所有概率都以 log2 形式携带，以承载 2^{-10000} 这类量级；十进制渲染按
四位有效数字、银行家舍入。
"""

import logging
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc, log_ndtr

from qkd_audit.coupling import MAX_EXHAUSTIVE_BITS
from qkd_audit.errors import EmptyGrid, EpsOutOfRange, InvalidParameter, SupportTooLarge
from qkd_audit.metrics import ClassicalDistribution

logger = logging.getLogger(__name__)

LOG10_2 = math.log10(2.0)
SIGNIFICANT_DIGITS = 4


def render_log10(log10_value: float, digits: int = SIGNIFICANT_DIGITS) -> str:
    """把 10^x 渲染成 'm.mmme±E'，尾数用 ROUND_HALF_EVEN。"""

    if math.isinf(log10_value) and log10_value < 0:
        return "0"
    exponent = math.floor(log10_value)
    mantissa = Decimal(repr(10.0 ** (log10_value - exponent)))
    quantum = Decimal(1).scaleb(-(digits - 1))
    mantissa = mantissa.quantize(quantum, rounding=ROUND_HALF_EVEN)
    if mantissa >= 10:
        mantissa = (mantissa / 10).quantize(quantum, rounding=ROUND_HALF_EVEN)
        exponent += 1
    return f"{mantissa}e{exponent:+d}"


@dataclass(frozen=True)
class LogProb:
    log2_value: float

    def __post_init__(self):
        if self.log2_value > 1e-12:
            raise InvalidParameter(f"概率的 log2 必须 <= 0，实际 {self.log2_value}")

    @classmethod
    def from_probability(cls, p: float) -> "LogProb":
        if not 0.0 <= p <= 1.0:
            raise EpsOutOfRange(f"概率须在 [0,1] 内，实际 {p}")
        return cls(math.log2(p) if p > 0 else float("-inf"))

    @property
    def log10(self) -> float:
        return self.log2_value * LOG10_2

    @property
    def value(self) -> float:
        return 2.0 ** self.log2_value

    @property
    def as_string(self) -> str:
        return render_log10(self.log10)


@dataclass(frozen=True)
class LogCount(LogProb):
    """计数量（如穷举次数），log2 非负。"""

    def __post_init__(self):
        if self.log2_value < 0:
            raise InvalidParameter(f"计数的 log2 必须 >= 0，实际 {self.log2_value}")


@dataclass(frozen=True)
class PhaseErrorEstimate:
    sample_errors: int
    total_errors: int
    p_shift: float
    p_shift_hat: float
    eps_hs: float
    s: float

    @property
    def covers(self) -> bool:
        return self.p_shift_hat >= self.p_shift


@dataclass(frozen=True)
class HayashiTsurumaruBound:
    eps: float
    eps_hs: float
    s: float
    p_phase: float
    distance_bound: float


@dataclass(frozen=True)
class TomamichelCheck:
    d: float
    delta: float
    adjusted_delta: float
    d_within_delta: bool
    within_eps: bool


@dataclass(frozen=True)
class Table1Row:
    label: str
    log2_value: float
    log10_value: float
    rendered: str


@dataclass(frozen=True)
class Table1:
    rows: Tuple[Table1Row, ...]

    def header(self) -> List[str]:
        return ["column", "log2", "log10", "decimal"]

    def as_rows(self) -> List[List]:
        return [[r.label, r.log2_value, r.log10_value, r.rendered] for r in self.rows]


def _check_unit(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise EpsOutOfRange(f"{name} 须在 [0,1] 内，实际 {value}")


def _log2_or_neg_inf(x: float) -> float:
    return math.log2(x) if x > 0 else float("-inf")


# ---- 香农框架 ----

def shannon_requirement(key_bits: int) -> LogProb:
    """一次一密要求 P_suc = 2^{-|K|}，指数精确。"""

    if key_bits < 1:
        raise InvalidParameter(f"key_bits 必须 >= 1，实际 {key_bits}")
    return LogProb(-float(key_bits))


def brute_force_count(key_bits: int) -> LogCount:
    if key_bits < 1:
        raise InvalidParameter(f"key_bits 必须 >= 1，实际 {key_bits}")
    return LogCount(float(key_bits))


# ---- 密钥估计攻击界 ----

def avg_guess_bound(eps: float, key_bits: int) -> LogProb:
    """⟨P(K_G|Y_E)⟩ <= eps + 2^{-l}，以 log-sum-exp 计算。"""

    _check_unit("eps", eps)
    log2_value = float(np.logaddexp2(_log2_or_neg_inf(eps), -float(key_bits)))
    return LogProb(min(log2_value, 0.0))


def individual_guess_bound(eps_avg: float, key_bits: int) -> LogProb:
    """两次 Markov 不等式：P(K_G|Y_E) <= eps^{1/3} + 2^{-l}。"""

    _check_unit("eps_avg", eps_avg)
    log2_value = float(np.logaddexp2(_log2_or_neg_inf(eps_avg) / 3.0, -float(key_bits)))
    return LogProb(min(log2_value, 0.0))


def markov_individual_failure(eps_avg: float) -> float:
    """允许违反个体界的隐私放大选择所占比例上限 eps^{1/3}。"""

    _check_unit("eps_avg", eps_avg)
    return eps_avg ** (1.0 / 3.0)


def extremal_distribution(eps: float, key_bits: int) -> ClassicalDistribution:
    """使平均猜测界取等号的分布：P(0) = 2^{-l} + eps，其余质量均分。"""

    if key_bits > MAX_EXHAUSTIVE_BITS:
        raise SupportTooLarge(f"l={key_bits} 超过穷举上限 {MAX_EXHAUSTIVE_BITS}")
    n = 2 ** key_bits
    ceiling = 1.0 - 1.0 / n
    if not 0.0 <= eps <= ceiling:
        raise EpsOutOfRange(f"eps 须在 [0, {ceiling}] 内，实际 {eps}")
    top = 2.0 ** (-key_bits) + eps
    probs = np.full(n, max(1.0 - top, 0.0) / (n - 1)) if n > 1 else np.zeros(1)
    probs[0] = top
    return ClassicalDistribution(probs)


# ---- Tomamichel Δ ----

def tomamichel_delta(
    key_bits: int,
    hmin_curve: Callable[[float], float],
    grid: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """Δ = min_{ε'} ½·2^{(l − H^{ε'}_min)/2} + ε'，在网格上取最小。"""

    points = np.linspace(0.0, 0.5, 501) if grid is None else np.asarray(list(grid), dtype=float)
    if points.size == 0:
        raise EmptyGrid("ε' 网格为空")
    if np.any(points < 0) or np.any(points > 0.5):
        raise EpsOutOfRange(f"ε' 网格须在 [0, 0.5] 内：[{points.min()}, {points.max()}]")
    with np.errstate(over="ignore"):
        values = np.array([0.5 * np.exp2((key_bits - hmin_curve(e)) / 2.0) + e for e in points])
    best = int(np.argmin(values))
    return float(values[best]), float(points[best])


def abort_adjust(delta: float, p_abort: float) -> float:
    _check_unit("p_abort", p_abort)
    return (1.0 - p_abort) * delta


def tomamichel_check(d: float, delta: float, p_abort: float, eps: float) -> TomamichelCheck:
    adjusted = abort_adjust(delta, p_abort)
    return TomamichelCheck(
        d=d,
        delta=delta,
        adjusted_delta=adjusted,
        d_within_delta=d <= delta,
        within_eps=adjusted <= eps,
    )


# ---- Hayashi–Tsurumaru 相位误差链 ----

def gaussian_tail(s: float) -> float:
    """标准正态上尾 Q(s) = ½ erfc(s/√2)。"""

    if s < 0:
        raise InvalidParameter(f"s 须 >= 0，实际 {s}")
    return float(0.5 * erfc(s / math.sqrt(2.0)))


def gaussian_tail_inverse(eps: float) -> float:
    """对 log Q 做 Newton 迭代求 Q(s) = eps。

    log Q 是凹函数，从右侧初值 √(−2 ln eps) 出发单调收敛。
    """

    if not 0.0 < eps <= 0.5:
        raise EpsOutOfRange(f"eps 须在 (0, 0.5] 内，实际 {eps}")
    if eps == 0.5:
        return 0.0
    target = math.log(eps)
    s = math.sqrt(-2.0 * target)
    log_phi_const = -0.5 * math.log(2.0 * math.pi)
    for _ in range(100):
        log_q = float(log_ndtr(-s))
        slope = -math.exp(log_phi_const - 0.5 * s * s - log_q)
        step = (log_q - target) / slope
        s_next = max(s - step, 0.0)
        if abs(s_next - s) <= 1e-12 * max(1.0, s):
            return s_next
        s = s_next
    logger.warning("gaussian_tail_inverse 未在 100 步内收敛：eps=%s, s=%s", eps, s)
    return s


def phase_error_to_distance(p_phase: float) -> float:
    """d <= √2·√P_phase，截断到 1。"""

    _check_unit("p_phase", p_phase)
    return min(1.0, math.sqrt(2.0) * math.sqrt(p_phase))


def phase_error_estimate(
    sample_errors: int, sample_size: int, total_errors: int, key_size: int, eps: float
) -> PhaseErrorEstimate:
    """由样本误码 c 给出相位误码率的上置信限 p̂_shift(c)。

    eps_HS = eps²，s = Q^{-1}(eps_HS)；正态近似中用 (c+½)/(m+1) 估计方差，
    保证 c = 0 时上置信限仍严格大于 0。
    """

    if sample_size < 1 or key_size < 1:
        raise InvalidParameter(f"样本量与密钥量须 >= 1：m={sample_size}, n={key_size}")
    if not 0 <= sample_errors <= sample_size:
        raise InvalidParameter(f"样本误码 c={sample_errors} 超出 [0, {sample_size}]")
    if not sample_errors <= total_errors <= sample_errors + key_size:
        raise InvalidParameter(f"总误码 k={total_errors} 与 c={sample_errors}, n={key_size} 不相容")
    eps_hs = eps * eps
    if not 0.0 < eps_hs < 1.0:
        raise EpsOutOfRange(f"eps_HS = eps² 须在 (0,1) 内，实际 {eps_hs}")
    s = gaussian_tail_inverse(min(eps_hs, 0.5))
    rate = (sample_errors + 0.5) / (sample_size + 1)
    spread = math.sqrt(rate * (1.0 - rate) * (1.0 / sample_size + 1.0 / key_size))
    p_hat = min(1.0, sample_errors / sample_size + s * spread)
    p_shift = (total_errors - sample_errors) / key_size
    return PhaseErrorEstimate(
        sample_errors=sample_errors,
        total_errors=total_errors,
        p_shift=p_shift,
        p_shift_hat=p_hat,
        eps_hs=eps_hs,
        s=s,
    )


def hayashi_tsurumaru_chain(eps: float, p_phase: float) -> HayashiTsurumaruBound:
    eps_hs = eps * eps
    s = gaussian_tail_inverse(eps_hs)
    return HayashiTsurumaruBound(
        eps=eps, eps_hs=eps_hs, s=s, p_phase=p_phase, distance_bound=phase_error_to_distance(p_phase)
    )


# ---- 表 1 ----

def build_table1(individual: LogProb, requirement: LogProb) -> Table1:
    rows = tuple(
        Table1Row(label=label, log2_value=lp.log2_value, log10_value=lp.log10, rendered=f"10^{lp.log10:.2f}")
        for label, lp in (("Present QKD", individual), ("Requirement", requirement))
    )
    return Table1(rows=rows)


def table1_from(eps: float, key_bits: int) -> Table1:
    return build_table1(individual_guess_bound(eps, key_bits), shannon_requirement(key_bits))
