"""相干态判别：交叠、二元 Helstrom 误差与 M 元掩蔽星座误差。

相干态只通过 Gram 矩阵（精确内积）表示，不做光子数截断，因此对 |α|² = 10^6
这类强光同样精确。
"""

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from qkd_audit.errors import ConstellationTooLarge, DimensionMismatch, InvalidParameter
from qkd_audit.metrics import ClassicalDistribution

logger = logging.getLogger(__name__)

MAX_CONSTELLATION = 64
SYMMETRY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CoherentSignal:
    amplitude: complex

    def __post_init__(self):
        amp = complex(self.amplitude)
        if not (math.isfinite(amp.real) and math.isfinite(amp.imag)):
            raise InvalidParameter(f"相干态振幅非有限：{self.amplitude}")
        object.__setattr__(self, "amplitude", amp)

    @property
    def mean_photon_number(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True, eq=False)
class Constellation:
    signals: Tuple[CoherentSignal, ...]
    priors: ClassicalDistribution = field(default=None)

    def __post_init__(self):
        signals = tuple(self.signals)
        if not signals:
            raise InvalidParameter("星座至少包含一个信号")
        object.__setattr__(self, "signals", signals)
        if self.priors is None:
            object.__setattr__(self, "priors", ClassicalDistribution.uniform(len(signals)))
        elif self.priors.support_size != len(signals):
            raise DimensionMismatch(f"先验个数 {self.priors.support_size} 与信号个数 {len(signals)} 不符")

    @property
    def m(self) -> int:
        return len(self.signals)

    @classmethod
    def psk(cls, m: int, mean_photon: float) -> "Constellation":
        """对称相位星座 α·e^{2πik/M}，均匀先验。"""

        if m < 1:
            raise InvalidParameter(f"M 须 >= 1，实际 {m}")
        if mean_photon < 0:
            raise InvalidParameter(f"平均光子数须 >= 0，实际 {mean_photon}")
        alpha = math.sqrt(mean_photon)
        return cls(signals=tuple(CoherentSignal(alpha * cmath.exp(2j * math.pi * k / m)) for k in range(m)))


def inner_product(a: CoherentSignal, b: CoherentSignal) -> complex:
    """⟨α_a|α_b⟩ = exp(−½|α_a − α_b|² + i·Im(conj(α_a)·α_b))。"""

    diff = a.amplitude - b.amplitude
    phase = (a.amplitude.conjugate() * b.amplitude).imag
    return cmath.exp(complex(-0.5 * abs(diff) ** 2, phase))


def overlap(a: CoherentSignal, b: CoherentSignal) -> float:
    """|⟨α_a|α_b⟩|² = exp(−|α_a − α_b|²)。"""

    return math.exp(-abs(a.amplitude - b.amplitude) ** 2)


def helstrom_binary(a: CoherentSignal, b: CoherentSignal, priors: Tuple[float, float] = (0.5, 0.5)) -> float:
    """P_error = ½(1 − √(1 − 4 p0 p1 |⟨a|b⟩|²))，等先验时即 ½[1 − √(1 − e^{−|δ|²})]。

    按等价形式 x / (2(1 + √(1 − x)))，x = 4 p0 p1 |⟨a|b⟩|² 计算，强光下不会相消为 0。
    """

    p0, p1 = priors
    if p0 < 0 or p1 < 0 or abs(p0 + p1 - 1.0) > 1e-12:
        raise InvalidParameter(f"二元先验非法：({p0}, {p1})")
    x = 4.0 * p0 * p1 * overlap(a, b)
    return x / (2.0 * (1.0 + math.sqrt(max(0.0, 1.0 - x))))


def gram_matrix(c: Constellation) -> np.ndarray:
    """G_ij = √(p_i p_j)·⟨α_i|α_j⟩。"""

    weights = np.sqrt(c.priors.probs)
    raw = np.array([[inner_product(a, b) for b in c.signals] for a in c.signals], dtype=complex)
    return weights[:, None] * raw * weights[None, :]


def is_symmetric(c: Constellation, tol: float = SYMMETRY_TOLERANCE) -> bool:
    """均匀先验且信号构成 α_k = α_0·e^{2πik/M} 的旋转轨道。"""

    if not np.allclose(c.priors.probs, 1.0 / c.m, atol=tol):
        return False
    base = c.signals[0].amplitude
    rotation = cmath.exp(2j * math.pi / c.m)
    targets = [base * rotation ** k for k in range(c.m)]
    return all(any(abs(s.amplitude - t) <= tol for s in c.signals) for t in targets)


def mary_masking_error(c: Constellation) -> float:
    """平方根测量的误判概率 1 − Σ_i |(√G)_ii|²。

    对称星座下即最优值；其他情形为近似，且不超过按先验猜测的误差 1 − max p_i。
    """

    if c.m > MAX_CONSTELLATION:
        raise ConstellationTooLarge(f"星座大小 {c.m} 超过上限 {MAX_CONSTELLATION}")
    if c.m == 1:
        return 0.0
    gram = gram_matrix(c)
    w, v = np.linalg.eigh(gram)
    # 近乎重合的信号使 G 退化，截断负的舍入特征值即可
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    success = float(np.sum(np.abs(np.diag(root)) ** 2))
    error = 1.0 - success
    ceiling = 1.0 - float(c.priors.probs.max())
    if error > ceiling:
        logger.debug("SRM 误差 %s 高于先验猜测误差 %s，取后者", error, ceiling)
    return min(max(error, 0.0), ceiling)


@dataclass(frozen=True)
class ChannelRow:
    party: str
    knowledge: str
    effect: str
    error: float
    method: str


@dataclass(frozen=True)
class MaskedChannelReport:
    rows: Tuple[ChannelRow, ...]

    def header(self) -> Sequence[str]:
        return ["party", "knowledge", "effect", "error", "method"]

    def as_rows(self):
        return [[r.party, r.knowledge, r.effect, r.error, r.method] for r in self.rows]


def _eve_error(c: Constellation) -> Tuple[float, str]:
    if c.m == 2:
        p = c.priors.probs
        return helstrom_binary(c.signals[0], c.signals[1], (float(p[0]), float(p[1]))), "helstrom"
    method = "srm_exact" if is_symmetric(c) else "srm_approx"
    if method == "srm_approx":
        logger.warning("星座非对称，平方根测量仅为近似")
    return mary_masking_error(c), method


def masked_channel_report(
    c: Constellation, bob_key_known: bool = True, key_pair: Optional[Tuple[int, int]] = None
) -> MaskedChannelReport:
    """宏观掩蔽信道：Bob 知道密钥时只需二元判别，Eve 面对整个掩蔽星座。"""

    eve_error, eve_method = _eve_error(c)
    if bob_key_known and c.m >= 2:
        i, j = key_pair if key_pair is not None else (0, c.m // 2)
        bob_error = helstrom_binary(c.signals[i], c.signals[j])
        bob_row = ChannelRow("Bob", "key known", "classical", bob_error, "helstrom")
    else:
        bob_row = ChannelRow("Bob", "key unknown", "quantum", eve_error, eve_method)
    eve_row = ChannelRow("Eve", "key unknown", "quantum", eve_error, eve_method)
    return MaskedChannelReport(rows=(bob_row, eve_row))
