"""统一异常层级：校验类错误对应退出码 2，数值上限类错误对应退出码 3。"""

from typing import Optional


class QKDAuditError(Exception):
    exit_code = 1


class ValidationError(QKDAuditError):
    exit_code = 2


class CapExceeded(QKDAuditError):
    exit_code = 3


# ---- 量子态不变量 ----
class NotHermitian(ValidationError):
    pass


class NotPositive(ValidationError):
    pass


class TraceNotOne(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


# ---- 参数范围 ----
class NotPowerOfTwo(ValidationError):
    pass


class EpsOutOfRange(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class KeyLongerThanSifted(ValidationError):
    pass


class OutputTooLong(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class SchemaViolation(ValidationError):
    def __init__(self, key: str, message: Optional[str] = None):
        self.key = key
        super().__init__(message or f"场景文件字段不合法：{key}")


# ---- 数值上限 ----
class DimensionOverflow(CapExceeded):
    pass


class SupportTooLarge(CapExceeded):
    pass


class EnumerationTooLarge(CapExceeded):
    pass


class ConstellationTooLarge(CapExceeded):
    pass
