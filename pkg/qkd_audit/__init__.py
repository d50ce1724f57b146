"""qkd-audit：量子密钥分发安全性指标与界的数值审计工具。"""

__version__ = "0.1.0"
