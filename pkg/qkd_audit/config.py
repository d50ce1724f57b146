import os
from dataclasses import dataclass, field, fields
from typing import Dict, Optional, Type, TypeVar

import yaml

T = TypeVar("T")


@dataclass
class NumericsConfig:
    dim_cap: int = 4096
    support_cap: int = 2 ** 16
    enumeration_cap: int = 2 ** 26


@dataclass
class SimulationConfig:
    abort_threshold: float = 0.11
    workers: int = 1
    max_raw_bits: int = 24
    max_key_bits: int = 12


@dataclass
class ReportConfig:
    write_html: bool = True
    significant_digits: int = 4


@dataclass
class AppConfig:
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def to_dict(self) -> Dict:
        return {
            "numerics": vars(self.numerics).copy(),
            "simulation": vars(self.simulation).copy(),
            "report": vars(self.report).copy(),
        }


def _build(cls: Type[T], section: str, data: Optional[Dict]) -> T:
    data = data or {}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"配置段 {section} 含未知字段：{', '.join(unknown)}")
    return cls(**data)


def load_config(path: Optional[str] = None) -> AppConfig:
    """读取 YAML 配置；未指定路径时返回默认配置。"""

    if path is None:
        return AppConfig()
    if not os.path.exists(path):
        raise FileNotFoundError(f"找不到配置文件 {path}，请先复制 config.yml.example")
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    unknown = sorted(set(data) - {"numerics", "simulation", "report"})
    if unknown:
        raise ValueError(f"配置文件含未知段：{', '.join(unknown)}")
    return AppConfig(
        numerics=_build(NumericsConfig, "numerics", data.get("numerics")),
        simulation=_build(SimulationConfig, "simulation", data.get("simulation")),
        report=_build(ReportConfig, "report", data.get("report")),
    )
