"""场景文件解析：逐行 `key = value`，`#` 开头为注释。"""

import logging
import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

from qkd_audit.errors import SchemaViolation

logger = logging.getLogger(__name__)

KINDS = ("metrics", "coupling", "bounds", "bb84", "coherent", "table1")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"无法解析布尔值 {text!r}")


def _parse_floats(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def parse_uint(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise ValueError(f"{value} 不是 64 位无符号整数")
    return value


# 字段 -> (解析函数, 是否必填, 默认值)
Field = Tuple[Callable[[str], Any], bool, Any]

_COMMON: Dict[str, Field] = {"rng_seed": (parse_uint, False, 0)}

SCHEMAS: Dict[str, Dict[str, Field]] = {
    "metrics": {
        "key_bits": (int, True, None),
        "dim_e": (int, True, None),
        "ensemble": (str, True, None),
        "overlap": (float, False, None),
        "smoothing_eps": (float, False, None),
    },
    "coupling": {
        "p": (_parse_floats, True, None),
        "q": (_parse_floats, True, None),
        "counterexample_key_bits": (int, False, None),
        "counterexample_eps": (float, False, None),
    },
    "bounds": {
        "eps": (float, True, None),
        "key_bits": (int, True, None),
        "p_abort": (float, False, 0.0),
        "p_phase": (float, False, None),
        "eps_hs": (float, False, None),
        "sample_errors": (int, False, None),
        "sample_size": (int, False, None),
        "total_errors": (int, False, None),
        "key_size": (int, False, None),
        "delta": (float, False, None),
        "distance": (float, False, None),
    },
    "bb84": {
        "raw_bits": (int, True, None),
        "key_bits": (int, True, None),
        "sample_fraction": (float, False, 0.0),
        "ec_mode": (str, False, "none"),
        "ec_parity_bits": (int, False, 2),
        "pa_seed": (str, False, None),
        "attack": (str, False, "none"),
        "attack_fraction": (float, False, 0.0),
        "workers": (int, False, None),
    },
    "coherent": {
        "m": (int, True, None),
        "mean_photon": (float, True, None),
        "bob_key_known": (_parse_bool, False, True),
    },
    "table1": {
        "eps": (float, True, None),
        "key_bits": (int, True, None),
    },
}


@dataclass(frozen=True)
class ScenarioFile:
    kind: str
    parameters: Dict[str, Any]
    rng_seed: int
    path: str

    def resolved(self) -> Dict[str, Any]:
        data = dict(self.parameters)
        data["rng_seed"] = self.rng_seed
        return data


def read_pairs(path: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaViolation(f"line {lineno}", f"第 {lineno} 行缺少 '='：{raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise SchemaViolation(f"line {lineno}", f"第 {lineno} 行键名为空")
            if key in pairs:
                raise SchemaViolation(key, f"字段 {key} 重复出现")
            pairs[key] = value
    return pairs


def parse_scenario(path: str, kind: Optional[str] = None, seed: Optional[int] = None) -> ScenarioFile:
    if not os.path.exists(path):
        raise FileNotFoundError(f"找不到场景文件 {path}")
    pairs = read_pairs(path)
    declared = pairs.pop("kind", None)
    if kind is None:
        kind = declared
    if kind is None:
        raise SchemaViolation("kind", "场景文件未声明 kind，且未指定子命令")
    if declared is not None and declared != kind:
        raise SchemaViolation("kind", f"场景文件声明 kind={declared}，与子命令 {kind} 不符")
    if kind not in SCHEMAS:
        raise SchemaViolation("kind", f"未知场景类型 {kind}，可选：{', '.join(KINDS)}")

    schema = {**SCHEMAS[kind], **_COMMON}
    unknown = sorted(set(pairs) - set(schema))
    if unknown:
        raise SchemaViolation(unknown[0], f"未知字段：{', '.join(unknown)}")
    params: Dict[str, Any] = {}
    for key, (parse, required, default) in schema.items():
        if key not in pairs:
            if required:
                raise SchemaViolation(key, f"缺少必填字段 {key}")
            params[key] = default
            continue
        try:
            params[key] = parse(pairs[key])
        except ValueError as exc:
            raise SchemaViolation(key, f"字段 {key} 取值非法：{pairs[key]!r}（{exc}）") from exc
    rng_seed = params.pop("rng_seed")
    if seed is not None:
        logger.info("命令行 --seed=%s 覆盖场景文件中的 rng_seed=%s", seed, rng_seed)
        rng_seed = seed
    return ScenarioFile(kind=kind, parameters=params, rng_seed=rng_seed, path=path)
