"""命令行入口：qkd-audit <subcommand> --scenario <file> --out <dir> [--seed <u64>] [--config <yaml>]"""

import argparse
import logging
import sys
from typing import List, Optional

from qkd_audit.config import AppConfig, load_config
from qkd_audit.errors import CapExceeded, ValidationError
from qkd_audit.scenario import KINDS, parse_scenario, parse_uint
from qkd_audit.workflow import ScenarioRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAP = 3

HELP = {
    "metrics": "cq 系综上的迹距离、Holevo 量与猜测概率",
    "coupling": "最大耦合与 δ 并非事件概率的反例",
    "bounds": "香农要求、平均/个体猜测界、相位误差链",
    "bb84": "桌面规模 BB84 精确枚举与安全性评估",
    "coherent": "相干态掩蔽信道的 Bob/Eve 误差对比",
    "table1": "密钥估计概率对比表",
}


def run_scenario(
    kind: Optional[str],
    scenario_path: str,
    out_dir: str,
    seed: Optional[int] = None,
    config: Optional[AppConfig] = None,
) -> int:
    """执行单个场景并写出报告，返回退出码。"""

    try:
        scenario = parse_scenario(scenario_path, kind=kind, seed=seed)
        runner = ScenarioRunner(config or AppConfig())
        runner.run(scenario, out_dir)
    except CapExceeded as exc:
        logger.error("超出数值上限：%s", exc)
        return EXIT_CAP
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        logger.error("输入校验失败：%s", exc)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkd-audit", description="QKD 安全性指标与界的数值审计工具")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind])
        p.add_argument("--scenario", required=True, help="场景文件（key = value 格式）")
        p.add_argument("--out", required=True, help="报告输出目录")
        p.add_argument("--seed", type=parse_uint, default=None, help="覆盖场景中的 rng_seed（64 位无符号整数）")
        p.add_argument("--config", default=None, help="YAML 配置文件，缺省使用内置默认值")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="[%(levelname)s] %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (FileNotFoundError, ValueError) as exc:
        logger.error("配置加载失败：%s", exc)
        return EXIT_VALIDATION
    return run_scenario(args.kind, args.scenario, args.out, seed=args.seed, config=config)


if __name__ == "__main__":
    sys.exit(main())
