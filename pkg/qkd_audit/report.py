"""报告输出：report.json（字段按字母序）、table.csv 以及 Jinja2 渲染的 report.html。"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, select_autoescape

TEMPLATE_DIR = Path(__file__).parent / "templates"


def log2_or_none(x: float) -> Optional[float]:
    return math.log2(x) if x > 0 else None


def quantity(x: float) -> Dict[str, Optional[float]]:
    """线性值与 log2 值成对给出，0 的 log2 记为 null。"""
    x = float(x)
    return {"linear": x, "log2": log2_or_none(x)}


def _sanitize(value: Any) -> Any:
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if hasattr(value, "item"):  # numpy 标量
        return _sanitize(value.item())
    return value


def dumps(payload: Dict) -> str:
    return json.dumps(_sanitize(payload), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def render_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def build_env(template_dir: str = str(TEMPLATE_DIR)):
    return Environment(
        loader=FileSystemLoader(template_dir),
        autoescape=select_autoescape(["html"]),
    )


def _flatten(payload: Any, prefix: str = "") -> List[tuple]:
    if isinstance(payload, dict):
        items = []
        for key in sorted(payload):
            items.extend(_flatten(payload[key], f"{prefix}.{key}" if prefix else key))
        return items
    return [(prefix, payload)]


def write_report(
    out_dir: str,
    payload: Dict,
    table: Optional[Dict] = None,
    write_html: bool = True,
) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    text = dumps(payload)
    (out / "report.json").write_text(text, encoding="utf-8")
    written.append(out / "report.json")
    if table is not None:
        (out / "table.csv").write_text(render_csv(table["header"], table["rows"]), encoding="utf-8")
        written.append(out / "table.csv")
    if write_html:
        tmpl = build_env().get_template("report.html")
        html = tmpl.render(
            kind=payload.get("kind"),
            entries=_flatten(json.loads(text)),
            table=table,
        )
        (out / "report.html").write_text(html, encoding="utf-8")
        written.append(out / "report.html")
    return written
