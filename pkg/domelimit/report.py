from __future__ import annotations

import csv
import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Sequence

from .config import RunConfig, canonical_json, parse_run_config, settings_hash

UNITS_LINE = "units: dimensionless (R = 1, gamma = 1); lambda = collapse multiplier of horizontal forces"
SETTINGS_PREFIX = "# settings: "


def _clean(value: Any) -> Any:
    # JSON has no NaN/inf
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def build_summary_payload(
    cfg: RunConfig,
    solve: dict[str, Any],
    timings: dict[str, float],
    certificate: dict[str, Any] | None = None,
    cracks: dict[str, int] | None = None,
    artifacts: dict[str, Path] | None = None,
) -> dict[str, Any]:
    return _clean(
        {
            "generated_at": datetime.now().astimezone().isoformat(timespec="seconds"),
            "settings_sha256": settings_hash(cfg),
            "settings": cfg.model_dump(mode="json"),
            "lambda": solve.get("lambda"),
            "status": solve.get("status"),
            "gap": solve.get("gap"),
            "solve": solve,
            "timings": dict(timings),
            "certificate": certificate or {},
            "cracks": cracks or {},
            "artifacts": {k: str(v) for k, v in (artifacts or {}).items()},
        }
    )


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _render_summary_md(payload: dict[str, Any]) -> str:
    settings = payload["settings"]
    lines: list[str] = []
    lines.append("# Dome Limit Analysis")
    lines.append("")
    lines.append(f"- Generated at: `{payload['generated_at']}`")
    lines.append(f"- Settings hash: `{payload['settings_sha256']}`")
    lines.append(
        f"- Dome: `{settings['geometry']}`, t/R = `{settings['thickness_ratio']}`, "
        f"mesh `{settings['mesh_m']}x{settings['mesh_n'] or 2 * settings['mesh_m']}` ({settings['model']}), "
        f"friction `{settings['friction_mode']}` mu = `{settings['friction_coefficient']}`, n_alpha = `{settings['n_alpha']}`"
    )
    lines.append(f"- Status: `{payload['status']}`")
    lines.append(f"- Lambda: `{_fmt(payload['lambda'])}`")
    lines.append(f"- Relative gap: `{_fmt(payload['gap'])}`")
    lines.append("")
    lines.append("## Timings")
    lines.append("")
    lines.append("| Stage | Seconds |")
    lines.append("|---|---:|")
    for stage, seconds in payload["timings"].items():
        lines.append(f"| {stage} | {seconds:.3f} |")
    lines.append("")
    if payload["certificate"]:
        lines.append("## Certificate")
        lines.append("")
        for key, value in payload["certificate"].items():
            if key == "failures":
                continue
            lines.append(f"- `{key}`: {_fmt(value)}")
        for failure in payload["certificate"].get("failures", []):
            lines.append(f"- FAILED `{failure['type']}`: {failure['message']}")
        lines.append("")
    if payload["cracks"]:
        lines.append("## Crack Pattern")
        lines.append("")
        for kind, count in payload["cracks"].items():
            lines.append(f"- `{kind}`: {count} nodes")
        lines.append("")
    if payload["artifacts"]:
        lines.append("## Artifacts")
        lines.append("")
        for key, value in payload["artifacts"].items():
            lines.append(f"- {key}: `{value}`")
        lines.append("")
    return "\n".join(lines)


def write_summary_reports(out_dir: Path, payload: dict[str, Any]) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_json = out_dir / "summary.json"
    summary_md = out_dir / "summary.md"
    summary_json.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
    summary_md.write_text(_render_summary_md(payload), encoding="utf-8")
    return {"summary_json": summary_json, "summary_md": summary_md}


def header_lines(cfg: RunConfig) -> list[str]:
    return [
        f"# {UNITS_LINE}",
        f"# settings_sha256: {settings_hash(cfg)}",
        f"{SETTINGS_PREFIX}{canonical_json(cfg)}",
    ]


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv_table(path: Path, cfg: RunConfig, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header_lines(cfg):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv_settings(path: Path) -> RunConfig:
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith(SETTINGS_PREFIX):
                return parse_run_config(json.loads(line[len(SETTINGS_PREFIX) :]))
            if not line.startswith("#"):
                break
    raise ValueError(f"no settings header in {path}")


def read_csv_rows(path: Path) -> list[dict[str, str]]:
    with path.open("r", encoding="utf-8") as fh:
        body = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(body))
