from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
from typing import Any

from .assembly import write_matrix_market
from .config import RunConfig, default_run_config, load_run_config, save_run_config, settings_hash, with_updates
from .conic_solver import INFEASIBLE, NUMERICAL_TROUBLE, OPTIMAL, UNBOUNDED, export_program
from .errors import AssemblyError, ConfigurationError, GeometryDomainError, MechanismError
from .mechanism import classify_cracks, export_mechanism
from .report import build_summary_payload, write_csv_table, write_summary_reports
from .studies import convergence_study, min_friction_search, min_thickness_search, parametric_sweep, run_limit_analysis

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_UNBOUNDED = 3
EXIT_CERTIFICATE = 4
EXIT_CONFIG = 5
EXIT_NUMERICAL = 6

_STATUS_EXIT = {
    OPTIMAL: EXIT_OK,
    INFEASIBLE: EXIT_INFEASIBLE,
    UNBOUNDED: EXIT_UNBOUNDED,
    NUMERICAL_TROUBLE: EXIT_NUMERICAL,
}

CRACK_COLUMNS = ["node", "phi", "theta", "kind", "magnitude"]


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(Path(args.config))
    output = cfg.output.model_dump()
    if getattr(args, "out", None):
        output["directory"] = str(args.out)
    if getattr(args, "export_program", False):
        output["export_program"] = True
    if getattr(args, "amplitude", None) is not None:
        output["amplitude"] = args.amplitude
    return with_updates(cfg, output=output)


def _cmd_init(args: argparse.Namespace) -> int:
    path = Path(args.path).expanduser()
    if path.exists() and not args.force:
        print(f"配置已存在: {path}（使用 --force 覆盖）")
        return EXIT_CONFIG
    save_run_config(default_run_config(), path)
    print(f"配置已写入: {path}")
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        result = run_limit_analysis(cfg)
    except (ConfigurationError, GeometryDomainError, AssemblyError) as exc:
        print(f"配置错误: {exc}")
        return EXIT_CONFIG
    except MechanismError as exc:
        print(f"机构提取失败: {exc}")
        return EXIT_CERTIFICATE

    out_dir = cfg.output.path
    report = result.report
    artifacts: dict[str, Path] = {}
    if cfg.output.export_program:
        artifacts["program"] = export_program(result.program, out_dir / "program.txt")
    if cfg.output.matrix_market:
        artifacts["matrix_market"] = write_matrix_market(result.program.system, out_dir / "equilibrium.mtx")

    cracks: dict[str, int] = {}
    if result.mechanism is not None:
        pattern = classify_cracks(result.mechanism, cfg.crack_threshold)
        cracks = pattern.counts()
        if cfg.output.crack_table:
            rows = [[r.node, r.phi, r.theta, r.kind, r.magnitude] for r in pattern.records]
            artifacts["cracks"] = write_csv_table(out_dir / "cracks.csv", cfg, CRACK_COLUMNS, rows)
        if cfg.output.export_vtk:
            artifacts["mechanism"] = export_mechanism(
                result.mechanism, result.mesh, out_dir / "mechanism.vtk", amplitude=cfg.output.amplitude
            )

    certificate = result.certificate.to_dict() if result.certificate is not None else None
    payload = build_summary_payload(cfg, report.summary(), result.timings, certificate, cracks, artifacts)
    paths = write_summary_reports(out_dir, payload)

    if report.optimal:
        print(f"lambda = {report.lam:.6f}（相对间隙 {report.gap:.1e}）")
    else:
        print(f"求解状态: {report.status}，{report.message}")
    print(f"摘要 JSON: {paths['summary_json']}")
    for key, path in artifacts.items():
        print(f"{key}: {path}")

    if result.certificate is not None and not result.certificate.passed:
        failed = ", ".join(f["type"] for f in result.certificate.failures)
        print(f"证书校验失败: {failed}")
        return EXIT_CERTIFICATE
    return _STATUS_EXIT.get(report.status, EXIT_NUMERICAL)


def _write_study_summary(out_dir: Path, cfg: RunConfig, payload: dict[str, Any]) -> Path:
    path = out_dir / "study.json"
    body = {"settings_sha256": settings_hash(cfg), "settings": cfg.model_dump(mode="json"), **payload}
    path.write_text(json.dumps(body, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def _cmd_study(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        if cfg.study is None:
            raise ConfigurationError("配置缺少 study 段")
        grid = cfg.study
        out_dir = cfg.output.path
        jobs = max(1, int(args.jobs))

        if grid.kind == "convergence":
            table = convergence_study(cfg, jobs=jobs)
            csv_path = write_csv_table(out_dir / "convergence.csv", cfg, table.columns(), table.rows())
            summary = {"kind": grid.kind, "monotone_rows": table.monotone_rows()}
        elif grid.kind == "sweep":
            sweep = parametric_sweep(cfg, jobs=jobs)
            csv_path = write_csv_table(out_dir / "sweep.csv", cfg, sweep.columns(), sweep.rows())
            peaks = {name: sweep.peak(name) for name in sweep.series}
            summary = {
                "kind": grid.kind,
                "variable": sweep.variable,
                "admissible": {name: sweep.admissible_interval(name) for name in sweep.series},
                "peak": {name: (p.value, p.lam) if p else None for name, p in peaks.items()},
            }
        else:
            bracket = grid.bracket
            assert bracket is not None
            search = min_thickness_search if grid.kind == "min_thickness" else min_friction_search
            found = search(cfg, bracket, grid.tolerance)
            csv_path = write_csv_table(out_dir / f"{grid.kind}.csv", cfg, found.columns(), found.rows())
            summary = {"kind": grid.kind, "value": found.value, "bracket": list(found.bracket)}
            print(f"{found.variable} 最小值 ≈ {found.value:.6f}")
    except (ConfigurationError, GeometryDomainError, AssemblyError) as exc:
        print(f"配置错误: {exc}")
        return EXIT_CONFIG

    summary_path = _write_study_summary(out_dir, cfg, summary)
    print(f"CSV: {csv_path}")
    print(f"摘要 JSON: {summary_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dome-limit", description="轴对称砌体穹顶水平力极限分析（下限定理 + 二阶锥规划）")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="写出默认验证算例配置")
    p_init.add_argument("path", help="配置文件路径（JSON）")
    p_init.add_argument("--force", action="store_true", help="覆盖已有文件")
    p_init.set_defaults(func=_cmd_init)

    p_solve = sub.add_parser("solve", help="单次极限分析：λ、机构、裂缝")
    p_solve.add_argument("config", help="配置文件路径（JSON）")
    p_solve.add_argument("--out", help="输出目录（覆盖 output.directory）")
    p_solve.add_argument("--export-program", action="store_true", help="导出可移植文本格式的锥规划")
    p_solve.add_argument("--amplitude", type=float, help="机构位移放大系数")
    p_solve.set_defaults(func=_cmd_solve)

    p_study = sub.add_parser("study", help="收敛/参数扫描/最小厚度等研究")
    p_study.add_argument("config", help="配置文件路径（JSON，需含 study 段）")
    p_study.add_argument("--out", help="输出目录（覆盖 output.directory）")
    p_study.add_argument("--jobs", type=int, default=1, help="并行求解的最大进程数")
    p_study.set_defaults(func=_cmd_study)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return int(args.func(args))


if __name__ == "__main__":
    raise SystemExit(main())
