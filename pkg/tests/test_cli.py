from __future__ import annotations

import json
from pathlib import Path

import pytest

from domelimit.cli import EXIT_CERTIFICATE, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, build_parser, main
from domelimit.config import default_run_config, load_run_config, save_run_config
from domelimit.errors import MechanismError
from domelimit.report import read_csv_rows, read_csv_settings


def _write(path: Path, cfg) -> str:
    save_run_config(cfg, path)
    return str(path)


class TestInit:
    def test_writes_default_config(self, tmp_path):
        target = tmp_path / "dome.json"
        assert main(["init", str(target)]) == EXIT_OK
        assert load_run_config(target).model_dump() == default_run_config().model_dump()

    def test_refuses_to_overwrite(self, tmp_path):
        target = tmp_path / "dome.json"
        target.write_text("{}", encoding="utf-8")
        assert main(["init", str(target)]) == EXIT_CONFIG
        assert target.read_text(encoding="utf-8") == "{}"
        assert main(["init", str(target), "--force"]) == EXIT_OK


class TestSolve:
    def test_outputs(self, tmp_path, make_config, capsys):
        out = tmp_path / "run"
        config = _write(tmp_path / "dome.json", make_config())
        assert main(["solve", config, "--out", str(out), "--export-program"]) == EXIT_OK

        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["status"] == "optimal"
        assert 0.0 < summary["lambda"] < 1.0
        assert summary["certificate"]["passed"] is True
        assert len(summary["settings_sha256"]) == 64
        for name in ("summary.md", "cracks.csv", "mechanism.vtk", "program.txt"):
            assert (out / name).is_file(), name
        assert "lambda =" in capsys.readouterr().out

        cracks = read_csv_rows(out / "cracks.csv")
        assert cracks and set(cracks[0]) == {"node", "phi", "theta", "kind", "magnitude"}
        assert read_csv_settings(out / "cracks.csv").output.directory == str(out)

    def test_invalid_config_exits_with_config_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"friction_coefficient": -1.0}), encoding="utf-8")
        assert main(["solve", str(path), "--out", str(tmp_path / "run")]) == EXIT_CONFIG
        assert not (tmp_path / "run" / "summary.json").exists()

    def test_missing_config(self, tmp_path):
        assert main(["solve", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_unstable_dome(self, tmp_path, make_config):
        out = tmp_path / "run"
        config = _write(tmp_path / "dome.json", make_config(friction_coefficient=0.01, n_alpha=8))
        assert main(["solve", config, "--out", str(out)]) == EXIT_INFEASIBLE
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["status"] == "infeasible"
        assert summary["lambda"] is None

    def test_mechanism_failure_exits_with_certificate_code(self, tmp_path, make_config, monkeypatch, capsys):
        def broken(cfg, **kwargs):
            raise MechanismError("dead-load work differs from -lambda")

        monkeypatch.setattr("domelimit.cli.run_limit_analysis", broken)
        config = _write(tmp_path / "dome.json", make_config())
        assert main(["solve", config, "--out", str(tmp_path / "run")]) == EXIT_CERTIFICATE
        assert "dead-load work" in capsys.readouterr().out


class TestStudy:
    def test_convergence_table(self, tmp_path, make_config):
        out = tmp_path / "study"
        cfg = make_config(study={"kind": "convergence", "meshes": [2, 4], "n_alphas": [2, 4]})
        assert main(["study", _write(tmp_path / "study.json", cfg), "--out", str(out)]) == EXIT_OK
        rows = read_csv_rows(out / "convergence.csv")
        assert [row["mesh"] for row in rows] == ["2x4", "4x8"]
        assert all(row["monotone"] == "true" for row in rows)
        assert float(rows[1]["n_alpha_2"]) >= float(rows[1]["n_alpha_4"])
        assert (out / "study.json").is_file()

    def test_missing_study_block(self, tmp_path, make_config):
        assert main(["study", _write(tmp_path / "dome.json", make_config())]) == EXIT_CONFIG

    def test_empty_grid(self, tmp_path):
        path = tmp_path / "study.json"
        path.write_text(json.dumps({"study": {"kind": "convergence", "meshes": [], "n_alphas": []}}), encoding="utf-8")
        assert main(["study", str(path)]) == EXIT_CONFIG


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
