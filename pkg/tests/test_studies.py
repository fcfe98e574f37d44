from __future__ import annotations

import pytest

from domelimit.config import with_updates
from domelimit.errors import ConfigurationError
from domelimit.models import StudyRow
from domelimit.report import read_csv_rows, read_csv_settings, write_csv_table
from domelimit.studies import (
    UNSTABLE,
    SweepResult,
    convergence_study,
    min_friction_search,
    min_thickness_search,
    parametric_sweep,
    run_limit_analysis,
)


class TestRunLimitAnalysis:
    def test_full_pipeline(self, small_solution):
        assert small_solution.lam is not None
        assert small_solution.certificate.passed
        assert small_solution.mechanism is not None
        assert {"mesh", "assembly", "cones", "solve", "certificate", "mechanism"} <= set(small_solution.timings)

    def test_unenforced_friction_is_strictly_stronger(self, make_config, small_solution):
        free = run_limit_analysis(make_config(friction_mode="not_enforced"), with_mechanism=False)
        assert free.lam > small_solution.lam + 1e-4

    def test_oculus_dome_solves(self, make_config):
        cfg = make_config(opening_deg=20.0, thickness_ratio=0.2, friction_mode="not_enforced")
        result = run_limit_analysis(cfg, with_mechanism=False)
        assert result.status == "optimal"
        assert result.certificate.passed


class TestConvergence:
    def test_grid_and_monotone_rows(self, make_config):
        cfg = make_config(study={"kind": "convergence", "meshes": [2, 4], "n_alphas": [2, 4]})
        table = convergence_study(cfg)
        assert table.meshes == [2, 4]
        assert len(table.lam) == 2 and all(len(row) == 2 for row in table.lam)
        assert table.monotone_rows() == [True, True]
        assert table.columns() == ["mesh", "n_alpha_2", "n_alpha_4", "monotone"]
        rows = table.rows()
        assert rows[1][0] == "4x8"
        assert rows[1][-1] is True

    def test_wrong_study_kind(self, make_config):
        cfg = make_config(study={"kind": "sweep", "variable": "thickness_ratio", "values": [0.1]})
        with pytest.raises(ConfigurationError):
            convergence_study(cfg)


class TestSweep:
    @pytest.fixture(scope="class")
    def sweep_config(self, base_config):
        study = {
            "kind": "sweep",
            "variable": "friction_coefficient",
            "values": [0.5, 0.7, 1.0],
            "modes": ["coulomb", "not_enforced"],
        }
        return with_updates(base_config, study=study)

    @pytest.fixture(scope="class")
    def friction_sweep(self, sweep_config) -> SweepResult:
        return parametric_sweep(sweep_config)

    def test_series_layout(self, friction_sweep):
        assert list(friction_sweep.series) == ["coulomb", "not_enforced"]
        assert [row.value for row in friction_sweep.series["coulomb"]] == [0.5, 0.7, 1.0]
        assert friction_sweep.columns() == ["series", "friction_coefficient", "lambda", "status"]
        assert len(friction_sweep.rows()) == 6

    def test_lambda_grows_with_friction(self, friction_sweep):
        stable = [row.lam for row in friction_sweep.series["coulomb"] if row.stable]
        assert len(stable) >= 2
        assert all(b >= a - 1e-6 for a, b in zip(stable, stable[1:]))

    def test_unenforced_series_is_the_asymptote(self, friction_sweep):
        free = [row.lam for row in friction_sweep.series["not_enforced"]]
        assert max(free) - min(free) <= 1e-6
        peak = friction_sweep.peak("coulomb")
        assert peak is not None and peak.value == 1.0
        assert peak.lam <= free[0] + 1e-6

    def test_csv_is_reproducible(self, tmp_path, sweep_config, friction_sweep):
        first = write_csv_table(tmp_path / "a.csv", sweep_config, friction_sweep.columns(), friction_sweep.rows())
        again = parametric_sweep(sweep_config)
        second = write_csv_table(tmp_path / "b.csv", sweep_config, again.columns(), again.rows())
        assert first.read_bytes() == second.read_bytes()
        assert read_csv_settings(first).model_dump() == sweep_config.model_dump()
        rows = read_csv_rows(first)
        assert rows[0]["series"] == "coulomb"
        assert {row["status"] for row in rows} <= {"optimal", "infeasible", "unbounded", "numerical_trouble"}

    def test_admissible_interval_and_unstable_cells(self):
        rows = [
            StudyRow(series="coulomb", variable="rise_ratio", value=0.2, lam=None, status="infeasible"),
            StudyRow(series="coulomb", variable="rise_ratio", value=0.5, lam=0.1, status="optimal"),
            StudyRow(series="coulomb", variable="rise_ratio", value=0.8, lam=0.3, status="optimal"),
            StudyRow(series="coulomb", variable="rise_ratio", value=1.1, lam=0.2, status="optimal"),
            StudyRow(series="coulomb", variable="rise_ratio", value=1.5, lam=None, status="infeasible"),
        ]
        sweep = SweepResult(variable="rise_ratio", series={"coulomb": rows})
        assert sweep.admissible_interval("coulomb") == (0.5, 1.1)
        assert sweep.peak("coulomb").value == 0.8
        assert sweep.rows()[0][2] == UNSTABLE


class TestBisection:
    def test_min_thickness(self, make_config):
        cfg = make_config(friction_mode="not_enforced", friction_coefficient=None, n_alpha=2)
        found = min_thickness_search(cfg, (0.005, 0.2), tol=5e-3)
        lo, hi = found.bracket
        assert 0.005 <= lo < hi <= 0.2
        assert hi - lo <= 5e-3
        assert found.value == hi
        assert found.history[0].status != "optimal"
        assert found.history[1].stable
        assert found.columns() == ["iteration", "thickness_ratio", "lambda", "status"]
        assert len(found.rows()) == len(found.history)

    def test_min_friction(self, make_config):
        found = min_friction_search(make_config(n_alpha=8), (0.01, 2.0), tol=0.05)
        assert 0.01 < found.value <= 2.0
        assert found.variable == "friction_coefficient"

    def test_bracket_must_straddle_the_threshold(self, make_config):
        cfg = make_config(friction_mode="not_enforced", friction_coefficient=None, n_alpha=2)
        with pytest.raises(ConfigurationError):
            min_thickness_search(cfg, (0.1, 0.2))

    @pytest.mark.parametrize("bracket", [(0.2, 0.1), (0.0, 0.1)])
    def test_invalid_bracket(self, make_config, bracket):
        with pytest.raises(ConfigurationError):
            min_thickness_search(make_config(), bracket)

class TestShapeStudies:
    @pytest.fixture
    def medium_config(self, make_config):
        def factory(**changes):
            return make_config(mesh_m=8, n_alpha=8, **changes)

        return factory

    def test_ellipsoid_solves(self, medium_config):
        result = run_limit_analysis(medium_config(geometry="ellipsoid", rise_ratio=0.6), with_mechanism=False)
        assert result.status == "optimal"
        assert result.certificate.passed, result.certificate.failures

    def test_rise_sweep_has_two_branches(self, medium_config):
        study = {"kind": "sweep", "variable": "rise_ratio", "values": [0.2, 0.4, 0.6, 0.8, 1.0, 1.2]}
        sweep = parametric_sweep(medium_config(geometry="ellipsoid", study=study))
        assert sweep.admissible_interval("coulomb") == (0.4, 1.0)
        peak = sweep.peak("coulomb")
        assert peak.value == 0.6
        stable = [row.lam for row in sweep.series["coulomb"] if row.stable]
        top = stable.index(peak.lam)
        assert 0 < top < len(stable) - 1
        assert all(a <= b + 1e-6 for a, b in zip(stable[: top + 1], stable[1 : top + 1]))
        assert all(a >= b - 1e-6 for a, b in zip(stable[top:], stable[top + 1 :]))

    def test_embrace_sweep_is_non_increasing(self, medium_config):
        study = {"kind": "sweep", "variable": "half_embrace_deg", "values": [45.0, 60.0, 75.0, 90.0, 105.0]}
        rows = parametric_sweep(medium_config(study=study)).series["coulomb"]
        stable = [row for row in rows if row.stable]
        assert len(stable) >= 4
        assert all(a.lam >= b.lam - 1e-6 for a, b in zip(stable, stable[1:]))
        hemisphere = next(row for row in rows if row.value == 90.0)
        assert hemisphere.lam == pytest.approx(0.171, abs=0.01)

    def test_min_thickness_drops_with_friction(self, make_config):
        found = {
            mu: min_thickness_search(make_config(friction_coefficient=mu, n_alpha=8), (0.005, 0.1), tol=5e-3).value
            for mu in (0.7, 1.0)
        }
        assert found[1.0] <= found[0.7] + 5e-3



@pytest.mark.slow
def test_parallel_matches_serial(make_config):
    cfg = make_config(study={"kind": "convergence", "meshes": [2, 4], "n_alphas": [2, 4]})
    assert convergence_study(cfg, jobs=2).lam == convergence_study(cfg, jobs=1).lam
