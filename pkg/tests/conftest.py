from __future__ import annotations

import math
from typing import Any, Callable

import pytest

from domelimit.config import RunConfig, parse_run_config
from domelimit.geometry import MeridianGeometry
from domelimit.meshing import build_mesh
from domelimit.studies import LimitAnalysisResult, run_limit_analysis

# coarse hemisphere used by the fast solver tests
SMALL = {"mesh_m": 4, "n_alpha": 4, "thickness_ratio": 0.1, "friction_coefficient": 0.7}


def small_run_config(**changes: Any) -> RunConfig:
    data = {**SMALL, **changes}
    return parse_run_config(data)


@pytest.fixture
def make_config(tmp_path) -> Callable[..., RunConfig]:
    def factory(**changes: Any) -> RunConfig:
        changes.setdefault("output", {"directory": str(tmp_path / "out")})
        return small_run_config(**changes)

    return factory


@pytest.fixture(scope="session")
def hemisphere() -> MeridianGeometry:
    return MeridianGeometry.sphere(1.0, math.pi / 2)


@pytest.fixture(scope="session")
def half_mesh(hemisphere):
    return build_mesh(hemisphere, 4, 8, "half")


@pytest.fixture(scope="session")
def small_solution() -> LimitAnalysisResult:
    return run_limit_analysis(small_run_config())


@pytest.fixture(scope="session")
def base_config() -> RunConfig:
    return small_run_config()
