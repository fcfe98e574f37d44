from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from domelimit.admissibility import (
    ROTATED,
    STANDARD,
    FrictionMode,
    build_cone_constraints,
    cone_blocks,
    friction_angles,
    friction_matrices,
    rotated_margin,
    standard_margin,
    unilateral_matrices,
)
from domelimit.errors import ConfigurationError
from domelimit.models import N_COMPONENTS, NodalStress

T = 0.1
MU = 0.7


def _direct_unilateral(x: np.ndarray, sign: float) -> np.ndarray:
    # smallest eigenvalue of sign*M - sym(N) t/2, vectorized
    n_sym = 0.5 * (x[:, 1] + x[:, 2])
    a = sign * x[:, 6] - 0.5 * T * x[:, 0]
    b = sign * x[:, 8] - 0.5 * T * x[:, 3]
    c = sign * x[:, 7] - 0.5 * T * n_sym
    return 0.5 * (a + b) - np.sqrt(0.25 * (a - b) ** 2 + c**2)


def _direct_friction(x: np.ndarray, alpha: float) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    tx = ca * x[:, 0] + sa * x[:, 2]
    ty = ca * x[:, 1] + sa * x[:, 3]
    normal = ca * tx + sa * ty
    shear = -sa * tx + ca * ty
    transverse = ca * x[:, 4] + sa * x[:, 5]
    return -MU * normal - np.hypot(shear, transverse)


class TestUnilateral:
    def test_equibiaxial_compression_is_admissible(self):
        x = NodalStress(N_phi=-1.0, N_theta=-1.0).to_vector()
        uni = unilateral_matrices(T)
        assert rotated_margin(uni.A_plus @ x) == pytest.approx(T / 2)
        assert rotated_margin(uni.A_minus @ x) == pytest.approx(T / 2)

    def test_tension_is_rejected(self):
        x = NodalStress(N_phi=1.0).to_vector()
        assert rotated_margin(unilateral_matrices(T).A_plus @ x) < 0

    def test_moment_at_face_is_on_the_boundary(self):
        # pressure centre reaches a face: M_phi = -N_phi t / 2 with N_phi < 0
        x = NodalStress(N_phi=-1.0, N_theta=-1.0, M_phi=T / 2).to_vector()
        uni = unilateral_matrices(T)
        assert rotated_margin(uni.A_minus @ x) == pytest.approx(0.0, abs=1e-15)
        assert rotated_margin(uni.A_plus @ x) > 0

    def test_random_states_match_eigenvalues(self):
        rng = np.random.default_rng(2024)
        x = rng.normal(size=(10_000, N_COMPONENTS))
        uni = unilateral_matrices(T)
        for mat, sign in ((uni.A_plus, 1.0), (uni.A_minus, -1.0)):
            assert_allclose(rotated_margin(x @ mat.T), _direct_unilateral(x, sign), atol=1e-13)

    def test_nodal_stress_agrees(self):
        rng = np.random.default_rng(5)
        uni = unilateral_matrices(T)
        for vec in rng.normal(size=(200, N_COMPONENTS)):
            stress = NodalStress.from_vector(vec)
            for mat, sign in ((uni.A_plus, 1), (uni.A_minus, -1)):
                smallest = np.linalg.eigvalsh(stress.unilateral_matrix(T, sign))[0]
                assert rotated_margin(mat @ vec) == pytest.approx(smallest, abs=1e-13)

    def test_thickness_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            unilateral_matrices(0.0)


class TestFriction:
    def test_angles_are_half_open(self):
        assert_allclose(friction_angles(4), [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])

    def test_meridian_plane_condition(self):
        f0 = friction_matrices(MU, 4, FrictionMode.COULOMB).F[0]
        x = NodalStress(N_phi=-2.0, N_theta_phi=0.3, T_phi=0.4, N_theta=-5.0, T_theta=9.0).to_vector()
        assert_allclose(f0 @ x, [MU * 2.0, 0.3, 0.4])

    def test_sliding_threshold(self):
        f0 = friction_matrices(MU, 8, FrictionMode.COULOMB).F[0]
        inside = NodalStress(N_phi=-1.0, N_theta=-1.0, T_phi=0.5 * MU).to_vector()
        outside = NodalStress(N_phi=-1.0, N_theta=-1.0, T_phi=1.01 * MU).to_vector()
        assert standard_margin(f0 @ inside) > 0
        assert standard_margin(f0 @ outside) < 0

    def test_random_states_match_direct_evaluation(self):
        rng = np.random.default_rng(99)
        x = rng.normal(size=(10_000, N_COMPONENTS))
        fric = friction_matrices(MU, 8, FrictionMode.COULOMB)
        for alpha, mat in zip(fric.angles, fric.F):
            assert_allclose(standard_margin(x @ mat.T), _direct_friction(x, alpha), atol=1e-13)

    def test_nodal_stress_agrees(self):
        rng = np.random.default_rng(6)
        fric = friction_matrices(MU, 6, FrictionMode.COULOMB)
        for vec in rng.normal(size=(100, N_COMPONENTS)):
            stress = NodalStress.from_vector(vec)
            for alpha, mat in zip(fric.angles, fric.F):
                assert standard_margin(mat @ vec) == pytest.approx(stress.friction_margin(MU, alpha), abs=1e-13)

    def test_mode_variants_drop_one_row(self):
        coulomb = friction_matrices(MU, 4, FrictionMode.COULOMB).F
        in_plane = friction_matrices(MU, 4, FrictionMode.IN_PLANE_ONLY).F
        out_of_plane = friction_matrices(MU, 4, FrictionMode.OUT_OF_PLANE_ONLY).F
        assert not np.any(in_plane[:, 2]) and np.array_equal(in_plane[:, :2], coulomb[:, :2])
        assert not np.any(out_of_plane[:, 1]) and np.array_equal(out_of_plane[:, ::2], coulomb[:, ::2])
        assert friction_matrices(None, 4, FrictionMode.NOT_ENFORCED).n_alpha == 0

    def test_finer_direction_grid_tightens(self):
        x = NodalStress(N_phi=-1.0, N_theta=-0.4, N_theta_phi=0.2, N_phi_theta=0.2, T_theta=0.1).to_vector()

        def worst(n_alpha: int) -> float:
            return float(standard_margin(friction_matrices(MU, n_alpha, "coulomb").F @ x).min())

        values = [worst(n) for n in (2, 4, 8, 16, 1024)]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("mu", [0.0, -0.3, None])
    def test_invalid_friction_coefficient(self, mu):
        with pytest.raises(ConfigurationError):
            friction_matrices(mu, 4, FrictionMode.COULOMB)

    def test_too_few_directions(self):
        with pytest.raises(ConfigurationError):
            friction_matrices(MU, 1, FrictionMode.COULOMB)


class TestConeConstraints:
    def test_counts(self, half_mesh):
        assert len(build_cone_constraints(half_mesh, T, MU, 2, FrictionMode.COULOMB)) == 180
        assert len(build_cone_constraints(half_mesh, T, None, 2, FrictionMode.NOT_ENFORCED)) == 90

    def test_blocks_agree_with_list(self, half_mesh):
        cones = build_cone_constraints(half_mesh, T, MU, 4, FrictionMode.COULOMB)
        blocks = cone_blocks(half_mesh.n_nodes, T, MU, 4, FrictionMode.COULOMB)
        assert blocks.n_rotated == 90 and blocks.n_standard == 180 and blocks.n_cones == 270

        def stacked(kind: str) -> np.ndarray:
            rows = []
            for cone in cones:
                if cone.kind != kind:
                    continue
                dense = np.zeros((3, N_COMPONENTS * half_mesh.n_nodes))
                dense[:, N_COMPONENTS * cone.node : N_COMPONENTS * (cone.node + 1)] = cone.matrix
                rows.append(dense)
            return np.vstack(rows)

        assert_allclose(blocks.rotated.toarray(), stacked(ROTATED))
        assert_allclose(blocks.standard.toarray(), stacked(STANDARD))

    def test_not_enforced_has_no_standard_rows(self):
        blocks = cone_blocks(5, T, None, 8, FrictionMode.NOT_ENFORCED)
        assert blocks.standard.shape == (0, 45)
        assert blocks.n_standard == 0
