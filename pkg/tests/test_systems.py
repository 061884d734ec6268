"""Square systems: packing, residuals, Jacobians, and the minors oracle."""

import numpy as np
import pytest

from trifocal.errors import DegenerateGeometryError, InvalidInputError
from trifocal.geometry import (
    CHICAGO,
    CLEVELAND,
    CameraPose,
    ProblemInstance,
    Quaternion,
    SceneConfig,
    generate_scene,
)
from trifocal.systems import (
    CHICAGO_DIM,
    CHICAGO_NPARAMS,
    CLEVELAND_DIM,
    CLEVELAND_NPARAMS,
    ground_truth_unknowns,
    make_system,
    minors_oracle,
    normalize_blocks,
    pack_parameters,
    residual_reference,
    unpack_parameters,
)


def random_complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


@pytest.fixture(scope="module")
def chicago_case():
    _, _, inst, gt = generate_scene(CHICAGO, SceneConfig(seed=7))
    system = make_system(CHICAGO, seed=1)
    return system, inst, gt


@pytest.fixture(scope="module")
def cleveland_case():
    _, _, inst, gt = generate_scene(CLEVELAND, SceneConfig(seed=7))
    system = make_system(CLEVELAND, seed=1)
    return system, inst, gt


class TestPacking:
    def test_chicago_length(self, chicago_case):
        _, inst, _ = chicago_case
        assert pack_parameters(inst).shape == (CHICAGO_NPARAMS,)

    def test_cleveland_length(self, cleveland_case):
        _, inst, _ = cleveland_case
        assert pack_parameters(inst).shape == (CLEVELAND_NPARAMS,)

    def test_round_trip(self, chicago_case, cleveland_case):
        for _, inst, _ in (chicago_case, cleveland_case):
            A = pack_parameters(inst)
            rebuilt = unpack_parameters(inst.kind, A)
            np.testing.assert_array_equal(rebuilt.points, inst.points)
            if inst.kind == CHICAGO:
                np.testing.assert_array_equal(rebuilt.tangents, inst.tangents)
            else:
                np.testing.assert_array_equal(rebuilt.lines, inst.lines)
            np.testing.assert_array_equal(pack_parameters(rebuilt), A)

    def test_wrong_length_rejected(self):
        with pytest.raises(InvalidInputError):
            unpack_parameters(CHICAGO, np.zeros(36))

    def test_complex_rejected(self):
        with pytest.raises(InvalidInputError):
            unpack_parameters(CLEVELAND, np.full(36, 1j))


class TestResiduals:
    @pytest.mark.parametrize("kind,seed", [(CHICAGO, s) for s in range(3)]
                             + [(CLEVELAND, s) for s in range(3)])
    def test_ground_truth_substitution(self, kind, seed):
        # generative-model oracle: the exact unknowns zero the residual
        _, _, inst, gt = generate_scene(kind, SceneConfig(seed=100 + seed))
        system = make_system(kind, seed=seed)
        A = pack_parameters(inst)
        u = ground_truth_unknowns(system, inst, gt)
        assert np.max(np.abs(system.residual(u, A))) < 1e-10
        assert np.max(np.abs(residual_reference(system, u, A))) < 1e-10

    def test_charts_hold_exactly(self, chicago_case):
        system, inst, gt = chicago_case
        u = ground_truth_unknowns(system, inst, gt)
        assert abs(system.charts[0] @ u[0:4] - 1.0) < 1e-12
        assert abs(system.charts[1] @ u[4:8] - 1.0) < 1e-12

    def test_double_evaluation_oracle(self, chicago_case, cleveland_case):
        # fused kernel vs straightforward matrix-form evaluation
        rng = np.random.default_rng(0)
        for system, _, _ in (chicago_case, cleveland_case):
            for _ in range(5):
                u = random_complex(rng, system.dim)
                A = random_complex(rng, system.n_params)
                f1 = system.residual(u, A)
                f2 = residual_reference(system, u, A)
                scale = max(1.0, float(np.max(np.abs(f2))))
                assert np.max(np.abs(f1 - f2)) / scale < 1e-12

    def test_degenerate_self_consistency(self):
        # identity cameras, coincident data, eps = 0, mu = 1 zero the tangent rows
        rng = np.random.default_rng(1)
        system = make_system(CHICAGO, seed=2)
        pts = np.empty((3, 3, 3))
        tans = np.empty((3, 2, 3))
        for j in range(3):
            p = rng.standard_normal(3)
            p[2] = abs(p[2]) + 1.0
            p /= np.linalg.norm(p)
            for v in range(3):
                pts[v, j] = p
        for j in range(2):
            d = rng.standard_normal(3)
            d /= np.linalg.norm(d)
            for v in range(3):
                tans[v, j] = d
        inst = ProblemInstance(kind=CHICAGO, points=pts, tangents=tans)
        u = np.zeros(CHICAGO_DIM, dtype=np.complex128)
        u[0] = 1.0  # identity quaternions
        u[4] = 1.0
        for pos in (8, 9, 10, 11, 12, 13, 14, 15):
            u[pos] = 1.0  # all depths equal
        for pos in (22, 23, 24, 25):
            u[pos] = 1.0  # mu matches the shared tangent
        r = system.residual(u, pack_parameters(inst))
        assert np.max(np.abs(r[:24])) < 1e-14

    def test_quaternion_scale_homogeneity(self, chicago_case, cleveland_case):
        rng = np.random.default_rng(2)
        lam = 0.7 - 1.3j
        for system, _, _ in (chicago_case, cleveland_case):
            u = random_complex(rng, system.dim)
            A = random_complex(rng, system.n_params)
            us = u.copy()
            us[0:4] *= lam
            us[4:8] *= lam
            r = system.residual(u, A)
            rs = system.residual(us, A)
            if system.kind == CHICAGO:
                quadratic = list(range(24))
            else:
                quadratic = list(range(14)) + [15, 16]
            np.testing.assert_allclose(
                rs[quadratic], lam**2 * r[quadratic], rtol=1e-10, atol=1e-12
            )
            if system.kind == CLEVELAND:
                # the view-1 direction row carries no quaternion
                assert rs[14] == r[14]

    def test_kind_mismatch_rejected(self, chicago_case, cleveland_case):
        system, _, _ = chicago_case
        _, inst, gt = cleveland_case
        with pytest.raises(InvalidInputError):
            ground_truth_unknowns(system, inst, gt)


class TestJacobians:
    @pytest.mark.parametrize("kind", [CHICAGO, CLEVELAND])
    def test_finite_difference_agreement(self, kind):
        rng = np.random.default_rng(3)
        system = make_system(kind, seed=4)
        h = 1e-7
        for _ in range(100):
            u = random_complex(rng, system.dim)
            A = random_complex(rng, system.n_params)
            J = system.jacobian(u, A)
            cols = rng.choice(system.dim, size=6, replace=False)
            for m in cols:
                e = np.zeros(system.dim, dtype=np.complex128)
                e[m] = h
                fd = (system.residual(u + e, A) - system.residual(u - e, A)) / (2 * h)
                np.testing.assert_allclose(
                    J[:, m], fd, rtol=1e-5, atol=1e-5 * (1 + np.max(np.abs(J)))
                )

    @pytest.mark.parametrize("kind", [CHICAGO, CLEVELAND])
    def test_parameter_derivative(self, kind):
        rng = np.random.default_rng(4)
        system = make_system(kind, seed=5)
        h = 1e-7
        for _ in range(20):
            u = random_complex(rng, system.dim)
            A = random_complex(rng, system.n_params)
            dA = random_complex(rng, system.n_params)
            g = system.parameter_derivative(u, A, dA)
            fd = (system.residual(u, A + h * dA) - system.residual(u, A - h * dA)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * (1 + np.max(np.abs(g))))

    def test_chart_rows_constant(self, chicago_case):
        system, _, _ = chicago_case
        rng = np.random.default_rng(5)
        for _ in range(3):
            u = random_complex(rng, system.dim)
            A = random_complex(rng, system.n_params)
            J = system.jacobian(u, A)
            np.testing.assert_array_equal(J[24, 0:4], system.charts[0])
            np.testing.assert_array_equal(J[25, 4:8], system.charts[1])
            assert np.all(J[24, 4:] == 0)

    def test_nonsingular_at_ground_truth(self, chicago_case, cleveland_case):
        for system, inst, gt in (chicago_case, cleveland_case):
            u = ground_truth_unknowns(system, inst, gt)
            J = system.jacobian(u, pack_parameters(inst))
            assert np.linalg.cond(J) < 1e8


class TestNormalizeBlocks:
    def test_largest_entry_becomes_one(self):
        rng = np.random.default_rng(6)
        u = random_complex(rng, CLEVELAND_DIM)
        un = normalize_blocks(CLEVELAND, u)
        for lo, hi in ((0, 4), (4, 8), (17, 20)):
            k = int(np.argmax(np.abs(un[lo:hi])))
            assert un[lo:hi][k] == pytest.approx(1.0)
        np.testing.assert_array_equal(un[8:17], u[8:17])


class TestMinorsOracle:
    def test_ground_truth_zeroes_minors(self):
        for kind in (CHICAGO, CLEVELAND):
            for seed in range(5):
                _, _, inst, gt = generate_scene(kind, SceneConfig(seed=300 + seed))
                assert minors_oracle(gt.poses, inst) < 1e-8

    def test_wrong_pose_separation(self):
        # Monte-Carlo separation: random wrong poses must light up the oracle
        rng = np.random.default_rng(7)
        _, _, inst, _ = generate_scene(CHICAGO, SceneConfig(seed=310))
        hits = 0
        trials = 1000
        for _ in range(trials):
            qs = rng.standard_normal((2, 4))
            ts = rng.standard_normal((2, 3))
            poses = tuple(
                CameraPose(Quaternion.from_array(q / np.linalg.norm(q)), t)
                for q, t in zip(qs, ts)
            )
            if minors_oracle(poses, inst) > 1e-3:
                hits += 1
        assert hits >= 995

    def test_coincident_points_rejected(self):
        _, _, inst, gt = generate_scene(CHICAGO, SceneConfig(seed=311))
        pts = inst.points.copy()
        pts[0, 1] = pts[0, 0]
        bad = ProblemInstance(
            kind=CHICAGO, points=pts, tangents=inst.tangents,
            verification_tangents=inst.verification_tangents,
        )
        with pytest.raises(DegenerateGeometryError):
            minors_oracle(gt.poses, bad)

    def test_scale_invariance(self):
        # common positive rescaling of both translations is projective slack
        _, _, inst, gt = generate_scene(CLEVELAND, SceneConfig(seed=312))
        scaled = tuple(CameraPose(p.q, 3.7 * p.t) for p in gt.poses)
        assert minors_oracle(scaled, inst) < 1e-8
