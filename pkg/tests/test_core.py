import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsocs import make_particle
from dsocs.core import (
    ConfigPair,
    ContinuousSystem,
    DiscreteSystem,
    Selection,
    StepperConfig,
    beta_residual,
    discretize,
    flow,
    from_discrete_nonholonomic,
    legendre_minus,
    legendre_plus,
    seed_from_continuous,
    step,
    step_residual,
)
from dsocs.errors import DimensionError, FlowError, InadmissibleStateError
from dsocs.numerics import SolveConfig
from dsocs.systems import (
    ParticleParams,
    free_particle,
    linear_constraint_system,
    particle_continuous,
)
from oracles.nonholonomic import direct_flow

PARTICLE_Q2 = np.array([0.18497262944887255, 0.2130471239994393])
finite = st.floats(-10, 10, allow_nan=False)


def scalar_system(lagrangian, h=0.5, **kw):
    return DiscreteSystem(
        dim=1, h=h, lagrangian=lagrangian, kinematic_residual=lambda *q: np.zeros(0),
        variational_basis=lambda *q: np.eye(1), n_kinematic=0, n_variational=1, **kw,
    )


class TestLegendre:
    def test_free_minus(self):
        sys_ = scalar_system(lambda a, b: float((b - a) @ (b - a)) / (2 * 0.5))
        assert legendre_minus(sys_, [0.0], [1.0]) == pytest.approx([2.0], abs=1e-8)

    def test_free_plus(self):
        sys_ = scalar_system(lambda a, b: float((b - a) @ (b - a)) / (2 * 0.5))
        assert legendre_plus(sys_, [0.0], [1.0]) == pytest.approx([2.0], abs=1e-8)

    def test_constant_lagrangian(self):
        sys_ = scalar_system(lambda a, b: 4.2)
        assert np.all(legendre_minus(sys_, [1.0], [2.0]) == 0)
        assert np.all(legendre_plus(sys_, [1.0], [2.0]) == 0)

    def test_bilinear(self):
        sys_ = scalar_system(lambda a, b: float(a[0] * b[0]))
        assert legendre_plus(sys_, [3.0], [7.0]) == pytest.approx([3.0], abs=1e-7)

    def test_particle_momenta(self):
        # L_d = m |q1 - q0|^2 / (2 h^2), so both momenta are m (q1 - q0) / h^2
        sys_ = make_particle()
        q, q1 = np.zeros(2), np.array([0.1, 0.1])
        assert np.allclose(legendre_minus(sys_, q, q1), [10.0, 10.0], atol=1e-12)
        assert np.allclose(legendre_plus(sys_, q, q1), [10.0, 10.0], atol=1e-12)

    @settings(max_examples=50)
    @given(finite, finite)
    def test_fd_matches_analytic(self, a, b):
        analytic = free_particle(1, 0.5)
        numeric = scalar_system(analytic.lagrangian)
        q, q1 = np.array([a]), np.array([b])
        assert np.allclose(legendre_minus(numeric, q, q1), legendre_minus(analytic, q, q1), atol=1e-6)
        assert np.allclose(legendre_plus(numeric, q, q1), legendre_plus(analytic, q, q1), atol=1e-6)


class TestResiduals:
    def test_free_beta_zero_on_line(self):
        sys_ = free_particle(1, 1.0)
        assert beta_residual(sys_, [0.0], [1.0], [2.0]) == pytest.approx([0.0])

    def test_free_beta_value(self):
        sys_ = free_particle(1, 1.0)
        assert beta_residual(sys_, [0.0], [1.0], [3.0]) == pytest.approx([-1.0])

    def test_free_residual_is_beta(self):
        sys_ = free_particle(1, 1.0)
        assert np.array_equal(step_residual(sys_, [0.0], [1.0], [3.0]), beta_residual(sys_, [0.0], [1.0], [3.0]))

    def test_particle_collinear_kinematic(self):
        r = step_residual(make_particle(), [0, 0], [1, 0], [2, 0])
        assert r[0] == pytest.approx(-1.0)

    def test_particle_oracle_triple(self):
        r = step_residual(make_particle(), [0, 0], [0.1, 0.1], PARTICLE_Q2)
        assert np.max(np.abs(r)) <= 1e-12

    def test_particle_beta_formula(self, rng):
        # beta against the hand-written expression; both share the central velocity basis
        sys_ = make_particle()
        h, m = 0.1, 1.0
        for _ in range(100):
            q0, q1, q2 = rng.normal(size=(3, 2))
            expected = -m / (2 * h**3) * ((q2 - 2 * q1 + q0) @ (q2 - q0))
            assert beta_residual(sys_, q0, q1, q2)[0] == pytest.approx(expected, rel=1e-12, abs=1e-9)

    def test_dimension_checked(self):
        with pytest.raises(DimensionError):
            step_residual(free_particle(2), [0.0], [1.0], [2.0])

    def test_basis_width_checked(self):
        bad = DiscreteSystem(
            dim=2, h=0.1, lagrangian=lambda a, b: 0.0, kinematic_residual=lambda *q: np.zeros(1),
            variational_basis=lambda *q: np.eye(2), n_kinematic=1, n_variational=1,
        )
        with pytest.raises(DimensionError):
            beta_residual(bad, np.zeros(2), np.zeros(2), np.zeros(2))


class TestSystemValidation:
    def test_ill_posed(self):
        with pytest.raises(ValueError):
            DiscreteSystem(
                dim=2, h=0.1, lagrangian=lambda a, b: 0.0, kinematic_residual=lambda *q: np.zeros(0),
                variational_basis=lambda *q: np.eye(2)[:, :1], n_kinematic=0, n_variational=1,
            )

    @pytest.mark.parametrize("h", [0.0, math.inf, math.nan])
    def test_bad_step(self, h):
        with pytest.raises(ValueError):
            free_particle(1, h)

    def test_default_names(self):
        assert scalar_system(lambda a, b: 0.0).coordinate_names == ("q0",)

    def test_config_pair_shapes(self):
        with pytest.raises(DimensionError):
            ConfigPair([0.0, 1.0], [0.0])

    def test_stepper_config_validation(self):
        with pytest.raises(ValueError):
            StepperConfig(scan_lo=1.0, scan_hi=0.0)
        assert StepperConfig(selection="lyapunov-decrease").selection is Selection.LYAPUNOV_DECREASE


class TestStepAndFlow:
    def test_free_step(self):
        q2, rec = step(free_particle(2), ConfigPair([0, 0], [1, 1]))
        assert np.allclose(q2, [2, 2], atol=1e-12)
        assert rec.residual_norm <= 1e-12

    def test_particle_first_step(self):
        q2, _ = step(make_particle(), ConfigPair([0, 0], [0.1, 0.1]))
        assert np.allclose(q2, PARTICLE_Q2, atol=1e-12)

    def test_free_flow(self):
        traj = flow(free_particle(1, 1.0), ConfigPair([0.0], [1.0]), 10)
        assert np.allclose(traj.points[:, 0], np.arange(12), atol=1e-10)
        assert traj.n_steps == 11 and len(traj.records) == 10
        assert np.allclose(traj.times, np.arange(12))

    def test_flow_rejects_zero_steps(self):
        with pytest.raises(ValueError):
            flow(free_particle(1), ConfigPair([0.0], [1.0]), 0)

    def test_flow_error_keeps_partial(self):
        # curvature is undefined once the particle stops
        sys_ = make_particle(ParticleParams(curvature=1.0))
        with pytest.raises(FlowError) as err:
            flow(sys_, ConfigPair([0.0, 0.0], [0.0, 0.0]), 5)
        assert err.value.index == 1
        assert err.value.trajectory.points.shape == (2, 2)

    def test_particle_orbit_stays_near_circle(self):
        traj = flow(make_particle(), ConfigPair([0, 0], [0.1, 0.1]), 5000)
        centre = np.array([-math.sqrt(2) / 2, math.sqrt(2) / 2])
        assert np.max(np.linalg.norm(traj.points - centre, axis=1)) < 1.1

    def test_backward_recovers_forward(self):
        fwd = flow(make_particle(), ConfigPair([0, 0], [0.1, 0.1]), 30)
        back_sys = make_particle(ParticleParams(h=-0.1))
        back = flow(back_sys, fwd.pair(fwd.n_steps).reversed(), 30)
        assert np.max(np.abs(back.points[::-1] - fwd.points)) <= 1e-8

    def test_prior_constraint_enforced(self):
        sys_ = linear_constraint_system()
        with pytest.raises(InadmissibleStateError):
            step(sys_, ConfigPair([0, 0], [1, 0]))

    def test_pair_accessor(self):
        traj = flow(free_particle(1, 1.0), ConfigPair([0.0], [1.0]), 3)
        pr = traj.pair(2)
        assert pr.q_prev[0] == pytest.approx(1) and pr.q_curr[0] == pytest.approx(2)


class TestSeed:
    def test_particle(self):
        s = seed_from_continuous([0, 0], [1, 1], 0.1)
        assert np.allclose(s.q_prev, [0, 0]) and np.allclose(s.q_curr, [0.1, 0.1])

    def test_zero_velocity(self):
        s = seed_from_continuous([1.5, -2], [0, 0], 0.3)
        assert np.array_equal(s.q_prev, s.q_curr)

    def test_pendulum(self):
        s = seed_from_continuous([0.5, 0], [0, 0.5], 0.1)
        assert np.allclose(s.q_curr, [0.5, 0.05])

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            seed_from_continuous([0, 0], [1], 0.1)


class TestDiscretize:
    def free_continuous(self, analytic):
        extra = {}
        if analytic:
            extra = dict(dL_dq=lambda q, v: np.zeros_like(v), dL_dqdot=lambda q, v: np.asarray(v, float))
        return ContinuousSystem(
            dim=2, lagrangian=lambda q, v: 0.5 * float(v @ v),
            kinematic_residual_c=lambda q, v, a: np.zeros(0),
            variational_basis_c=lambda q, v, a: np.eye(2), n_kinematic=0, n_variational=2, **extra,
        )

    @pytest.mark.parametrize("analytic", [False, True])
    def test_free_lagrangian(self, analytic, rng):
        h = 0.25
        sys_ = discretize(self.free_continuous(analytic), h)
        for _ in range(10):
            q0, q1 = rng.normal(size=(2, 2))
            assert sys_.lagrangian(q0, q1) == pytest.approx(0.5 * float((q1 - q0) @ (q1 - q0)) / h**2)

    @pytest.mark.parametrize("analytic", [False, True])
    def test_free_flow_is_linear(self, analytic):
        traj = flow(discretize(self.free_continuous(analytic), 0.1), ConfigPair([0, 0], [0.1, -0.2]), 5)
        assert np.allclose(np.diff(traj.points, axis=0), [0.1, -0.2], atol=1e-9)

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValueError):
            discretize(self.free_continuous(True), 0.0)

    def test_particle_matches_hand_coded(self, rng):
        gen = discretize(particle_continuous(), 0.1)
        hand = make_particle()
        for _ in range(20):
            q0, q1, q2 = rng.normal(size=(3, 2))
            assert np.allclose(step_residual(gen, q0, q1, q2), step_residual(hand, q0, q1, q2), rtol=1e-12, atol=1e-9)
        assert np.max(np.abs(step_residual(gen, [0, 0], [0.1, 0.1], PARTICLE_Q2))) <= 1e-10


class TestNonholonomicBuilder:
    def test_finite_difference_derivatives(self):
        # central differences of L_d carry roundoff near 1e-10, so the tolerance follows
        free = free_particle(2, 0.1)
        built = from_discrete_nonholonomic(
            free.lagrangian, lambda q, q1: np.zeros(0), lambda q: np.eye(2), dim=2, h=0.1, n_constraints=0,
        )
        cfg = StepperConfig(solve=SolveConfig(tolerance=1e-8))
        b = flow(built, ConfigPair([0, 0], [0.1, 0.3]), 10, cfg).points
        assert np.allclose(np.diff(b, axis=0), [0.1, 0.3], atol=1e-8)

    def test_unconstrained_equals_plain(self):
        free = free_particle(2, 0.1)
        built = from_discrete_nonholonomic(
            free.lagrangian, lambda q, q1: np.zeros(0), lambda q: np.eye(2), dim=2, h=0.1, n_constraints=0,
            d1_lagrangian=free.d1_lagrangian, d2_lagrangian=free.d2_lagrangian,
        )
        a = flow(free, ConfigPair([0, 0], [0.1, 0.3]), 10).points
        b = flow(built, ConfigPair([0, 0], [0.1, 0.3]), 10).points
        assert np.allclose(a, b, atol=1e-10)

    def test_differences_in_kernel(self):
        sys_ = linear_constraint_system(a=(1.0, 2.0))
        traj = flow(sys_, ConfigPair([0, 0], [0.2, -0.1]), 20)
        assert np.max(np.abs(np.diff(traj.points, axis=0) @ np.array([1.0, 2.0]))) <= 1e-12

    def test_matches_direct_solver(self):
        a = np.array([1.0, 2.0])
        h = 0.1
        sys_ = linear_constraint_system(a=tuple(a), h=h)
        traj = flow(sys_, ConfigPair([0, 0], [0.2, -0.1]), 20)
        ref = direct_flow(
            lambda q0, q1: -(q1 - q0) / h, lambda q0, q1: (q1 - q0) / h,
            lambda q, q1: np.array([a @ (q1 - q)]), lambda q: np.array([[-2.0], [1.0]]),
            [0, 0], [0.2, -0.1], 20,
        )
        assert np.max(np.abs(traj.points - ref)) <= 1e-10
