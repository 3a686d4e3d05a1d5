import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from dsocs import make_particle
from dsocs.core import step_residual
from dsocs.errors import (
    ConvergenceError,
    DimensionError,
    InsufficientDataError,
    NonPositiveValueError,
    SingularMatrixError,
)
from dsocs.numerics import (
    SolveConfig,
    enumerate_scalar_roots,
    fd_jacobian,
    linear_solve,
    loglog_slope,
    newton_solve,
)


class TestLinearSolve:
    def test_identity(self):
        assert np.allclose(linear_solve(np.eye(2), [3, 4]), [3, 4])

    def test_diagonal(self):
        assert np.allclose(linear_solve([[2, 0], [0, 4]], [2, 8]), [1, 2])

    def test_rank_deficient(self):
        with pytest.raises(SingularMatrixError):
            linear_solve([[1, 1], [1, 1]], [1, 0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            linear_solve(np.eye(2), [1, 2, 3])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            linear_solve([[np.nan, 0], [0, 1]], [1, 1])

    @pytest.mark.parametrize("n", range(2, 7))
    def test_round_trip(self, rng, n):
        for _ in range(20):
            A = rng.normal(size=(n, n)) + n * np.eye(n)
            x = rng.normal(size=n)
            got = linear_solve(A, A @ x)
            assert np.max(np.abs(got - x)) <= 1e-10 * max(1.0, np.max(np.abs(x)))

    def test_backward_error(self, rng):
        A = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        b = rng.normal(size=4)
        x = linear_solve(A, b)
        bound = 10 * np.finfo(float).eps * np.max(np.sum(np.abs(A), axis=1)) * np.max(np.abs(x))
        assert np.max(np.abs(A @ x - b)) <= bound


class TestFdJacobian:
    def test_identity_map(self):
        x = np.array([0.3, -1.2, 4.0])
        assert np.allclose(fd_jacobian(lambda v: v, x, 1e-6), np.eye(3), atol=1e-9)

    def test_quadratic(self):
        J = fd_jacobian(lambda v: np.array([v[0] ** 2, v[1]]), np.array([3.0, 5.0]), 1e-5)
        assert np.allclose(J, [[6, 0], [0, 1]], atol=1e-6)

    def test_affine_exact(self, rng):
        A = rng.normal(size=(3, 4))
        c = rng.normal(size=3)
        J = fd_jacobian(lambda v: A @ v + c, rng.normal(size=4), 1e-4)
        assert np.max(np.abs(J - A)) <= 1e-9

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            fd_jacobian(lambda v: v, np.zeros(2), 0.0)

    def test_particle_step_residual_against_symbolic_partials(self):
        # independent oracle: curvature residual and beta written out in sympy
        h, m = 0.1, 1.0
        xs = sp.symbols("x0 y0 x1 y1 x2 y2")
        x0, y0, x1, y1, x2, y2 = xs
        vx, vy = (x2 - x0) / (2 * h), (y2 - y0) / (2 * h)
        ax, ay = (x2 - 2 * x1 + x0) / h**2, (y2 - 2 * y1 + y0) / h**2
        kin = (vx * ay - ax * vy) / (vx**2 + vy**2) ** sp.Rational(3, 2) - 1
        beta = -m / (2 * h**3) * ((x2 - 2 * x1 + x0) * (x2 - x0) + (y2 - 2 * y1 + y0) * (y2 - y0))
        exact = sp.lambdify(xs, sp.Matrix([kin, beta]).jacobian(sp.Matrix([x2, y2])), "numpy")
        q0, q1 = np.array([0.0, 0.0]), np.array([0.1, 0.1])
        q2 = np.array([0.18497262944887255, 0.2130471239994393])  # frozen oracle step
        sys_ = make_particle()
        J = fd_jacobian(lambda q: step_residual(sys_, q0, q1, q), q2, 1e-7)
        ref = np.array(exact(*q0, *q1, *q2), dtype=float)
        assert np.allclose(J, ref, rtol=1e-5, atol=1e-5)


class TestNewton:
    def test_sqrt2(self):
        x = newton_solve(lambda v: v**2 - 2, [1.0])
        assert abs(x[0] - np.sqrt(2)) < 1e-12

    def test_linear(self):
        assert abs(newton_solve(lambda v: v, [5.0])[0]) <= 1e-12

    def test_particle_first_step(self):
        sys_ = make_particle()
        q0, q1 = np.zeros(2), np.array([0.1, 0.1])
        x = newton_solve(lambda q: step_residual(sys_, q0, q1, q), 2 * q1 - q0)
        assert np.allclose(x, [0.18497262944887255, 0.2130471239994393], atol=1e-12)

    def test_residual_checked_independently(self, rng):
        A = rng.normal(size=(3, 3)) + 3 * np.eye(3)

        def f(v):
            return A @ v + 0.1 * np.sin(v) - 1.0

        cfg = SolveConfig(tolerance=1e-11)
        x, info = newton_solve(f, np.zeros(3), cfg, full_output=True)
        assert np.max(np.abs(f(x))) <= 1e-11
        assert info.residual_norm <= 1e-11 and info.iterations >= 1

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError) as err:
            newton_solve(lambda v: np.arctan(v) + 0.0 * v, [50.0], SolveConfig(max_iterations=1))
        assert err.value.iterations == 1

    def test_no_real_root_stalls(self):
        with pytest.raises((ConvergenceError, SingularMatrixError)):
            newton_solve(lambda v: v**2 + 1, [0.5])

    def test_singular_jacobian(self):
        with pytest.raises(SingularMatrixError):
            newton_solve(lambda v: np.array([v[0] + v[1] - 1, v[0] + v[1] - 1]), [0.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            newton_solve(lambda v: np.array([v[0]]), [0.0, 1.0])

    @pytest.mark.parametrize("kw", [{"tolerance": 0}, {"fd_epsilon": -1}, {"max_iterations": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            SolveConfig(**kw)


class TestRootEnumeration:
    def test_two_roots(self):
        roots = enumerate_scalar_roots(lambda x: x * x - 1, -2, 2, 101)
        assert np.allclose(roots, [-1, 1], atol=1e-12)

    def test_no_roots(self):
        assert enumerate_scalar_roots(lambda x: x * x + 1, -2, 2, 101) == []

    def test_vectorized_matches_scalar(self):
        f = lambda x: np.sin(3 * x) - 0.2  # noqa: E731
        a = enumerate_scalar_roots(f, -3, 3, 200)
        b = enumerate_scalar_roots(f, -3, 3, 200, vectorized=True)
        assert np.allclose(a, b, atol=1e-12)

    def test_pair_inside_one_cell(self):
        # both roots fall between two neighbouring grid points
        f = lambda x: (x - 0.30001) * (x - 0.30002)  # noqa: E731
        for vec in (False, True):
            roots = enumerate_scalar_roots(f, -2, 2, 101, vectorized=vec)
            assert np.allclose(roots, [0.30001, 0.30002], atol=1e-12)

    def test_pair_detection_can_be_disabled(self):
        f = lambda x: (x - 0.30001) * (x - 0.30002)  # noqa: E731
        assert enumerate_scalar_roots(f, -2, 2, 101, split_pairs=False) == []

    def test_duplicates_merged(self):
        roots = enumerate_scalar_roots(lambda x: x, -1, 1, 3)
        assert roots == [0.0]

    @pytest.mark.parametrize("lo,hi,n", [(1, 1, 10), (2, 1, 10), (0, 1, 1)])
    def test_bad_arguments(self, lo, hi, n):
        with pytest.raises(ValueError):
            enumerate_scalar_roots(lambda x: x, lo, hi, n)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1.8, 1.8), min_size=1, max_size=4, unique=True))
    def test_polynomial_roots_found(self, roots):
        lo, hi, n = -2.0, 2.0, 401
        r = np.sort(np.array(roots))
        if r.size > 1 and np.min(np.diff(r)) <= 2 * (hi - lo) / n:
            return
        poly = np.poly(r)
        found = enumerate_scalar_roots(lambda x: np.polyval(poly, x), lo, hi, n)
        assert len(found) == r.size
        assert np.allclose(found, r, atol=1e-9)


class TestLoglogSlope:
    def test_order_one(self):
        assert loglog_slope([(0.1, 0.1), (0.01, 0.01)]) == pytest.approx(1.0)

    def test_order_two(self):
        assert loglog_slope([(0.1, 0.01), (0.01, 0.0001)]) == pytest.approx(2.0)

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            loglog_slope([(0.1, 0.1)])

    def test_same_h(self):
        with pytest.raises(InsufficientDataError):
            loglog_slope([(0.1, 0.1), (0.1, 0.2)])

    @pytest.mark.parametrize("pairs", [[(0.1, 0.0), (0.2, 0.1)], [(-0.1, 1.0), (0.2, 1.0)]])
    def test_nonpositive(self, pairs):
        with pytest.raises(NonPositiveValueError):
            loglog_slope(pairs)

    @given(st.floats(1e-6, 1e6), st.floats(0.5, 3.0))
    def test_scale_invariance(self, scale, order):
        hs = [0.2, 0.1, 0.05, 0.025]
        pairs = [(h, h**order * (1 + 0.1 * i)) for i, h in enumerate(hs)]
        scaled = [(h, scale * e) for h, e in pairs]
        assert loglog_slope(scaled) == pytest.approx(loglog_slope(pairs), rel=1e-9, abs=1e-9)
