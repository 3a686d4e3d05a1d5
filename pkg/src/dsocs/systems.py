"""Concrete systems: a planar particle moving with prescribed signed
curvature, the inertia wheel pendulum under a Lyapunov constraint, and a
catalog of small systems with known behaviour for testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import (
    ContinuousSystem,
    DiscreteSystem,
    Selection,
    StepperConfig,
    StepRecord,
    _discretize,
    beta_residual,
    from_discrete_nonholonomic,
    newton_step,
    step_residual,
)
from .errors import AmbiguousRootError, DegenerateVelocityError, NoRootError
from .numerics import enumerate_scalar_roots

SPEED_FLOOR = 1e-10
TIE_WIDTH = 1e-6


# ---------------------------------------------------------------------------
# particle with prescribed curvature

@dataclass(frozen=True)
class ParticleParams:
    """Mass, signed curvature field k(x, y) (a constant is accepted) and step."""

    mass: float = 1.0
    curvature: Union[float, Callable] = 1.0
    h: float = 0.1

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not np.isfinite(self.h) or self.h == 0:
            raise ValueError("h must be finite and nonzero")

    def k(self, x, y):
        if callable(self.curvature):
            return float(self.curvature(x, y))
        return float(self.curvature)


def make_particle(params: ParticleParams = ParticleParams()) -> DiscreteSystem:
    """Particle in the plane with prescribed signed curvature.

    Kinematic residual: the curvature of the central-difference velocity and
    acceleration minus k(q1).  Variational subspace: span of the velocity.
    A negative ``params.h`` builds the same integrator run backward in time.
    """
    m, h = params.mass, params.h
    c = m / h**2

    def lagrangian(q0, q1):
        d = q1 - q0
        return 0.5 * c * (d[0] * d[0] + d[1] * d[1])

    def d1(q0, q1):
        return -c * (q1 - q0)

    def d2(q0, q1):
        return c * (q1 - q0)

    def kinematic(q0, q1, q2):
        vx = (q2[0] - q0[0]) / (2 * h)
        vy = (q2[1] - q0[1]) / (2 * h)
        ax = (q2[0] - 2 * q1[0] + q0[0]) / h**2
        ay = (q2[1] - 2 * q1[1] + q0[1]) / h**2
        speed = math.hypot(vx, vy)
        if speed < SPEED_FLOOR:
            raise DegenerateVelocityError(f"central velocity {speed:.3e} too small for curvature")
        return np.array([(vx * ay - ax * vy) / speed**3 - params.k(q1[0], q1[1])])

    def basis(q0, q1, q2):
        return ((q2 - q0) / (2 * h)).reshape(2, 1)

    return DiscreteSystem(
        dim=2, h=h, lagrangian=lagrangian, kinematic_residual=kinematic,
        variational_basis=basis, n_kinematic=1, n_variational=1,
        d1_lagrangian=d1, d2_lagrangian=d2, coordinate_names=("x", "y"),
        name="particle", params=params,
    )


def particle_continuous(params: ParticleParams = ParticleParams()) -> ContinuousSystem:
    m = params.mass

    def kinematic(q, v, a):
        speed = math.hypot(v[0], v[1])
        if speed < SPEED_FLOOR:
            raise DegenerateVelocityError("velocity too small for curvature")
        return np.array([(v[0] * a[1] - a[0] * v[1]) / speed**3 - params.k(q[0], q[1])])

    return ContinuousSystem(
        dim=2,
        lagrangian=lambda q, v: 0.5 * m * float(v @ v),
        kinematic_residual_c=kinematic,
        variational_basis_c=lambda q, v, a: np.asarray(v, dtype=float).reshape(2, 1),
        n_kinematic=1,
        n_variational=1,
        dL_dq=lambda q, v: np.zeros(2),
        dL_dqdot=lambda q, v: m * np.asarray(v, dtype=float),
        coordinate_names=("x", "y"),
        name="particle",
    )


# ---------------------------------------------------------------------------
# inertia wheel pendulum with a Lyapunov constraint

@dataclass(frozen=True)
class PendulumParams:
    """Composite inertias I, J, gravity moment M and Lyapunov design constants.

    Defaults are the values used in the published experiment.  ``hc``, ``gc``
    and ``f`` are the derived coefficients of the Lyapunov function; ``h`` is
    the time step.
    """

    I: float = 312.5
    J: float = 2.0772
    M: float = 37.98
    d: float = 1.0
    e: float = 1000.0
    chi: float = 100.0
    n: int = -154
    rho: float = 2.0
    h: float = 0.1

    def __post_init__(self):
        for key in ("I", "J", "M", "d", "e", "chi", "rho"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.ac_minus_b2 == 0:
            raise ValueError("ac - b^2 vanishes")
        if not self.n * self.b > self.c:
            raise ValueError("need n b > c")
        if not self.hc > 0:
            raise ValueError("derived h_c must be positive")

    @property
    def a(self):
        return 1.0 / self.I

    @property
    def b(self):
        return -1.0 / self.I

    @property
    def c(self):
        return 1.0 / self.I + 1.0 / self.J

    @property
    def ac_minus_b2(self):
        return self.a * self.c - self.b**2

    @property
    def hc(self):
        return self.d * (self.n * self.b - self.c) / self.ac_minus_b2

    @property
    def gc(self):
        return self.d * (self.n * self.a - self.b) / self.ac_minus_b2

    @property
    def f(self):
        return (self.gc**2 + self.e) / self.hc

    @property
    def leading_coefficient(self):
        """Coefficient of theta_2^2 in the reduced scalar step equation."""
        I, J = self.I, self.J
        return -self.d * I**2 * (I + (self.n + 1) * J) / (2 * self.h**3)


def _momenta(p: PendulumParams, qdot):
    """Wheel-coupled momentum (I+J) thdot + J psidot and total rate thdot + psidot."""
    return (p.I + p.J) * qdot[0] + p.J * qdot[1], qdot[0] + qdot[1]


def lyapunov_V(p: PendulumParams, q, qdot):
    """Lyapunov function; broadcasts over trailing axes of ``q``/``qdot``."""
    mom, s = _momenta(p, qdot)
    return (
        0.5 * p.f * mom**2
        + 0.5 * p.hc * p.J**2 * s**2
        + p.gc * p.J * mom * s
        + p.chi * (1.0 - np.cos(q[1] - p.n * q[0]))
        + p.M * p.e / p.d * (1.0 - np.cos(q[0]))
    )


def dissipation_F(p: PendulumParams, q, qdot):
    mom, s = _momenta(p, qdot)
    u = p.gc * mom + p.hc * p.J * s
    return p.rho * np.tanh(u) * u


def lyapunov_gradients(p: PendulumParams, q, qdot):
    """(dV/dq, dV/dqdot), each a pair of arrays."""
    mom, s = _momenta(p, qdot)
    phi = q[1] - p.n * q[0]
    dV_dmom = p.f * mom + p.gc * p.J * s
    dV_ds = p.hc * p.J**2 * s + p.gc * p.J * mom
    dV_dq = (
        -p.n * p.chi * np.sin(phi) + p.M * p.e / p.d * np.sin(q[0]),
        p.chi * np.sin(phi),
    )
    dV_dqdot = ((p.I + p.J) * dV_dmom + dV_ds, p.J * dV_dmom + dV_ds)
    return dV_dq, dV_dqdot


def lyapunov_constraint(p: PendulumParams, q, qdot, qddot):
    """dV/dt + F along (q, qdot, qddot); zero on the constraint."""
    dV_dq, dV_dqdot = lyapunov_gradients(p, q, qdot)
    dVdt = (
        dV_dq[0] * qdot[0] + dV_dq[1] * qdot[1]
        + dV_dqdot[0] * qddot[0] + dV_dqdot[1] * qddot[1]
    )
    return dVdt + dissipation_F(p, q, qdot)


def pendulum_continuous(p: PendulumParams = PendulumParams()) -> ContinuousSystem:
    I, J, M = p.I, p.J, p.M

    def lagrangian(q, v):
        return 0.5 * I * v[0] ** 2 + 0.5 * J * (v[0] + v[1]) ** 2 - M * (1.0 + math.cos(q[0]))

    return ContinuousSystem(
        dim=2,
        lagrangian=lagrangian,
        kinematic_residual_c=lambda q, v, a: np.atleast_1d(lyapunov_constraint(p, q, v, a)),
        variational_basis_c=lambda q, v, a: np.array([[1.0], [0.0]]),
        n_kinematic=1,
        n_variational=1,
        dL_dq=lambda q, v: np.array([M * math.sin(q[0]), 0.0]),
        dL_dqdot=lambda q, v: np.array([I * v[0] + J * (v[0] + v[1]), J * (v[0] + v[1])]),
        coordinate_names=("theta", "psi"),
        name="pendulum",
    )


def select_root(candidates, previous, lyapunov_delta=None, cfg: StepperConfig | None = None):
    """Pick one root of a scalar step equation; see :func:`choose_root`."""
    return choose_root(candidates, previous, lyapunov_delta, cfg)[0]


def choose_root(candidates, previous, lyapunov_delta=None, cfg: StepperConfig | None = None):
    """Return ``(root, note)``.

    NEAREST_PREVIOUS takes the candidate closest to ``previous``.  When the
    two closest candidates are within 1e-6 of each other, or equally far from
    ``previous`` to 1e-6, the one with the smaller ``lyapunov_delta`` wins.
    LYAPUNOV_DECREASE always minimizes ``lyapunov_delta``.
    """
    selection = (cfg or StepperConfig()).selection
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise NoRootError("no candidate roots")
    if len(cands) == 1:
        return cands[0], "single root"
    if selection is Selection.LYAPUNOV_DECREASE:
        if lyapunov_delta is None:
            raise AmbiguousRootError("Lyapunov selection needs lyapunov_delta")
        deltas = [lyapunov_delta(c) for c in cands]
        best = int(np.argmin(deltas))
        return cands[best], f"lyapunov decrease among {len(cands)}"
    order = sorted(cands, key=lambda c: (abs(c - previous), c))
    first, second = order[0], order[1]
    tied = abs(first - second) < TIE_WIDTH or abs(abs(first - previous) - abs(second - previous)) < TIE_WIDTH
    if not tied:
        return first, f"nearest of {len(cands)}"
    if lyapunov_delta is None:
        raise AmbiguousRootError(f"roots {first!r} and {second!r} too close to separate")
    d1, d2 = lyapunov_delta(first), lyapunov_delta(second)
    if d1 == d2:
        raise AmbiguousRootError(f"roots {first!r} and {second!r} tie in Lyapunov decrease")
    return (first if d1 < d2 else second), "near tie, lyapunov fallback"


def _affine_in_theta(sys, q0, q1):
    """psi_2 as an affine function of theta_2 from beta = 0.

    beta is affine in (theta_2, psi_2), so psi_2 on its zero set is recovered
    from four evaluations of the generic residual.
    """

    def psi_root(theta2, psi_a=0.0, psi_b=1.0):
        ba = beta_residual(sys, q0, q1, np.array([theta2, psi_a]))[0]
        bb = beta_residual(sys, q0, q1, np.array([theta2, psi_b]))[0]
        return psi_a - ba * (psi_b - psi_a) / (bb - ba)

    t0 = q1[0]
    t1 = q1[0] + 1.0
    p0 = psi_root(t0, q1[1], q1[1] + 1.0)
    p1 = psi_root(t1, q1[1], q1[1] + 1.0)
    slope = p1 - p0
    return lambda theta2: p0 + slope * (theta2 - t0)


def pendulum_reduced_equation(sys: DiscreteSystem, q0, q1):
    """Scalar step equation in theta_2 and the map theta_2 -> psi_2.

    The returned function accepts arrays.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    psi_of = _affine_in_theta(sys, q0, q1)
    a0, a1 = q0[:, None], q1[:, None]

    def scalar(theta2):
        theta2 = np.asarray(theta2, dtype=float)
        flat = np.atleast_1d(theta2)
        q2 = np.vstack([flat, psi_of(flat)])
        out = sys.kinematic_residual(a0, a1, q2).reshape(-1)
        return out.reshape(theta2.shape) if theta2.ndim else float(out[0])

    return scalar, psi_of


def pendulum_scalar_step(sys: DiscreteSystem, state, cfg: StepperConfig):
    """Enumerate roots of the reduced scalar equation, pick one, recover psi_2.

    Candidates are ranked for the Lyapunov policy by the decrease of V that
    the constraint imposes over the step, ``-h F``.  One root of every pair
    has u = 0 and so no dissipation; V is stationary there, and the policy
    steers away from it.
    """
    p = sys.params
    q0, q1 = state.q_prev, state.q_curr
    scalar, psi_of = pendulum_reduced_equation(sys, q0, q1)
    roots = enumerate_scalar_roots(
        scalar, q1[0] + cfg.scan_lo, q1[0] + cfg.scan_hi, cfg.scan_points, vectorized=True
    )
    if not roots:
        raise NoRootError(f"no root of the reduced equation near theta={q1[0]:.6g}")

    h = sys.h

    def lyapunov_delta(theta2):
        # change of V over one step predicted by the constraint, -h F
        q2 = np.array([theta2, psi_of(theta2)])
        return -abs(h) * float(dissipation_F(p, q1, (q2 - q0) / (2 * h)))

    theta2, note = choose_root(roots, q1[0], lyapunov_delta, cfg)
    q2 = np.array([theta2, psi_of(theta2)])
    norm = float(np.max(np.abs(step_residual(sys, q0, q1, q2))))
    return q2, StepRecord(0, norm, len(roots), note)


def make_pendulum(params: PendulumParams = PendulumParams(), generic: bool = False) -> DiscreteSystem:
    """Inertia wheel pendulum on the universal cover R^2 of the torus.

    The discrete Lagrangian and constraints come from the difference maps of
    :func:`dsocs.core.discretize`.  The kinematic residual is dV/dt + F
    divided by the magnitude of the theta_2^2 coefficient of the reduced
    equation, and the variational basis column d/dtheta is scaled by
    h^2/(I+J); both rescalings keep zero sets and subspaces while bringing
    the residuals to order one.  ``generic`` drops the scalar-reduction
    stepper in favour of 2-D Newton.
    """
    base = _discretize(pendulum_continuous(params), params.h, "pendulum")
    h = params.h
    kin_scale = 1.0 / abs(params.leading_coefficient)
    column = np.array([[h**2 / (params.I + params.J)], [0.0]])

    def kinematic(q0, q1, q2):
        v = (q2 - q0) / (2 * h)
        a = (q2 - 2 * q1 + q0) / h**2
        return np.atleast_1d(kin_scale * lyapunov_constraint(params, q1, v, a))

    return DiscreteSystem(
        dim=2, h=h, lagrangian=base.lagrangian, kinematic_residual=kinematic,
        variational_basis=lambda q0, q1, q2: column, n_kinematic=1, n_variational=1,
        d1_lagrangian=base.d1_lagrangian, d2_lagrangian=base.d2_lagrangian,
        custom_step=None if generic else pendulum_scalar_step,
        coordinate_names=("theta", "psi"), name="pendulum", params=params,
        preferred_selection=None if generic else Selection.LYAPUNOV_DECREASE,
    )


# ---------------------------------------------------------------------------
# small systems with closed-form behaviour

def _free_lagrangian(h):
    def lagrangian(q0, q1):
        d = np.asarray(q1) - np.asarray(q0)
        return float(d @ d) / (2 * h)

    return lagrangian, (lambda q0, q1: -(q1 - q0) / h), (lambda q0, q1: (q1 - q0) / h)


def free_particle(dim=2, h=0.1) -> DiscreteSystem:
    """Unconstrained L_d = |q1 - q0|^2 / (2h); steps are q2 = 2 q1 - q0."""
    lag, d1, d2 = _free_lagrangian(h)
    eye = np.eye(dim)
    return DiscreteSystem(
        dim=dim, h=h, lagrangian=lag, kinematic_residual=lambda *q: np.zeros(0),
        variational_basis=lambda *q: eye, n_kinematic=0, n_variational=dim,
        d1_lagrangian=d1, d2_lagrangian=d2, name="free",
        coordinate_names=tuple("xyzw"[:dim]) if dim <= 4 else (),
    )


def harmonic_oscillator(dim=1, h=0.1, omega=1.0) -> DiscreteSystem:
    """Trapezoidal discrete Lagrangian of the oscillator, unconstrained."""
    w2 = omega**2

    def lagrangian(q0, q1):
        d = q1 - q0
        return float(d @ d) / (2 * h) - h * w2 * float(q0 @ q0 + q1 @ q1) / 4

    eye = np.eye(dim)
    return DiscreteSystem(
        dim=dim, h=h, lagrangian=lagrangian, kinematic_residual=lambda *q: np.zeros(0),
        variational_basis=lambda *q: eye, n_kinematic=0, n_variational=dim,
        d1_lagrangian=lambda q0, q1: -(q1 - q0) / h - h * w2 * q0 / 2,
        d2_lagrangian=lambda q0, q1: (q1 - q0) / h - h * w2 * q1 / 2,
        name="harmonic",
    )


def linear_constraint_system(a=(1.0, 2.0), h=0.1) -> DiscreteSystem:
    """Free particle in R^2 with a . (q1 - q0) = 0; variations in ker(a)."""
    a = np.asarray(a, dtype=float)
    lag, d1, d2 = _free_lagrangian(h)
    kernel = np.array([[-a[1]], [a[0]]]) / np.hypot(*a)
    return from_discrete_nonholonomic(
        lag, lambda q, q1: np.array([a @ (q1 - q)]), lambda q: kernel,
        dim=2, h=h, n_constraints=1, d1_lagrangian=d1, d2_lagrangian=d2,
        coordinate_names=("x", "y"), name="linear-constraint",
    )


def holonomic_leaf_system(h=0.1, omega=1.0) -> DiscreteSystem:
    """Motion confined to the leaves y = const of R^2.

    The x coordinate feels the oscillator potential, so the dynamics on each
    leaf is the trapezoidal oscillator.
    """
    w2 = omega**2

    def lagrangian(q0, q1):
        d = q1 - q0
        return float(d @ d) / (2 * h) - h * w2 * (q0[0] ** 2 + q1[0] ** 2) / 4

    return from_discrete_nonholonomic(
        lagrangian,
        lambda q, q1: np.array([q1[1] - q[1]]),
        lambda q: np.array([[1.0], [0.0]]),
        dim=2, h=h, n_constraints=1,
        d1_lagrangian=lambda q0, q1: -(q1 - q0) / h - np.array([h * w2 * q0[0] / 2, 0.0]),
        d2_lagrangian=lambda q0, q1: (q1 - q0) / h - np.array([h * w2 * q1[0] / 2, 0.0]),
        coordinate_names=("x", "y"), name="holonomic",
    )


def knife_edge_system(h=0.1) -> DiscreteSystem:
    """Nonholonomic particle in R^3 with zdot = y xdot in a quadratic well.

    Discrete constraint z1 - z0 = (y0 + y1)/2 (x1 - x0); allowed variations
    span (1, 0, y) and (0, 1, 0).  The distribution is not integrable.
    """

    def lagrangian(q0, q1):
        d = q1 - q0
        return float(d @ d) / (2 * h) - h * (q0[0] ** 2 + q0[1] ** 2) / 2

    def dd(q, q1):
        return np.array([q1[2] - q[2] - 0.5 * (q[1] + q1[1]) * (q1[0] - q[0])])

    def distribution(q):
        return np.array([[1.0, 0.0], [0.0, 1.0], [q[1], 0.0]])

    return from_discrete_nonholonomic(
        lagrangian, dd, distribution, dim=3, h=h, n_constraints=1,
        d1_lagrangian=lambda q0, q1: -(q1 - q0) / h - h * np.array([q0[0], q0[1], 0.0]),
        d2_lagrangian=lambda q0, q1: (q1 - q0) / h,
        coordinate_names=("x", "y", "z"), name="knife-edge",
    )


def make_test_systems(h=0.1):
    """Named unconstrained, nonholonomic and holonomic systems."""
    return {
        "free": free_particle(2, h),
        "harmonic": harmonic_oscillator(1, h),
        "linear-constraint": linear_constraint_system(h=h),
        "knife-edge": knife_edge_system(h),
        "holonomic": holonomic_leaf_system(h),
    }
