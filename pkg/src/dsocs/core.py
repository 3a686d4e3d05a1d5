"""Discrete second order constrained Lagrangian systems.

A system is a discrete Lagrangian ``L_d(q0, q1)`` on Q x Q, a residual map
whose zero set is the kinematic constraint submanifold ``D_K`` of Q^3, and a
map returning a basis of the variational subspace ``D_V`` attached to each
triple.  A discrete path is a trajectory iff every interior triple lies in
``D_K`` and the force balance ``beta`` vanishes on it; :func:`step` solves
those equations for the next point and :func:`flow` iterates it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, FlowError, InadmissibleStateError
from .numerics import SolveConfig, newton_solve

DERIVATIVE_EPS = 1e-6


class Selection(str, enum.Enum):
    """How a custom stepper picks among several roots of its step equation."""

    NEAREST_PREVIOUS = "nearest-previous"
    LYAPUNOV_DECREASE = "lyapunov-decrease"
    NEWTON_ONLY = "newton-only"


@dataclass(frozen=True)
class StepperConfig:
    """Step solver settings.

    ``scan_lo``/``scan_hi`` are offsets from the current value of the scanned
    coordinate, so the default bracket for a scalar reduction is
    ``[x_k - 2, x_k + 2]``.
    """

    solve: SolveConfig = field(default_factory=SolveConfig)
    scan_lo: float = -2.0
    scan_hi: float = 2.0
    scan_points: int = 4001
    selection: Selection = Selection.NEAREST_PREVIOUS

    def __post_init__(self):
        if not self.scan_lo < self.scan_hi:
            raise ValueError("scan_lo must be below scan_hi")
        if self.scan_points < 2:
            raise ValueError("scan_points must be at least 2")
        object.__setattr__(self, "selection", Selection(self.selection))


@dataclass
class StepRecord:
    newton_iterations: int
    residual_norm: float
    candidate_count: int = 1
    note: str = ""


@dataclass(frozen=True)
class ConfigPair:
    """Discrete state (q_{k-1}, q_k)."""

    q_prev: np.ndarray
    q_curr: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.q_prev, dtype=float))
        b = np.atleast_1d(np.asarray(self.q_curr, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise DimensionError(f"mismatched configuration pair {a.shape} / {b.shape}")
        object.__setattr__(self, "q_prev", a)
        object.__setattr__(self, "q_curr", b)

    def reversed(self):
        return ConfigPair(self.q_curr, self.q_prev)


@dataclass
class Trajectory:
    """Points q_0 ... q_N of a discrete trajectory with per-step records."""

    h: float
    points: np.ndarray
    records: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.points) - 1

    @property
    def times(self):
        return self.h * np.arange(len(self.points))

    def pair(self, k):
        """The state (q_{k-1}, q_k)."""
        return ConfigPair(self.points[k - 1], self.points[k])


@dataclass(frozen=True)
class DiscreteSystem:
    """A DSOCS on Q = R^dim.

    ``n_kinematic`` counts the components of ``kinematic_residual`` and
    ``n_variational`` the columns returned by ``variational_basis``.  The
    first ``prior_constraints`` kinematic components may only depend on
    (q0, q1); they are conditions on the incoming state rather than
    equations for q2, so well-posedness reads
    ``n_kinematic - prior_constraints + n_variational == dim``.

    ``d1_lagrangian``/``d2_lagrangian`` are optional analytic partial
    derivatives of ``lagrangian``; central differences are used otherwise.
    ``custom_step(sys, state, cfg) -> (q2, StepRecord)`` replaces the generic
    Newton step when present; ``preferred_selection`` is the root policy
    used when :func:`step` or :func:`flow` is called without a config.
    """

    dim: int
    h: float
    lagrangian: Callable
    kinematic_residual: Callable
    variational_basis: Callable
    n_kinematic: int
    n_variational: int
    d1_lagrangian: Optional[Callable] = None
    d2_lagrangian: Optional[Callable] = None
    custom_step: Optional[Callable] = None
    coordinate_names: Sequence[str] = ()
    prior_constraints: int = 0
    name: str = "system"
    params: object = None
    preferred_selection: Optional[Selection] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not np.isfinite(self.h) or self.h == 0:
            raise ValueError("time step must be finite and nonzero")
        if self.n_kinematic - self.prior_constraints + self.n_variational != self.dim:
            raise ValueError(
                f"ill-posed step: {self.n_kinematic - self.prior_constraints} kinematic"
                f" + {self.n_variational} variational equations for {self.dim} unknowns"
            )
        if not self.coordinate_names:
            names = tuple(f"q{i}" for i in range(self.dim))
            object.__setattr__(self, "coordinate_names", names)
        if len(self.coordinate_names) != self.dim:
            raise ValueError("need one coordinate name per dimension")


@dataclass(frozen=True)
class ContinuousSystem:
    """A second order constrained system on TQ with Q = R^dim.

    Optional ``dL_dq``/``dL_dqdot`` give the partial derivatives of the
    Lagrangian analytically.
    """

    dim: int
    lagrangian: Callable
    kinematic_residual_c: Callable
    variational_basis_c: Callable
    n_kinematic: int
    n_variational: int
    dL_dq: Optional[Callable] = None
    dL_dqdot: Optional[Callable] = None
    coordinate_names: Sequence[str] = ()
    name: str = "continuous"

    def __post_init__(self):
        if self.n_kinematic + self.n_variational != self.dim:
            raise ValueError("kinematic plus variational constraints must equal dim")


def _vec(x):
    if type(x) is np.ndarray and x.ndim == 1 and x.dtype == np.float64:
        return x
    return np.atleast_1d(np.asarray(x, dtype=float))


def _gradient(fun, x, eps=DERIVATIVE_EPS):
    x = _vec(x)
    g = np.empty_like(x)
    for j in range(x.size):
        step = eps * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (fun(xp) - fun(xm)) / (xp[j] - xm[j])
    return g


def d1_lagrangian(sys: DiscreteSystem, q, q1):
    q, q1 = _vec(q), _vec(q1)
    if sys.d1_lagrangian is not None:
        return _vec(sys.d1_lagrangian(q, q1))
    return _gradient(lambda x: sys.lagrangian(x, q1), q)


def d2_lagrangian(sys: DiscreteSystem, q, q1):
    q, q1 = _vec(q), _vec(q1)
    if sys.d2_lagrangian is not None:
        return _vec(sys.d2_lagrangian(q, q1))
    return _gradient(lambda x: sys.lagrangian(q, x), q1)


def legendre_minus(sys: DiscreteSystem, q, q1):
    """Momentum at ``q`` of the discrete Legendre transform F^- L_d: -D_1 L_d."""
    return -d1_lagrangian(sys, q, q1)


def legendre_plus(sys: DiscreteSystem, q, q1):
    """Momentum at ``q1`` of the discrete Legendre transform F^+ L_d: D_2 L_d."""
    return d2_lagrangian(sys, q, q1)


def momentum_mismatch(sys: DiscreteSystem, q0, q1, q2):
    """Covector F^+ L_d(q0, q1) - F^- L_d(q1, q2) at q1."""
    return d2_lagrangian(sys, q0, q1) + d1_lagrangian(sys, q1, q2)


def beta_residual(sys: DiscreteSystem, q0, q1, q2):
    """Components of the momentum mismatch on the variational basis."""
    basis = np.asarray(sys.variational_basis(_vec(q0), _vec(q1), _vec(q2)), dtype=float)
    basis = basis.reshape(sys.dim, -1)
    if basis.shape[1] != sys.n_variational:
        raise DimensionError(
            f"variational basis has {basis.shape[1]} columns, expected {sys.n_variational}"
        )
    return basis.T @ momentum_mismatch(sys, q0, q1, q2)


def step_residual(sys: DiscreteSystem, q0, q1, q2):
    """Kinematic residual followed by beta; zero iff the triple is admissible."""
    q0, q1, q2 = _vec(q0), _vec(q1), _vec(q2)
    for q in (q0, q1, q2):
        if q.shape != (sys.dim,):
            raise DimensionError(f"expected vectors of length {sys.dim}, got {q.shape}")
    kin = _vec(sys.kinematic_residual(q0, q1, q2)) if sys.n_kinematic else np.zeros(0)
    return np.concatenate([kin, beta_residual(sys, q0, q1, q2)])


def newton_step(sys: DiscreteSystem, state: ConfigPair, cfg: StepperConfig):
    """Generic step: Newton on the step residual from ``2 q_k - q_{k-1}``."""
    q0, q1 = state.q_prev, state.q_curr
    p = sys.prior_constraints
    if p:
        prior = step_residual(sys, q0, q1, 2 * q1 - q0)[:p]
        if np.max(np.abs(prior)) > cfg.solve.tolerance:
            raise InadmissibleStateError(
                f"incoming pair violates the first order constraint by {np.max(np.abs(prior)):.3e}"
            )

    def residual(q2):
        return step_residual(sys, q0, q1, q2)[p:]

    q2, info = newton_solve(residual, 2.0 * q1 - q0, cfg.solve, full_output=True)
    norm = float(np.max(np.abs(step_residual(sys, q0, q1, q2))))
    return q2, StepRecord(info.iterations, norm, 1, "newton")


def default_config(sys: DiscreteSystem) -> StepperConfig:
    """Stepper settings honouring the system's preferred root policy."""
    if sys.preferred_selection is None:
        return StepperConfig()
    return StepperConfig(selection=sys.preferred_selection)


def step(sys: DiscreteSystem, state: ConfigPair, cfg: StepperConfig | None = None):
    """Solve for q_{k+1} given (q_{k-1}, q_k); returns ``(q2, StepRecord)``."""
    cfg = cfg or default_config(sys)
    if sys.custom_step is not None and cfg.selection is not Selection.NEWTON_ONLY:
        return sys.custom_step(sys, state, cfg)
    return newton_step(sys, state, cfg)


def flow(sys: DiscreteSystem, state: ConfigPair, steps: int, cfg: StepperConfig | None = None):
    """Iterate :func:`step` ``steps`` times starting from ``state``.

    On failure a :class:`FlowError` carries the partial trajectory and the
    index k of the triple (q_{k-1}, q_k, q_{k+1}) that could not be solved.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    cfg = cfg or default_config(sys)
    points = np.empty((steps + 2, sys.dim))
    points[0] = state.q_prev
    points[1] = state.q_curr
    records = []
    for k in range(1, steps + 1):
        try:
            q2, rec = step(sys, ConfigPair(points[k - 1], points[k]), cfg)
        except Exception as exc:
            partial = Trajectory(sys.h, points[: k + 1].copy(), records)
            raise FlowError(f"step failed at k={k}: {exc}", k, partial, exc) from exc
        points[k + 1] = q2
        records.append(rec)
    return Trajectory(sys.h, points, records)


def seed_from_continuous(q, qdot, h):
    """Discrete initial pair (q, q + h qdot) from continuous initial data."""
    q, qdot = _vec(q), _vec(qdot)
    if q.shape != qdot.shape:
        raise DimensionError("q and qdot must have the same length")
    return ConfigPair(q, q + h * qdot)


def discretize(cont: ContinuousSystem, h: float, name: str | None = None) -> DiscreteSystem:
    """Discrete system from a continuous one with the difference maps

    L_d(q0, q1) = L(q0, (q1 - q0)/h) and constraints evaluated at
    (q1, (q2 - q0)/(2h), (q2 - 2 q1 + q0)/h^2).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    return _discretize(cont, h, name)


def _discretize(cont, h, name=None):
    def lagrangian(q0, q1):
        return cont.lagrangian(q0, (q1 - q0) / h)

    d1 = d2 = None
    if cont.dL_dq is not None and cont.dL_dqdot is not None:
        def d1(q0, q1):
            v = (q1 - q0) / h
            return _vec(cont.dL_dq(q0, v)) - _vec(cont.dL_dqdot(q0, v)) / h

        def d2(q0, q1):
            return _vec(cont.dL_dqdot(q0, (q1 - q0) / h)) / h

    def kinematic(q0, q1, q2):
        return cont.kinematic_residual_c(q1, (q2 - q0) / (2 * h), (q2 - 2 * q1 + q0) / h**2)

    def basis(q0, q1, q2):
        return cont.variational_basis_c(q1, (q2 - q0) / (2 * h), (q2 - 2 * q1 + q0) / h**2)

    return DiscreteSystem(
        dim=cont.dim,
        h=h,
        lagrangian=lagrangian,
        kinematic_residual=kinematic,
        variational_basis=basis,
        n_kinematic=cont.n_kinematic,
        n_variational=cont.n_variational,
        d1_lagrangian=d1,
        d2_lagrangian=d2,
        coordinate_names=tuple(cont.coordinate_names),
        name=name or cont.name,
    )


def from_discrete_nonholonomic(
    lagrangian,
    dd_residual,
    distribution_basis,
    *,
    dim,
    h,
    n_constraints,
    d1_lagrangian=None,
    d2_lagrangian=None,
    coordinate_names=(),
    name="nonholonomic",
):
    """DSOCS of a discrete nonholonomic system.

    ``dd_residual(q, q1)`` (length ``n_constraints``) vanishes on the discrete
    constraint space and ``distribution_basis(q)`` spans the allowed
    variations at q.  The kinematic constraint asks both consecutive pairs of
    a triple to be admissible; the variational subspace at a triple is the
    distribution at its middle point.
    """

    def kinematic(q0, q1, q2):
        if n_constraints == 0:
            return np.zeros(0)
        return np.concatenate([_vec(dd_residual(q0, q1)), _vec(dd_residual(q1, q2))])

    def basis(q0, q1, q2):
        return distribution_basis(q1)

    return DiscreteSystem(
        dim=dim,
        h=h,
        lagrangian=lagrangian,
        kinematic_residual=kinematic,
        variational_basis=basis,
        n_kinematic=2 * n_constraints,
        n_variational=dim - n_constraints,
        d1_lagrangian=d1_lagrangian,
        d2_lagrangian=d2_lagrangian,
        coordinate_names=coordinate_names,
        prior_constraints=n_constraints,
        name=name,
    )
