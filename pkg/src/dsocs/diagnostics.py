"""Numerical checks of the structure of a discrete flow.

Two-forms on Q x Q are handled as 2n x 2n matrices W in the coordinates
(dq0, dq1), with W(u, v) = u^T W v.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigPair,
    DiscreteSystem,
    StepperConfig,
    Trajectory,
    _vec,
    beta_residual,
    d1_lagrangian,
    d2_lagrangian,
    default_config,
    flow,
    step,
    step_residual,
)
from .errors import DSOCSError, NotOnConstraintError
from .numerics import SolveConfig, loglog_slope, newton_solve
from .reference import max_error
from .systems import PendulumParams, lyapunov_V

RANK_RTOL = 1e-9
ON_CONSTRAINT_TOL = 1e-8
FD_REL = 1e-6
MIXED_REL = 1e-4


def _fd_columns(fun, x, directions, eps):
    """Central differences of ``fun`` at ``x`` along each column of ``directions``."""
    cols = [(_vec(fun(x + eps * d)) - _vec(fun(x - eps * d))) / (2 * eps) for d in directions.T]
    if not cols:
        return np.zeros((_vec(fun(x)).size, 0))
    return np.column_stack(cols)


def _mixed_second_difference(L, q, q1, d):
    """Four-point stencil for d^2 L / dq_i dq1_j; exact on bilinear terms."""
    n = q.size
    A = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = d
        for j in range(n):
            ej = np.zeros(n)
            ej[j] = d
            A[i, j] = (L(q + ei, q1 + ej) - L(q + ei, q1 - ej) - L(q - ei, q1 + ej) + L(q - ei, q1 - ej)) / (4 * d * d)
    return A


def omega_Ld(sys: DiscreteSystem, q, q1):
    """Matrix of the discrete Lagrangian two-form at (q, q1).

    Only the mixed block A = d^2 L_d / dq dq1 enters:
    W = [[0, -A], [A^T, 0]].
    """
    q, q1 = _vec(q), _vec(q1)
    n = sys.dim
    size = 1.0 + np.max(np.abs(np.concatenate([q, q1])))
    if sys.d2_lagrangian is not None:
        # A[i, j] = d/dq_i of (D2 L_d)_j
        A = _fd_columns(lambda x: d2_lagrangian(sys, x, q1), q, np.eye(n), FD_REL * size).T
    else:
        A = _mixed_second_difference(sys.lagrangian, q, q1, MIXED_REL * size)
    W = np.zeros((2 * n, 2 * n))
    W[:n, n:] = -A
    W[n:, :n] = A.T
    return W


def is_antisymmetric(W, rtol=1e-9):
    scale = max(np.max(np.abs(W)), 1e-300)
    return bool(np.max(np.abs(W + W.T)) <= rtol * scale)


def _momentum_gap(sys, q0, q1, q2):
    return d2_lagrangian(sys, q0, q1) + d1_lagrangian(sys, q1, q2)


def xi_form(sys: DiscreteSystem, state: ConfigPair, cfg: StepperConfig | None, dq0, dq1):
    """The correction one-form: (D2 L_d(q0,q1) + D1 L_d(q1,q2)) . dq1."""
    q2, _ = step(sys, state, cfg)
    return float(_momentum_gap(sys, state.q_prev, state.q_curr, q2) @ _vec(dq1))


def _branch_flow(sys, q2_base, cfg):
    """Flow map (q0, q1) -> q2 continued from a known solution ``q2_base``.

    Perturbed steps are solved by Newton from the base point, which stays on
    the same root branch as the stepper that produced ``q2_base``.
    """
    p = sys.prior_constraints
    n = sys.dim
    solve = cfg.solve if cfg is not None else SolveConfig()

    def q2_of(z):
        q0, q1 = z[:n], z[n:]
        return newton_solve(lambda q2: step_residual(sys, q0, q1, q2)[p:], q2_base, solve)

    return q2_of


@dataclass
class SymplecticTerms:
    """Pieces of the evolution identity, all restricted to a tangent basis."""

    pullback: np.ndarray
    omega: np.ndarray
    dxi: np.ndarray

    @property
    def residual_matrix(self):
        return self.pullback - self.omega - self.dxi

    @property
    def scale(self):
        return max(np.max(np.abs(self.omega)), 1e-300)

    @property
    def residual(self):
        return float(np.max(np.abs(self.residual_matrix)) / self.scale)

    @property
    def xi_residual(self):
        return float(np.max(np.abs(self.dxi)) / self.scale)


def symplectic_terms(sys: DiscreteSystem, state: ConfigPair, cfg: StepperConfig | None = None,
                     tangent_basis=None):
    """Compute F*Omega, Omega and d(xi) on the span of ``tangent_basis``.

    ``tangent_basis`` is a 2n x r matrix of directions in (dq0, dq1); the
    identity is used when omitted.  Derivatives are central differences with
    step 1e-5 (1 + |state|_inf).
    """
    cfg = cfg or default_config(sys)
    n = sys.dim
    q0, q1 = _vec(state.q_prev), _vec(state.q_curr)
    z = np.concatenate([q0, q1])
    B = np.eye(2 * n) if tangent_basis is None else np.atleast_2d(np.asarray(tangent_basis, dtype=float))
    if B.shape[0] != 2 * n:
        raise ValueError(f"tangent basis needs {2 * n} rows")
    q2, _ = step(sys, state, cfg)
    q2_of = _branch_flow(sys, q2, cfg)
    eps = 1e-5 * (1.0 + np.max(np.abs(z)))

    def flow_map(x):
        return np.concatenate([x[n:], q2_of(x)])

    def gap(x):
        return _momentum_gap(sys, x[:n], x[n:], q2_of(x))

    JB = _fd_columns(flow_map, z, B, eps)
    W0 = omega_Ld(sys, q0, q1)
    W1 = omega_Ld(sys, q1, q2)
    pullback = JB.T @ W1 @ JB
    omega = B.T @ W0 @ B
    dc = _fd_columns(gap, z, B, eps)  # column k: derivative of the gap along B_k
    lower = B[n:]  # dq1 parts of the basis vectors
    dxi = dc.T @ lower - lower.T @ dc
    return SymplecticTerms(pullback, omega, dxi)


def check_symplectic_evolution(sys: DiscreteSystem, state: ConfigPair, cfg: StepperConfig | None = None,
                               tangent_basis=None):
    """Normalized residual of F*Omega - Omega - d(xi) (infinity norm)."""
    return symplectic_terms(sys, state, cfg, tangent_basis).residual


def _null_space(M, rtol=RANK_RTOL):
    M = np.atleast_2d(M)
    if M.size == 0:
        return np.eye(M.shape[1])
    _, s, vt = np.linalg.svd(M)
    tol = rtol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


@dataclass
class FlowConditions:
    """Rank data behind the existence of a discrete flow at one triple."""

    tangent_dim: int
    beta_rank: int
    d3_domain: int
    d3_rank: int
    d3_sigma_min: float
    d1_domain: int
    d1_rank: int
    d1_sigma_min: float

    @property
    def injective(self):
        return self.d3_rank == self.d3_domain and self.d1_rank == self.d1_domain


def _restricted_rank(D, N, scale):
    if N.shape[1] == 0:
        return 0, np.inf
    s = np.linalg.svd(D @ N, compute_uv=False)
    if s.size < N.shape[1]:
        return int(np.sum(s > RANK_RTOL * scale)), 0.0
    return int(np.sum(s > RANK_RTOL * scale)), float(s[-1])


def check_flow_conditions(sys: DiscreteSystem, q0, q1, q2):
    """Rank of beta on T D_K and injectivity of D3 beta, D1 beta there.

    Raises :class:`NotOnConstraintError` if the triple is not a trajectory
    triple to 1e-8.  Rank deficiency is reported, never raised.
    """
    q0, q1, q2 = _vec(q0), _vec(q1), _vec(q2)
    n = sys.dim
    res = np.max(np.abs(step_residual(sys, q0, q1, q2)), initial=0.0)
    if res > ON_CONSTRAINT_TOL:
        raise NotOnConstraintError(f"step residual {res:.3e} exceeds {ON_CONSTRAINT_TOL:g}")
    x = np.concatenate([q0, q1, q2])
    eps = FD_REL * (1.0 + np.max(np.abs(x)))
    eye = np.eye(3 * n)
    if sys.n_kinematic:
        K = _fd_columns(lambda y: sys.kinematic_residual(y[:n], y[n:2 * n], y[2 * n:]), x, eye, eps)
    else:
        K = np.zeros((0, 3 * n))
    Dbeta = _fd_columns(lambda y: beta_residual(sys, y[:n], y[n:2 * n], y[2 * n:]), x, eye, eps)
    scale = np.linalg.norm(Dbeta, 2) if Dbeta.size else 0.0
    T = _null_space(K)
    beta_rank, _ = _restricted_rank(Dbeta, T, scale)
    N3 = _null_space(K[:, 2 * n:])
    N1 = _null_space(K[:, :n])
    r3, s3 = _restricted_rank(Dbeta[:, 2 * n:], N3, scale)
    r1, s1 = _restricted_rank(Dbeta[:, :n], N1, scale)
    return FlowConditions(T.shape[1], beta_rank, N3.shape[1], r3, s3, N1.shape[1], r1, s1)


def energy_series(sys: DiscreteSystem, traj: Trajectory):
    """L_d(q_k, q_{k+1}) along the trajectory."""
    pts = traj.points
    return [float(sys.lagrangian(pts[k], pts[k + 1])) for k in range(len(pts) - 1)]


def lyapunov_series(params: PendulumParams, traj: Trajectory):
    """V(q_k, (q_{k+1} - q_{k-1}) / 2h) at interior points."""
    pts = np.asarray(traj.points)
    v = (pts[2:] - pts[:-2]) / (2 * traj.h)
    return list(np.asarray(lyapunov_V(params, pts[1:-1].T, v.T), dtype=float))


@dataclass
class ConvergenceResult:
    pairs: list
    slope: float | None
    failures: list = field(default_factory=list)


def convergence_study(build, ref, seed, h_list, t_end, coordinate_index, cfg=None):
    """Max-error study over step sizes; failed step sizes are skipped and listed.

    ``ref`` is a continuous trajectory or a map h -> continuous trajectory.
    The discrete run for step h has round(t_end / h) steps, so its last
    point sits at t_end.
    """
    pairs, failures = [], []
    for h in h_list:
        try:
            sys = build(h)
            n_points = int(round(t_end / h))
            if abs(n_points * h - t_end) > h:
                raise ValueError(f"h={h} does not divide t_end={t_end}")
            traj = flow(sys, seed(h), max(1, n_points - 1), cfg)
            reference = ref(h) if not hasattr(ref, "samples") else ref
            pairs.append((float(h), max_error(traj, reference, coordinate_index)))
        except (DSOCSError, ValueError, ArithmeticError) as exc:
            failures.append((float(h), str(exc)))
    slope = loglog_slope(pairs) if len(pairs) >= 2 else None
    return ConvergenceResult(pairs, slope, failures)


@dataclass
class DiagnosticsReport:
    symplectic_residual: float
    xi_residual: float
    rank_records: list
    energy_series: list = field(default_factory=list)
    lyapunov_series: list = field(default_factory=list)
    convergence: ConvergenceResult | None = None
    candidate_counts: list = field(default_factory=list)
    antisymmetric: bool = True

    @property
    def full_rank(self):
        return all(r.injective for _, r in self.rank_records)

    @property
    def healthy(self):
        return self.full_rank and self.antisymmetric

    def render(self):
        lines = [
            f"symplectic residual: {self.symplectic_residual:.3e}",
            f"dxi residual: {self.xi_residual:.3e}",
            f"omega antisymmetric: {'yes' if self.antisymmetric else 'NO'}",
            f"rank records: {len(self.rank_records)}, all injective: {'yes' if self.full_rank else 'NO'}",
        ]
        bad = [(k, r) for k, r in self.rank_records if not r.injective]
        for k, r in bad[:10]:
            lines.append(f"  rank deficient at k={k}: D3 {r.d3_rank}/{r.d3_domain}, D1 {r.d1_rank}/{r.d1_domain}")
        if self.rank_records:
            s3 = min(r.d3_sigma_min for _, r in self.rank_records)
            s1 = min(r.d1_sigma_min for _, r in self.rank_records)
            lines.append(f"smallest singular values: D3 {s3:.3e}, D1 {s1:.3e}")
        for name, series in (("energy", self.energy_series), ("lyapunov", self.lyapunov_series)):
            if series:
                arr = np.asarray(series)
                lines.append(
                    f"{name}: first {arr[0]:.10g}, min {arr.min():.10g}, max {arr.max():.10g}, last {arr[-1]:.10g}"
                )
        if self.candidate_counts:
            counts = np.bincount(np.asarray(self.candidate_counts, dtype=int))
            hist = ", ".join(f"{c} roots: {m}" for c, m in enumerate(counts) if m)
            lines.append(f"candidate counts: {hist}")
        if self.convergence is not None:
            for h, err in self.convergence.pairs:
                lines.append(f"h={h:g} error={err:.6e}")
            if self.convergence.slope is not None:
                lines.append(f"slope: {self.convergence.slope:.4f}")
        return "\n".join(lines) + "\n"


def diagnose(sys: DiscreteSystem, traj: Trajectory, cfg: StepperConfig | None = None,
             samples: int = 20, rank_stride: int = 1):
    """Run the structural checks along a computed trajectory.

    The symplectic identity is checked at ``samples`` evenly spaced pairs;
    flow conditions at every ``rank_stride``-th interior triple.
    """
    pts = traj.points
    n_pairs = len(pts) - 2
    picks = np.unique(np.linspace(0, n_pairs - 1, min(samples, n_pairs)).astype(int)) if samples else []
    sym, xi, anti = 0.0, 0.0, True
    for k in picks:
        terms = symplectic_terms(sys, ConfigPair(pts[k], pts[k + 1]), cfg)
        sym = max(sym, terms.residual)
        xi = max(xi, terms.xi_residual)
        anti = anti and is_antisymmetric(omega_Ld(sys, pts[k], pts[k + 1]))
    ranks = [
        (k, check_flow_conditions(sys, pts[k - 1], pts[k], pts[k + 1]))
        for k in range(1, len(pts) - 1, max(1, rank_stride))
    ]
    report = DiagnosticsReport(
        symplectic_residual=sym,
        xi_residual=xi,
        rank_records=ranks,
        energy_series=energy_series(sys, traj),
        candidate_counts=[r.candidate_count for r in traj.records],
        antisymmetric=anti,
    )
    if isinstance(sys.params, PendulumParams):
        report.lyapunov_series = lyapunov_series(sys.params, traj)
    return report
