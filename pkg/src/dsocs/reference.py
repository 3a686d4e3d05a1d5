"""Continuous-time ground truth for the two worked systems.

The particle has a closed-form orbit.  The pendulum is integrated with
classical RK4; :func:`pendulum_reference` runs a compiled closed-form version
of the same dynamics, which is what long error studies use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConstraintDegeneracyError
from .numerics import linear_solve
from .systems import PendulumParams, dissipation_F, lyapunov_gradients

ROW_FLOOR = 1e-10


def particle_exact(t):
    """Unit-curvature orbit through the origin with initial velocity (1, 1)."""
    w = math.sqrt(2.0)
    arg = w * np.asarray(t, dtype=float) - math.pi / 4
    return np.stack([np.cos(arg) - w / 2, np.sin(arg) + w / 2], axis=-1)


def pendulum_system(params: PendulumParams, q, qdot):
    """The 2x2 linear system ``(A, b)`` whose solution is the acceleration.

    Row one is the unforced theta equation of motion, row two is
    dV/dt + F = 0 written out as a linear equation in the accelerations.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    I, J, M = params.I, params.J, params.M
    dV_dq, dV_dqdot = lyapunov_gradients(params, q, qdot)
    A = np.array([[I + J, J], [dV_dqdot[0], dV_dqdot[1]]], dtype=float)
    rhs2 = -dissipation_F(params, q, qdot) - (dV_dq[0] * qdot[0] + dV_dq[1] * qdot[1])
    b = np.array([M * math.sin(q[0]), rhs2], dtype=float)
    return A, b


def pendulum_accel(params: PendulumParams, q, qdot):
    """(theta'', psi'') from the constrained continuous dynamics.

    Raises :class:`ConstraintDegeneracyError` when the constraint row has
    vanishing coefficients (at zero velocity the constraint says nothing
    about the accelerations).
    """
    A, b = pendulum_system(params, q, qdot)
    if np.max(np.abs(A[1])) < ROW_FLOOR:
        raise ConstraintDegeneracyError("Lyapunov constraint row vanishes; accelerations undetermined")
    return linear_solve(A, b)


def pendulum_multiplier(params: PendulumParams, q, qdot):
    """Constraint force on the wheel, -J (theta'' + psi'')."""
    acc = pendulum_accel(params, q, qdot)
    return -params.J * (acc[0] + acc[1])


@dataclass(frozen=True)
class ContinuousTrajectory:
    """Samples ``q(t0 + i*dt)`` with linear interpolation in between."""

    t0: float
    dt: float
    samples: np.ndarray
    velocities: np.ndarray | None = None

    @property
    def t_end(self):
        return self.t0 + self.dt * (len(self.samples) - 1)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.samples))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-9 * max(1.0, abs(self.t_end))
        if np.any(t < self.t0 - slack) or np.any(t > self.t_end + slack):
            raise ValueError(f"time outside [{self.t0}, {self.t_end}]")
        s = np.clip((t - self.t0) / self.dt, 0.0, len(self.samples) - 1)
        i = np.minimum(np.floor(s).astype(int), len(self.samples) - 2)
        w = (s - i)[..., None]
        # snap to stored samples when t is a multiple of dt up to roundoff
        w = np.where(np.abs(w) < 1e-9, 0.0, np.where(np.abs(w - 1) < 1e-9, 1.0, w))
        out = (1 - w) * self.samples[i] + w * self.samples[i + 1]
        return out


def sampled_reference(fn, dt, t_end):
    """Tabulate a closed-form solution ``fn(t)`` on the grid ``0, dt, ..., t_end``."""
    t = dt * np.arange(_step_count(dt, t_end) + 1)
    values = np.asarray(fn(t), dtype=float).reshape(len(t), -1)
    return ContinuousTrajectory(0.0, dt, values)


def _step_count(h_ref, t_end):
    if not h_ref > 0:
        raise ValueError("h_ref must be positive")
    if not t_end >= 0:
        raise ValueError("t_end must be nonnegative")
    return max(1, int(round(t_end / h_ref)))


def rk4_flow(accel, q0, qdot0, h_ref, t_end, sample_every=1):
    """Classical RK4 on the first-order form of ``q'' = accel(q, q')``.

    Every ``sample_every``-th state is kept; the step count is
    ``round(t_end / h_ref)``.
    """
    n = _step_count(h_ref, t_end)
    q = np.array(q0, dtype=float)
    v = np.array(qdot0, dtype=float)
    keep = [q.copy()]
    keep_v = [v.copy()]
    h = float(h_ref)
    for k in range(1, n + 1):
        a1 = accel(q, v)
        q2, v2 = q + 0.5 * h * v, v + 0.5 * h * a1
        a2 = accel(q2, v2)
        q3, v3 = q + 0.5 * h * v2, v + 0.5 * h * a2
        a3 = accel(q3, v3)
        q4, v4 = q + h * v3, v + h * a3
        a4 = accel(q4, v4)
        q = q + h / 6 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        if k % sample_every == 0:
            keep.append(q.copy())
            keep_v.append(v.copy())
    return ContinuousTrajectory(0.0, h * sample_every, np.array(keep), np.array(keep_v))


@numba.njit(cache=True)
def _pendulum_rhs(y, c):
    I, J, M, d, e, chi, n, rho, hc, gc = c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8], c[9]
    th, ps, thd, psd = y[0], y[1], y[2], y[3]
    mom = (I + J) * thd + J * psd
    s = thd + psd
    u = gc * mom + hc * J * s
    g = -chi * math.sin(ps - n * th) / (d * I * J) + M * math.sin(th) / hc * (gc - e / (d * I))
    mom_dot = M * math.sin(th)
    s_dot = -(g + rho * math.tanh(u)) / J
    thdd = (mom_dot - J * s_dot) / I
    out = np.empty(4)
    out[0] = thd
    out[1] = psd
    out[2] = thdd
    out[3] = s_dot - thdd
    return out


@numba.njit(cache=True)
def _pendulum_rk4(y0, c, h, n, every):
    m = n // every + 1
    out = np.empty((m, 4))
    y = y0.copy()
    out[0] = y
    j = 1
    for k in range(1, n + 1):
        k1 = _pendulum_rhs(y, c)
        k2 = _pendulum_rhs(y + 0.5 * h * k1, c)
        k3 = _pendulum_rhs(y + 0.5 * h * k2, c)
        k4 = _pendulum_rhs(y + h * k3, c)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % every == 0:
            out[j] = y
            j += 1
    return out


def pendulum_closed_form_accel(params: PendulumParams, q, qdot):
    """Acceleration from the closed-form elimination of the constraint.

    Agrees with :func:`pendulum_accel` wherever that is defined, and stays
    regular where the 2x2 system loses rank (u = 0).
    """
    y = np.concatenate([np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)])
    return _pendulum_rhs(y, _constants(params))[2:]


def _constants(p: PendulumParams):
    return np.array([p.I, p.J, p.M, p.d, p.e, p.chi, p.n, p.rho, p.hc, p.gc], dtype=float)


def pendulum_reference(params: PendulumParams, q0, qdot0, h_ref, t_end, sample_every=1):
    """Compiled RK4 of the pendulum dynamics; same contract as :func:`rk4_flow`."""
    n = _step_count(h_ref, t_end)
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")
    y0 = np.concatenate([np.asarray(q0, dtype=float), np.asarray(qdot0, dtype=float)])
    out = _pendulum_rk4(y0, _constants(params), float(h_ref), n, int(sample_every))
    return ContinuousTrajectory(0.0, h_ref * sample_every, out[:, :2].copy(), out[:, 2:].copy())


def max_error(traj, ref: ContinuousTrajectory, coordinate_index: int):
    """Largest deviation of one coordinate from the reference at t_k = k h."""
    pts = np.asarray(traj.points)
    ts = np.arange(len(pts)) * traj.h
    return float(np.max(np.abs(pts[:, coordinate_index] - ref(ts)[:, coordinate_index])))
