"""Error against the exact particle orbit and the pendulum reference.

Run with ``python demos/convergence_study.py``; the pendulum part takes a
couple of minutes.
"""
# %%
import numpy as np

from dsocs import ConfigPair, PendulumParams, make_particle, make_pendulum
from dsocs.diagnostics import convergence_study
from dsocs.numerics import loglog_slope
from dsocs.reference import particle_exact, pendulum_reference, sampled_reference
from dsocs.systems import ParticleParams

# %%
t_end = 500.0
particle = convergence_study(
    lambda h: make_particle(ParticleParams(h=h)),
    lambda h: sampled_reference(particle_exact, h, t_end),
    lambda h: ConfigPair([0.0, 0.0], [h, h]),
    [0.2, 0.1, 0.05, 0.025], t_end, 0,
)
for h, e in particle.pairs:
    print(f"particle h={h:<6g} max x-error {e:.4f}")
print(f"slope over all step sizes: {particle.slope:.3f}")

# %% [markdown]
# The x-error is bounded by the orbit diameter, so it saturates once the
# phase lag approaches pi (h = 0.2 and h = 0.1 over [0, 500]).  Dropping the
# saturated point shows the underlying rate.

# %%
print(f"slope without h=0.2: {loglog_slope(particle.pairs[1:]):.3f}")
print(f"slope of the two finest: {loglog_slope(particle.pairs[2:]):.3f}")

# %%
params = PendulumParams()
q0, qdot0 = np.array([0.5, 0.0]), np.array([0.0, 0.5])
t_end = 2000.0
pendulum = convergence_study(
    lambda h: make_pendulum(PendulumParams(h=h)),
    lambda h: pendulum_reference(params, q0, qdot0, h / 100, t_end, sample_every=100),
    lambda h: ConfigPair(q0, q0 + h * qdot0),
    [0.2, 0.1, 0.05], t_end, 0,
)
for h, e in pendulum.pairs:
    print(f"pendulum h={h:<6g} max theta-error {e:.4f}")
print(f"slope: {pendulum.slope:.3f}")
