"""Symplectic evolution identity and flow-existence ranks on small systems.

Run with ``python demos/structure_checks.py``.
"""
# %%
import numpy as np

from dsocs import ConfigPair, flow, make_particle, make_pendulum, make_test_systems
from dsocs.diagnostics import check_flow_conditions, symplectic_terms

# %% [markdown]
# For each system: pullback of Omega_Ld by the flow minus Omega_Ld minus d(xi),
# relative to the size of Omega_Ld.  Unconstrained flows have d(xi) = 0.

# %%
cases = dict(make_test_systems())
cases["particle"] = make_particle()
cases["pendulum"] = make_pendulum()
seeds = {
    "free": ([0.0, 0.0], [0.1, 0.05]),
    "harmonic": ([1.0], [0.995]),
    "linear-constraint": ([0.0, 0.0], [0.2, -0.1]),
    "knife-edge": ([0.0, 0.5, 0.0], [0.1, 0.55, 0.0525]),
    "holonomic": ([1.0, 0.3], [0.98, 0.3]),
    "particle": ([0.0, 0.0], [0.1, 0.1]),
    "pendulum": ([0.5, 0.0], [0.5, 0.05]),
}
for name, sys_ in cases.items():
    traj = flow(sys_, ConfigPair(*seeds[name]), 50)
    pts = traj.points
    terms = symplectic_terms(sys_, ConfigPair(pts[10], pts[11]))
    fc = check_flow_conditions(sys_, pts[10], pts[11], pts[12])
    print(f"{name:18s} residual {terms.residual:.1e}  |dxi| {terms.xi_residual:.1e}  "
          f"injective {fc.injective}  sigma_min {min(fc.d3_sigma_min, fc.d1_sigma_min):.3g}")

# %% [markdown]
# On the holonomic system the flow restricted to a leaf y = const is a
# symplectomorphism: d(xi) vanishes on leaf-tangent directions.

# %%
sys_ = cases["holonomic"]
leaf = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
terms = symplectic_terms(sys_, ConfigPair([1.0, 0.3], [0.98, 0.3]), tangent_basis=leaf)
print(f"leaf-restricted residual {terms.residual:.1e}, |dxi| on the leaf {terms.xi_residual:.1e}")
