"""
Local conservation audit.

Solves the Bercovier-Engelman problem on a distorted grid with each
scheme, then recomputes every control-volume balance directly from
the solution vector: net face flux minus source integral per volume.
Every scheme uses flux-form continuity rows, so mass balances over
each pressure box to machine precision across the board.  Momentum is
additionally balanced over the velocity control volumes wherever the
momentum rows are flux-form: all volumes for the overlapping and
non-overlapping schemes, the vertex boxes for the hybrid scheme.  The
Galerkin momentum rows of the fem scheme have no such balance, so its
momentum column reads n/a.

Any union of pressure boxes inherits the box balances, since shared
faces cancel; the last column checks a random 50-box union.

Run from the repository root:

    python3 demos/conservation_audit.py
"""
import numpy as np

from cvstokes.geometry import build
from cvstokes.mesh import distort, generate_structured
from cvstokes.schemes import assemble
from cvstokes.solver import direct_solve
from cvstokes.verification import (
    bercovier_engelman_case,
    conservation_audit,
    region_mass_balance,
)

case = bercovier_engelman_case()
mesh = case.apply_bc(distort(generate_structured(16, 16), 0.2, seed=3))
rng = np.random.default_rng(0)

print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_elements} triangles")
print()
header = f"{'scheme':>16} {'mass resid':>12} {'momentum resid':>15} {'union resid':>12}"
print(header + "   (all relative to the largest face flux)")
for scheme in ("non-overlapping", "overlapping", "hybrid", "fem"):
    disc = build(mesh, scheme)
    problem = case.problem()
    x = direct_solve(assemble(disc, problem))
    audit = conservation_audit(disc, x, problem)
    mass = np.max(np.abs(audit.mass_residuals)) / audit.max_mass_flux
    if audit.momentum_audited.any():
        res = np.linalg.norm(audit.momentum_residuals, axis=1)
        mom = np.max(res[audit.momentum_interior]) / audit.max_momentum_flux
        mom_s = f"{mom:15.2e}"
    else:
        mom_s = f"{'n/a':>15}"
    boxes = rng.choice(disc.n_pressure_dofs, size=50, replace=False)
    union = abs(region_mass_balance(disc, x, problem, boxes)) / audit.max_mass_flux
    print(f"{scheme:>16} {mass:12.2e} {mom_s} {union:12.2e}")
