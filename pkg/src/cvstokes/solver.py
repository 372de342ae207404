"""Preconditioned iterative solution of the saddle-point systems.

The preconditioner is block triangular: exact application of the inverse
of the velocity block A, and the inverse of a Schur-complement surrogate
for the pressure block, here the pressure mass matrix scaled by
1 / (2 mu).  Applied to a residual (r_u, r_p) it returns

    z_u = A^{-1} r_u
    z_p = S^{-1} (r_p - C z_u)

with both inverses realized by sparse LU factorizations.  The Krylov
solver is a non-restarted left-preconditioned GMRes that terminates when
the Euclidean norm of the preconditioned residual has dropped by a given
factor relative to its initial value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular
from scipy.sparse.linalg import splu

from .basis import barycentric, triangle_rule
from .geometry import GridDiscretization
from .schemes import SaddleSystem

MASS_QUAD_DEGREE = 2


def assemble_pressure_mass(disc: GridDiscretization, viscosity: float) -> sp.csr_matrix:
    """Vertex-pressure mass matrix scaled by 1 / (2 mu).

    Uses a degree-2 volume rule, which integrates the products of hat
    functions exactly.
    """
    rule = triangle_rule(MASS_QUAD_DEGREE)
    lam = barycentric(rule.points)              # (nq, 3)
    ref_block = np.einsum("q,qi,qj->ij", rule.weights, lam, lam)
    areas = disc.elements.areas
    blocks = (2.0 * areas)[:, None, None] * ref_block[None] / (2.0 * viscosity)
    tri = disc.mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n_p = disc.n_pressure_dofs
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n_p, n_p)).tocsr()


def random_initial_guess(disc: GridDiscretization, seed: int) -> np.ndarray:
    """Uniform [-1, 1] start vector, zeroed on Dirichlet velocity dofs."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=disc.n_dofs)
    dverts = disc.mesh.dirichlet_vertices()
    x[2 * dverts] = 0.0
    x[2 * dverts + 1] = 0.0
    return x


@dataclass
class BlockPreconditioner:
    """Block-triangular preconditioner with exact LU sub-solves."""

    lu_A: object
    lu_S: object
    C: sp.csr_matrix
    n_velocity: int

    @classmethod
    def build(cls, system: SaddleSystem, schur_approx: sp.spmatrix) -> "BlockPreconditioner":
        lu_A = splu(system.A.tocsc())
        lu_S = splu(sp.csc_matrix(schur_approx))
        return cls(lu_A=lu_A, lu_S=lu_S, C=system.C, n_velocity=system.n_velocity)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r_u = r[: self.n_velocity]
        r_p = r[self.n_velocity :]
        z_u = self.lu_A.solve(r_u)
        z_p = self.lu_S.solve(r_p - self.C @ z_u)
        return np.concatenate((z_u, z_p))


@dataclass
class SolveReport:
    """Outcome of a linear solve."""

    solution: np.ndarray
    iterations: int
    relative_residual: float
    converged: bool
    residual_history: np.ndarray = field(repr=False, default=None)


def gmres_solve(
    system: SaddleSystem,
    preconditioner: BlockPreconditioner | None = None,
    x0: np.ndarray | None = None,
    reduction: float = 1e10,
    max_iterations: int = 500,
) -> SolveReport:
    """Non-restarted left-preconditioned GMRes.

    Stops once the preconditioned residual norm has been reduced by
    `reduction` relative to its value at `x0` (zero if omitted).  The
    residual norm comes for free from the Givens recurrence, so each
    iteration costs one operator and one preconditioner application.
    """
    J = system.matrix()
    b = system.rhs()
    n = b.shape[0]
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)

    def precondition(r):
        return preconditioner.apply(r) if preconditioner is not None else r

    r0 = b - J @ x0
    z0 = precondition(r0)
    beta = float(np.linalg.norm(z0))
    if beta == 0.0:
        return SolveReport(x0.copy(), 0, 0.0, True, np.zeros(1))

    target = beta / reduction
    V = [z0 / beta]
    H = np.zeros((max_iterations + 1, max_iterations))
    cs = np.zeros(max_iterations)
    sn = np.zeros(max_iterations)
    g = np.zeros(max_iterations + 1)
    g[0] = beta
    history = [beta]

    m = 0
    converged = False
    for j in range(max_iterations):
        w = precondition(J @ V[j])
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        h_next = float(np.linalg.norm(w))
        H[j + 1, j] = h_next

        # Apply accumulated rotations, then the new one.
        for i in range(j):
            hi, hj = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * hi + sn[i] * hj
            H[i + 1, j] = -sn[i] * hi + cs[i] * hj
        denom = np.hypot(H[j, j], H[j + 1, j])
        cs[j] = H[j, j] / denom
        sn[j] = H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        m = j + 1
        history.append(abs(g[j + 1]))
        if history[-1] <= target or h_next == 0.0:
            # A vanishing h_next means the Krylov space became invariant,
            # which drives the recurrence residual to zero as well.
            converged = True
            break
        V.append(w / h_next)

    y = solve_triangular(H[:m, :m], g[:m], lower=False)
    x = x0 + np.column_stack(V[:m]) @ y
    rel = history[-1] / beta
    return SolveReport(x, m, float(rel), converged, np.asarray(history))


def direct_solve(system: SaddleSystem, refine: int = 1) -> np.ndarray:
    """Sparse LU solve of the full saddle-point system.

    `refine` steps of iterative refinement push the per-row backward error
    to the round-off of the residual evaluation itself, which matters when
    flux balances of the solution are inspected directly.
    """
    J = system.matrix().tocsc()
    b = system.rhs()
    lu = splu(J)
    x = lu.solve(b)
    for _ in range(refine):
        x += lu.solve(b - J @ x)
    return x
