"""Pressure-mass Schur surrogate, preconditioner, GMRes, direct solve."""

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from conftest import random_distorted_mesh, single_triangle_mesh
from cvstokes.geometry import build
from cvstokes.mesh import BCKind, generate_structured
from cvstokes.schemes import StokesProblem, assemble
from cvstokes.solver import (
    BlockPreconditioner,
    assemble_pressure_mass,
    direct_solve,
    gmres_solve,
    random_initial_guess,
)
from cvstokes.verification import donea_huerta_case

MIXED = {"right": BCKind.NEUMANN, "top": BCKind.NEUMANN}


class _StubSystem:
    """Minimal stand-in exposing matrix() and rhs() for the Krylov solver."""

    def __init__(self, J, b):
        self._J = sp.csr_matrix(np.asarray(J, dtype=float))
        self._b = np.asarray(b, dtype=float)

    def matrix(self):
        return self._J

    def rhs(self):
        return self._b


class _StubPreconditioner:
    def __init__(self, J):
        self._inv = np.linalg.inv(np.asarray(J, dtype=float))

    def apply(self, r):
        return self._inv @ r


def _small_system(scheme="overlapping", n=6, seed=21):
    case = donea_huerta_case()
    mesh = case.apply_bc(random_distorted_mesh(seed, n=n))
    disc = build(mesh, scheme)
    system = assemble(disc, case.problem())
    return disc, system


def test_pressure_mass_reference_triangle():
    disc = build(single_triangle_mesh(), "fem")
    M = assemble_pressure_mass(disc, viscosity=0.5).toarray()
    want = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    assert np.allclose(M, want, atol=1e-15)


def test_pressure_mass_scaling_and_spd():
    disc = build(random_distorted_mesh(20, n=4), "overlapping")
    M1 = assemble_pressure_mass(disc, viscosity=1.0)
    M2 = assemble_pressure_mass(disc, viscosity=2.0)
    assert np.allclose(M2.toarray(), 0.5 * M1.toarray(), atol=1e-15)
    # Entries of the unscaled mass matrix sum to the mesh area.
    assert M1.sum() == pytest.approx(0.5 * 1.0, rel=1e-12)
    dense = M1.toarray()
    assert np.allclose(dense, dense.T, atol=1e-15)
    assert np.min(np.linalg.eigvalsh(dense)) > 0.0


def test_random_initial_guess():
    disc, _ = _small_system(n=4)
    x1 = random_initial_guess(disc, seed=5)
    x2 = random_initial_guess(disc, seed=5)
    x3 = random_initial_guess(disc, seed=6)
    assert np.array_equal(x1, x2)
    assert not np.array_equal(x1, x3)
    assert x1.shape == (disc.n_dofs,)
    assert np.max(np.abs(x1)) <= 1.0
    dverts = disc.mesh.dirichlet_vertices()
    assert np.all(x1[2 * dverts] == 0.0)
    assert np.all(x1[2 * dverts + 1] == 0.0)
    # Other entries are generically nonzero.
    assert np.count_nonzero(x1) > disc.n_dofs - 2 * dverts.size - 2


def test_block_preconditioner_identities():
    disc, system = _small_system(n=5)
    S = assemble_pressure_mass(disc, viscosity=1.0)
    precond = BlockPreconditioner.build(system, S)
    rng = np.random.default_rng(0)
    r = rng.standard_normal(system.n_dofs)
    z = precond.apply(r)
    r_u = r[: system.n_velocity]
    r_p = r[system.n_velocity :]
    z_u = z[: system.n_velocity]
    z_p = z[system.n_velocity :]
    assert np.allclose(system.A @ z_u, r_u, atol=1e-10)
    assert np.allclose(S @ z_p, r_p - system.C @ z_u, atol=1e-10)
    # apply() is linear
    z2 = precond.apply(2.0 * r)
    assert np.allclose(z2, 2.0 * z, atol=1e-10)


def test_gmres_identity_system():
    b = np.array([3.0, -1.0, 2.0, 0.5])
    report = gmres_solve(_StubSystem(np.eye(4), b))
    assert report.converged
    assert report.iterations == 1
    assert np.allclose(report.solution, b, atol=1e-14)


def test_gmres_zero_residual_short_circuits():
    rng = np.random.default_rng(1)
    J = rng.standard_normal((5, 5)) + 5.0 * np.eye(5)
    report = gmres_solve(_StubSystem(J, np.zeros(5)))
    assert report.converged
    assert report.iterations == 0
    assert np.allclose(report.solution, 0.0, atol=1e-15)
    # Starting from the exact solution still converges to it.
    x = rng.standard_normal(5)
    report = gmres_solve(_StubSystem(J, J @ x), x0=x)
    assert report.converged
    assert np.allclose(report.solution, x, atol=1e-12)


def test_gmres_exact_preconditioner_converges_immediately():
    rng = np.random.default_rng(2)
    J = rng.standard_normal((8, 8)) + 8.0 * np.eye(8)
    b = rng.standard_normal(8)
    system = _StubSystem(J, b)
    report = gmres_solve(system, preconditioner=_StubPreconditioner(J))
    assert report.converged
    assert report.iterations <= 2
    assert np.allclose(J @ report.solution, b, atol=1e-9)


def test_gmres_dense_comparison():
    rng = np.random.default_rng(3)
    J = rng.standard_normal((30, 30)) + 10.0 * np.eye(30)
    b = rng.standard_normal(30)
    report = gmres_solve(_StubSystem(J, b), reduction=1e12, max_iterations=60)
    assert report.converged
    want = np.linalg.solve(J, b)
    assert np.allclose(report.solution, want, atol=1e-9)


def test_gmres_residual_history_monotone():
    disc, system = _small_system(n=6)
    S = assemble_pressure_mass(disc, viscosity=1.0)
    precond = BlockPreconditioner.build(system, S)
    x0 = random_initial_guess(disc, seed=2)
    report = gmres_solve(system, precond, x0, reduction=1e10)
    assert report.converged
    h = report.residual_history
    assert h.shape[0] == report.iterations + 1
    assert np.all(h[1:] <= h[:-1] * (1.0 + 1e-12))
    assert report.relative_residual <= 1e-10
    # The true residual dropped along with the preconditioned one.
    res = system.residual(report.solution)
    assert np.linalg.norm(res) <= 1e-6 * np.linalg.norm(system.residual(x0))


def test_gmres_respects_iteration_cap():
    disc, system = _small_system(n=6)
    S = assemble_pressure_mass(disc, viscosity=1.0)
    precond = BlockPreconditioner.build(system, S)
    report = gmres_solve(system, precond, reduction=1e16, max_iterations=3)
    assert not report.converged
    assert report.iterations == 3


def test_gmres_solution_solves_saddle_system():
    disc, system = _small_system(n=8)
    S = assemble_pressure_mass(disc, viscosity=1.0)
    precond = BlockPreconditioner.build(system, S)
    x0 = random_initial_guess(disc, seed=17)
    report = gmres_solve(system, precond, x0)
    want = spla.spsolve(system.matrix().tocsc(), system.rhs())
    scale = np.max(np.abs(want))
    assert np.max(np.abs(report.solution - want)) <= 1e-7 * scale


def test_direct_solve_matches_spsolve():
    _, system = _small_system(n=5)
    x = direct_solve(system)
    want = spla.spsolve(system.matrix().tocsc(), system.rhs())
    assert np.allclose(x, want, atol=1e-9 * max(1.0, np.max(np.abs(want))))
    x0 = direct_solve(system, refine=0)
    assert np.allclose(x0, want, atol=1e-9 * max(1.0, np.max(np.abs(want))))


def test_direct_solve_refinement_tightens_residual():
    _, system = _small_system(n=10)
    b = system.rhs()
    scale = np.linalg.norm(b)
    refined = system.residual(direct_solve(system, refine=1))
    assert np.linalg.norm(refined) <= 1e-13 * scale
