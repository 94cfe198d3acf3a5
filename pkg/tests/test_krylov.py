import numpy as np
import pytest
import scipy.sparse.linalg as spla

from divhdg.condense import build_condensed_monolithic
from divhdg.krylov import minres, operator_condensed, pressure_mean_projector
from divhdg.linalg import NotSPD
from divhdg.precond import build_asp, build_schur

from conftest import pipeline


def _ident(v):
    return v.copy()


class TestSmallSystems:
    def test_identity_converges_immediately(self):
        b = np.array([1.0, -2.0, 3.0])
        x, rep = minres(_ident, _ident, b)
        assert rep.iterations == 1
        assert rep.converged
        assert np.allclose(x, b, atol=1e-12)

    def test_finite_termination_on_three_eigenvalues(self):
        d = np.array([1.0, 2.0, 3.0])
        b = np.array([1.0, 1.0, 1.0])
        x, rep = minres(lambda v: d * v, _ident, b, tol=1e-12)
        assert rep.iterations <= 3
        assert np.allclose(x, b / d, atol=1e-10)

    def test_indefinite_operator_handled(self):
        d = np.array([2.0, -1.0, 0.5, -3.0])
        b = np.ones(4)
        x, rep = minres(lambda v: d * v, _ident, b, tol=1e-12)
        assert rep.converged
        assert np.allclose(x, b / d, atol=1e-9)

    def test_non_spd_preconditioner_detected(self):
        b = np.ones(3)
        with pytest.raises(NotSPD):
            minres(_ident, lambda v: -v, b)


class TestReport:
    def test_history_starts_at_one_and_decreases(self):
        d = np.array([3.0, 1.0, -2.0, 5.0, 0.25])
        b = np.arange(1.0, 6.0)
        _, rep = minres(lambda v: d * v, _ident, b, tol=1e-10)
        h = np.array(rep.history)
        assert h[0] == 1.0
        assert np.all(np.diff(h) <= 1e-15)
        assert rep.converged
        assert h[-1] <= 1e-10

    def test_deterministic_for_fixed_seed(self):
        d = np.linspace(1.0, 9.0, 30)
        b = np.sin(np.arange(30.0))
        _, r1 = minres(lambda v: d * v, _ident, b, tol=1e-9, seed=11)
        _, r2 = minres(lambda v: d * v, _ident, b, tol=1e-9, seed=11)
        assert r1.iterations == r2.iterations
        assert np.array_equal(np.array(r1.history), np.array(r2.history))

    def test_seed_changes_start_vector(self):
        d = np.linspace(1.0, 9.0, 30)
        b = np.sin(np.arange(30.0))
        _, r1 = minres(lambda v: d * v, _ident, b, tol=1e-9, seed=1)
        _, r2 = minres(lambda v: d * v, _ident, b, tol=1e-9, seed=2)
        assert list(r1.history) != list(r2.history)

    def test_maxit_reports_unconverged(self):
        d = np.linspace(1.0, 1e4, 200)
        b = np.ones(200)
        _, rep = minres(lambda v: d * v, _ident, b, tol=1e-14, maxit=3)
        assert not rep.converged
        assert rep.iterations == 3


class TestCondensedOperator:
    def test_symmetry(self, cavity22):
        *_, cond = cavity22
        op = operator_condensed(cond)
        rng = np.random.default_rng(0)
        n = cond.n_free + cond.n_pbar
        for _ in range(20):
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            kxy, kyx = np.dot(op(x), y), np.dot(x, op(y))
            assert abs(kxy - kyx) <= 1e-12 * max(abs(kxy), 1.0)

    def test_exact_solution_residual(self, cavity22):
        *_, cond = cavity22
        km, fm = build_condensed_monolithic(cond)
        z = spla.spsolve(km.tocsc(), fm)
        op = operator_condensed(cond)
        r = op(z) - fm
        assert np.linalg.norm(r) <= 1e-12 * np.linalg.norm(fm)

    def test_pressure_block_in_incompressible_limit(self, cavity22_stokes):
        *_, cond = cavity22_stokes
        op = operator_condensed(cond)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(cond.n_free + cond.n_pbar)
        y = op(x)
        assert np.array_equal(y[cond.n_free :], cond.B_g @ x[: cond.n_free])


class TestFullSolve:
    def test_reference_cavity_iteration_band(self):
        # driven cavity, k=2, 1/h=8, viscous incompressible limit: the
        # published count for this configuration is 57; the substitution
        # band allows up to 1.5x
        mesh, spaces, ess, block, cond = pipeline(
            "cavity", 8, 2, mu=1.0, tau=0.0, inv_lambda=0.0
        )
        asp = build_asp(cond)
        schur = build_schur(mesh, block.params)
        n_u = cond.n_free

        def pinv(r):
            return np.concatenate([asp.apply(r[:n_u]), schur.apply(r[n_u:])])

        proj = pressure_mean_projector(n_u, cond.n_pbar)
        rhs = np.concatenate([cond.F_g, cond.F_pbar])
        x, rep = minres(
            operator_condensed(cond), pinv, rhs, tol=1e-8, maxit=1000, project=proj
        )
        assert rep.converged
        assert rep.iterations <= 86

    def test_solution_satisfies_condensed_system(self, cavity22):
        *_, cond = cavity22
        asp = build_asp(cond)
        schur = build_schur(cond.spaces.mesh, cond.block.params)
        n_u = cond.n_free

        def pinv(r):
            return np.concatenate([asp.apply(r[:n_u]), schur.apply(r[n_u:])])

        km, fm = build_condensed_monolithic(cond)
        x, rep = minres(operator_condensed(cond), pinv, fm, tol=1e-10, maxit=500)
        assert rep.converged
        res = np.linalg.norm(km @ x - fm) / np.linalg.norm(fm)
        assert res <= 1e-8
