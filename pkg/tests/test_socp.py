"""Tests for the second-order cone solver.

The main battery solves programs whose optima are known by construction
(a KKT point of a convex program is a global minimizer), so no external
solver is needed as a reference.
"""

import os

import numpy as np
import pytest
import scipy.optimize
from numpy.testing import assert_allclose

from iirpl import socp
from iirpl.errors import DimensionMismatch
from testutils import known_optimum_program, primal_violation

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


class TestKnownOptimumBattery:
    """50 random mixed LP/SOC programs in at most 10 variables."""

    def test_battery(self):
        rng = np.random.default_rng(20260817)
        for i in range(50):
            prog, u_star, obj_star = known_optimum_program(rng)
            sol = socp.solve(prog, tol=1e-9)
            assert sol.status == "optimal", f"program {i}: {sol.status}"
            denom = max(1.0, abs(obj_star))
            assert abs(sol.primal_obj - obj_star) / denom <= 1e-3, f"program {i}"
            # feasibility recomputed from the raw data, not solver bookkeeping
            assert primal_violation(prog, sol.u) <= 1e-6, f"program {i}"
            assert max(sol.residuals.values()) <= 1e-8, f"program {i}"

    def test_duality_gap_closes(self):
        rng = np.random.default_rng(99)
        prog, _, obj_star = known_optimum_program(rng)
        sol = socp.solve(prog)
        assert abs(sol.primal_obj - sol.dual_obj) <= 1e-6 * max(1.0, abs(sol.primal_obj))
        assert sol.iterations > 0


class TestAnalyticSolutions:
    def test_linear_over_ball(self):
        # min c'u over ||u|| <= 1 has value -||c|| at u = -c/||c||
        rng = np.random.default_rng(1)
        for _ in range(5):
            n = int(rng.integers(2, 8))
            c = rng.normal(size=n)
            prog = socp.ConeProgram(
                q=c, G_lin=np.zeros((0, n)), h_lin=np.zeros(0),
                socs=(socp.SocBlock(A=np.eye(n), b=np.zeros(n),
                                    c=np.zeros(n), d=1.0),))
            sol = socp.solve(prog)
            assert sol.status == "optimal"
            assert_allclose(sol.primal_obj, -np.linalg.norm(c), rtol=1e-7)
            assert_allclose(sol.u, -c / np.linalg.norm(c), atol=1e-6)

    @pytest.mark.parametrize("shift", [0.0, 2.5])
    def test_projection_onto_box(self, shift):
        # min ||u - p|| with lo <= u <= hi; optimum is the clipped point
        rng = np.random.default_rng(2)
        n = 4
        p = rng.normal(size=n) + shift
        lo, hi = -np.ones(n), np.ones(n)
        nv = n + 1
        q = np.zeros(nv)
        q[-1] = 1.0
        G = np.vstack([np.eye(n, nv), -np.eye(n, nv)])
        h = np.concatenate([hi, -lo])
        A = np.eye(n, nv)
        cvec = np.zeros(nv)
        cvec[-1] = 1.0
        prog = socp.ConeProgram(
            q=q, G_lin=G, h_lin=h,
            socs=(socp.SocBlock(A=A, b=-p, c=cvec, d=0.0),))
        sol = socp.solve(prog)
        assert sol.status == "optimal"
        expect = np.clip(p, lo, hi)
        assert_allclose(sol.primal_obj, np.linalg.norm(expect - p), atol=1e-6)
        # the argmin is only O(sqrt(mu)) accurate at degenerate active sets
        assert_allclose(sol.u[:n], expect, atol=1e-3)

    def test_matches_linprog_on_random_lps(self):
        # scipy's HiGHS backend as an independent LP reference
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 7))
            G = rng.normal(size=(m, n))
            h = G @ rng.normal(size=n) + rng.uniform(0.0, 1.0, m)
            box = 10.0
            G_full = np.vstack([G, np.eye(n), -np.eye(n)])
            h_full = np.concatenate([h, np.full(n, box), np.full(n, box)])
            q = rng.normal(size=n)
            ref = scipy.optimize.linprog(q, A_ub=G_full, b_ub=h_full,
                                         bounds=(None, None), method="highs")
            assert ref.status == 0
            sol = socp.solve(socp.ConeProgram(q=q, G_lin=G_full, h_lin=h_full))
            assert sol.status == "optimal"
            assert_allclose(sol.primal_obj, ref.fun, rtol=1e-6, atol=1e-6)


class TestCertificates:
    def test_infeasible_lp(self):
        # x <= -1 together with -x <= -2 (x >= 2) is empty
        prog = socp.ConeProgram(q=np.array([1.0]),
                                G_lin=np.array([[1.0], [-1.0]]),
                                h_lin=np.array([-1.0, -2.0]))
        sol = socp.solve(prog)
        assert sol.status == "infeasible"

    def test_infeasible_soc(self):
        # ||u|| <= -1 is empty
        prog = socp.ConeProgram(
            q=np.array([1.0, 1.0]), G_lin=np.zeros((0, 2)), h_lin=np.zeros(0),
            socs=(socp.SocBlock(A=np.eye(2), b=np.zeros(2),
                                c=np.zeros(2), d=-1.0),))
        sol = socp.solve(prog)
        assert sol.status == "infeasible"

    def test_unbounded(self):
        # min -x with only x >= 0
        prog = socp.ConeProgram(q=np.array([-1.0]),
                                G_lin=np.array([[-1.0]]),
                                h_lin=np.array([0.0]))
        sol = socp.solve(prog)
        assert sol.status == "unbounded"


class TestPinnedVariables:
    def test_pinned_coordinates_are_zero(self):
        rng = np.random.default_rng(4)
        n = 6
        G = np.vstack([np.eye(n), -np.eye(n)])
        h = np.ones(2 * n)
        q = rng.normal(size=n)
        prog = socp.ConeProgram(q=q, G_lin=G, h_lin=h, pinned=(1, 4))
        sol = socp.solve(prog)
        assert sol.status == "optimal"
        assert sol.u[1] == 0.0 and sol.u[4] == 0.0
        # the free coordinates must match the explicitly reduced program
        keep = [0, 2, 3, 5]
        red = socp.ConeProgram(q=q[keep], G_lin=G[:, keep], h_lin=h)
        ref = socp.solve(red)
        assert_allclose(sol.u[keep], ref.u, atol=1e-7)
        assert_allclose(sol.primal_obj, ref.primal_obj, rtol=1e-8)

    def test_pinned_index_out_of_range(self):
        prog = socp.ConeProgram(q=np.zeros(2), G_lin=np.zeros((0, 2)),
                                h_lin=np.zeros(0), pinned=(5,))
        with pytest.raises(DimensionMismatch):
            socp.solve(prog)


class TestValidation:
    def test_column_mismatch(self):
        prog = socp.ConeProgram(q=np.zeros(3), G_lin=np.zeros((2, 4)),
                                h_lin=np.zeros(2))
        with pytest.raises(DimensionMismatch):
            prog.validate()

    def test_rhs_length_mismatch(self):
        prog = socp.ConeProgram(q=np.zeros(3), G_lin=np.zeros((2, 3)),
                                h_lin=np.zeros(3))
        with pytest.raises(DimensionMismatch):
            prog.validate()

    def test_soc_shape_mismatch(self):
        blk = socp.SocBlock(A=np.zeros((2, 4)), b=np.zeros(2),
                            c=np.zeros(3), d=0.0)
        prog = socp.ConeProgram(q=np.zeros(3), G_lin=np.zeros((0, 3)),
                                h_lin=np.zeros(0), socs=(blk,))
        with pytest.raises(DimensionMismatch):
            prog.validate()


class TestTextFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        prog, _, _ = known_optimum_program(rng)
        prog = socp.ConeProgram(q=prog.q, G_lin=prog.G_lin, h_lin=prog.h_lin,
                                socs=prog.socs, pinned=(0,))
        back = socp.program_from_text(socp.program_to_text(prog))
        assert_allclose(back.q, prog.q, rtol=0, atol=0)
        assert_allclose(back.G_lin, prog.G_lin, rtol=0, atol=0)
        assert_allclose(back.h_lin, prog.h_lin, rtol=0, atol=0)
        assert back.pinned == prog.pinned
        assert len(back.socs) == len(prog.socs)
        for b1, b2 in zip(back.socs, prog.socs):
            assert_allclose(b1.A, b2.A, rtol=0, atol=0)
            assert_allclose(b1.b, b2.b, rtol=0, atol=0)
            assert_allclose(b1.c, b2.c, rtol=0, atol=0)
            assert b1.d == b2.d


class TestHardRegression:
    """A design subproblem captured from a real run; dense, ill-scaled,
    with active stability rows.  Earlier solver revisions broke down on
    it inside the normal-equation factorization."""

    def test_solves_captured_subproblem(self):
        with open(os.path.join(FIXTURES, "hard_subproblem.txt")) as f:
            prog = socp.program_from_text(f.read())
        sol = socp.solve(prog, tol=1e-8)
        assert sol.status in ("optimal", "near_optimal")
        assert_allclose(sol.primal_obj, 6.1517903, atol=1e-4)
        assert primal_violation(prog, sol.u) <= 1e-6
