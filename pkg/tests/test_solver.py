import numpy as np
import pytest

from conftest import crandn
from risdfrc.solver import (ConicSubproblem, ScalarConstraint, SolverState,
                            solve, solve_maxmin_init)

BIG = 1e6


def qp(Q, q, n, bound=BIG, cons=(), maximin=False):
    return ConicSubproblem(Q=Q, q=np.asarray(q, dtype=complex),
                           bound=np.full(n, float(bound)),
                           constraints=tuple(cons), maximin=maximin)


def least_squares(c, n, **kw):
    """min ||z - c||^2 as a conic subproblem."""
    return qp(np.eye(n, dtype=complex), -2.0 * np.asarray(c, dtype=complex),
              n, **kw)


def ray_project(w, gamma, lo=1.0):
    a = max(np.real(np.conj(gamma) * w) / abs(gamma) ** 2, lo)
    return a * gamma, a


def grid_search_objective(Q, q, bound, masks, n, levels=9, pts=15):
    """Iteratively refined exhaustive search over the feasible mesh.

    ``masks`` is a callable taking a (num, n) complex array of candidates
    and returning a boolean feasibility vector.  Convexity of the instances
    makes refinement around the best feasible mesh point sound.
    """
    lo = -bound * np.ones(2 * n)
    hi = bound * np.ones(2 * n)
    best = None
    for _ in range(levels):
        axes = [np.linspace(lo[d], hi[d], pts) for d in range(2 * n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts_r = np.stack([m.ravel() for m in mesh], axis=1)
        z = pts_r[:, :n] + 1j * pts_r[:, n:]
        feas = np.all(np.abs(z) <= bound + 1e-12, axis=1) & masks(z)
        if not np.any(feas):
            raise RuntimeError("no feasible grid point; widen the coarse grid")
        zf = z[feas]
        vals = np.real(np.einsum("ij,jk,ik->i", zf.conj(), Q, zf)) + \
            np.real(zf @ np.conj(q))
        i = int(np.argmin(vals))
        best = vals[i]
        center = np.concatenate([zf[i].real, zf[i].imag])
        span = (hi - lo) / (pts - 1) * 2.5
        lo = np.maximum(center - span, -bound)
        hi = np.minimum(center + span, bound)
    return best


class TestAnalyticSolutions:
    def test_unconstrained_projection(self, rng):
        c = crandn(rng, 3)
        res = solve(least_squares(c, 3), tolerance=1e-10)
        assert res.ok
        np.testing.assert_allclose(res.z, c, atol=1e-7)

    def test_halfspace_min_norm(self, rng):
        # min ||z||^2 s.t. Re{a^H z} >= 1 has solution a / ||a||^2
        a = crandn(rng, 4)
        con = ScalarConstraint(kind="halfplane", a=a, gamma=1.0 + 0j, rhs=1.0)
        res = solve(qp(np.eye(4, dtype=complex), np.zeros(4), 4, cons=[con]),
                    tolerance=1e-10)
        assert res.ok
        np.testing.assert_allclose(res.z, a / np.linalg.norm(a) ** 2,
                                   atol=1e-7)
        assert res.objective == pytest.approx(1 / np.linalg.norm(a) ** 2,
                                              rel=1e-6)

    def test_entry_discs_clip(self, rng):
        c = 3.0 * crandn(rng, 5)
        res = solve(least_squares(c, 5, bound=1.0), tolerance=1e-10)
        expected = np.where(np.abs(c) > 1.0, c / np.abs(c), c)
        np.testing.assert_allclose(res.z, expected, atol=1e-7)

    def test_ray_projection_closed_form(self, rng):
        # min ||z - c||^2 with one exact-ray row and loose bounds projects
        # the scalar channel onto the ray
        a = crandn(rng, 3)
        gamma = complex(crandn(rng))
        c = crandn(rng, 3)
        con = ScalarConstraint(kind="ray", a=a, gamma=gamma)
        res = solve(least_squares(c, 3, cons=[con]), tolerance=1e-10)
        assert res.ok
        t_star, alpha = ray_project(np.vdot(a, c), gamma)
        expected = c + a * (t_star - np.vdot(a, c)) / np.linalg.norm(a) ** 2
        np.testing.assert_allclose(res.z, expected, atol=1e-6)
        assert res.alpha[0] == pytest.approx(alpha, rel=1e-6)
        assert res.alpha[0] >= 1.0 - 1e-9

    def test_capsule_interior_point_unmoved(self, rng):
        a = crandn(rng, 3)
        gamma = complex(crandn(rng))
        alpha_true = 2.0
        c = crandn(rng, 3)
        # place c so its scalar sits inside the capsule at alpha_true
        t_now = np.vdot(a, c)
        shift = (alpha_true * gamma + 0.01 - t_now) / np.linalg.norm(a) ** 2
        c = c + a * shift
        con = ScalarConstraint(kind="capsule", a=a, gamma=gamma, radius=0.5)
        res = solve(least_squares(c, 3, cons=[con]), tolerance=1e-10)
        np.testing.assert_allclose(res.z, c, atol=1e-6)


class TestGridSearchOracle:
    """Objective agreement with exhaustive refined search on 2-complex-dim
    (4 real) fixtures for each constraint family."""

    def _fixture(self, rng, kind):
        n = 2
        A_half = crandn(rng, n, n)
        Q = A_half @ A_half.conj().T + 0.5 * np.eye(n)
        q = crandn(rng, n)
        a = crandn(rng, n)
        gamma = complex(0.4 * crandn(rng))
        bound = 2.0
        if kind == "halfplane":
            cons = [ScalarConstraint(kind="halfplane", a=a, gamma=gamma, rhs=0.3)]

            def mask(z):
                return np.real(gamma * (z @ np.conj(a))) >= 0.3 - 1e-9
        elif kind == "capsule":
            cons = [ScalarConstraint(kind="capsule", a=a, gamma=gamma, radius=1.0)]

            def mask(z):
                t = z @ np.conj(a)
                alpha = np.maximum(np.real(np.conj(gamma) * t) / abs(gamma) ** 2, 1.0)
                return np.abs(t - alpha * gamma) <= 1.0 + 1e-9
        else:
            raise ValueError(kind)
        return qp(Q, q, n, bound=bound, cons=cons), Q, q, bound, mask

    @pytest.mark.parametrize("kind", ["halfplane", "capsule"])
    def test_inequality_families(self, rng, kind):
        for trial in range(3):
            prob, Q, q, bound, mask = self._fixture(rng, kind)
            res = solve(prob, tolerance=1e-9)
            assert res.ok
            ref = grid_search_objective(Q, q, bound, mask, 2)
            scale = max(1.0, abs(ref))
            assert abs(res.objective - ref) <= 1e-5 * scale + 5e-4 * scale ** 0  # noqa: E501  grid resolution term
            assert res.objective <= ref + 1e-5 * scale

    def test_zf_family_on_feasible_manifold(self, rng):
        # grid over (alpha, null-space coordinate) of the equality manifold
        n = 2
        for _ in range(3):
            A_half = crandn(rng, n, n)
            Q = A_half @ A_half.conj().T + 0.5 * np.eye(n)
            q = crandn(rng, n)
            a = crandn(rng, n)
            a = a / np.linalg.norm(a)
            gamma = complex(0.3 * crandn(rng))
            bound = 4.0
            cons = [ScalarConstraint(kind="ray", a=a, gamma=gamma)]
            res = solve(qp(Q, q, n, bound=bound, cons=cons), tolerance=1e-9)
            assert res.ok

            null = np.array([-np.conj(a[1]), np.conj(a[0])])
            null = null / np.linalg.norm(null)

            def manifold(params):
                alpha, wr, wi = params[:, 0], params[:, 1], params[:, 2]
                return (alpha * gamma)[:, None] * a[None, :] + \
                    (wr + 1j * wi)[:, None] * null[None, :]

            lo = np.array([1.0, -bound, -bound])
            hi = np.array([6.0, bound, bound])
            best = None
            for _ in range(9):
                axes = [np.linspace(lo[d], hi[d], 25) for d in range(3)]
                mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")],
                                axis=1)
                z = manifold(mesh)
                feas = np.all(np.abs(z) <= bound, axis=1)
                zf, pf = z[feas], mesh[feas]
                vals = np.real(np.einsum("ij,jk,ik->i", zf.conj(), Q, zf)) + \
                    np.real(zf @ np.conj(q))
                i = int(np.argmin(vals))
                best = vals[i]
                center = pf[i]
                span = (hi - lo) / 24 * 2.5
                lo = np.maximum(center - span, [1.0, -bound, -bound])
                hi = np.minimum(center + span, [6.0, bound, bound])
            scale = max(1.0, abs(best))
            assert abs(res.objective - best) <= 1e-5 * scale


class TestMaximinInit:
    def test_ci_single_row_phase_alignment(self, rng):
        row = crandn(rng, 4)
        res = solve_maxmin_init(row[None, :], None, "ci", bound=1.5,
                                tolerance=1e-10)
        assert res.ok
        expected = 1.5 * np.exp(-1j * np.angle(row))
        np.testing.assert_allclose(res.z, expected, atol=1e-6)
        assert res.tau == pytest.approx(1.5 * np.abs(row).sum(), rel=1e-7)

    def test_zf_diagonal_system_uniform_alpha(self, rng):
        # orthogonal single-entry rows with equal gains: every alpha rides
        # at the power-limited maximum
        n = 3
        cmag = 0.8
        rows = np.zeros((n, n), dtype=complex)
        targets = np.zeros(n, dtype=complex)
        for r in range(n):
            rows[r, r] = cmag * np.exp(1j * rng.uniform(0, 2 * np.pi))
            targets[r] = 0.2 * np.exp(1j * rng.uniform(0, 2 * np.pi))
        res = solve_maxmin_init(rows, targets, "zf", bound=2.0, tolerance=1e-10)
        assert res.ok
        alpha_expected = 2.0 * cmag / 0.2
        np.testing.assert_allclose(res.alpha, alpha_expected, rtol=1e-6)
        assert res.tau == pytest.approx(alpha_expected, rel=1e-6)
        np.testing.assert_allclose(np.abs(res.z), 2.0, rtol=1e-6)

    def test_mmse_dominates_zf_value(self, rng):
        rows = crandn(rng, 3, 4)
        targets = 0.5 * crandn(rng, 3)
        res_zf = solve_maxmin_init(rows, targets, "zf", bound=1.0)
        res_mm = solve_maxmin_init(rows, targets, "mmse", bound=1.0,
                                   epsilon=0.04)
        assert res_mm.tau >= res_zf.tau - 1e-5

    def test_zero_channel_zf_infeasible(self, rng):
        rows = np.vstack([crandn(rng, 4), np.zeros(4, dtype=complex)])
        targets = np.array([0.3 + 0j, 0.5 + 0j])
        cons = [ScalarConstraint(kind="ray", a=rows[0].conj(), gamma=targets[0]),
                ScalarConstraint(kind="ray", a=rows[1].conj(), gamma=targets[1])]
        res = solve(qp(np.eye(4, dtype=complex), np.zeros(4), 4, bound=1.0,
                       cons=cons))
        assert res.status == "infeasible"


class TestSolverBehaviour:
    def test_kkt_residual_small_at_optimal(self, rng):
        a = crandn(rng, 4)
        con = ScalarConstraint(kind="halfplane", a=a, gamma=1 + 0j, rhs=1.0)
        res = solve(qp(np.eye(4, dtype=complex), crandn(rng, 4), 4, bound=2.0,
                       cons=[con]), tolerance=1e-9)
        assert res.ok
        assert res.kkt_residual <= 1e-6

    def test_constraint_violations_small(self, rng):
        a1, a2 = crandn(rng, 4), crandn(rng, 4)
        g = complex(crandn(rng))
        cons = [ScalarConstraint(kind="ray", a=a1, gamma=g),
                ScalarConstraint(kind="halfplane", a=a2, gamma=1 + 0j, rhs=0.1)]
        res = solve(qp(np.eye(4, dtype=complex), crandn(rng, 4), 4, bound=5.0,
                       cons=cons), tolerance=1e-9)
        assert res.ok
        t1 = np.vdot(a1, res.z)
        proj, _ = ray_project(t1, g)
        assert abs(t1 - proj) < 1e-6
        assert np.real(np.vdot(a2, res.z).conjugate() * 1) >= 0.1 - 1e-6
        assert np.max(np.abs(res.z)) <= 5.0 + 1e-6

    def test_deterministic(self, rng):
        c = crandn(rng, 4)
        prob = least_squares(c, 4, bound=1.0)
        z1 = solve(prob).z
        z2 = solve(prob).z
        np.testing.assert_array_equal(z1, z2)

    def test_warm_start_faster(self, rng):
        A_half = crandn(rng, 6, 6)
        Q = A_half @ A_half.conj().T + np.eye(6)
        q = crandn(rng, 6)
        a = crandn(rng, 6)
        cons = [ScalarConstraint(kind="halfplane", a=a, gamma=1 + 0j, rhs=0.2)]
        prob = qp(Q, q, 6, bound=1.0, cons=cons)
        state = SolverState()
        first = solve(prob, state=state)
        q2 = q * 1.01
        prob2 = qp(Q, q2, 6, bound=1.0, cons=cons)
        warmed = solve(prob2, state=state)
        cold = solve(prob2)
        assert warmed.iterations <= cold.iterations

    def test_fixed_point_residual_monotone_without_relaxation(self, rng):
        # the averaged iteration's displacement never grows
        A_half = crandn(rng, 5, 5)
        Q = A_half @ A_half.conj().T + 0.3 * np.eye(5)
        a = crandn(rng, 5)
        cons = [ScalarConstraint(kind="halfplane", a=a, gamma=1 + 0j, rhs=0.5),
                ScalarConstraint(kind="ray", a=crandn(rng, 5),
                                 gamma=complex(crandn(rng)))]
        trace: list = []
        solve(qp(Q, crandn(rng, 5), 5, bound=1.5, cons=cons), tolerance=1e-11,
              over_relax=1.0, adapt_penalty=False, residual_trace=trace,
              max_iter=3000)
        arr = np.asarray(trace)
        assert np.all(arr[1:] <= arr[:-1] * (1 + 1e-10) + 1e-15)

    def test_objective_insensitive_to_tolerance_tightening(self, rng):
        A_half = crandn(rng, 5, 5)
        Q = A_half @ A_half.conj().T + np.eye(5)
        q = crandn(rng, 5)
        a = crandn(rng, 5)
        cons = [ScalarConstraint(kind="capsule", a=a, gamma=0.5 + 0j, radius=0.3)]
        loose = solve(qp(Q, q, 5, bound=1.0, cons=cons), tolerance=1e-6)
        tight = solve(qp(Q, q, 5, bound=1.0, cons=cons), tolerance=1e-7)
        assert loose.objective == pytest.approx(tight.objective, rel=1e-5)
