import numpy as np
import pytest

from conftest import random_subproblem
from gsreg.groups import BoxConstraint, contiguous_groups, group_norms
from gsreg.reference import fista_reference
from gsreg.wl21 import (
    AlmConfig,
    DualState,
    SncgConfig,
    SubproblemSpec,
    alm_solve,
    clarke_block,
    dual_objective,
    eta_update,
    gen_hessian_apply,
    phi_kj_grad,
    phi_kj_value,
    primal_objective,
    project_group_balls,
    prox_l1,
    sncg_solve,
)


def dense_hessian(xi, eta, state, spec):
    """Assemble I + sigma A (I - W) A^T from the per-group Clarke blocks."""
    y = spec.A.T @ xi + eta + state.x / state.sigma
    W = np.zeros((spec.p, spec.p))
    for i, idx in enumerate(spec.g.groups):
        W[np.ix_(idx, idx)] = clarke_block(y[idx], spec.omega[i])
    return np.eye(spec.n) + state.sigma * spec.A @ (np.eye(spec.p) - W) @ spec.A.T


class TestProx:
    def test_prox_l1_values(self):
        out = prox_l1(np.array([3.0, -0.5, -2.0]), 1.0)
        assert out.tolist() == [2.0, 0.0, -1.0]

    def test_prox_l1_zero_gamma_is_identity(self, rng):
        z = rng.standard_normal(20)
        assert np.array_equal(prox_l1(z, 0.0), z)

    def test_prox_l1_rejects_negative(self):
        with pytest.raises(ValueError):
            prox_l1(np.ones(3), -1.0)

    def test_prox_l1_is_moreau_optimal(self, rng):
        # prox minimizes gamma||u||_1 + (1/2)||u - z||^2; check against perturbations
        z = rng.standard_normal(10)
        gamma = 0.7
        u = prox_l1(z, gamma)
        obj = lambda v: gamma * np.abs(v).sum() + 0.5 * np.sum((v - z) ** 2)
        best = obj(u)
        for _ in range(100):
            v = u + 0.01 * rng.standard_normal(10)
            assert obj(v) >= best - 1e-12


class TestProjection:
    def test_inside_unchanged(self):
        g = contiguous_groups(4, 2)
        y = np.array([0.1, 0.1, 3.0, 4.0])
        out = project_group_balls(y, g, np.array([1.0, 10.0]))
        assert np.array_equal(out, y)

    def test_outside_rescaled(self):
        g = contiguous_groups(2, 1)
        out = project_group_balls(np.array([3.0, 4.0]), g, np.array([1.0]))
        assert np.allclose(out, [0.6, 0.8])
        assert np.linalg.norm(out) == pytest.approx(1.0)

    def test_zero_radius_maps_to_zero(self):
        g = contiguous_groups(2, 1)
        out = project_group_balls(np.array([3.0, 4.0]), g, np.array([0.0]))
        assert np.array_equal(out, [0.0, 0.0])

    def test_is_nearest_point(self, rng):
        g = contiguous_groups(12, 4)
        omega = rng.uniform(0.1, 2.0, 4)
        y = 3 * rng.standard_normal(12)
        proj = project_group_balls(y, g, omega)
        dist = np.linalg.norm(proj - y)
        for _ in range(200):
            cand = proj + 0.05 * rng.standard_normal(12)
            feasible = all(
                np.linalg.norm(cand[idx]) <= omega[i] for i, idx in enumerate(g.groups)
            )
            if feasible:
                assert np.linalg.norm(cand - y) >= dist - 1e-12


class TestClarkeBlock:
    def test_identity_inside(self):
        B = clarke_block(np.array([0.1, 0.1]), 1.0)
        assert np.array_equal(B, np.eye(2))

    def test_identity_on_boundary(self):
        B = clarke_block(np.array([1.0, 0.0]), 1.0)
        assert np.array_equal(B, np.eye(2))

    def test_zero_for_degenerate_ball(self):
        assert np.array_equal(clarke_block(np.ones(3), 0.0), np.zeros((3, 3)))

    def test_outside_matches_projection_jacobian(self, rng):
        # finite differences of the projection at a point strictly outside
        y = np.array([2.0, 1.0, -0.5])
        omega = 1.0
        B = clarke_block(y, omega)
        h = 1e-7
        proj = lambda v: v * omega / np.linalg.norm(v) if np.linalg.norm(v) > omega else v
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (proj(y + e) - proj(y - e)) / (2 * h)
            assert np.allclose(B[:, k], fd, atol=1e-6)

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError):
            clarke_block(np.ones(2), -1.0)


class TestReducedFunction:
    def test_gradient_matches_finite_difference(self, rng):
        spec = random_subproblem(3)
        state = DualState.cold(spec, 1.0)
        state.x = rng.standard_normal(spec.p)
        eta = 0.01 * rng.standard_normal(spec.p)
        xi = rng.standard_normal(spec.n)
        g = phi_kj_grad(xi, eta, state, spec)
        h = 1e-6
        for k in rng.permutation(spec.n)[:10]:
            e = np.zeros(spec.n)
            e[k] = h
            fd = (
                phi_kj_value(xi + e, eta, state, spec)
                - phi_kj_value(xi - e, eta, state, spec)
            ) / (2 * h)
            assert g[k] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_hessian_apply_matches_dense(self, rng):
        spec = random_subproblem(4, n=20, p=30, m=10)
        state = DualState.cold(spec, 2.0)
        state.x = rng.standard_normal(spec.p)
        eta = 0.05 * rng.standard_normal(spec.p)
        xi = rng.standard_normal(spec.n)
        V = dense_hessian(xi, eta, state, spec)
        for _ in range(5):
            d = rng.standard_normal(spec.n)
            assert np.allclose(gen_hessian_apply(d, xi, eta, state, spec), V @ d, atol=1e-10)

    def test_hessian_is_positive_definite(self, rng):
        spec = random_subproblem(5, n=15, p=24, m=8)
        state = DualState.cold(spec, 1.5)
        state.x = rng.standard_normal(spec.p)
        V = dense_hessian(rng.standard_normal(spec.n), 0.01 * rng.standard_normal(spec.p), state, spec)
        assert np.min(np.linalg.eigvalsh(0.5 * (V + V.T))) >= 1.0 - 1e-10

    def test_eta_update_minimizes_lagrangian_block(self, rng):
        spec = random_subproblem(6)
        state = DualState.cold(spec, 1.0)
        state.xi = rng.standard_normal(spec.n)
        state.zeta = 0.1 * rng.standard_normal(spec.p)
        state.x = rng.standard_normal(spec.p)
        eta = eta_update(state, spec)

        def block_obj(e):
            r = spec.A.T @ state.xi + e - state.zeta
            return spec.box.R * np.abs(e).sum() + state.x @ r + 0.5 * state.sigma * (r @ r)

        best = block_obj(eta)
        for _ in range(100):
            assert block_obj(eta + 0.01 * rng.standard_normal(spec.p)) >= best - 1e-10


class TestSncg:
    def test_drives_gradient_below_tolerance(self, rng):
        spec = random_subproblem(7)
        state = DualState.cold(spec, 1.0)
        eta = np.zeros(spec.p)
        xi, stats = sncg_solve(eta, state, spec, SncgConfig(), grad_tol=1e-9)
        assert np.linalg.norm(phi_kj_grad(xi, eta, state, spec)) <= 1e-9
        assert stats["iters"] >= 1

    def test_monotone_descent(self, rng):
        spec = random_subproblem(8)
        state = DualState.cold(spec, 1.0)
        state.x = rng.standard_normal(spec.p)
        eta = 0.01 * rng.standard_normal(spec.p)
        xi0 = rng.standard_normal(spec.n)
        f0 = phi_kj_value(xi0, eta, state, spec)
        xi, _ = sncg_solve(eta, state, spec, SncgConfig(), grad_tol=1e-8, xi0=xi0)
        assert phi_kj_value(xi, eta, state, spec) <= f0 + 1e-12


class TestAlm:
    def test_matches_first_order_reference(self):
        spec = random_subproblem(9, n=60, p=90, m=18)
        x, state, stats = alm_solve(spec, AlmConfig(tol=1e-7))
        x_ref, _ = fista_reference(spec, grad_map_tol=1e-10)
        assert stats.converged
        p_alm = primal_objective(x, spec)
        p_ref = primal_objective(x_ref, spec)
        assert abs(p_alm - p_ref) <= 1e-7 * max(1.0, abs(p_ref))
        assert np.linalg.norm(x - x_ref) < 1e-4

    def test_multiplier_update_identity(self):
        # from a cold start, one outer step gives x^1 = sigma_0 (A^T xi + eta - zeta)
        spec = random_subproblem(10)
        sigma0 = 1.0
        _, state, _ = alm_solve(spec, AlmConfig(sigma0=sigma0, max_outer=1, tol=0.0))
        resid = spec.A.T @ state.xi + state.eta - state.zeta
        assert np.array_equal(state.x, sigma0 * resid)

    def test_feasibility_and_gap_reported(self):
        spec = random_subproblem(11)
        _, state, stats = alm_solve(spec, AlmConfig(tol=1e-6))
        assert stats.converged
        assert max(stats.eps_pinf, stats.eps_dinf, stats.eps_gap) <= 1e-6
        assert len(stats.history) == stats.outer_iters

    def test_strong_duality_at_solution(self):
        spec = random_subproblem(12)
        x, state, _ = alm_solve(spec, AlmConfig(tol=1e-8))
        assert primal_objective(x, spec) + dual_objective(state, spec) == pytest.approx(
            0.0, abs=1e-6
        )

    def test_zero_weights_reduce_to_least_squares(self, rng):
        # omega = 0: the subproblem is box-constrained LS with inactive box
        n, p = 40, 20
        A = rng.standard_normal((n, p))
        x_true = rng.standard_normal(p)
        b = A @ x_true
        g = contiguous_groups(p, 5)
        spec = SubproblemSpec(A=A, b=b, g=g, omega=np.zeros(5), box=BoxConstraint(1e3))
        x, _, stats = alm_solve(spec, AlmConfig(tol=1e-8))
        assert stats.converged
        assert np.linalg.norm(x - x_true) < 1e-4

    def test_huge_weights_give_zero(self, rng):
        spec = random_subproblem(13)
        big = SubproblemSpec(
            A=spec.A, b=spec.b, g=spec.g,
            omega=np.full(spec.g.m, 1e4), box=spec.box,
        )
        x, _, stats = alm_solve(big, AlmConfig(tol=1e-8))
        assert stats.converged
        assert np.max(np.abs(x)) < 1e-8

    def test_warm_start_converges_faster(self):
        spec = random_subproblem(14, n=50, p=80, m=16)
        x1, state, stats_cold = alm_solve(spec, AlmConfig(tol=1e-6))
        _, _, stats_warm = alm_solve(spec, AlmConfig(tol=1e-6), warm=state)
        assert stats_warm.converged
        assert stats_warm.outer_iters <= stats_cold.outer_iters

    def test_group_sparsity_in_solution(self):
        # moderately large weights should zero out entire groups exactly
        spec = random_subproblem(15, omega_scale=0.5)
        x, _, _ = alm_solve(spec, AlmConfig(tol=1e-8))
        norms = group_norms(x, spec.g)
        assert np.any(norms == 0.0)

    def test_active_box_is_respected(self, rng):
        # tiny radius forces the box active; solution stays feasible
        n, p = 30, 12
        A = rng.standard_normal((n, p))
        b = A @ np.full(p, 5.0)
        g = contiguous_groups(p, 4)
        spec = SubproblemSpec(A=A, b=b, g=g, omega=np.full(4, 0.01), box=BoxConstraint(1.0))
        x, _, stats = alm_solve(spec, AlmConfig(tol=1e-8))
        assert stats.converged
        assert np.max(np.abs(x)) <= 1.0 + 1e-8
        # compare against projected gradient on the box-constrained problem
        x_pg = np.zeros(p)
        L = np.linalg.svd(A, compute_uv=False)[0] ** 2
        for _ in range(20000):
            grad = A.T @ (A @ x_pg - b)
            x_pg = np.clip(x_pg - grad / L, -1.0, 1.0)
        # omega is tiny so the LS part dominates; objectives agree to the
        # solver's relative tolerance on this badly scaled instance
        p_alm, p_ref = primal_objective(x, spec), primal_objective(x_pg, spec)
        assert p_alm <= p_ref + 1e-6 * (1.0 + abs(p_ref))


class TestSpecValidation:
    def test_dimension_checks(self, rng):
        A = rng.standard_normal((5, 6))
        g = contiguous_groups(6, 2)
        with pytest.raises(ValueError):
            SubproblemSpec(A=A, b=np.zeros(4), g=g, omega=np.ones(2), box=BoxConstraint(1.0))
        with pytest.raises(ValueError):
            SubproblemSpec(A=A, b=np.zeros(5), g=g, omega=np.ones(3), box=BoxConstraint(1.0))
        with pytest.raises(ValueError):
            SubproblemSpec(A=A, b=np.zeros(5), g=g, omega=-np.ones(2), box=BoxConstraint(1.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SncgConfig(theta_bar=1.5)
        with pytest.raises(ValueError):
            SncgConfig(mu=0.7)
