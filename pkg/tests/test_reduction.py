import numpy as np
import pytest
import scipy.linalg

import paraprec as pp
from paraprec.errors import InvalidArgument

from conftest import random_affine_operator, random_spd
from test_precond import make_basis


def make_rhs(rng, n, m_b=2):
    import paraprec.coeffs as cf

    terms = tuple(rng.standard_normal(n) for _ in range(m_b))
    coeffs = (cf.constant(1.0), cf.sine(1.0))[:m_b]
    return pp.AffineVector(terms=terms, coeffs=coeffs)


def delta_oracle(xi, model, precond):
    """Brute-force proximality constant via an explicit projector SVD.

    delta = max over v in the basis range of the X-norm distance to the
    mapped test space, computed in Cholesky coordinates (z = L^T x turns
    the X-norm into the Euclidean one).
    """
    A = model.op(xi).toarray()
    n = A.shape[0]
    if precond is None:
        P = np.linalg.inv(model.R_X.matrix.toarray())
    else:
        P = precond.dense(xi)
    R = model.R_X.matrix.toarray()
    L = np.linalg.cholesky(R)
    T = np.linalg.solve(R, (P @ A).T @ R)  # R^{-1} (PA)^T R
    Ut = L.T @ model.U                      # orthonormal in Euclidean sense
    G = L.T @ (T @ model.U)                 # mapped test directions
    Q, _ = np.linalg.qr(G)
    M = Ut - Q @ (Q.T @ Ut)                 # (I - proj onto range(G)) Ut
    return float(np.linalg.svd(M, compute_uv=False)[0])


@pytest.fixture(scope="module")
def reduction_setup():
    rng = np.random.default_rng(17)
    n = 30
    op = random_affine_operator(rng, n=n, m_A=3)
    rhs = make_rhs(rng, n)
    R_X = pp.NormMatrix(random_spd(rng, n))
    grid = np.linspace(0.0, 1.0, 25, endpoint=False)
    snaps = np.column_stack(
        [pp.factorize(op(xi)).apply(rhs(xi)) for xi in grid[::5]]
    )
    U, _, _ = pp.orthonormalize(snaps, R_X=R_X)
    model = pp.ReducedModel(U=U, R_X=R_X, op=op, rhs=rhs)
    V = pp.make_sketch("psrht", n, 16, seed=3)
    pre = pp.build_preconditioner(op, [grid[2], grid[12], grid[20]], V, grid)
    return op, rhs, R_X, grid, model, pre


# ------------------------------------------------------------ orthonormalize
def test_orthonormalize_gram_identity():
    rng = np.random.default_rng(1)
    R_X = pp.NormMatrix(random_spd(rng, 20))
    W = rng.standard_normal((20, 6))
    U, kept, extra = pp.orthonormalize(W, R_X=R_X)
    gram = U.T @ R_X.apply(U)
    assert np.allclose(gram, np.eye(U.shape[1]), atol=1e-10)
    assert kept == list(range(6))
    assert extra == 6
    # same span
    assert np.linalg.matrix_rank(np.hstack([U, W])) == 6


def test_orthonormalize_drops_dependent_columns():
    rng = np.random.default_rng(2)
    W = rng.standard_normal((15, 3))
    W2 = np.column_stack([W, W[:, 0] + W[:, 1]])
    U, kept, extra = pp.orthonormalize(W2)
    assert U.shape[1] == 3
    assert 3 not in kept


def test_orthonormalize_against_base():
    rng = np.random.default_rng(3)
    base, _, _ = pp.orthonormalize(rng.standard_normal((12, 2)))
    U, kept, extra = pp.orthonormalize(rng.standard_normal((12, 2)), base=base)
    assert extra == 2
    assert np.allclose(U.T @ U, np.eye(4), atol=1e-10)
    assert np.allclose(U[:, :2], base, atol=1e-14)


def test_pod_basis_recovers_dominant_directions():
    rng = np.random.default_rng(4)
    # snapshots concentrated on two directions plus noise
    q1, q2 = np.linalg.qr(rng.standard_normal((20, 2)))[0].T
    snaps = np.column_stack(
        [3.0 * rng.standard_normal() * q1 + 1.5 * rng.standard_normal() * q2
         + 1e-6 * rng.standard_normal(20) for _ in range(30)]
    )
    U = pp.pod_basis(snaps, 2)
    assert U.shape == (20, 2)
    proj = U @ (U.T @ q1)
    assert np.linalg.norm(proj - q1) < 1e-4


# ------------------------------------------------------------ ReducedModel
def test_reduced_model_rejects_non_orthonormal():
    rng = np.random.default_rng(5)
    with pytest.raises(InvalidArgument):
        pp.ReducedModel(U=rng.standard_normal((10, 2)), R_X=pp.identity_norm(10))


# ------------------------------------------------------------ delta_rm
@pytest.mark.parametrize("seed", range(20))
def test_delta_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(700 + seed)
    n = int(rng.integers(10, 30))
    r = int(rng.integers(1, 6))
    m = int(rng.integers(1, 4))
    op = random_affine_operator(rng, n=n, m_A=3)
    rhs = make_rhs(rng, n)
    R_X = pp.NormMatrix(random_spd(rng, n))
    U, _, _ = pp.orthonormalize(rng.standard_normal((n, r)), R_X=R_X)
    model = pp.ReducedModel(U=U, R_X=R_X, op=op, rhs=rhs)
    grid = np.linspace(0.0, 1.0, 10, endpoint=False)
    V = pp.make_sketch("psrht", n, 8, seed=seed)
    pts = list(rng.choice(grid, size=m, replace=False))
    pre = pp.build_preconditioner(op, pts, V, grid)
    xi = float(rng.uniform())
    got = pp.delta_rm(xi, model, pre)
    want = delta_oracle(xi, model, pre)
    assert got == pytest.approx(want, abs=1e-8)
    assert 0.0 <= got <= 1.0


def test_delta_without_preconditioner_matches_oracle(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    for xi in (0.12, 0.48, 0.9):
        got = pp.delta_rm(xi, model, None)
        want = delta_oracle(xi, model, None)
        assert got == pytest.approx(want, abs=1e-8)


def test_delta_zero_with_exact_preconditioner(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    # at an interpolation point the preconditioner is A^{-1}, so the mapped
    # test space equals the basis range and delta vanishes
    xi = pre.basis.points[0]
    assert pp.delta_rm(xi, model, pre) <= 1e-6


def test_quasi_opt_constant_values():
    assert pp.quasi_opt_constant(0.0) == 1.0
    assert pp.quasi_opt_constant(0.6) == pytest.approx(1.25)
    assert pp.quasi_opt_constant(1.0) == np.inf
    with pytest.raises(InvalidArgument):
        pp.quasi_opt_constant(-0.1)


# ------------------------------------------------------------ projections
def test_petrov_galerkin_with_exact_precond_equals_best_approx(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = pre.basis.points[1]
    a_pg = pp.petrov_galerkin(xi, model, pre)
    a_star = pp.best_approx(xi, model)
    assert np.allclose(a_pg, a_star, atol=1e-8 * max(1.0, np.linalg.norm(a_star)))


@pytest.mark.parametrize("seed", range(20))
def test_quasi_optimality_inequalities_random(seed):
    rng = np.random.default_rng(800 + seed)
    n = int(rng.integers(12, 30))
    op = random_affine_operator(rng, n=n, m_A=3)
    rhs = make_rhs(rng, n)
    R_X = pp.NormMatrix(random_spd(rng, n))
    grid = np.linspace(0.0, 1.0, 12, endpoint=False)
    snaps = np.column_stack(
        [pp.factorize(op(xi)).apply(rhs(xi)) for xi in grid[::4]]
    )
    U, _, _ = pp.orthonormalize(snaps, R_X=R_X)
    model = pp.ReducedModel(U=U, R_X=R_X, op=op, rhs=rhs)
    V = pp.make_sketch("psrht", n, 12, seed=seed)
    pre = pp.build_preconditioner(op, [grid[1], grid[7]], V, grid)
    xi = float(rng.uniform())
    delta = pp.delta_rm(xi, model, pre)
    u = pp.factorize(op(xi)).apply(rhs(xi))
    slack = 1e-8 * R_X.norm(u)
    u_r = model.U @ pp.petrov_galerkin(xi, model, pre)
    u_star = model.U @ pp.best_approx(xi, model, u=u)
    err = R_X.norm(u - u_r)
    err_star = R_X.norm(u - u_star)
    gap = R_X.norm(u_star - u_r)
    assert gap <= delta * err + slack
    if delta < 1.0:
        assert err <= pp.quasi_opt_constant(delta) * err_star + slack


def test_galerkin_baseline_solves_reduced_system(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.37
    a = pp.galerkin(xi, model)
    A = op(xi).toarray()
    want = np.linalg.solve(model.U.T @ A @ model.U, model.U.T @ rhs(xi))
    assert np.allclose(a, want, atol=1e-10)


def test_best_approx_is_x_orthogonal_projection(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.61
    u = pp.factorize(op(xi)).apply(rhs(xi))
    a = pp.best_approx(xi, model, u=u)
    resid = u - model.U @ a
    # X-orthogonality to the basis
    assert np.allclose(model.U.T @ R_X.apply(resid), 0.0, atol=1e-9)


# ------------------------------------------------------------ residual norms
def test_preconditioned_residual_and_effectivity(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.44
    a = pp.petrov_galerkin(xi, model, pre)
    u_r = model.U @ a
    est = pp.preconditioned_residual_norm(xi, u_r, pre, R_X, rhs)
    # oracle: X-norm of P (A u_r - b)
    res = op(xi) @ u_r - rhs(xi)
    want = R_X.norm(pre.dense(xi) @ res)
    assert est == pytest.approx(want, rel=1e-9)
    u = pp.factorize(op(xi)).apply(rhs(xi))
    eta = pp.effectivity(xi, u_r, pre, u, R_X, rhs)
    assert eta == pytest.approx(est / R_X.norm(u - u_r), rel=1e-9)
    assert pp.effectivity(xi, u, pre, u, R_X, rhs) == 1.0


def test_dual_residual_norm_oracle(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.18
    u_r = model.U @ pp.galerkin(xi, model)
    got = pp.dual_residual_norm(xi, u_r, op, rhs, R_X)
    res = op(xi) @ u_r - rhs(xi)
    want = np.sqrt(res @ np.linalg.solve(R_X.matrix.toarray(), res))
    assert got == pytest.approx(want, rel=1e-9)


def test_dual_residual_equals_precond_residual_for_inverse_norm(reduction_setup):
    # with P = R_X^{-1}, the X-norm of the preconditioned residual is the
    # dual norm of the residual
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.52
    u_r = model.U @ pp.galerkin(xi, model)
    res = op(xi) @ u_r - rhs(xi)
    Rd = R_X.matrix.toarray()
    lhs = np.sqrt(res @ np.linalg.solve(Rd, res))
    y = np.linalg.solve(Rd, res)
    rhs_val = np.sqrt(y @ Rd @ y)
    assert lhs == pytest.approx(rhs_val, rel=1e-12)


def test_singular_bounds_match_dense_svd(reduction_setup):
    op, rhs, R_X, grid, model, pre = reduction_setup
    xi = 0.29
    alpha, beta, kappa = pp.singular_bounds(xi, pre, R_X)
    A = op(xi).toarray()
    P = pre.dense(xi)
    L = np.linalg.cholesky(R_X.matrix.toarray())
    M = L.T @ P @ A @ np.linalg.inv(L.T)
    svals = np.linalg.svd(M, compute_uv=False)
    assert alpha == pytest.approx(svals[-1], rel=1e-8)
    assert beta == pytest.approx(svals[0], rel=1e-8)
    assert kappa == pytest.approx(svals[0] / svals[-1], rel=1e-8)
    # sandwich: X-norms of P A v lie within [alpha, beta] * ||v||_X
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(op.dim)
        q = R_X.norm(P @ (A @ v)) / R_X.norm(v)
        assert alpha - 1e-8 <= q <= beta + 1e-8


# ------------------------------------------------------------ rb_greedy
@pytest.fixture(scope="module")
def rb_setup():
    rng = np.random.default_rng(23)
    n = 40
    op = random_affine_operator(rng, n=n, m_A=3)
    rhs = make_rhs(rng, n)
    R_X = pp.NormMatrix(random_spd(rng, n))
    grid = np.linspace(0.0, 1.0, 30, endpoint=False)
    V = pp.make_sketch("psrht", n, 16, seed=7)
    return op, rhs, R_X, grid, V


def test_rb_greedy_ideal_errors_non_increasing(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 6, "ideal", R_X=R_X)
    assert pre is None
    errs = [rec.sup_rel_err for rec in trace.records]
    assert all(e2 <= e1 * (1 + 1e-9) for e1, e2 in zip(errs, errs[1:]))
    assert model.r == len(trace.records)


def test_rb_greedy_standard_runs_and_reports(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 4, "standard", R_X=R_X)
    assert trace.records
    for rec in trace.records:
        assert rec.sup_rel_err >= 0.0
        assert rec.eff_lo <= rec.eff_hi


def test_rb_greedy_precond_reuse_converges(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 6, "precond-reuse",
                                     R_X=R_X, V=V)
    assert pre is not None
    assert pre.m == model.r
    errs = [rec.sup_rel_err for rec in trace.records]
    assert errs[-1] < errs[0]


def test_rb_greedy_precond_fixed(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    pre0 = pp.build_preconditioner(op, [grid[3], grid[15], grid[27]], V, grid)
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 4, "precond-fixed",
                                     R_X=R_X, precond=pre0)
    assert pre is pre0
    assert trace.records


def test_rb_greedy_validation_points_withheld(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 5, "ideal", R_X=R_X,
                                     validation_stride=5)
    withheld = {float(grid[j]) for j in range(0, len(grid), 5)}
    assert all(float(p) not in withheld for p in model.snapshot_points)


def test_rb_greedy_tol_converges_early(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 20, "ideal", R_X=R_X,
                                     tol=1e-4)
    assert trace.status in ("Converged", "Stagnated")
    assert model.r < 20
    if trace.status == "Converged":
        assert trace.records[-1].sup_rel_err <= 1e-4


def test_rb_greedy_rejects_bad_mode_and_missing_inputs(rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    with pytest.raises(InvalidArgument):
        pp.rb_greedy(op, rhs, grid, 3, "bogus")
    with pytest.raises(InvalidArgument):
        pp.rb_greedy(op, rhs, grid, 3, "precond-fixed")
    with pytest.raises(InvalidArgument):
        pp.rb_greedy(op, rhs, grid, 3, "precond-reuse")


def test_greedy_trace_csv(tmp_path, rb_setup):
    op, rhs, R_X, grid, V = rb_setup
    model, trace, pre = pp.rb_greedy(op, rhs, grid, 3, "ideal", R_X=R_X)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema:")
    assert lines[1] == "r,xi_selected,sup_rel_err,q97_rel_err,eff_lo,eff_hi"
    assert len(lines) == 2 + len(trace.records)
