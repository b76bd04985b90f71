import numpy as np
import pytest

import paraprec as pp
from paraprec.errors import KappaTooSmall, SketchTooSmall
from paraprec.precond import CoefficientSolution, precond_apply_transpose
from paraprec.sketch import SketchMatrix

from conftest import random_affine_operator


def identity_sketch(n):
    """Wrap V = I as a sketch so the semi-norm becomes the full norm."""
    return SketchMatrix(
        kind="rescaled-partial-hadamard", n=n, K=n, seed=0, matrix=np.eye(n)
    )


def make_basis(op, points):
    return pp.InverseBasis(
        points=tuple(points),
        inverses=tuple(pp.factorize(op(xi)) for xi in points),
    )


def dense_preconditioner(lam, basis):
    return sum(li * P.dense() for li, P in zip(lam, basis.inverses))


# ---------------------------------------------------- normal-equation oracle
@pytest.mark.parametrize("seed", range(5))
def test_normal_eq_matches_explicit_traces_with_identity_sketch(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 60))
    op = random_affine_operator(rng, n=n, m_A=3)
    basis = make_basis(op, [0.1, 0.5, 0.9])
    V = identity_sketch(n)
    xi = float(rng.uniform())
    ne = pp.assemble_normal_eq(op, basis, V, xi=xi)

    A = op(xi).toarray()
    W = [P.dense() @ A for P in basis.inverses]
    M_oracle = np.array([[np.trace(Wi.T @ Wj) for Wj in W] for Wi in W])
    S_oracle = np.array([np.trace(Wi) for Wi in W])

    assert np.allclose(ne.M, M_oracle, rtol=1e-10, atol=1e-10 * abs(M_oracle).max())
    assert np.allclose(ne.S, S_oracle, rtol=1e-10, atol=1e-10 * abs(S_oracle).max())
    assert ne.vnorm2 == pytest.approx(n)


@pytest.mark.parametrize("seed", range(3))
def test_normal_eq_matches_explicit_traces_with_real_sketch(seed):
    rng = np.random.default_rng(100 + seed)
    n = 40
    op = random_affine_operator(rng, n=n, m_A=3)
    basis = make_basis(op, [0.0, 0.4])
    V = pp.make_sketch("psrht", n, 16, seed=seed)
    xi = 0.3
    ne = pp.assemble_normal_eq(op, basis, V, xi=xi)

    A = op(xi).toarray()
    W = [P.dense() @ A @ V.matrix for P in basis.inverses]
    M_oracle = np.array([[np.trace(Wi.T @ Wj) for Wj in W] for Wi in W])
    S_oracle = np.array([np.trace(V.matrix.T @ Wi) for Wi in W])

    assert np.allclose(ne.M, M_oracle, rtol=1e-10)
    assert np.allclose(ne.S, S_oracle, rtol=1e-10)


def test_normal_eq_rejects_sketch_narrower_than_basis():
    rng = np.random.default_rng(0)
    op = random_affine_operator(rng, n=20, m_A=2)
    basis = make_basis(op, [0.0, 0.3, 0.6, 0.9])
    V = pp.make_sketch("rescaled-rademacher", 20, 3, seed=0)
    with pytest.raises(SketchTooSmall):
        pp.assemble_normal_eq(op, basis, V, xi=0.5)


# ---------------------------------------------------- residual equivalence
@pytest.mark.parametrize("seed", range(5))
def test_quadratic_form_residual_matches_direct_norm(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(15, 80))
    op = random_affine_operator(rng, n=n, m_A=3)
    basis = make_basis(op, [0.1, 0.6])
    V = pp.make_sketch("rescaled-rademacher", n, 12, seed=seed)
    xi = float(rng.uniform())
    ne = pp.assemble_normal_eq(op, basis, V, xi=xi)
    lam = rng.standard_normal(2)
    r_quad = pp.frob_residual(ne, lam)
    r_direct = pp.frob_residual_direct(op, basis, V, lam, xi=xi)
    assert r_quad == pytest.approx(r_direct, abs=1e-8 * max(r_direct, 1.0))


def test_direct_residual_is_explicit_matrix_norm():
    rng = np.random.default_rng(7)
    n = 25
    op = random_affine_operator(rng, n=n, m_A=2)
    basis = make_basis(op, [0.2, 0.8])
    V = pp.make_sketch("psrht", n, 8, seed=1)
    lam = np.array([0.7, -0.2])
    xi = 0.45
    got = pp.frob_residual_direct(op, basis, V, lam, xi=xi)
    A = op(xi).toarray()
    P = dense_preconditioner(lam, basis)
    want = np.linalg.norm(V.matrix - P @ A @ V.matrix)
    assert got == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------- unconstrained solve
def test_unconstrained_solution_satisfies_normal_equations():
    rng = np.random.default_rng(3)
    op = random_affine_operator(rng, n=30, m_A=3)
    basis = make_basis(op, [0.0, 0.35, 0.7])
    V = identity_sketch(30)
    ne = pp.assemble_normal_eq(op, basis, V, xi=0.2)
    sol = pp.solve_unconstrained(ne)
    assert np.allclose(ne.M @ sol.lam, ne.S, rtol=1e-8)
    # objective is a true minimum: any perturbation increases it
    for d in np.eye(len(sol.lam)):
        for eps in (1e-3, -1e-3):
            assert pp.frob_residual(ne, sol.lam + eps * d) >= pp.frob_residual(
                ne, sol.lam
            )


def test_interpolation_property_at_sample_points():
    rng = np.random.default_rng(4)
    op = random_affine_operator(rng, n=30, m_A=3)
    points = [0.15, 0.5, 0.85]
    basis = make_basis(op, points)
    V = pp.make_sketch("psrht", 30, 16, seed=0)
    for i, xi in enumerate(points):
        ne = pp.assemble_normal_eq(op, basis, V, xi=xi)
        sol = pp.solve_unconstrained(ne)
        assert np.allclose(sol.lam, np.eye(3)[i], atol=1e-7)
        assert pp.frob_residual_direct(op, basis, V, sol.lam, xi=xi) <= 1e-8 * np.sqrt(30)


def test_rank_deficient_normal_equations_fall_back_to_least_squares():
    # duplicated sample point makes M exactly rank deficient
    rng = np.random.default_rng(5)
    op = random_affine_operator(rng, n=20, m_A=2)
    basis = make_basis(op, [0.3, 0.3])
    V = identity_sketch(20)
    ne = pp.assemble_normal_eq(op, basis, V, xi=0.3)
    sol = pp.solve_unconstrained(ne)
    assert sol.rank_deficient
    assert pp.frob_residual(ne, sol.lam) <= 1e-6


# ---------------------------------------------------- constrained solves
def _spd_affine_operator(rng, n, m_A=3):
    """SPD-dominated family so the sampled inverses are near-SPD."""
    import scipy.sparse as sps

    import paraprec.coeffs as cf

    B = rng.standard_normal((n, n)) * 0.1
    A0 = B @ B.T + np.eye(n) * 2.0
    terms = [sps.csr_matrix(A0)]
    coeffs = [cf.constant(1.0)]
    for k in range(m_A - 1):
        C = rng.standard_normal((n, n)) * 0.05
        terms.append(sps.csr_matrix(C + C.T))
        coeffs.append([cf.cosine(1.0), cf.sine(1.0)][k % 2])
    return pp.AffineOperator(terms=tuple(terms), coeffs=tuple(coeffs))


@pytest.mark.parametrize("seed", range(10))
def test_nonneg_coefficients_and_objective_ordering(seed):
    rng = np.random.default_rng(300 + seed)
    n = int(rng.integers(15, 50))
    op = _spd_affine_operator(rng, n)
    basis = make_basis(op, [0.0, 0.45, 0.8])
    V = pp.make_sketch("rescaled-rademacher", n, 10, seed=seed)
    ne = pp.assemble_normal_eq(op, basis, V, xi=float(rng.uniform()))
    un = pp.solve_unconstrained(ne)
    nn = pp.solve_nonneg(ne)
    assert np.all(nn.lam >= 0.0)
    sc = pp.spectral_constants(basis)
    kap = pp.solve_kappa_constrained(ne, sc, 1e6)
    # nested feasible sets: unconstrained <= kappa-constrained <= nonneg
    assert un.objective <= kap.objective + 1e-9 * max(1.0, abs(kap.objective))
    assert kap.objective <= nn.objective + 1e-9 * max(1.0, abs(nn.objective))


@pytest.mark.parametrize("seed", range(25))
def test_nonneg_mode_positive_definite_symmetric_part(seed):
    rng = np.random.default_rng(400 + seed)
    n = int(rng.integers(10, 40))
    op = _spd_affine_operator(rng, n)
    basis = make_basis(op, [0.1, 0.6])
    V = pp.make_sketch("psrht", n, 8, seed=seed)
    ne = pp.assemble_normal_eq(op, basis, V, xi=float(rng.uniform()))
    nn = pp.solve_nonneg(ne)
    sc = pp.spectral_constants(basis)
    margin = nn.lam_pos @ sc.gamma_minus - nn.lam_neg @ sc.gamma_plus
    if margin > 0:
        P = dense_preconditioner(nn.lam, basis)
        sym_eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
        assert sym_eigs[0] > 0.0
        # coercivity quantitatively matches the spectral constants
        assert sym_eigs[0] >= margin - 1e-8 * abs(margin)


@pytest.mark.parametrize("seed", range(25))
def test_kappa_mode_condition_number_bound(seed):
    rng = np.random.default_rng(500 + seed)
    n = int(rng.integers(10, 40))
    op = _spd_affine_operator(rng, n)
    basis = make_basis(op, [0.1, 0.6])
    V = pp.make_sketch("psrht", n, 8, seed=seed)
    ne = pp.assemble_normal_eq(op, basis, V, xi=float(rng.uniform()))
    sc = pp.spectral_constants(basis)
    kappa_bar = 4.0 * float(np.max(sc.C / sc.gamma_minus))
    sol = pp.solve_kappa_constrained(ne, sc, kappa_bar)
    P = dense_preconditioner(sol.lam, basis)
    svals = np.linalg.svd(P, compute_uv=False)
    assert svals[0] / svals[-1] <= kappa_bar * (1.0 + 1e-6)


def test_kappa_below_feasibility_threshold_rejected():
    rng = np.random.default_rng(6)
    op = _spd_affine_operator(rng, 20)
    basis = make_basis(op, [0.2, 0.7])
    V = identity_sketch(20)
    ne = pp.assemble_normal_eq(op, basis, V, xi=0.4)
    sc = pp.spectral_constants(basis)
    too_small = 0.5 * float(np.max(sc.C / sc.gamma_minus))
    with pytest.raises(KappaTooSmall):
        pp.solve_kappa_constrained(ne, sc, too_small)


# ---------------------------------------------------- spectral constants
def test_spectral_constants_match_dense_oracle():
    rng = np.random.default_rng(8)
    op = _spd_affine_operator(rng, 30)
    basis = make_basis(op, [0.0, 0.5])
    sc = pp.spectral_constants(basis)
    for i, P in enumerate(basis.inverses):
        Pd = np.linalg.inv(op(basis.points[i]).toarray())
        w = np.linalg.eigvalsh(0.5 * (Pd + Pd.T))
        assert sc.gamma_minus[i] == pytest.approx(w[0], rel=1e-8)
        assert sc.gamma_plus[i] == pytest.approx(w[-1], rel=1e-8)
        assert sc.C[i] == pytest.approx(np.linalg.norm(Pd, 2), rel=1e-8)


# ---------------------------------------------------- preconditioner apply
def test_precond_apply_matches_dense_sum():
    rng = np.random.default_rng(9)
    op = random_affine_operator(rng, n=25, m_A=3)
    basis = make_basis(op, [0.1, 0.5, 0.9])
    lam = rng.standard_normal(3)
    x = rng.standard_normal(25)
    P = dense_preconditioner(lam, basis)
    assert np.allclose(pp.precond_apply(lam, basis, x), P @ x, atol=1e-10)
    assert np.allclose(precond_apply_transpose(lam, basis, x), P.T @ x, atol=1e-10)


# ---------------------------------------------------- singular-value bounds
@pytest.mark.parametrize("seed", range(20))
def test_preconditioned_operator_inequalities_at_optimum(seed):
    # The Frobenius-gap upper bound and the condition-number bound rely on
    # the Pythagorean identity at the projection optimum, so they are
    # checked on the actual minimizer over a two-point inverse basis.
    rng = np.random.default_rng(600 + seed)
    n = int(rng.integers(8, 30))
    op = random_affine_operator(rng, n=n, m_A=3)
    basis = make_basis(op, [0.2, 0.7])
    V = identity_sketch(n)
    xi = float(rng.uniform())
    ne = pp.assemble_normal_eq(op, basis, V, xi=xi)
    lam = pp.solve_unconstrained(ne).lam
    A = op(xi).toarray()
    P = dense_preconditioner(lam, basis)
    diag = pp.singular_value_diagnostics(A, P)
    assert diag["frob_gap_ok"]
    svals = np.linalg.svd(P @ A, compute_uv=False)
    assert diag["alpha"] == pytest.approx(svals[-1], rel=1e-10)
    assert diag["beta"] == pytest.approx(svals[0], rel=1e-10)
    fro2 = diag["frob_sq"]
    if diag["alpha"] <= 1.0:
        assert (1.0 - diag["alpha"]) ** 2 <= fro2 + 1e-8
        assert fro2 <= n * (1.0 - diag["alpha"] ** 2) + 1e-8
    bound = np.sqrt(max(n - (n - 1) * diag["alpha"] ** 2, 0.0)) / diag["alpha"]
    assert diag["kappa"] <= bound + 1e-8


def test_singular_value_gap_lower_bound_any_preconditioner():
    # (1 - alpha)^2 <= ||I - PA||_F^2 holds for arbitrary P, not just at
    # the optimum.
    rng = np.random.default_rng(42)
    for _ in range(20):
        n = int(rng.integers(5, 25))
        A = rng.standard_normal((n, n)) + 4.0 * np.eye(n)
        P = np.linalg.inv(A) + 0.05 * rng.standard_normal((n, n))
        alpha = np.linalg.svd(P @ A, compute_uv=False)[-1]
        fro2 = np.linalg.norm(np.eye(n) - P @ A) ** 2
        if alpha <= 1.0:
            assert (1.0 - alpha) ** 2 <= fro2 + 1e-8
