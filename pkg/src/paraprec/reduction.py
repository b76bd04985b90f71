"""Preconditioned Petrov-Galerkin reduction, delta-proximality diagnostics,
and reduced-basis greedy drivers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateTestSpace,
    InvalidArgument,
    SingularReducedSystem,
)
from .greedy import Preconditioner, build_preconditioner
from .operators import (
    AffineOperator,
    AffineVector,
    NormMatrix,
    eval_operator,
    factorize,
    identity_norm,
)
from .precond import InverseBasis, precond_apply
from .eim import build_surrogate

_ORTH_DROP_TOL = 1e-12


def _norm_or_identity(R_X, n):
    if R_X is None:
        return identity_norm(n)
    return R_X


def orthonormalize(W, R_X=None, base=None):
    """R_X-orthonormalize columns of W against `base` and each other.

    Modified Gram-Schmidt with one reorthogonalization pass; columns whose
    remainder is below 1e-12 of their original norm are dropped.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    n = W.shape[0]
    R = _norm_or_identity(R_X, n)
    cols = [] if base is None else [base[:, j].copy() for j in range(base.shape[1])]
    kept = []
    for j in range(W.shape[1]):
        v = W[:, j].copy()
        nrm0 = R.norm(v)
        if nrm0 == 0.0:
            continue
        for _ in range(2):  # MGS + one reorthogonalization pass
            for q in cols:
                v -= R.inner(q, v) * q
        nrm = R.norm(v)
        if nrm <= _ORTH_DROP_TOL * nrm0:
            continue
        v /= nrm
        cols.append(v)
        kept.append(j)
    extra = len(cols) - (0 if base is None else base.shape[1])
    U = np.column_stack(cols) if cols else np.zeros((n, 0))
    return U, kept, extra


def pod_basis(snapshots, r, R_X=None):
    """R_X-orthonormal basis of the r dominant principal directions."""
    S = np.asarray(snapshots, dtype=float)
    n = S.shape[0]
    R = _norm_or_identity(R_X, n)
    C = S.T @ R.apply(S)
    w, Vv = np.linalg.eigh(0.5 * (C + C.T))
    order = np.argsort(w)[::-1]
    w, Vv = w[order], Vv[:, order]
    keep = w > max(w[0], 0.0) * 1e-14
    r = min(r, int(np.sum(keep)))
    U = S @ (Vv[:, :r] / np.sqrt(w[:r]))
    # polish orthonormality against roundoff
    U, _, _ = orthonormalize(U, R_X=R)
    return U


@dataclass(frozen=True)
class ReducedModel:
    """R_X-orthonormal reduced basis with the problem it was built for."""

    U: np.ndarray
    R_X: NormMatrix
    op: AffineOperator | None = None
    rhs: AffineVector | None = None
    snapshot_points: tuple = ()
    mode: str = "generic"

    def __post_init__(self):
        gram = self.U.T @ self.R_X.apply(self.U)
        if self.U.shape[1] and np.max(np.abs(gram - np.eye(self.U.shape[1]))) > 1e-8:
            raise InvalidArgument("basis columns are not R_X-orthonormal")

    @property
    def r(self):
        return self.U.shape[1]

    @property
    def n(self):
        return self.U.shape[0]

    @classmethod
    def from_orthonormal(cls, U, R_X=None, op=None, rhs=None, **kw):
        U = np.asarray(U, dtype=float)
        return cls(U=U, R_X=_norm_or_identity(R_X, U.shape[0]), op=op, rhs=rhs, **kw)


def _require_problem(model: ReducedModel):
    if model.op is None or model.rhs is None:
        raise InvalidArgument("model carries no operator/right-hand side")


def _solve_reduced(Mr, rhs, xi):
    try:
        sol = scipy.linalg.solve(Mr, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularReducedSystem("reduced matrix is singular", xi=xi) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularReducedSystem("reduced solve produced non-finite values", xi=xi)
    return sol


def petrov_galerkin(xi, model: ReducedModel, precond: Preconditioner):
    """Solve (U^T R_X P_m(xi) A(xi) U) a = U^T R_X P_m(xi) b(xi)."""
    _require_problem(model)
    A = eval_operator(model.op, xi)
    lam = precond.coefficients(xi)
    AU = A @ model.U
    PAU = np.zeros_like(AU)
    for li, P in zip(lam, precond.basis.inverses):
        if li != 0.0:
            PAU += li * P.apply_matrix(AU)
    Pb = precond_apply(lam, precond.basis, model.rhs(xi))
    RU = model.R_X.apply(model.U)
    Mr = RU.T @ PAU
    rr = RU.T @ Pb
    return _solve_reduced(Mr, rr, xi)


def galerkin(xi, model: ReducedModel):
    """Solve (U^T A(xi) U) a = U^T b(xi) — the unpreconditioned baseline."""
    _require_problem(model)
    A = eval_operator(model.op, xi)
    Mr = model.U.T @ (A @ model.U)
    rr = model.U.T @ model.rhs(xi)
    return _solve_reduced(Mr, rr, xi)


def best_approx(xi, model: ReducedModel, u=None):
    """Coefficients of the R_X-orthogonal projection of the exact solution."""
    if u is None:
        _require_problem(model)
        F = factorize(eval_operator(model.op, xi))
        u = F.apply(model.rhs(xi))
    return model.U.T @ model.R_X.apply(u)


def quasi_opt_constant(delta):
    """(1 - delta^2)^{-1/2}; +inf when the bound is vacuous (delta >= 1)."""
    if delta < 0.0:
        raise InvalidArgument("delta must be nonnegative")
    if delta >= 1.0:
        return float("inf")
    return float(1.0 / np.sqrt(1.0 - delta**2))


def delta_rm(xi, model: ReducedModel, precond: Preconditioner | None):
    """Proximality constant in [0, 1] of the preconditioned test space.

    Solves the generalized eigenproblem C x = gamma D x with
    C = U^T B (B^T R_X^{-1} B)^{-1} B^T U, D = U^T R_X U, where
    B = (P_m(xi) A(xi))^T R_X U; returns sqrt(1 - gamma_min).
    precond=None means P = R_X^{-1} (the plain Galerkin test space).
    """
    _require_problem(model)
    A = eval_operator(model.op, xi)
    RU = model.R_X.apply(model.U)
    if precond is None:
        B = A.T @ model.U
    else:
        lam = precond.coefficients(xi)
        PtRU = np.column_stack([
            precond_apply(lam, precond.basis, RU[:, j], transpose=True)
            for j in range(RU.shape[1])
        ])
        B = A.T @ PtRU
    B = np.asarray(B)
    RinvB = model.R_X.solve(B)
    G = B.T @ RinvB
    try:
        cG, low = scipy.linalg.cho_factor(G)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateTestSpace(
            "preconditioned test space is rank deficient at this point"
        ) from exc
    BtU = B.T @ model.U
    C = BtU.T @ scipy.linalg.cho_solve((cG, low), BtU)
    D = model.U.T @ RU
    gam = scipy.linalg.eigh(0.5 * (C + C.T), 0.5 * (D + D.T),
                            eigvals_only=True)
    gmin = float(np.clip(gam[0], 0.0, 1.0))
    return float(np.sqrt(1.0 - gmin))


def preconditioned_residual_norm(xi, u_r, precond: Preconditioner, R_X, rhs):
    """X-norm of P_m(xi)(A(xi) u_r - b(xi)), via implicit applies."""
    A = eval_operator(precond.op, xi)
    res = A @ np.asarray(u_r, dtype=float) - rhs(xi)
    y = precond.apply(xi, res)
    R = _norm_or_identity(R_X, y.shape[0])
    return float(R.norm(y))


def dual_residual_norm(xi, u_r, op, rhs, R_X):
    """||A(xi) u_r - b(xi)||_{X'} = sqrt(res^T R_X^{-1} res)."""
    A = eval_operator(op, xi)
    res = A @ np.asarray(u_r, dtype=float) - rhs(xi)
    R = _norm_or_identity(R_X, res.shape[0])
    return float(R.dual_norm(res))


def effectivity(xi, u_r, precond, exact_u, R_X, rhs):
    """Ratio of the preconditioned-residual estimator to the true X-error.

    Returns 1.0 by convention when the true error vanishes.
    """
    R = _norm_or_identity(R_X, np.asarray(exact_u).shape[0])
    err = R.norm(np.asarray(exact_u, float) - np.asarray(u_r, float))
    if err == 0.0:
        return 1.0
    return preconditioned_residual_norm(xi, u_r, precond, R, rhs) / err


def singular_bounds(xi, precond: Preconditioner, R_X):
    """Extreme X-norm singular values of P_m(xi)A(xi) and their ratio.

    Dense: computes the ordinary SVD extremes of L P_m A L^{-1} with
    L^T L = R_X (identity when R_X is None).
    """
    A = np.asarray(eval_operator(precond.op, xi).todense())
    PA = precond.dense(xi) @ A
    n = PA.shape[0]
    if R_X is not None:
        L = R_X.cholesky_lower().T  # upper factor with L^T L = R_X
        PA = L @ PA
        PA = scipy.linalg.solve_triangular(L.T, PA.T, lower=True).T  # PA L^{-1}
    svals = np.linalg.svd(PA, compute_uv=False)
    alpha, beta = float(svals[-1]), float(svals[0])
    kappa = beta / alpha if alpha > 0 else float("inf")
    return alpha, beta, kappa


@dataclass(frozen=True)
class TraceRecord:
    r: int
    xi_selected: object
    sup_rel_err: float
    q97_rel_err: float
    eff_lo: float
    eff_hi: float


@dataclass
class GreedyTrace:
    records: list = field(default_factory=list)
    status: str = "Completed"

    def to_csv(self, path, schema="rbgreedy-v1"):
        with open(path, "w") as fh:
            fh.write(f"# schema: {schema}\n")
            fh.write("r,xi_selected,sup_rel_err,q97_rel_err,eff_lo,eff_hi\n")
            for rec in self.records:
                fh.write(
                    f"{rec.r},{rec.xi_selected},{rec.sup_rel_err},"
                    f"{rec.q97_rel_err},{rec.eff_lo},{rec.eff_hi}\n"
                )


_MODES = ("ideal", "standard", "precond-fixed", "precond-reuse")


class _Blocks:
    """Offline blocks for fast per-point reduced solves and residuals.

    Caches, for the current (U, preconditioner basis):
      W[i,k] = P_i A_k U, wb[i,k] = P_i b_k, their R_X projections
      G[i,k] = U^T R_X W[i,k], g[i,k] = U^T R_X wb[i,k].
    Per-point work is then small dense algebra in (m, m_A, r).
    """

    def __init__(self, op, rhs, U, R_X, basis: InverseBasis):
        self.op, self.rhs, self.U, self.R_X, self.basis = op, rhs, U, R_X, basis
        m, mA, r, n = basis.m, op.n_terms, U.shape[1], U.shape[0]
        AU = [Ak @ U for Ak in op.terms]
        bk = [np.asarray(t, dtype=float) for t in rhs.terms]
        self.W = np.empty((m, mA, n, r))
        self.wb = np.empty((m, len(bk), n))
        for i, P in enumerate(basis.inverses):
            for k in range(mA):
                self.W[i, k] = P.apply_matrix(AU[k])
            for k in range(len(bk)):
                self.wb[i, k] = P.apply(bk[k])
        RU = R_X.apply(U)
        self.G = np.einsum("nr,ikns->ikrs", RU, self.W)
        self.g = np.einsum("nr,ikn->ikr", RU, self.wb)

    def reduced_solution(self, xi, lam):
        phi = np.array([c(xi) for c in self.op.coeffs], dtype=float)
        psi = np.array([c(xi) for c in self.rhs.coeffs], dtype=float)
        cM = np.einsum("i,k->ik", lam, phi)
        cS = np.einsum("i,k->ik", lam, psi)
        Mr = np.einsum("ik,ikrs->rs", cM, self.G)
        rr = np.einsum("ik,ikr->r", cS, self.g)
        return _solve_reduced(Mr, rr, xi)

    def precond_residual_norm(self, xi, lam, a):
        phi = np.array([c(xi) for c in self.op.coeffs], dtype=float)
        psi = np.array([c(xi) for c in self.rhs.coeffs], dtype=float)
        cM = np.einsum("i,k->ik", lam, phi)
        cS = np.einsum("i,k->ik", lam, psi)
        y = np.einsum("ik,ikns,s->n", cM, self.W, a) \
            - np.einsum("ik,ikn->n", cS, self.wb)
        return float(self.R_X.norm(y))


def _effectivity_interval(etas, p=0.97):
    """Smallest interval (by hi/lo ratio) containing fraction p of values."""
    vals = np.sort(np.asarray([e for e in etas if np.isfinite(e) and e > 0]))
    if vals.size == 0:
        return (1.0, 1.0)
    k = max(1, int(np.ceil(p * vals.size)))
    best = (vals[0], vals[-1])
    best_ratio = np.inf
    for i in range(vals.size - k + 1):
        lo, hi = vals[i], vals[i + k - 1]
        ratio = hi / lo if lo > 0 else np.inf
        if ratio < best_ratio:
            best_ratio = ratio
            best = (float(lo), float(hi))
    return best


def rb_greedy(op, rhs, grid, R, mode, R_X=None, V=None, precond=None,
              constraint="none", validation_stride=5, tol=0.0):
    """Reduced-basis greedy loop.

    mode:
      ideal          — select argmax of the true projection error.
      standard       — Galerkin solves, dual-residual-norm selection.
      precond-fixed  — Petrov-Galerkin with the given fixed preconditioner.
      precond-reuse  — each snapshot's factorization joins the preconditioner.
    Every `validation_stride`-th grid point is withheld from selection and
    used for error reporting. Returns (ReducedModel, GreedyTrace,
    Preconditioner or None).
    """
    if mode not in _MODES:
        raise InvalidArgument(f"mode must be one of {_MODES}, got {mode!r}")
    if mode == "precond-fixed" and precond is None:
        raise InvalidArgument("precond-fixed mode needs a preconditioner")
    if mode == "precond-reuse" and V is None:
        raise InvalidArgument("precond-reuse mode needs a sketch matrix V")
    grid = list(grid)
    if R > len(grid):
        raise InvalidArgument("R exceeds the size of the training grid")
    val_idx = list(range(0, len(grid), validation_stride))
    sel_idx = [j for j in range(len(grid)) if j % validation_stride != 0]
    if not sel_idx:
        sel_idx = list(range(len(grid)))

    n = op.dim
    R_X = _norm_or_identity(R_X, n)
    exact: dict[int, np.ndarray] = {}
    factor: dict[int, object] = {}

    def solution(j):
        if j not in exact:
            F = factorize(eval_operator(op, grid[j]), tag=f"grid[{j}]")
            factor[j] = F
            exact[j] = F.apply(rhs(grid[j]))
        return exact[j]

    U = np.zeros((n, 0))
    snap_points: list = []
    snap_grid: list[int] = []
    trace = GreedyTrace()
    basis_points: tuple = ()
    basis_inverses: tuple = ()
    pre = precond

    def rebuild_precond():
        nonlocal pre
        basis = InverseBasis(points=basis_points, inverses=basis_inverses)
        surrogate = build_surrogate(op, basis, V, np.asarray(grid))
        from .greedy import parse_constraint
        cmode, kap = parse_constraint(constraint)
        pre = Preconditioner(basis=basis, surrogate=surrogate, constraint=cmode,
                             kappa_bar=kap, V=V, op=op)

    def reduced_coeffs(blocks, j):
        xi = grid[j]
        if mode == "ideal":
            return best_approx(xi, model, u=solution(j))
        if mode == "standard":
            return galerkin(xi, model)
        lam = pre.coefficients(xi)
        return blocks.reduced_solution(xi, lam)

    def estimator(blocks, j, a):
        xi = grid[j]
        if mode == "ideal":
            u = solution(j)
            return float(R_X.norm(u - model.U @ a))
        u_r = model.U @ a
        if mode == "standard":
            return dual_residual_norm(xi, u_r, op, rhs, R_X)
        lam = pre.coefficients(xi)
        return blocks.precond_residual_norm(xi, lam, a)

    model = ReducedModel.from_orthonormal(U, R_X, op=op, rhs=rhs)
    for it in range(R):
        blocks = None
        if mode in ("precond-fixed", "precond-reuse") and pre is not None and model.r:
            blocks = _Blocks(op, rhs, model.U, R_X, pre.basis)

        # --- selection sweep
        if model.r == 0 or (mode in ("precond-fixed", "precond-reuse") and pre is None):
            scores = np.array([float(R_X.norm(rhs(grid[j]))) for j in sel_idx])
        else:
            scores = np.empty(len(sel_idx))
            for t, j in enumerate(sel_idx):
                a = reduced_coeffs(blocks, j)
                scores[t] = estimator(blocks, j, a)
        pick = sel_idx[int(np.argmax(scores))]
        if pick in snap_grid:
            trace.status = "Stagnated"
            break
        u_new = solution(pick)

        # --- grow the basis
        U2, kept, extra = orthonormalize(u_new[:, None], R_X=R_X, base=model.U)
        if extra == 0:
            trace.status = "Stagnated"
            break
        snap_points.append(grid[pick])
        snap_grid.append(pick)
        model = ReducedModel.from_orthonormal(
            U2, R_X, op=op, rhs=rhs,
            snapshot_points=tuple(snap_points), mode=mode,
        )
        if mode == "precond-reuse":
            basis_points = basis_points + (grid[pick],)
            basis_inverses = basis_inverses + (factor[pick],)
            rebuild_precond()

        # --- validation report
        blocks = None
        if mode in ("precond-fixed", "precond-reuse") and pre is not None:
            blocks = _Blocks(op, rhs, model.U, R_X, pre.basis)
        rel_errs, etas = [], []
        for j in val_idx:
            u = solution(j)
            unorm = float(R_X.norm(u))
            try:
                a = reduced_coeffs(blocks, j)
            except SingularReducedSystem:
                rel_errs.append(np.inf)
                continue
            u_r = model.U @ a
            err = float(R_X.norm(u - u_r))
            rel_errs.append(err / unorm if unorm > 0 else err)
            est = estimator(blocks, j, a) if mode != "ideal" else err
            etas.append(est / err if err > 0 else 1.0)
        sup_err = float(np.max(rel_errs))
        q97 = float(np.quantile(rel_errs, 0.97))
        lo, hi = _effectivity_interval(etas)
        trace.records.append(TraceRecord(
            r=model.r, xi_selected=grid[pick], sup_rel_err=sup_err,
            q97_rel_err=q97, eff_lo=lo, eff_hi=hi,
        ))
        if tol > 0.0 and sup_err <= tol:
            trace.status = "Converged"
            break

    return model, trace, (pre if mode in ("precond-fixed", "precond-reuse") else None)
