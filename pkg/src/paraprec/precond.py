"""Sketched normal equations for the inverse-span projection and the
unconstrained / nonnegative / condition-bounded coefficient solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceFailure,
    InvalidArgument,
    KappaTooSmall,
    SketchTooSmall,
)
from .operators import AffineOperator, FactorizedInverse, eval_operator
from .sketch import SketchMatrix


@dataclass(frozen=True)
class InverseBasis:
    """Interpolation points xi_i and their factorized inverses P_i."""

    points: tuple
    inverses: tuple

    def __post_init__(self):
        if len(self.points) != len(self.inverses):
            raise InvalidArgument("points and inverses must pair up")
        dims = {P.dim for P in self.inverses}
        if len(dims) > 1:
            raise InvalidArgument("inverses must share dimension")
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "inverses", tuple(self.inverses))

    @property
    def m(self):
        return len(self.inverses)

    @property
    def dim(self):
        return self.inverses[0].dim if self.inverses else 0

    def extended(self, point, inverse):
        return InverseBasis(self.points + (point,), self.inverses + (inverse,))


@dataclass(frozen=True)
class NormalEq:
    """M lambda = S data of the sketched Frobenius projection."""

    M: np.ndarray
    S: np.ndarray
    vnorm2: float

    @property
    def m(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class SpectralConstants:
    """Per-inverse extreme symmetric-part eigenvalues and operator norms."""

    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    C: np.ndarray
    tol: float


@dataclass(frozen=True)
class CoefficientSolution:
    lam: np.ndarray
    mode: str
    objective: float
    lam_pos: np.ndarray | None = None
    lam_neg: np.ndarray | None = None
    rank_deficient: bool = False


def _as_matrix(op_or_matrix, xi):
    if isinstance(op_or_matrix, AffineOperator):
        if xi is None:
            raise InvalidArgument("AffineOperator input requires a parameter point")
        return eval_operator(op_or_matrix, xi)
    return sp.csr_matrix(op_or_matrix)


def assemble_normal_eq(op_or_matrix, basis: InverseBasis, V: SketchMatrix, xi=None):
    """M^V_{ij} = trace(W_i^T W_j), S^V_i = trace(V^T W_i), W_i = P_i A(xi) V.

    Exactly m*K inverse applications, batched per inverse.
    """
    A = _as_matrix(op_or_matrix, xi)
    m = basis.m
    if V.K < m:
        raise SketchTooSmall(f"K={V.K} < m={m}: projection map cannot be injective")
    if basis.dim != A.shape[0] or V.n != A.shape[0]:
        raise InvalidArgument("operator, basis and sketch dimensions disagree")
    AV = A @ V.matrix
    W = [P.apply_matrix(AV) for P in basis.inverses]
    M = np.empty((m, m))
    S = np.empty(m)
    for i in range(m):
        S[i] = float(np.sum(V.matrix * W[i]))
        for j in range(i, m):
            M[i, j] = M[j, i] = float(np.sum(W[i] * W[j]))
    return NormalEq(M=M, S=S, vnorm2=V.frobenius_sq())


def _objective(ne: NormalEq, lam):
    raw = ne.vnorm2 - 2.0 * lam @ ne.S + lam @ ne.M @ lam
    if raw < 0.0 and raw >= -1e-10 * max(ne.vnorm2, 1.0):
        raw = 0.0
    return float(raw)


def frob_residual(ne: NormalEq, lam):
    """sqrt(max(0, ||V||_F^2 - 2 lam^T S + lam^T M lam)) = ||(I - P A)V||_F."""
    lam = np.asarray(lam, dtype=float)
    return float(np.sqrt(max(_objective(ne, lam), 0.0)))


def frob_residual_direct(op_or_matrix, basis: InverseBasis, V: SketchMatrix,
                         lam, xi=None):
    """||(I - P A(xi)) V||_F computed explicitly (m*K extra solves).

    Unlike frob_residual, this does not suffer the catastrophic cancellation
    of the quadratic form when the residual is near zero.
    """
    A = _as_matrix(op_or_matrix, xi)
    lam = np.asarray(lam, dtype=float)
    AV = A @ V.matrix
    R = V.matrix.copy()
    for li, P in zip(lam, basis.inverses):
        if li != 0.0:
            R = R - li * P.apply_matrix(AV)
    return float(np.linalg.norm(R))


def solve_unconstrained(ne: NormalEq) -> CoefficientSolution:
    """Solve M lambda = S; minimum-norm least squares if M is rank deficient."""
    M, S = ne.M, ne.S
    eigs = np.linalg.eigvalsh(M)
    rank_deficient = eigs[0] <= 1e-12 * max(eigs[-1], 0.0) or eigs[-1] == 0.0
    if rank_deficient:
        lam = np.linalg.lstsq(M, S, rcond=1e-12)[0]
    else:
        c, low = scipy.linalg.cho_factor(M)
        lam = scipy.linalg.cho_solve((c, low), S)
    return CoefficientSolution(
        lam=lam,
        mode="unconstrained",
        objective=_objective(ne, lam),
        rank_deficient=bool(rank_deficient),
    )


def _sqrt_factorization(M):
    """G with G^T G = M (p-by-m, p = numerical rank), via eigendecomposition."""
    w, Q = np.linalg.eigh(0.5 * (M + M.T))
    keep = w > max(w[-1], 0.0) * 1e-14
    if not np.any(keep):
        return np.zeros((1, M.shape[0]))
    return np.sqrt(w[keep])[:, None] * Q[:, keep].T


def solve_nonneg(ne: NormalEq) -> CoefficientSolution:
    """argmin over lam >= 0 of the quadratic objective (Lawson-Hanson NNLS).

    The PSD quadratic is rewritten as a least-squares problem through a
    symmetric square root of M; S lies in range(M) by construction.
    """
    G = _sqrt_factorization(ne.M)
    h = np.linalg.lstsq(G.T, ne.S, rcond=None)[0]
    lam, _ = scipy.optimize.nnls(G, h)
    return CoefficientSolution(
        lam=lam, mode="nonneg", objective=_objective(ne, lam),
        lam_pos=lam.copy(), lam_neg=np.zeros_like(lam),
    )


def _kappa_constraints(sc: SpectralConstants, kappa):
    a1 = np.concatenate([sc.gamma_minus, -sc.gamma_plus])
    a2 = np.concatenate([kappa * sc.gamma_minus - sc.C, -(kappa * sc.gamma_plus + sc.C)])
    return a1, a2


def _repair_split(z, m, sc, kappa):
    """Scale the negative part down until both linear constraints hold."""
    z = np.maximum(z, 0.0)
    lp, ln = z[:m], z[m:]
    a1, a2 = _kappa_constraints(sc, kappa)
    theta = 1.0
    for a in (a1, a2):
        pos = float(a[:m] @ lp)       # >= 0: entries of a[:m] are >= 0 here
        neg = float(-a[m:] @ ln)      # >= 0
        if neg > pos:
            theta = min(theta, pos / neg if neg > 0 else 1.0)
    ln = ln * theta
    return np.concatenate([lp, ln])


def solve_kappa_constrained(ne: NormalEq, sc: SpectralConstants, kappa) -> CoefficientSolution:
    """Projection onto the condition-bounded convex cone.

    Lifted to 2m nonnegative variables (lam+, lam-) with the two linear
    inequalities enforcing coercivity and the condition bound; solved by
    SLSQP started from the nonnegative solution (always feasible), keeping
    whichever feasible candidate has the lower objective.
    """
    gm = sc.gamma_minus
    if np.any(gm <= 0):
        raise InvalidArgument("constrained mode requires positive-definite inverses")
    kappa_min = float(np.max(sc.C / gm))
    if kappa < kappa_min:
        raise KappaTooSmall(
            f"kappa={kappa} below max_i C_i/gamma^-_i = {kappa_min:.6g}; the "
            "feasible-set inclusion guarantee fails"
        )
    m = ne.m
    Stil = np.concatenate([ne.S, -ne.S])
    a1, a2 = _kappa_constraints(sc, kappa)

    def split_objective(z):
        lam = z[:m] - z[m:]
        return ne.vnorm2 - 2.0 * lam @ ne.S + lam @ ne.M @ lam

    def split_grad(z):
        lam = z[:m] - z[m:]
        g = 2.0 * (ne.M @ lam - ne.S)
        return np.concatenate([g, -g])

    nn = solve_nonneg(ne)
    z0 = np.concatenate([nn.lam, np.zeros(m)])
    candidates = [z0]
    res = scipy.optimize.minimize(
        split_objective, z0, jac=split_grad, method="SLSQP",
        bounds=[(0.0, None)] * (2 * m),
        constraints=[
            {"type": "ineq", "fun": lambda z: a1 @ z, "jac": lambda z: a1},
            {"type": "ineq", "fun": lambda z: a2 @ z, "jac": lambda z: a2},
        ],
        options={"maxiter": 400, "ftol": 1e-14},
    )
    if res.x is not None and np.all(np.isfinite(res.x)):
        candidates.append(_repair_split(res.x, m, sc, kappa))
    z = min(candidates, key=split_objective)
    lp, ln = z[:m], z[m:]
    lam = lp - ln
    return CoefficientSolution(
        lam=lam, mode="kappa", objective=_objective(ne, lam),
        lam_pos=lp, lam_neg=ln,
    )


_LANCZOS_MAXITER = 500
_DENSE_SPECTRAL_MAX = 400


def _spectral_one(P: FactorizedInverse, tol):
    n = P.dim
    if n <= _DENSE_SPECTRAL_MAX:
        Pd = P.dense()
        w = np.linalg.eigvalsh(0.5 * (Pd + Pd.T))
        opnorm = float(np.linalg.norm(Pd, 2))
        return float(w[0]), float(w[-1]), opnorm
    sym = spla.LinearOperator(
        (n, n), matvec=lambda w: 0.5 * (P.apply(w) + P.apply(w, transpose=True))
    )
    v0 = np.ones(n) / np.sqrt(n)
    try:
        lo = spla.eigsh(sym, k=1, which="SA", tol=tol, v0=v0,
                        maxiter=_LANCZOS_MAXITER)[0][0]
        hi = spla.eigsh(sym, k=1, which="LA", tol=tol, v0=v0,
                        maxiter=_LANCZOS_MAXITER)[0][0]
        full = spla.LinearOperator(
            (n, n), matvec=P.apply,
            rmatvec=lambda w: P.apply(w, transpose=True),
        )
        opnorm = spla.svds(full, k=1, tol=tol, v0=v0, maxiter=_LANCZOS_MAXITER,
                           return_singular_vectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            f"spectral estimation did not converge in {_LANCZOS_MAXITER} iterations",
            best=getattr(exc, "eigenvalues", None),
        ) from exc
    return float(lo), float(hi), float(opnorm)


def spectral_constants(basis: InverseBasis, tol=1e-6) -> SpectralConstants:
    """gamma^-_i, gamma^+_i (symmetric-part extremes) and C_i = ||P_i||_2."""
    gm, gp, C = [], [], []
    for P in basis.inverses:
        lo, hi, opnorm = _spectral_one(P, tol)
        gm.append(lo)
        gp.append(hi)
        C.append(opnorm)
    return SpectralConstants(
        gamma_minus=np.array(gm), gamma_plus=np.array(gp), C=np.array(C), tol=tol
    )


def precond_apply(lam, basis: InverseBasis, x, transpose=False):
    """(sum_i lam_i P_i) x, or its transpose."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[0] != basis.m:
        raise InvalidArgument(f"lambda length {lam.shape[0]} != m={basis.m}")
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x, dtype=float)
    for li, P in zip(lam, basis.inverses):
        if li != 0.0:
            out += li * P.apply(x, transpose=transpose)
    return out


def precond_apply_transpose(lam, basis: InverseBasis, x):
    return precond_apply(lam, basis, x, transpose=True)


def singular_value_diagnostics(A, P, slack=1e-8):
    """Singular-value diagnostics of the preconditioned operator (dense).

    Returns extreme singular values of P A, the condition number, and
    whether the Frobenius-gap and condition-number inequalities hold.
    """
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    n = A.shape[0]
    PA = P @ A
    svals = np.linalg.svd(PA, compute_uv=False)
    alpha, beta = float(svals[-1]), float(svals[0])
    kappa = beta / alpha if alpha > 0 else np.inf
    fro2 = float(np.linalg.norm(np.eye(n) - PA, "fro") ** 2)
    ok = True
    if alpha <= 1.0:
        ok &= (1.0 - alpha) ** 2 <= fro2 + slack
        ok &= fro2 <= n * (1.0 - alpha**2) + slack
    if alpha > 0:
        ok &= kappa <= np.sqrt(max(n - (n - 1) * alpha**2, 0.0)) / alpha + slack
    return {
        "alpha": alpha,
        "beta": beta,
        "kappa": kappa,
        "frob_sq": fro2,
        "frob_gap_ok": bool(ok),
    }
