"""Affinely parameter-dependent operators, factorized inverses, X-norms.

Everything here is immutable after construction; evaluation, solves and
norm computations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NotSPD, SingularOperator

# Relative threshold on |diag(U)| below which an LU pivot is declared
# numerically singular.
_PIVOT_RTOL = 100 * np.finfo(float).eps


@dataclass(frozen=True)
class AffineOperator:
    """A(xi) = sum_k Phi_k(xi) * A_k with sparse terms A_k."""

    terms: tuple
    coeffs: tuple
    dim: int = 0
    param_dim: int = 1

    def __post_init__(self):
        if len(self.terms) == 0 or len(self.terms) != len(self.coeffs):
            raise InvalidArgument("need matching, nonempty terms and coeffs")
        object.__setattr__(self, "terms", tuple(sp.csr_matrix(t) for t in self.terms))
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if self.dim == 0:
            object.__setattr__(self, "dim", self.terms[0].shape[0])
        for t in self.terms:
            if t.shape != (self.dim, self.dim):
                raise InvalidArgument(
                    f"term shape {t.shape} does not match dim {self.dim}"
                )

    @property
    def n_terms(self):
        return len(self.terms)

    def __call__(self, xi):
        return eval_operator(self, xi)


@dataclass(frozen=True)
class AffineVector:
    """b(xi) = sum_k theta_k(xi) * b_k with dense n-vector terms."""

    terms: tuple
    coeffs: tuple

    def __post_init__(self):
        if len(self.terms) == 0 or len(self.terms) != len(self.coeffs):
            raise InvalidArgument("need matching, nonempty terms and coeffs")
        terms = tuple(np.asarray(t, dtype=float).ravel() for t in self.terms)
        dims = {t.shape[0] for t in terms}
        if len(dims) != 1:
            raise InvalidArgument("vector terms must share length")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    @property
    def dim(self):
        return self.terms[0].shape[0]

    def __call__(self, xi):
        out = np.zeros(self.dim)
        for phi, bk in zip(self.coeffs, self.terms):
            out += float(phi(xi)) * bk
        return out


def eval_operator(op: AffineOperator, xi):
    """Evaluate the affine expansion at a parameter point (sparse CSR)."""
    acc = float(op.coeffs[0](xi)) * op.terms[0]
    for phi, term in zip(op.coeffs[1:], op.terms[1:]):
        acc = acc + float(phi(xi)) * term
    if not np.all(np.isfinite(acc.data)):
        raise InvalidArgument(f"operator evaluation at xi={xi!r} is not finite")
    return acc


class FactorizedInverse:
    """Implicit inverse P = A^{-1} backed by a sparse LU factorization.

    Exposes only solve actions: apply(x) = A^{-1} x and the transpose
    variant A^{-T} x.  Immutable after construction.
    """

    def __init__(self, lu, dim, tag=None):
        self._lu = lu
        self.dim = dim
        self.tag = tag

    def apply(self, x, transpose=False):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            raise InvalidArgument(
                f"vector length {x.shape[0]} does not match dim {self.dim}"
            )
        return self._lu.solve(x, trans="T" if transpose else "N")

    def apply_matrix(self, X, transpose=False):
        """Solve against each column of a dense n-by-k matrix."""
        return self.apply(np.asarray(X, dtype=float), transpose=transpose)

    def dense(self):
        """Materialize the inverse; test/diagnostic use at small n only."""
        return self.apply_matrix(np.eye(self.dim))


def factorize(A, tag=None) -> FactorizedInverse:
    """Sparse LU with partial pivoting; raises SingularOperator on bad pivots."""
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"matrix is not square: {A.shape}")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # SuperLU signals exact singularity this way
        raise SingularOperator(f"LU factorization failed: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    dmax = d.max() if d.size else 0.0
    if dmax == 0.0 or d.min() < _PIVOT_RTOL * dmax:
        pivot = int(np.argmin(d))
        raise SingularOperator(
            f"near-singular pivot {d.min():.3e} at index {pivot}", pivot=pivot
        )
    return FactorizedInverse(lu, A.shape[0], tag=tag)


def apply_inverse(F: FactorizedInverse, x, transpose=False):
    """Functional alias for FactorizedInverse.apply."""
    return F.apply(x, transpose=transpose)


class NormMatrix:
    """SPD matrix R_X defining ||v||_X^2 = v^T R_X v and its dual norm."""

    # Dense Cholesky SPD verification is used up to this size; beyond it the
    # check degrades to symmetry plus random quadratic-form positivity.
    _DENSE_CHECK_MAX = 4096

    def __init__(self, R):
        R = sp.csr_matrix(R)
        n = R.shape[0]
        if R.shape[0] != R.shape[1]:
            raise NotSPD(f"matrix is not square: {R.shape}")
        asym = abs(R - R.T)
        scale = max(abs(R).max(), 1e-300)
        if asym.nnz and asym.max() > 1e-10 * scale:
            raise NotSPD("matrix is not symmetric to tolerance")
        R = (R + R.T) * 0.5
        if n <= self._DENSE_CHECK_MAX:
            try:
                np.linalg.cholesky(R.toarray())
            except np.linalg.LinAlgError as exc:
                raise NotSPD("Cholesky failed: matrix is not positive definite") from exc
        else:
            rng = np.random.default_rng(0)
            for _ in range(30):
                v = rng.standard_normal(n)
                if v @ (R @ v) <= 0:
                    raise NotSPD("random quadratic form is nonpositive")
        self.matrix = R
        self.dim = n
        self._solver = factorize(R)
        self._chol = None

    def norm(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(max(v @ (self.matrix @ v), 0.0)))

    def dual_norm(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(max(v @ self._solver.apply(v), 0.0)))

    def inner(self, v, w):
        return float(np.asarray(v) @ (self.matrix @ np.asarray(w)))

    def apply(self, v):
        """R_X v (vector or matrix of columns)."""
        return self.matrix @ np.asarray(v, dtype=float)

    def solve(self, v):
        """Apply R_X^{-1} (vector or matrix of columns)."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 2:
            return self._solver.apply_matrix(v)
        return self._solver.apply(v)

    def cholesky_lower(self):
        """Dense lower factor C with C C^T = R_X (diagnostic scale only)."""
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.matrix.toarray())
        return self._chol


def identity_norm(n):
    return NormMatrix(sp.identity(n, format="csr"))


def xnorm(N: NormMatrix, v):
    return N.norm(v)


def xdualnorm(N: NormMatrix, v):
    return N.dual_norm(v)
