"""Greedy selection of interpolation points for the interpolated inverse."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .eim import SurrogateNE, build_surrogate, online_eval
from .errors import InvalidArgument, SingularOperator
from .operators import AffineOperator, eval_operator, factorize
from .precond import (
    InverseBasis,
    NormalEq,
    SpectralConstants,
    assemble_normal_eq,
    frob_residual,
    precond_apply,
    solve_kappa_constrained,
    solve_nonneg,
    solve_unconstrained,
    spectral_constants,
)
from .sketch import SketchMatrix


def parse_constraint(constraint):
    """Normalize 'none' | 'nonneg' | 'kappa:<value>' | ('kappa', value)."""
    if constraint in (None, "none", "unconstrained"):
        return ("none", None)
    if constraint == "nonneg":
        return ("nonneg", None)
    if isinstance(constraint, str) and constraint.startswith("kappa:"):
        return ("kappa", float(constraint.split(":", 1)[1]))
    if isinstance(constraint, (tuple, list)) and constraint[0] == "kappa":
        return ("kappa", float(constraint[1]))
    raise InvalidArgument(f"unknown constraint mode: {constraint!r}")


@dataclass(frozen=True)
class HistoryRecord:
    m: int
    xi_selected: object
    sup_sketch_residual: float
    sup_kappa: float | None = None


@dataclass
class Preconditioner:
    """Interpolated-inverse preconditioner with its online surrogate."""

    basis: InverseBasis
    surrogate: SurrogateNE
    constraint: str
    kappa_bar: float | None
    V: SketchMatrix
    op: AffineOperator
    history: list = field(default_factory=list)
    _constants: SpectralConstants | None = None

    @property
    def m(self):
        return self.basis.m

    def constants(self) -> SpectralConstants:
        if self._constants is None:
            self._constants = spectral_constants(self.basis)
        return self._constants

    def normal_eq(self, xi) -> NormalEq:
        return online_eval(self.surrogate, xi, op=self.op)

    def coefficients(self, xi):
        """lambda(xi) under the configured constraint mode."""
        ne = self.normal_eq(xi)
        if self.constraint == "none":
            return solve_unconstrained(ne).lam
        if self.constraint == "nonneg":
            return solve_nonneg(ne).lam
        return solve_kappa_constrained(ne, self.constants(), self.kappa_bar).lam

    def sketch_residual(self, xi):
        ne = self.normal_eq(xi)
        return frob_residual(ne, self.coefficients_from(ne))

    def coefficients_from(self, ne: NormalEq):
        if self.constraint == "none":
            return solve_unconstrained(ne).lam
        if self.constraint == "nonneg":
            return solve_nonneg(ne).lam
        return solve_kappa_constrained(ne, self.constants(), self.kappa_bar).lam

    def apply(self, xi, x, transpose=False):
        return precond_apply(self.coefficients(xi), self.basis, x, transpose=transpose)

    def dense(self, xi):
        lam = self.coefficients(xi)
        n = self.basis.dim
        out = np.zeros((n, n))
        for li, P in zip(lam, self.basis.inverses):
            if li != 0.0:
                out += li * P.dense()
        return out


def build_preconditioner(op, points, V, grid, constraint="none") -> Preconditioner:
    """Factorize A at the given points and assemble the online surrogate."""
    mode, kappa = parse_constraint(constraint)
    inverses = tuple(
        factorize(eval_operator(op, xi), tag=f"xi={xi}") for xi in points
    )
    basis = InverseBasis(points=tuple(_freeze(p) for p in points), inverses=inverses)
    surrogate = build_surrogate(op, basis, V, grid)
    return Preconditioner(
        basis=basis, surrogate=surrogate, constraint=mode, kappa_bar=kappa,
        V=V, op=op,
    )


def _freeze(p):
    arr = np.asarray(p)
    return float(arr) if arr.ndim == 0 else tuple(float(v) for v in arr)


def _residual_sweep(pre: Preconditioner, grid, excluded):
    """Sketched residual at every grid index; excluded points score -inf."""
    scores = np.full(len(grid), -np.inf)
    for j, xi in enumerate(grid):
        if j in excluded:
            continue
        scores[j] = pre.sketch_residual(xi)
    return scores


def _identity_residuals(op, V, grid):
    """||(I - A(xi))V||_F for the empty basis (P_0 = I)."""
    out = np.empty(len(grid))
    for j, xi in enumerate(grid):
        A = eval_operator(op, xi)
        out[j] = float(np.linalg.norm(V.matrix - A @ V.matrix))
    return out


def _sup_kappa(pre: Preconditioner, grid, stride=10):
    from .reduction import singular_bounds  # local: avoids import cycle

    sup = 0.0
    for xi in list(grid)[::stride]:
        sup = max(sup, singular_bounds(xi, pre, None)[2])
    return sup


def greedy_frob(op, b, grid, V, M_max, constraint="none", seed_point=None,
                diagnostics=False, diag_stride=10) -> Preconditioner:
    """Grow the interpolation set by maximizing the sketched residual.

    Starts from the identity preconditioner; each iteration scores every
    unselected grid point with the current surrogate, adds the argmax
    (lowest index on ties), refactorizes, and rebuilds the surrogate.
    `seed_point` forces the first point instead of the argmax rule.
    A singular candidate is skipped with a warning and the next best taken.
    """
    if M_max < 1:
        raise InvalidArgument("M_max must be >= 1")
    grid = list(grid)
    excluded: set[int] = set()
    pre = None

    for m in range(M_max):
        if pre is None:
            scores = _identity_residuals(op, V, grid)
            scores[list(excluded)] = -np.inf
        else:
            scores = _residual_sweep(pre, grid, excluded)
        sup_res = float(np.max(scores[np.isfinite(scores)]))

        if m == 0 and seed_point is not None:
            order = [int(np.argmin([_dist(seed_point, xi) for xi in grid]))]
            order += [j for j in np.argsort(-scores) if j != order[0]]
        else:
            order = list(np.argsort(-scores, kind="stable"))

        chosen = None
        history = pre.history if pre else []
        for j in order:
            if j in excluded or not np.isfinite(scores[j]):
                continue
            try:
                points = (pre.basis.points if pre else ()) + (_freeze(grid[j]),)
                cand = build_preconditioner(op, points, V, grid,
                                            constraint=constraint)
                chosen = j
                pre = cand
                pre.history = history
                break
            except SingularOperator:
                warnings.warn(f"skipping singular operator at grid index {j}")
                excluded.add(j)
        if chosen is None:
            raise InvalidArgument("every candidate point yielded a singular operator")
        excluded.add(int(chosen))
        sup_kappa = _sup_kappa(pre, grid, diag_stride) if diagnostics else None
        pre.history.append(
            HistoryRecord(m=m + 1, xi_selected=grid[chosen],
                          sup_sketch_residual=sup_res, sup_kappa=sup_kappa)
        )
    return pre


def _dist(a, b):
    return float(np.linalg.norm(np.atleast_1d(np.asarray(a, float))
                                - np.atleast_1d(np.asarray(b, float))))


def greedy_delta(op, b, grid, U, R_X, V, M_max, constraint="none") -> Preconditioner:
    """Same loop as greedy_frob but scoring points with delta_rm."""
    from .reduction import ReducedModel, delta_rm  # local: avoids import cycle

    if M_max < 1:
        raise InvalidArgument("M_max must be >= 1")
    grid = list(grid)
    excluded: set[int] = set()
    pre = None
    points: tuple = ()

    for m in range(M_max):
        if pre is None:
            # delta with P_0 = I is not defined through the basis; bootstrap
            # with the sketched-residual rule for the first point.
            scores = _identity_residuals(op, V, grid)
            scores[list(excluded)] = -np.inf
        else:
            model = ReducedModel.from_orthonormal(U, R_X, op=op, rhs=b)
            scores = np.full(len(grid), -np.inf)
            for j, xi in enumerate(grid):
                if j in excluded:
                    continue
                scores[j] = delta_rm(xi, model, pre)
        finite = scores[np.isfinite(scores)]
        if finite.size and float(np.max(finite)) <= 1e-14:
            break  # delta vanished everywhere: preconditioner already exact
        chosen = None
        history = pre.history if pre else []
        for j in np.argsort(-scores, kind="stable"):
            if j in excluded or not np.isfinite(scores[j]):
                continue
            try:
                cand_points = points + (_freeze(grid[j]),)
                pre = build_preconditioner(op, cand_points, V, grid,
                                           constraint=constraint)
                pre.history = history
                points = cand_points
                chosen = int(j)
                break
            except SingularOperator:
                warnings.warn(f"skipping singular operator at grid index {j}")
                excluded.add(int(j))
        if chosen is None:
            raise InvalidArgument("every candidate point yielded a singular operator")
        excluded.add(chosen)
        pre.history.append(
            HistoryRecord(m=m + 1, xi_selected=grid[chosen],
                          sup_sketch_residual=float("nan"))
        )
    return pre


def lhs_points(d, m, seed=0, bounds=None):
    """Seeded Latin Hypercube sample: m points in d dimensions.

    Each coordinate's m values occupy the m strata [k/m, (k+1)/m) in a
    seed-determined permutation, jittered uniformly within the stratum.
    """
    if m < 1 or d < 1:
        raise InvalidArgument("need d >= 1 and m >= 1")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    pts = np.empty((m, d))
    for k in range(d):
        perm = rng.permutation(m)
        pts[:, k] = (perm + rng.uniform(size=m)) / m
    if bounds is not None:
        lo = np.asarray([b[0] for b in bounds], dtype=float)
        hi = np.asarray([b[1] for b in bounds], dtype=float)
        pts = lo + pts * (hi - lo)
    return [tuple(row) if d > 1 else float(row[0]) for row in pts]
