"""Benchmark problems (advection-diffusion-reaction on the periodic unit
square, synthetic multi-parameter families) and interpolation baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import coeffs as cf
from .errors import GenerationFailed, InvalidArgument, SingularOperator
from .greedy import lhs_points
from .operators import (
    AffineOperator,
    AffineVector,
    NormMatrix,
    eval_operator,
    factorize,
)


@dataclass(frozen=True)
class BenchmarkProblem:
    op: AffineOperator
    rhs: AffineVector
    grid: np.ndarray
    R_X: NormMatrix
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rng = np.random.default_rng(12345)
        sample = rng.choice(len(self.grid), size=min(10, len(self.grid)),
                            replace=False)
        for j in sample:
            factorize(eval_operator(self.op, self.grid[j]))  # raises if singular


def _p1_element_matrices(verts):
    """Stiffness, mass, and the two advection element matrices of a P1
    triangle with the given 3x2 vertex array (exact quadrature)."""
    v = np.asarray(verts, dtype=float)
    J = np.array([v[1] - v[0], v[2] - v[0]]).T        # 2x2 Jacobian
    detJ = float(np.linalg.det(J))
    area = abs(detJ) / 2.0
    # gradients of the barycentric basis functions
    grads_ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = grads_ref @ np.linalg.inv(J)
    K = area * grads @ grads.T
    M = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    # advection: int phi_a (e_d . grad phi_b) = (e_d . grad phi_b) * area / 3
    C1 = area / 3.0 * np.tile(grads[:, 0], (3, 1))
    C2 = area / 3.0 * np.tile(grads[:, 1], (3, 1))
    return K, M, C1, C2


def assemble_adr(mesh_side, D=50.0, n_grid=250):
    """Advection-diffusion-reaction operator on the periodic unit square.

    P1 elements on a structured triangular mesh with n = mesh_side**2
    unknowns; A(xi) = A0 + cos(2 pi xi) A1 + sin(2 pi xi) A2 with A0 the
    (SPD) diffusion-plus-reaction matrix and A1, A2 the advection matrices
    scaled by D. The source is a Gaussian bump centered at (0.5, 0.5).
    """
    if mesh_side < 4:
        raise InvalidArgument("mesh_side must be >= 4")
    ms = mesh_side
    n = ms * ms
    h = 1.0 / ms

    def node(i, j):
        return (i % ms) * ms + (j % ms)

    data = {"K": {}, "M": {}, "C1": {}, "C2": {}}

    # reference element matrices (all cells congruent)
    t1 = [(0.0, 0.0), (h, 0.0), (h, h)]
    t2 = [(0.0, 0.0), (h, h), (0.0, h)]
    elems = []
    for verts, loc in ((t1, ((0, 0), (1, 0), (1, 1))),
                       (t2, ((0, 0), (1, 1), (0, 1)))):
        K, M, C1, C2 = _p1_element_matrices(verts)
        elems.append((loc, K, M, C1, C2))

    def acc(key, gi, gj, val):
        data[key][(gi, gj)] = data[key].get((gi, gj), 0.0) + val

    for i in range(ms):
        for j in range(ms):
            for loc, K, M, C1, C2 in elems:
                gids = [node(i + di, j + dj) for (di, dj) in loc]
                for a in range(3):
                    for b in range(3):
                        acc("K", gids[a], gids[b], K[a, b])
                        acc("M", gids[a], gids[b], M[a, b])
                        acc("C1", gids[a], gids[b], C1[a, b])
                        acc("C2", gids[a], gids[b], C2[a, b])

    def to_csr(key):
        items = data[key]
        rows = np.fromiter((k[0] for k in items), dtype=int, count=len(items))
        cols = np.fromiter((k[1] for k in items), dtype=int, count=len(items))
        vals = np.fromiter(items.values(), dtype=float, count=len(items))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    A0 = to_csr("K") + to_csr("M")
    A1 = D * to_csr("C1")
    A2 = D * to_csr("C2")

    xs = (np.arange(ms) * h)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    f = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.01).ravel()
    b = h * h * f

    op = AffineOperator(
        terms=(A0, A1, A2),
        coeffs=(cf.constant(1.0), cf.cosine(1.0), cf.sine(1.0)),
    )
    rhs = AffineVector(terms=(b,), coeffs=(cf.constant(1.0),))
    grid = np.linspace(0.0, 1.0, n_grid, endpoint=False)
    return BenchmarkProblem(
        op=op, rhs=rhs, grid=grid, R_X=NormMatrix(A0),
        metadata={"name": "adr", "mesh_side": ms, "D": D, "n": n},
    )


def synthetic_multiparam(d, n, m_A, seed=0, n_grid=100):
    """Random affine family A(xi) = A0 + sum_k g_k(xi) A_k stable over an
    LHS training grid; stands in for large externally supplied problems."""
    if d < 1:
        raise InvalidArgument("d must be >= 1")
    if m_A < 2:
        raise InvalidArgument("m_A must be >= 2 (affine family, not constant)")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    # SPD anchor: shifted 1-D Laplacian
    main = 2.0 * np.ones(n)
    off = -1.0 * np.ones(n - 1)
    A0 = sp.diags([off, main + 0.5, off], offsets=[-1, 0, 1], format="csr")

    grid = lhs_points(d, n_grid, seed=seed + 1)
    pts = [((g,) if d == 1 else g) for g in grid]

    scale = 0.5
    for _ in range(5):
        terms = [A0]
        funcs = [cf.constant(1.0)]
        for k in range(m_A - 1):
            density = min(4.0 / n, 1.0)
            Mk = sp.random(n, n, density=density, random_state=np.random.RandomState(
                int(rng.integers(0, 2**31 - 1))), format="csr")
            Mk = 0.5 * (Mk + Mk.T)
            nrm = abs(Mk).max() or 1.0
            Mk = (scale / (m_A - 1) / nrm) * Mk
            terms.append(Mk.tocsr())
            c = float(np.exp(rng.uniform(np.log(0.1), np.log(1.0))))
            funcs.append(cf.monomial(degree=1 + (k % 2), scale=c, coord=k % d))
        op = AffineOperator(terms=tuple(terms), coeffs=tuple(funcs))
        try:
            for p in pts[: min(10, len(pts))]:
                factorize(eval_operator(op, p))
            b = rng.standard_normal(n)
            rhs = AffineVector(terms=(b,), coeffs=(cf.constant(1.0),))
            return BenchmarkProblem(
                op=op, rhs=rhs, grid=np.asarray(pts, dtype=float),
                R_X=NormMatrix(A0),
                metadata={"name": "synthetic", "d": d, "n": n, "m_A": m_A,
                          "seed": seed},
            )
        except SingularOperator:
            scale *= 0.5
    raise GenerationFailed("could not produce a nonsingular family in 5 attempts")


def _distances(xi, points):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != xi.shape[0]:
        pts = pts.reshape(len(points), -1)
    return np.linalg.norm(pts - xi[None, :], axis=1)


def shepard_weights(xi, points, s=2.0):
    """Inverse-distance weights: lambda_i ~ ||xi - xi_i||^{-s}, sum = 1."""
    if s <= 0:
        raise InvalidArgument("s must be positive")
    dist = _distances(xi, points)
    hit = np.nonzero(dist == 0.0)[0]
    lam = np.zeros(len(dist))
    if hit.size:
        lam[hit[0]] = 1.0
        return lam
    w = dist ** (-s)
    return w / np.sum(w)


def nearest_weights(xi, points):
    """Indicator of the nearest point; ties go to the smallest index."""
    dist = _distances(xi, points)
    lam = np.zeros(len(dist))
    lam[int(np.argmin(dist))] = 1.0
    return lam
