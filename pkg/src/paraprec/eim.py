"""Empirical interpolation of tabulated scalar-function families and the
offline/online surrogate of the sketched normal equations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .coeffs import tabulate
from .errors import InvalidArgument
from .precond import InverseBasis, NormalEq, assemble_normal_eq
from .sketch import SketchMatrix

_DEFAULT_RTOL = 1e-14


@dataclass(frozen=True)
class EimModel:
    """Greedy interpolation model for a function family tabulated on a grid.

    Reconstructs any family member g as g(xi) ~ sum_k psi_k(xi) g(xi*_k),
    where psi_k are determined by the magic indices/points and Q.
    """

    grid: np.ndarray                 # training grid, shape (n_grid,) or (n_grid, d)
    table: np.ndarray                # family tabulation, shape (n_funcs, n_grid)
    magic_func_indices: tuple        # i*_k
    magic_grid_indices: tuple        # grid index of xi*_k
    Q: np.ndarray                    # Q[i, j] = zeta_{i*_i}(xi*_j), shape (k, k)
    psi_table: np.ndarray            # Psi_i tabulated on grid, shape (k, n_grid)
    residual_history: tuple          # selected max |R_k| magnitude per step
    final_residual: float

    @property
    def rank(self):
        return len(self.magic_func_indices)

    @property
    def magic_points(self):
        return np.asarray(self.grid)[list(self.magic_grid_indices)]

    def interp_weights(self, grid_index):
        """Psi_k values at a grid point, by index (exact at magic points)."""
        return self.psi_table[:, grid_index]

    def to_dict(self):
        return {
            "grid": np.asarray(self.grid).tolist(),
            "table": self.table.tolist(),
            "magic_func_indices": list(self.magic_func_indices),
            "magic_grid_indices": list(self.magic_grid_indices),
            "Q": self.Q.tolist(),
            "psi_table": self.psi_table.tolist(),
            "residual_history": list(self.residual_history),
            "final_residual": self.final_residual,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            grid=np.asarray(d["grid"], dtype=float),
            table=np.asarray(d["table"], dtype=float),
            magic_func_indices=tuple(d["magic_func_indices"]),
            magic_grid_indices=tuple(d["magic_grid_indices"]),
            Q=np.asarray(d["Q"], dtype=float),
            psi_table=np.asarray(d["psi_table"], dtype=float),
            residual_history=tuple(d["residual_history"]),
            final_residual=float(d["final_residual"]),
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def eim(table, grid, tol=None) -> EimModel:
    """Greedy residual-argmax interpolation of a tabulated family.

    `table` is (n_funcs, n_grid): row i tabulates function zeta_i over `grid`.
    Iterates: pick (i*, xi*) maximizing |R_k(i, xi)| where R_k is the current
    interpolation residual; stop when the max residual falls below
    tol (default 1e-14 relative to the initial max) or rank = n_funcs.
    Ties break to the lowest (i, grid-index) pair, row-major.
    """
    table = np.asarray(table, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if table.ndim != 2 or table.shape[1] != grid.shape[0]:
        raise InvalidArgument("table must be (n_funcs, n_grid) matching grid")
    n_funcs, n_grid = table.shape
    if n_funcs == 0 or n_grid == 0:
        raise InvalidArgument("family and grid must be nonempty")

    R = table.copy()
    e0 = float(np.max(np.abs(R)))
    if e0 == 0.0:
        return EimModel(
            grid=grid, table=table, magic_func_indices=(),
            magic_grid_indices=(), Q=np.zeros((0, 0)),
            psi_table=np.zeros((0, n_grid)), residual_history=(),
            final_residual=0.0,
        )
    threshold = e0 * _DEFAULT_RTOL if tol is None else tol

    func_idx, grid_idx, history = [], [], []
    while len(func_idx) < n_funcs:
        flat = int(np.argmax(np.abs(R)))  # row-major -> lexicographic ties
        i_star, j_star = divmod(flat, n_grid)
        e = float(abs(R[i_star, j_star]))
        if e <= threshold and history:
            break
        if e == 0.0:
            break
        func_idx.append(i_star)
        grid_idx.append(j_star)
        history.append(e)
        # deflate: subtract the rank-1 interpolation update
        col = R[:, j_star].copy()
        row = R[i_star, :].copy()
        R -= np.outer(col / col[i_star], row)
        if np.max(np.abs(R)) <= threshold:
            break

    k = len(func_idx)
    # Convention: Q[a, b] = zeta_{i*_a}(xi*_b).
    Q = table[np.ix_(func_idx, grid_idx)]
    # Psi_a(xi) = sum_b (Q^{-1})_{ab} zeta_{i*_b}(xi); interpolation then reads
    # g ~ sum_a Psi_a(xi) g(xi*_a) with Psi_a(xi*_l) = delta_{al}.
    Zsel = table[func_idx, :]                        # (k, n_grid)
    psi_table = np.linalg.solve(Q, Zsel) if k else np.zeros((0, n_grid))
    # Interpolation at the magic points is exact by construction; pin the
    # corresponding columns to canonical vectors so reruns reproduce the
    # stored samples bit for bit.
    for a, j in enumerate(grid_idx):
        psi_table[:, j] = 0.0
        psi_table[a, j] = 1.0
    final = float(np.max(np.abs(R))) if k else 0.0
    return EimModel(
        grid=grid, table=table,
        magic_func_indices=tuple(func_idx), magic_grid_indices=tuple(grid_idx),
        Q=Q, psi_table=psi_table,
        residual_history=tuple(history), final_residual=final,
    )


def eim_reconstruct(model: EimModel, func_index, grid_index):
    """Interpolated value of family member `func_index` at a grid point."""
    vals_at_magic = model.table[func_index, list(model.magic_grid_indices)]
    return float(model.psi_table[:, grid_index] @ vals_at_magic)


@dataclass(frozen=True)
class SurrogateNE:
    """Offline data for fast online evaluation of M^V(xi), S^V(xi)."""

    eim_M: EimModel
    eim_S: EimModel
    M_samples: np.ndarray    # (m_M, m, m) — M^V at the M-magic points
    S_samples: np.ndarray    # (m_S, m)    — S^V at the S-magic points
    vnorm2: float
    grid: np.ndarray

    @property
    def m_M(self):
        return self.eim_M.rank

    @property
    def m_S(self):
        return self.eim_S.rank


def _pair_table(phi_table):
    """Tabulation of all products Phi_i Phi_j (i <= j would lose the argmax
    ordering of the full family; keep all ordered pairs — duplicates are
    harmless because EIM deflates them to zero residual)."""
    m_A = phi_table.shape[0]
    rows = [phi_table[i] * phi_table[j] for i in range(m_A) for j in range(i, m_A)]
    return np.asarray(rows)


def build_surrogate(op, basis: InverseBasis, V: SketchMatrix, grid) -> SurrogateNE:
    """Run EIM on the coefficient products and singles; assemble the exact
    normal equations only at the magic points."""
    grid = np.asarray(grid, dtype=float)
    phi_table = tabulate(op.coeffs, grid)
    model_M = eim(_pair_table(phi_table), grid)
    model_S = eim(phi_table, grid)

    M_samples, S_samples = [], []
    for j in model_M.magic_grid_indices:
        ne = assemble_normal_eq(op, basis, V, xi=_grid_point(grid, j))
        M_samples.append(ne.M)
    for j in model_S.magic_grid_indices:
        ne = assemble_normal_eq(op, basis, V, xi=_grid_point(grid, j))
        S_samples.append(ne.S)
    m = basis.m
    return SurrogateNE(
        eim_M=model_M, eim_S=model_S,
        M_samples=np.asarray(M_samples).reshape(model_M.rank, m, m),
        S_samples=np.asarray(S_samples).reshape(model_S.rank, m),
        vnorm2=V.frobenius_sq(), grid=grid,
    )


def _grid_point(grid, j):
    return grid[j]


def _psi_at(model: EimModel, xi):
    """Psi values at an arbitrary parameter point.

    At a grid point this is read from the stored table (bit-for-bit exact at
    magic points); off-grid it is recomputed from the magic-function rows,
    which requires the family to be re-evaluable — the surrogate path always
    re-tabulates the coefficient functions instead.
    """
    grid = np.asarray(model.grid)
    xi_arr = np.asarray(xi, dtype=float)
    if grid.ndim == 1:
        hits = np.nonzero(grid == float(xi_arr))[0]
    else:
        hits = np.nonzero(np.all(grid == xi_arr, axis=1))[0]
    if hits.size:
        return model.psi_table[:, int(hits[0])]
    return None


def _psi_from_values(model: EimModel, zeta_values):
    """Psi(xi) from fresh evaluations zeta_{i*_b}(xi): Psi = Q^{-1} zeta."""
    return np.linalg.solve(model.Q, zeta_values)


def online_eval(surrogate: SurrogateNE, xi, op=None) -> NormalEq:
    """M^V(xi) = sum_k Psi_k(xi) M^V(xi*_k), similarly S; O(m_M m^2) cost."""
    psi_M = _psi_at(surrogate.eim_M, xi)
    psi_S = _psi_at(surrogate.eim_S, xi)
    if psi_M is None or psi_S is None:
        if op is None:
            raise InvalidArgument(
                "off-grid evaluation requires the operator for coefficient "
                "re-evaluation"
            )
        phi = np.array([c(xi) for c in op.coeffs], dtype=float)
        m_A = phi.shape[0]
        pairs = np.array([phi[i] * phi[j] for i in range(m_A) for j in range(i, m_A)])
        if psi_M is None:
            psi_M = _psi_from_values(
                surrogate.eim_M,
                pairs[list(surrogate.eim_M.magic_func_indices)],
            )
        if psi_S is None:
            psi_S = _psi_from_values(
                surrogate.eim_S, phi[list(surrogate.eim_S.magic_func_indices)]
            )
    M = np.einsum("k,kij->ij", psi_M, surrogate.M_samples)
    S = psi_S @ surrogate.S_samples
    return NormalEq(M=M, S=S, vnorm2=surrogate.vnorm2)
