import numpy as np
import pytest
import scipy.sparse as sp

import paraprec as pp
import paraprec.coeffs as cf


def random_affine_operator(rng, n=30, m_A=3, diag_shift=4.0):
    """Well-conditioned random affine family for oracle tests."""
    terms = []
    coeffs = [cf.constant(1.0)]
    A0 = rng.standard_normal((n, n)) * 0.3 + diag_shift * np.eye(n)
    terms.append(sp.csr_matrix(A0))
    kinds = [cf.cosine(1.0), cf.sine(1.0), cf.monomial(1)]
    for k in range(m_A - 1):
        terms.append(sp.csr_matrix(rng.standard_normal((n, n)) * 0.2))
        coeffs.append(kinds[k % len(kinds)])
    return pp.AffineOperator(terms=tuple(terms), coeffs=tuple(coeffs))


def random_spd(rng, n):
    B = rng.standard_normal((n, n))
    return B @ B.T + n * np.eye(n)


@pytest.fixture(scope="session")
def adr_small():
    return pp.assemble_adr(10, D=50.0)


@pytest.fixture(scope="session")
def adr_medium():
    return pp.assemble_adr(20, D=50.0)
