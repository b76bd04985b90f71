"""Matrix Market I/O and JSON manifests for affine families."""

from __future__ import annotations

import json
import os

import numpy as np
import scipy.io
import scipy.sparse as sp

from .coeffs import Coefficient
from .errors import EmptyMatrix, InvalidArgument
from .operators import AffineOperator, AffineVector


def write_matrix(path, A):
    """Full-precision Matrix Market write (dense or sparse)."""
    if sp.issparse(A):
        scipy.io.mmwrite(path, A, precision=17)
    else:
        arr = np.asarray(A)
        if arr.ndim == 1:
            arr = arr[:, None]
        scipy.io.mmwrite(path, arr, precision=17)


def read_matrix(path):
    """Matrix Market read; header-only (zero-sized) files raise EmptyMatrix."""
    A = scipy.io.mmread(path)
    shape = A.shape
    if 0 in shape or (sp.issparse(A) and A.nnz == 0 and min(shape) == 0):
        raise EmptyMatrix(f"{path} holds an empty matrix of shape {shape}")
    if min(shape) == 0:
        raise EmptyMatrix(f"{path} holds an empty matrix of shape {shape}")
    return A


def read_vector(path):
    A = read_matrix(path)
    arr = np.asarray(A.todense() if sp.issparse(A) else A, dtype=float)
    if 1 not in arr.shape:
        raise InvalidArgument(f"{path} is not a vector: shape {arr.shape}")
    return arr.ravel()


def export_problem(dirpath, op: AffineOperator, rhs: AffineVector, grid=None,
                   R_X=None, metadata=None):
    """Write an affine family as Matrix Market files plus a JSON manifest."""
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "format": "paraprec-problem-v1",
        "operator_terms": [],
        "rhs_terms": [],
        "metadata": metadata or {},
    }
    for k, (A, c) in enumerate(zip(op.terms, op.coeffs)):
        fname = f"A{k}.mtx"
        write_matrix(os.path.join(dirpath, fname), A)
        manifest["operator_terms"].append({"file": fname, "coeff": c.to_dict()})
    for k, (b, c) in enumerate(zip(rhs.terms, rhs.coeffs)):
        fname = f"b{k}.mtx"
        write_matrix(os.path.join(dirpath, fname), np.asarray(b))
        manifest["rhs_terms"].append({"file": fname, "coeff": c.to_dict()})
    if grid is not None:
        manifest["grid"] = np.asarray(grid).tolist()
    if R_X is not None:
        write_matrix(os.path.join(dirpath, "R_X.mtx"), R_X.matrix)
        manifest["R_X"] = "R_X.mtx"
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def import_problem(dirpath):
    """Read back a problem directory written by export_problem."""
    from .operators import NormMatrix

    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "paraprec-problem-v1":
        raise InvalidArgument("unrecognized manifest format")
    terms, coeffs = [], []
    for entry in manifest["operator_terms"]:
        terms.append(sp.csr_matrix(read_matrix(os.path.join(dirpath, entry["file"]))))
        coeffs.append(Coefficient.from_dict(entry["coeff"]))
    op = AffineOperator(terms=tuple(terms), coeffs=tuple(coeffs))
    vterms, vcoeffs = [], []
    for entry in manifest["rhs_terms"]:
        vterms.append(read_vector(os.path.join(dirpath, entry["file"])))
        vcoeffs.append(Coefficient.from_dict(entry["coeff"]))
    rhs = AffineVector(terms=tuple(vterms), coeffs=tuple(vcoeffs))
    grid = np.asarray(manifest["grid"]) if "grid" in manifest else None
    R_X = None
    if "R_X" in manifest:
        R_X = NormMatrix(sp.csr_matrix(read_matrix(os.path.join(dirpath, manifest["R_X"]))))
    return op, rhs, grid, R_X, manifest.get("metadata", {})
