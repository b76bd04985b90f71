"""Scalar coefficient functions for affine operator families.

A coefficient is a map from a parameter point (scalar or 1-D array) to a
real number.  Built-in symbolic forms cover the shapes used by the
benchmarks (constant, cosine, sine, monomial, log-uniform map); arbitrary
callables and tabulated values over a discrete training grid are also
accepted.  The symbolic forms serialize to/from plain dicts so affine
families can be described in JSON manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument


def _coord(xi, index):
    arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if index >= arr.shape[-1]:
        raise InvalidArgument(
            f"coefficient uses coordinate {index} but parameter has "
            f"dimension {arr.shape[-1]}"
        )
    return arr[..., index]


@dataclass(frozen=True)
class Coefficient:
    """Symbolic scalar coefficient Phi(xi).

    kind:
        'constant'   -> value
        'cos'        -> scale * cos(2*pi*freq*xi[coord])
        'sin'        -> scale * sin(2*pi*freq*xi[coord])
        'monomial'   -> scale * xi[coord]**degree
        'loguniform' -> 10**(lo + (hi - lo)*xi[coord]), xi[coord] in [0,1]
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, xi):
        p = self.params
        if self.kind == "constant":
            return float(p.get("value", 1.0))
        coord = int(p.get("coord", 0))
        t = _coord(xi, coord)
        if self.kind == "cos":
            val = p.get("scale", 1.0) * np.cos(2.0 * np.pi * p.get("freq", 1.0) * t)
        elif self.kind == "sin":
            val = p.get("scale", 1.0) * np.sin(2.0 * np.pi * p.get("freq", 1.0) * t)
        elif self.kind == "monomial":
            val = p.get("scale", 1.0) * t ** p.get("degree", 1)
        elif self.kind == "loguniform":
            lo, hi = p.get("lo", -1.0), p.get("hi", 1.0)
            val = 10.0 ** (lo + (hi - lo) * t)
        else:
            raise InvalidArgument(f"unknown coefficient kind {self.kind!r}")
        return float(val) if np.ndim(val) == 0 else val

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], params=dict(d.get("params", {})))


def constant(value=1.0):
    return Coefficient("constant", {"value": value})


def cosine(freq=1.0, scale=1.0, coord=0):
    return Coefficient("cos", {"freq": freq, "scale": scale, "coord": coord})


def sine(freq=1.0, scale=1.0, coord=0):
    return Coefficient("sin", {"freq": freq, "scale": scale, "coord": coord})


def monomial(degree=1, scale=1.0, coord=0):
    return Coefficient("monomial", {"degree": degree, "scale": scale, "coord": coord})


def tabulate(coeffs, grid):
    """Evaluate a sequence of coefficients over a training grid.

    Returns an array of shape (len(coeffs), len(grid)).
    """
    grid = list(grid)
    out = np.empty((len(coeffs), len(grid)))
    for i, phi in enumerate(coeffs):
        for j, xi in enumerate(grid):
            out[i, j] = phi(xi)
    return out
