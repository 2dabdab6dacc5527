"""Structured linear operators for penalty maps and design matrices.

Every operator stands for some W in R^{q x p} and supports matrix-free
apply (W x) and transpose-apply (W' u). The structured kinds (identity,
first difference, group selector) cost O(q) per application, which is what
keeps the dual solver's per-iteration work linear in the problem size; an
explicit sparse operator costs O(nnz).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionMismatch",
    "LinearOperator",
    "Identity",
    "FirstDifference",
    "GroupSelector",
    "ExplicitSparse",
    "RowStack",
    "as_csr",
    "spectral_norm_estimate",
]


class DimensionMismatch(ValueError):
    """A vector's length does not match the operator dimension it feeds."""

    def __init__(self, op_name, expected, got, side="apply"):
        self.op_name = op_name
        self.expected = expected
        self.got = got
        self.side = side
        super().__init__(
            f"{op_name}.{side} expects a vector of length {expected}, got shape {got}"
        )


def as_csr(matrix) -> sp.csr_matrix:
    """Coerce to canonical CSR: float64 values, sorted unique column indices."""
    m = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    m.sum_duplicates()
    m.sort_indices()
    return m


def spectral_norm_estimate(apply_fn, transpose_fn, input_dim, iterations=100, seed=0):
    """Largest singular value of W, estimated by power iteration on W'W.

    The estimate approaches the true norm from below and is deterministic
    for a fixed seed. A zero operator yields 0.0.
    """
    if input_dim == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(input_dim)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v = v / nv
    for _ in range(max(1, int(iterations))):
        w = apply_fn(v)
        z = transpose_fn(w)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        v = z / nz
    return float(np.linalg.norm(apply_fn(v)))


class LinearOperator:
    """Base class; subclasses set input_dim/output_dim and the raw kernels."""

    input_dim: int
    output_dim: int

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise DimensionMismatch(type(self).__name__, self.input_dim, x.shape)
        return self._apply(x)

    def apply_transpose(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.output_dim,):
            raise DimensionMismatch(
                type(self).__name__, self.output_dim, u.shape, side="apply_transpose"
            )
        return self._apply_transpose(u)

    def norm_estimate(self, iterations=100, seed=0):
        return spectral_norm_estimate(
            self._apply, self._apply_transpose, self.input_dim, iterations, seed
        )

    def to_sparse(self) -> sp.csr_matrix:
        raise NotImplementedError

    @property
    def apply_cost(self) -> int:
        """Rough flop count of one apply; used by the benchmark counters."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.output_dim}x{self.input_dim})"


class Identity(LinearOperator):
    def __init__(self, dim):
        if dim < 1:
            raise ValueError("Identity needs dim >= 1")
        self.input_dim = self.output_dim = int(dim)

    def _apply(self, x):
        return x.copy()

    def _apply_transpose(self, u):
        return u.copy()

    def to_sparse(self):
        return sp.eye(self.input_dim, format="csr")

    @property
    def apply_cost(self):
        return self.input_dim


class FirstDifference(LinearOperator):
    """Consecutive differences: (Wx)_j = x_{j+1} - x_j, so q = p - 1."""

    def __init__(self, dim):
        if dim < 2:
            raise ValueError("FirstDifference needs dim >= 2")
        self.input_dim = int(dim)
        self.output_dim = int(dim) - 1

    def _apply(self, x):
        return np.diff(x)

    def _apply_transpose(self, u):
        out = np.zeros(self.input_dim)
        out[:-1] -= u
        out[1:] += u
        return out

    def to_sparse(self):
        p = self.input_dim
        main = -np.ones(p - 1)
        upper = np.ones(p - 1)
        return as_csr(sp.diags([main, upper], [0, 1], shape=(p - 1, p)))

    @property
    def apply_cost(self):
        return 2 * self.output_dim


class GroupSelector(LinearOperator):
    """Picks out a coordinate subset; the transpose scatters back with zeros."""

    def __init__(self, indices, dim):
        idx = np.asarray(sorted(set(int(i) for i in indices)), dtype=np.intp)
        if idx.size == 0:
            raise ValueError("GroupSelector needs a non-empty index set")
        if idx[0] < 0 or idx[-1] >= dim:
            raise ValueError(f"indices must lie in [0, {dim})")
        self.indices = idx
        self.input_dim = int(dim)
        self.output_dim = int(idx.size)

    def _apply(self, x):
        return x[self.indices]

    def _apply_transpose(self, u):
        out = np.zeros(self.input_dim)
        out[self.indices] = u
        return out

    def to_sparse(self):
        q = self.output_dim
        return sp.csr_matrix(
            (np.ones(q), (np.arange(q), self.indices)), shape=(q, self.input_dim)
        )

    @property
    def apply_cost(self):
        return self.output_dim


class ExplicitSparse(LinearOperator):
    def __init__(self, matrix):
        self.matrix = as_csr(matrix)
        self.output_dim, self.input_dim = self.matrix.shape
        self._transposed = self.matrix.T.tocsr()

    def _apply(self, x):
        return self.matrix @ x

    def _apply_transpose(self, u):
        return self._transposed @ u

    def to_sparse(self):
        return self.matrix

    @property
    def apply_cost(self):
        return 2 * self.matrix.nnz


class RowStack(LinearOperator):
    """Vertical stack [W_1; ...; W_m]; the transpose sums child pull-backs."""

    def __init__(self, children):
        children = list(children)
        if not children:
            raise ValueError("RowStack needs at least one child operator")
        dims = {c.input_dim for c in children}
        if len(dims) != 1:
            raise ValueError(f"children disagree on input_dim: {sorted(dims)}")
        self.children = children
        self.input_dim = children[0].input_dim
        self.output_dim = sum(c.output_dim for c in children)
        self._offsets = np.cumsum([0] + [c.output_dim for c in children])

    def _apply(self, x):
        return np.concatenate([c._apply(x) for c in self.children])

    def _apply_transpose(self, u):
        out = np.zeros(self.input_dim)
        for c, lo, hi in zip(self.children, self._offsets[:-1], self._offsets[1:]):
            out += c._apply_transpose(u[lo:hi])
        return out

    def to_sparse(self):
        return as_csr(sp.vstack([c.to_sparse() for c in self.children]))

    @property
    def apply_cost(self):
        return sum(c.apply_cost for c in self.children)
