"""Composite objectives: a smooth loss plus weighted norms of affine maps.

The minimized function is f(x) = g(x) + sum_i w_i * ||W_i x + b_i||, where g
is a logistic or least-squares loss and each penalty term carries its own
norm, weight, and linear operator. Weights are folded into the penalty so the
dual feasible set of a term is the dual-norm ball of radius w_i.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .operators import (
    FirstDifference,
    GroupSelector,
    Identity,
    LinearOperator,
    as_csr,
    spectral_norm_estimate,
)

__all__ = [
    "NormKind",
    "norm_value",
    "RegularizerTerm",
    "LogisticLoss",
    "LeastSquaresLoss",
    "CompositeProblem",
    "make_builtin",
    "BUILTIN_MODELS",
]


class NormKind(Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


def norm_value(kind: NormKind, u: np.ndarray) -> float:
    if u.size == 0:
        return 0.0
    if kind is NormKind.L1:
        return float(np.abs(u).sum())
    if kind is NormKind.L2:
        return float(np.linalg.norm(u))
    return float(np.abs(u).max())


def _matvec(data, x):
    return data @ x


def _rmatvec(data, u):
    return data.T @ u


def _nnz(data) -> int:
    if sp.issparse(data):
        return int(data.nnz)
    return int(data.shape[0] * data.shape[1])


class SmoothLoss:
    """Shared plumbing for the differentiable part g.

    `value` and `value_grad` compute the objective value with identical
    arithmetic, so a value-only probe and a full gradient pass agree bitwise.
    One call of either touches the data exactly once.
    """

    data: np.ndarray | sp.spmatrix
    labels: np.ndarray
    weights: np.ndarray
    ridge: float

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def pass_cost(self) -> int:
        """Flops of one data pass, 2*nnz plus per-sample overhead."""
        return 2 * _nnz(self.data) + 4 * self.n_samples

    def value(self, x) -> float:
        raise NotImplementedError

    def value_grad(self, x):
        raise NotImplementedError

    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def _weighted_norm_sq(self):
        # sigma_max(diag(sqrt(w)) A)^2 via power iteration, cached
        if not hasattr(self, "_wnorm_sq"):
            rw = np.sqrt(self.weights)
            est = spectral_norm_estimate(
                lambda v: rw * _matvec(self.data, v),
                lambda u: _rmatvec(self.data, rw * u),
                self.dim,
            )
            self._wnorm_sq = est * est
        return self._wnorm_sq


class LogisticLoss(SmoothLoss):
    """g(x) = sum_i w_i log(1 + exp(-y_i a_i'x)) + ridge/2 ||x||^2.

    Weights default to 1/n. Labels must be -1/+1; anything else is rejected
    at construction so a bad dataset cannot surface mid-solve.
    """

    def __init__(self, data, labels, weights=None, ridge=0.0):
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if labels.shape[0] != data.shape[0]:
            raise ValueError(
                f"label count {labels.shape[0]} != sample count {data.shape[0]}"
            )
        bad = ~np.isin(labels, (-1.0, 1.0))
        if bad.any():
            raise ValueError(
                f"logistic labels must be -1/+1; offending values: "
                f"{np.unique(labels[bad])[:5]}"
            )
        self.data = data
        self.labels = labels
        n = data.shape[0]
        if weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(weights, dtype=np.float64).ravel()
        self.ridge = float(ridge)

    def _margins(self, x):
        return self.labels * _matvec(self.data, x)

    def value(self, x):
        t = self._margins(x)
        v = float(self.weights @ np.logaddexp(0.0, -t))
        if self.ridge:
            v += 0.5 * self.ridge * float(x @ x)
        return v

    def value_grad(self, x):
        t = self._margins(x)
        v = float(self.weights @ np.logaddexp(0.0, -t))
        if self.ridge:
            v += 0.5 * self.ridge * float(x @ x)
        coeff = self.weights * self.labels * expit(-t)
        g = -_rmatvec(self.data, coeff)
        if self.ridge:
            g = g + self.ridge * x
        return v, np.asarray(g, dtype=np.float64)

    def lipschitz_bound(self):
        # per-sample curvature of log(1+e^-t) is at most 1/4
        return 0.25 * self._weighted_norm_sq() + self.ridge


class LeastSquaresLoss(SmoothLoss):
    """g(x) = sum_i w_i (a_i'x - y_i)^2 + ridge/2 ||x||^2, weights default 1/n."""

    def __init__(self, data, labels, weights=None, ridge=0.0):
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if labels.shape[0] != data.shape[0]:
            raise ValueError(
                f"label count {labels.shape[0]} != sample count {data.shape[0]}"
            )
        self.data = data
        self.labels = labels
        n = data.shape[0]
        if weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(weights, dtype=np.float64).ravel()
        self.ridge = float(ridge)

    def value(self, x):
        r = _matvec(self.data, x) - self.labels
        v = float(self.weights @ (r * r))
        if self.ridge:
            v += 0.5 * self.ridge * float(x @ x)
        return v

    def value_grad(self, x):
        r = _matvec(self.data, x) - self.labels
        v = float(self.weights @ (r * r))
        if self.ridge:
            v += 0.5 * self.ridge * float(x @ x)
        g = 2.0 * _rmatvec(self.data, self.weights * r)
        if self.ridge:
            g = g + self.ridge * x
        return v, np.asarray(g, dtype=np.float64)

    def lipschitz_bound(self):
        return 2.0 * self._weighted_norm_sq() + self.ridge


@dataclass(frozen=True, eq=False)
class RegularizerTerm:
    """One penalty w * ||W x + b|| in the chosen norm.

    A zero weight is allowed and makes the term vacuous (its dual ball
    collapses to the origin); negative weights are rejected.
    """

    kind: NormKind
    weight: float
    op: LinearOperator
    offset: np.ndarray = None

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"term weight must be >= 0, got {self.weight}")
        if self.offset is None:
            object.__setattr__(self, "offset", np.zeros(self.op.output_dim))
        else:
            off = np.asarray(self.offset, dtype=np.float64).ravel()
            if off.shape[0] != self.op.output_dim:
                raise ValueError(
                    f"offset length {off.shape[0]} != operator output dim "
                    f"{self.op.output_dim}"
                )
            object.__setattr__(self, "offset", off)

    def image(self, x) -> np.ndarray:
        return self.op.apply(x) + self.offset

    def value(self, x) -> float:
        return self.weight * norm_value(self.kind, self.image(x))

    def value_of_image(self, u) -> float:
        return self.weight * norm_value(self.kind, u)


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    loss: SmoothLoss
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.op.input_dim != self.loss.dim:
                raise ValueError(
                    f"term operator input dim {t.op.input_dim} != problem dim "
                    f"{self.loss.dim}"
                )

    @property
    def dim(self) -> int:
        return self.loss.dim

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def penalty(self, x) -> float:
        return sum(t.value(x) for t in self.terms)

    def objective(self, x) -> float:
        return self.loss.value(x) + self.penalty(x)


BUILTIN_MODELS = (
    "l1-logistic",
    "fused-sparse-logistic",
    "sparse-group-logistic",
    "fused-sparse-group-logistic",
    "multitask-dirty-logistic",
)


def _require_positive(name, value):
    if value is None or value <= 0:
        raise ValueError(f"hyperparameter {name!r} must be positive, got {value}")
    return float(value)


def _resolve_groups(groups, dim):
    """Accept a group count (contiguous equal split) or explicit index lists."""
    if groups is None:
        groups = min(10, dim)
    if isinstance(groups, int):
        if groups < 1 or groups > dim:
            raise ValueError(f"group count must be in [1, {dim}], got {groups}")
        bounds = np.linspace(0, dim, groups + 1).astype(int)
        return [list(range(lo, hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    resolved = [sorted(int(i) for i in g) for g in groups]
    seen = set()
    for g in resolved:
        overlap = seen.intersection(g)
        if overlap:
            raise ValueError(f"groups overlap at indices {sorted(overlap)[:5]}")
        seen.update(g)
    return resolved


def _one_vs_all(labels):
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("multitask construction needs at least 2 classes")
    return [(np.where(labels == c, 1.0, -1.0), c) for c in classes]


def make_builtin(model_name, data, labels, *, lam=None, fused_weight=None,
                 group_weight=None, groups=None, ridge=0.0) -> CompositeProblem:
    """Construct one of the named benchmark models over (data, labels).

    `lam` weights the elementwise l1 penalty, `fused_weight` the l1 norm of
    consecutive differences, and `group_weight` the per-group l2 norms. The
    multitask model interprets multiclass labels one-vs-all, vectorizes the
    p x r coefficient matrix column-major (task k occupies x[k*p:(k+1)*p]),
    and sums the per-task logistic losses.
    """
    data = as_csr(data) if sp.issparse(data) else np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    p = data.shape[1]

    if model_name == "l1-logistic":
        lam = _require_positive("lam", lam)
        loss = LogisticLoss(data, labels, ridge=ridge)
        return CompositeProblem(loss, (RegularizerTerm(NormKind.L1, lam, Identity(p)),))

    if model_name == "fused-sparse-logistic":
        lam = _require_positive("lam", lam)
        fused_weight = _require_positive("fused_weight", fused_weight)
        loss = LogisticLoss(data, labels, ridge=ridge)
        terms = (
            RegularizerTerm(NormKind.L1, lam, Identity(p)),
            RegularizerTerm(NormKind.L1, fused_weight, FirstDifference(p)),
        )
        return CompositeProblem(loss, terms)

    if model_name == "sparse-group-logistic":
        lam = _require_positive("lam", lam)
        group_weight = _require_positive("group_weight", group_weight)
        loss = LogisticLoss(data, labels, ridge=ridge)
        terms = [RegularizerTerm(NormKind.L1, lam, Identity(p))]
        for g in _resolve_groups(groups, p):
            terms.append(
                RegularizerTerm(NormKind.L2, group_weight, GroupSelector(g, p))
            )
        return CompositeProblem(loss, tuple(terms))

    if model_name == "fused-sparse-group-logistic":
        lam = _require_positive("lam", lam)
        fused_weight = _require_positive("fused_weight", fused_weight)
        group_weight = _require_positive("group_weight", group_weight)
        loss = LogisticLoss(data, labels, ridge=ridge)
        terms = [
            RegularizerTerm(NormKind.L1, lam, Identity(p)),
            RegularizerTerm(NormKind.L1, fused_weight, FirstDifference(p)),
        ]
        for g in _resolve_groups(groups, p):
            terms.append(
                RegularizerTerm(NormKind.L2, group_weight, GroupSelector(g, p))
            )
        return CompositeProblem(loss, tuple(terms))

    if model_name == "multitask-dirty-logistic":
        lam = _require_positive("lam", lam)
        group_weight = _require_positive("group_weight", group_weight)
        tasks = _one_vs_all(labels)
        r = len(tasks)
        n = data.shape[0]
        block = data if sp.issparse(data) else sp.csr_matrix(data)
        big = as_csr(sp.block_diag([block] * r, format="csr"))
        y_all = np.concatenate([y for y, _ in tasks])
        weights = np.full(n * r, 1.0 / n)  # each task contributes its own mean
        loss = LogisticLoss(big, y_all, weights=weights, ridge=ridge)
        dim = p * r
        terms = [RegularizerTerm(NormKind.L1, lam, Identity(dim))]
        for j in range(p):
            row = j + p * np.arange(r)  # feature j across all tasks
            terms.append(
                RegularizerTerm(NormKind.L2, group_weight, GroupSelector(row, dim))
            )
        return CompositeProblem(loss, tuple(terms))

    raise ValueError(
        f"unknown model {model_name!r}; expected one of {', '.join(BUILTIN_MODELS)}"
    )
