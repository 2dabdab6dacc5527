"""Limited-memory BFGS metric with an adaptive scalar seed matrix.

The metric tracks curvature pairs (s, y) with s'y > 0 and exposes both
directions of the quadratic model: H^{-1} v through the two-loop recursion and
H v through the compact outer-product representation. Both views describe the
same sequence of BFGS updates of sigma * I, so they are exact inverses of each
other up to roundoff.

The seed scale sigma is adapted between outer iterations: a rejected unit step
inflates it, and a shrink factor beta (annealed toward 1 on each inflation)
deflates it toward the curvature ratio y'y / y's.
"""
from __future__ import annotations

from collections import deque

import numpy as np
import scipy.linalg

__all__ = ["LbfgsMetric"]


class LbfgsMetric:
    def __init__(self, dim, capacity=10, sigma=1.0, sigma_floor=1e-8):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.dim = int(dim)
        self.capacity = int(capacity)
        self.sigma = float(sigma)
        self.sigma_floor = float(sigma_floor)
        self.beta = 2.0
        self.floor_hits = 0
        self._s = deque(maxlen=self.capacity or None)
        self._y = deque(maxlen=self.capacity or None)
        self._rho = deque(maxlen=self.capacity or None)
        self._compact = None

    @property
    def pair_count(self) -> int:
        return len(self._s)

    def push_pair(self, s, y) -> bool:
        """Store (s, y) iff s'y > 0, evicting the oldest pair at capacity."""
        if self.capacity == 0:
            return False
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if s.shape != (self.dim,) or y.shape != (self.dim,):
            raise ValueError("pair vectors must have the metric's dimension")
        sy = float(s @ y)
        if sy <= 0.0:
            return False
        self._s.append(s.copy())
        self._y.append(y.copy())
        self._rho.append(1.0 / sy)
        self._compact = None
        return True

    def inv_apply(self, v) -> np.ndarray:
        """H^{-1} v via the two-loop recursion, O(M p)."""
        q = np.array(v, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError("vector length must equal the metric dimension")
        m = len(self._s)
        alphas = np.empty(m)
        for i in range(m - 1, -1, -1):
            alphas[i] = self._rho[i] * float(self._s[i] @ q)
            q -= alphas[i] * self._y[i]
        q /= self.sigma
        for i in range(m):
            b = self._rho[i] * float(self._y[i] @ q)
            q += (alphas[i] - b) * self._s[i]
        return q

    def _compact_blocks(self):
        if self._compact is None:
            S = np.column_stack(self._s)
            Y = np.column_stack(self._y)
            SY = S.T @ Y
            D = np.diag(np.diag(SY))
            L = np.tril(SY, -1)
            mid = np.block([[self.sigma * (S.T @ S), L], [L.T, -D]])
            U = np.concatenate([self.sigma * S, Y], axis=1)
            self._compact = (U, scipy.linalg.lu_factor(mid))
        return self._compact

    def apply(self, v) -> np.ndarray:
        """H v via the compact representation, O(M p + M^2)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError("vector length must equal the metric dimension")
        if not self._s:
            return self.sigma * v
        U, lu = self._compact_blocks()
        return self.sigma * v - U @ scipy.linalg.lu_solve(lu, U.T @ v)

    def adapt_h0(self, t_k, s, y):
        """Rescale the seed matrix from the latest step length and pair.

        A fractional step divides sigma by t_k and tightens beta toward 1;
        either way sigma is then capped by min(sigma / beta, y'y / y's). The
        floor keeps the metric uniformly positive definite; hits are counted.
        """
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        sy = float(s @ y)
        if sy <= 0.0:
            raise ValueError("adapt_h0 requires s'y > 0")
        if not (0.0 < t_k <= 1.0):
            raise ValueError(f"step length must lie in (0, 1], got {t_k}")
        if t_k < 1.0:
            self.sigma /= t_k
            self.beta = 2.0 / (1.0 + 1.0 / self.beta)
        self.sigma = min(self.sigma / self.beta, float(y @ y) / sy)
        if self.sigma < self.sigma_floor:
            self.sigma = self.sigma_floor
            self.floor_hits += 1
        self._compact = None
        return self

    def materialize_dense(self) -> np.ndarray:
        """Dense H, column by column; guarded to small dimensions (tests only)."""
        if self.dim > 512:
            raise ValueError(f"refusing to materialize H at dim {self.dim} > 512")
        cols = [self.apply(col) for col in np.eye(self.dim)]
        return np.column_stack(cols)

    def inv_norm_estimate(self, iterations=30, seed=0) -> float:
        """Largest eigenvalue of H^{-1}, from below, deterministic power iteration."""
        if not self._s:
            return 1.0 / self.sigma
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(max(1, iterations)):
            w = self.inv_apply(v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            est = float(v @ w)
            v = w / nw
        return est

    @property
    def inv_apply_cost(self) -> int:
        return (4 * len(self._s) + 2) * self.dim

    @property
    def apply_cost(self) -> int:
        m = len(self._s)
        return (4 * m + 2) * self.dim + 4 * m * m
