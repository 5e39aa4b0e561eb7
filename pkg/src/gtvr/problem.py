"""Finite-sum objectives: f = (1/n) sum_i f_i with f_i = (1/m_i) sum_j f_ij.

Two concrete instances are provided. The logistic instance is the
regularized sigmoid-loss binary classifier used on LIBSVM data; the
quadratic instance is a synthetic least-squares problem whose exact
minimizer makes it the standard exact-convergence test bed.

Agent ids and sample indices are 1-based throughout the public surface
(matching the simulator's index draws); storage is 0-based internally.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.sparse as sp

from .rng import PURPOSE_DATA, derived_generator

if TYPE_CHECKING:
    from .ingest import RawDataset


def sigmoid_pair(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(sigma(z), sigma(-z)) from a single exp(-|z|), overflow-free."""
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    big = 1.0 / (1.0 + e)
    small = e / (1.0 + e)
    pos = z >= 0
    return np.where(pos, big, small), np.where(pos, small, big)


def _sigmoid_pair_scalar(z: float) -> tuple[float, float]:
    e = math.exp(-abs(z))
    big = 1.0 / (1.0 + e)
    small = e / (1.0 + e)
    return (big, small) if z >= 0 else (small, big)


class FiniteSumProblem:
    """Shared surface of the per-instance objectives.

    Subclasses provide component/local costs and gradients; this base
    supplies the network-level average and common bookkeeping.
    """

    n: int
    d: int
    m: tuple[int, ...]

    @property
    def total_samples(self) -> int:
        return sum(self.m)

    # alias used in complexity formulas
    @property
    def M(self) -> int:  # noqa: N802
        return self.total_samples

    def _check_indices(self, i: int, j: int | None = None) -> None:
        if not 1 <= i <= self.n:
            raise IndexError(f"agent index {i} out of range [1, {self.n}]")
        if j is not None and not 1 <= j <= self.m[i - 1]:
            raise IndexError(
                f"sample index {j} out of range [1, {self.m[i - 1]}] for agent {i}"
            )

    def component_cost(self, i: int, j: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def component_grad(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_grad_table(self, i: int, x: np.ndarray) -> np.ndarray:
        """All component gradients of agent i at x, stacked (m_i, d)."""
        raise NotImplementedError

    def local_cost(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def local_full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_estimate(self) -> float:
        raise NotImplementedError

    def global_cost_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Cost and gradient of the network average f at a single point x."""
        x = np.asarray(x, dtype=float)
        cost = 0.0
        grad = np.zeros(self.d)
        for i in range(1, self.n + 1):
            cost += self.local_cost(i, x)
            grad += self.local_full_grad(i, x)
        return cost / self.n, grad / self.n


class LogisticProblem(FiniteSumProblem):
    """Sigmoid-loss binary classification with an L2 term.

    Component cost of sample (a, l) with label l in {-1, +1}:
        1 / (1 + exp(l a'x)) + lam1 ||x||^2.
    """

    def __init__(
        self,
        features: Sequence[sp.csr_matrix],
        labels: Sequence[np.ndarray],
        lam1: float,
    ) -> None:
        if len(features) != len(labels) or not features:
            raise ValueError("need one feature matrix and label vector per agent")
        if lam1 < 0:
            raise ValueError(f"regularization weight must be >= 0, got {lam1}")
        self.n = len(features)
        self.d = int(features[0].shape[1])
        self.lam1 = float(lam1)
        self._feats: list[sp.csr_matrix] = []
        self._labels: list[np.ndarray] = []
        for a, l in zip(features, labels):
            a = sp.csr_matrix(a, dtype=float)
            l = np.asarray(l, dtype=float)
            if a.shape[1] != self.d:
                raise ValueError("all agents must share the feature dimension")
            if a.shape[0] != l.shape[0] or a.shape[0] == 0:
                raise ValueError("feature rows and labels must match and be non-empty")
            if not np.isin(l, (-1.0, 1.0)).all():
                raise ValueError("labels must be exactly -1 or +1")
            self._feats.append(a)
            self._labels.append(l)
        self.m = tuple(int(a.shape[0]) for a in self._feats)
        sq = [np.asarray(a.multiply(a).sum(axis=1)).ravel() for a in self._feats]
        self._max_row_sq = max(float(v.max()) for v in sq)

    @classmethod
    def from_partition(
        cls,
        raw: "RawDataset",
        parts: Sequence[np.ndarray],
        lam1: float,
        normalize: bool = False,
    ) -> "LogisticProblem":
        """Build from a parsed dataset and a per-agent row assignment."""
        csr = raw.to_csr()
        if normalize:
            norms = np.sqrt(np.asarray(csr.multiply(csr).sum(axis=1)).ravel())
            norms[norms == 0.0] = 1.0
            csr = sp.diags(1.0 / norms) @ csr
            csr = sp.csr_matrix(csr)
        feats = [csr[np.asarray(idx, dtype=np.int64)] for idx in parts]
        labels = [raw.labels[np.asarray(idx, dtype=np.int64)] for idx in parts]
        return cls(feats, labels, lam1)

    def component_cost(self, i: int, j: int, x: np.ndarray) -> float:
        self._check_indices(i, j)
        a = self._feats[i - 1]
        lo, hi = a.indptr[j - 1], a.indptr[j]
        z = self._labels[i - 1][j - 1] * float(a.data[lo:hi] @ x[a.indices[lo:hi]])
        _, sig_neg = _sigmoid_pair_scalar(z)
        return sig_neg + self.lam1 * float(x @ x)

    def component_grad(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i, j)
        a = self._feats[i - 1]
        lo, hi = a.indptr[j - 1], a.indptr[j]
        idx = a.indices[lo:hi]
        val = a.data[lo:hi]
        l = self._labels[i - 1][j - 1]
        z = l * float(val @ x[idx])
        sig, sig_neg = _sigmoid_pair_scalar(z)
        g = (2.0 * self.lam1) * x
        g[idx] += (-l * sig * sig_neg) * val
        return g

    def component_grad_table(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i)
        a = self._feats[i - 1]
        l = self._labels[i - 1]
        z = l * (a @ x)
        sig, sig_neg = sigmoid_pair(z)
        coef = -l * sig * sig_neg
        table = np.asarray(a.multiply(coef[:, None]).todense())
        table += (2.0 * self.lam1) * x
        return table

    def local_cost(self, i: int, x: np.ndarray) -> float:
        self._check_indices(i)
        z = self._labels[i - 1] * (self._feats[i - 1] @ x)
        _, sig_neg = sigmoid_pair(z)
        return float(sig_neg.mean()) + self.lam1 * float(x @ x)

    def local_full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i)
        a = self._feats[i - 1]
        l = self._labels[i - 1]
        z = l * (a @ x)
        sig, sig_neg = sigmoid_pair(z)
        coef = (-l * sig * sig_neg) / self.m[i - 1]
        return (a.T @ coef) + (2.0 * self.lam1) * x

    def lipschitz_estimate(self) -> float:
        # sigmoid-composition curvature is bounded by 1/4; conservative
        # but valid, which is all the step-size theory requires
        return self._max_row_sq / 4.0 + 2.0 * self.lam1


class QuadraticProblem(FiniteSumProblem):
    """Least-squares components f_ij(x) = 0.5 (a_ij'x - t_ij)^2."""

    def __init__(self, features: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> None:
        if len(features) != len(targets) or not features:
            raise ValueError("need one feature matrix and target vector per agent")
        self.n = len(features)
        self._feats = [np.asarray(a, dtype=float) for a in features]
        self._targets = [np.asarray(t, dtype=float) for t in targets]
        self.d = self._feats[0].shape[1]
        for a, t in zip(self._feats, self._targets):
            if a.ndim != 2 or a.shape[1] != self.d or a.shape[0] != t.shape[0] or not a.size:
                raise ValueError("inconsistent quadratic instance data")
            if not (np.isfinite(a).all() and np.isfinite(t).all()):
                raise ValueError("quadratic instance data must be finite")
        self.m = tuple(a.shape[0] for a in self._feats)

    def component_cost(self, i: int, j: int, x: np.ndarray) -> float:
        self._check_indices(i, j)
        r = float(self._feats[i - 1][j - 1] @ x) - self._targets[i - 1][j - 1]
        return 0.5 * r * r

    def component_grad(self, i: int, j: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i, j)
        a = self._feats[i - 1][j - 1]
        r = float(a @ x) - self._targets[i - 1][j - 1]
        return r * a

    def component_grad_table(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i)
        a = self._feats[i - 1]
        r = a @ x - self._targets[i - 1]
        return r[:, None] * a

    def local_cost(self, i: int, x: np.ndarray) -> float:
        self._check_indices(i)
        r = self._feats[i - 1] @ x - self._targets[i - 1]
        return 0.5 * float(r @ r) / self.m[i - 1]

    def local_full_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_indices(i)
        a = self._feats[i - 1]
        r = a @ x - self._targets[i - 1]
        return (a.T @ r) / self.m[i - 1]

    def lipschitz_estimate(self) -> float:
        return max(float((a * a).sum(axis=1).max()) for a in self._feats)


def make_quadratic(
    n: int,
    m: int,
    d: int,
    seed: int = 0,
    noise: float = 0.5,
    normalize_rows: bool = True,
) -> QuadraticProblem:
    """Random least-squares instance with a planted solution.

    Unit-norm rows keep the smoothness constant at 1, and a nonzero noise
    level makes the system inconsistent so plain stochastic gradients
    have a strictly positive variance floor at the minimizer.
    """
    rng = derived_generator(seed, 0, PURPOSE_DATA)
    x_star = rng.normal(size=d)
    feats = []
    targets = []
    for _ in range(n):
        a = rng.normal(size=(m, d))
        if normalize_rows:
            a /= np.linalg.norm(a, axis=1, keepdims=True)
        t = a @ x_star + noise * rng.normal(size=m)
        feats.append(a)
        targets.append(t)
    return QuadraticProblem(feats, targets)


def make_logistic(
    n: int,
    m: int,
    d: int,
    seed: int = 0,
    lam1: float = 5e-4,
    density: float = 0.3,
    margin_scale: float = 2.0,
) -> LogisticProblem:
    """Synthetic sparse binary-classification instance (a9a-like shape).

    ``margin_scale`` controls label noise: small values put the class
    probabilities near 1/2, so stochastic gradients stay noisy even at
    the optimum.
    """
    rng = derived_generator(seed, 0, PURPOSE_DATA)
    x_true = rng.normal(size=d) / math.sqrt(max(density * d, 1.0))
    feats = []
    labels = []
    for _ in range(n):
        mask = rng.random(size=(m, d)) < density
        # guarantee at least one active feature per sample
        empty = ~mask.any(axis=1)
        mask[empty, rng.integers(d, size=int(empty.sum()))] = True
        a = sp.csr_matrix(mask.astype(float))
        margin = a @ x_true
        l = np.where(rng.random(size=m) < sigmoid_pair(margin_scale * margin)[0], 1.0, -1.0)
        feats.append(a)
        labels.append(l)
    return LogisticProblem(feats, labels, lam1)
