"""Shared test utilities: independent oracles and stub random streams."""

from __future__ import annotations

import numpy as np

from gtvr.problem import FiniteSumProblem, QuadraticProblem


def central_diff_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences, the reference for analytic gradients."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        step = np.zeros_like(x, dtype=float)
        step[i] = h
        g[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def dense_deviation_norm(w: np.ndarray) -> float:
    """Spectral norm of W - (1/n)11^T straight from a dense SVD."""
    n = w.shape[0]
    return float(np.linalg.norm(w - np.full((n, n), 1.0 / n), 2))


def brute_force_consensus_gap(w: np.ndarray, x: np.ndarray) -> float:
    """Literal double sum sum_i x_i' sum_j w_ij (x_i - x_j)."""
    n = w.shape[0]
    total = 0.0
    for i in range(n):
        acc = np.zeros(x.shape[1])
        for j in range(n):
            acc += w[i, j] * (x[i] - x[j])
        total += float(x[i] @ acc)
    return total


def least_squares_solution(problem: QuadraticProblem) -> np.ndarray:
    """Exact minimizer of the quadratic finite sum via normal equations."""
    h = np.zeros((problem.d, problem.d))
    b = np.zeros(problem.d)
    for i in range(1, problem.n + 1):
        a = problem._feats[i - 1]
        t = problem._targets[i - 1]
        scale = 1.0 / (problem.n * problem.m[i - 1])
        h += scale * (a.T @ a)
        b += scale * (a.T @ t)
    return np.linalg.solve(h, b)


class StubGenerator:
    """Stands in for a numpy Generator with scripted uniform draws."""

    def __init__(self, uniforms=(), integers=()):
        self._uniforms = list(uniforms)
        self._integers = list(integers)

    def random(self):
        return self._uniforms.pop(0)

    def integers(self, bound):
        return self._integers.pop(0)


class StubStreams:
    """AgentStreams replacement with scripted bernoulli/index draws."""

    def __init__(self, agent: int, uniforms=(), integers=()):
        self.agent = agent
        self.bernoulli = StubGenerator(uniforms=uniforms)
        self.index = StubGenerator(integers=integers)


def mean_abs_inf(a: np.ndarray) -> float:
    return float(np.abs(a).max())


def exact_stationary_quadratic(problem: QuadraticProblem) -> np.ndarray:
    x = least_squares_solution(problem)
    return np.tile(x, (problem.n, 1))


def estimate_vr_second_moments(problem, x, tau, draws, seed):
    """Monte-Carlo second moments of the anchored gradient estimator.

    Per-sample estimator values are tabulated once (the estimator is a
    deterministic function of the drawn index), so each draw reduces to a
    table lookup while the index draws still come from the streams under
    test. Returns (stacked deviation from local grads at x, squared norm
    of the mean deviation from local grads at xbar, squared norm of the
    estimator mean).
    """
    from gtvr import rng as gtvr_rng
    from gtvr.algorithms import vr_gradient_estimate

    n = problem.n
    streams = gtvr_rng.make_swarm_streams(seed, n)
    xbar = x.mean(axis=0)
    g_x = [problem.local_full_grad(i, x[i - 1]) for i in range(1, n + 1)]
    g_tau = [problem.local_full_grad(i, tau[i - 1]) for i in range(1, n + 1)]
    g_at_xbar = [problem.local_full_grad(i, xbar) for i in range(1, n + 1)]
    v_tab = []
    dev_sq = []
    for i in range(1, n + 1):
        tab = np.stack(
            [
                vr_gradient_estimate(problem, i, j, x[i - 1], tau[i - 1], g_tau[i - 1])
                for j in range(1, problem.m[i - 1] + 1)
            ]
        )
        v_tab.append(tab)
        dev_sq.append(np.sum((tab - g_x[i - 1]) ** 2, axis=1))
    total_dev = 0.0
    mean_dev_sq = 0.0
    vbar_sq = 0.0
    for _ in range(draws):
        js = [gtvr_rng.draw_index(streams[i - 1].index, problem.m[i - 1]) for i in range(1, n + 1)]
        picks = [v_tab[i - 1][js[i - 1] - 1] for i in range(1, n + 1)]
        total_dev += sum(dev_sq[i - 1][js[i - 1] - 1] for i in range(1, n + 1))
        mean_err = np.mean([p - g for p, g in zip(picks, g_at_xbar)], axis=0)
        mean_dev_sq += float(mean_err @ mean_err)
        vbar = np.mean(picks, axis=0)
        vbar_sq += float(vbar @ vbar)
    return total_dev / draws, mean_dev_sq / draws, vbar_sq / draws
