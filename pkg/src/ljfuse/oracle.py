"""Centralised reference solvers for the weight problem on the simplex.

``min_{lambda >= 0, sum lambda = 1} f(sum_i lambda_i inv(P_i))``

``solve_simplex`` runs multi-start projected gradient descent with Armijo
backtracking; ``grid_search`` enumerates a simplex lattice for ``N <= 4``.
``project_tangent_cone_qp`` is an active-set enumeration of the small
projection QP, kept independent of the closed form in :mod:`ljfuse.pgf`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cost import CostKind, cost_value, inverse_stack
from .errors import EmptyList, InvalidSize, TooManyAgents

ZERO_WEIGHT = 1e-12


@dataclass
class OracleSolution:
    lambda_star: np.ndarray
    f_star: float
    iterations: int
    converged: bool
    kkt_residual: float = math.nan
    method: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "lambda_star": self.lambda_star.tolist(),
            "f_star": self.f_star,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
        }


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _weighted(lam, P_inv):
    return np.einsum("i,ijk->jk", lam, P_inv)


def simplex_objective(lam, P_inv, kind) -> float:
    return cost_value(kind, _weighted(lam, P_inv))


def simplex_gradient(lam, P_inv, kind) -> np.ndarray:
    """``d f(A(lambda)) / d lambda_i`` with ``A = sum lambda_i inv(P_i)``."""
    kind = CostKind.parse(kind)
    if kind is CostKind.TRACE:
        return -np.trace(P_inv, axis1=1, axis2=2)
    A_inv = np.linalg.inv(_weighted(lam, P_inv))
    if kind is CostKind.LOGDET:
        return -np.einsum("jk,ikj->i", A_inv, P_inv)
    AA = A_inv @ A_inv
    return -np.einsum("jk,ikj->i", AA, P_inv)


def _tangent_projection(lam, grad) -> np.ndarray:
    """Projection of ``-grad`` onto the tangent cone of the simplex at ``lam``."""
    at_zero = lam <= ZERO_WEIGHT
    w = -np.asarray(grad, dtype=float)

    def excess(tau):
        d = w - tau
        d[at_zero] = np.maximum(d[at_zero], 0.0)
        return d.sum()

    if not np.any(at_zero):
        return w - w.mean()
    lo, hi = w.min() - 1.0, w.max() + 1.0
    tau = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    d = w - tau
    d[at_zero] = np.maximum(d[at_zero], 0.0)
    return d


def residual_kkt(lam, P_list, kind) -> float:
    """Norm of the projected negative gradient at ``lam`` (zero at a KKT point)."""
    lam = np.asarray(lam, dtype=float)
    P_inv = inverse_stack(P_list)
    return float(np.linalg.norm(_tangent_projection(lam, simplex_gradient(lam, P_inv, kind))))


def _descend(lam, P_inv, kind, tol, max_iter, stall_window=100):
    f = simplex_objective(lam, P_inv, kind)
    step = 1.0
    history = [f]
    for it in range(1, max_iter + 1):
        g = simplex_gradient(lam, P_inv, kind)
        res = np.linalg.norm(_tangent_projection(lam, g))
        if res < tol:
            return lam, f, it, True
        while True:
            cand = project_simplex(lam - step * g)
            diff = cand - lam
            try:
                fc = simplex_objective(cand, P_inv, kind)
            except Exception:
                fc = math.inf
            if fc <= f + g @ diff + (diff @ diff) / (2.0 * step) or step < 1e-20:
                break
            step *= 0.5
        lam, f = cand, fc
        step *= 2.0
        history.append(f)
        if len(history) > stall_window and history[-stall_window - 1] - f < tol * max(1.0, abs(f)):
            return lam, f, it, True
    return lam, f, max_iter, False


def solve_simplex(P_list, kind, tol: float = 1e-10, max_iter: int = 20_000, seed: int = 0, starts: int = 10):
    """Multi-start projected gradient descent; returns the best start."""
    if len(P_list) == 0:
        raise EmptyList("need at least one covariance")
    P_inv = inverse_stack(P_list)
    N = len(P_list)
    kind = CostKind.parse(kind)
    if N == 1:
        lam = np.ones(1)
        return OracleSolution(lam, simplex_objective(lam, P_inv, kind), 0, True, 0.0, "simplex-pgd")
    rng = np.random.default_rng(seed)
    inits = [np.full(N, 1.0 / N)] + [rng.dirichlet(np.ones(N)) for _ in range(starts - 1)]
    best = None
    total = 0
    for lam0 in inits:
        lam, f, it, conv = _descend(lam0, P_inv, kind, tol, max_iter)
        total += it
        if best is None or f < best[1]:
            best = (lam, f, conv)
    lam, f, conv = best
    sol = OracleSolution(lam, f, total, conv, method="simplex-pgd")
    sol.kkt_residual = float(np.linalg.norm(_tangent_projection(lam, simplex_gradient(lam, P_inv, kind))))
    return sol


def _lattice(N: int, K: int):
    for cuts in itertools.combinations(range(K + N - 1), N - 1):
        prev = -1
        parts = []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(K + N - 2 - prev)
        yield parts


def grid_search(P_list, kind, resolution: float = 0.01) -> OracleSolution:
    """Exhaustive minimum over the simplex lattice with spacing ``resolution``."""
    N = len(P_list)
    if N == 0:
        raise EmptyList("need at least one covariance")
    if N > 4:
        raise TooManyAgents(f"grid search is limited to N <= 4, got {N}")
    K = int(round(1.0 / resolution))
    if K < 1:
        raise InvalidSize("resolution must be <= 1")
    P_inv = inverse_stack(P_list)
    lams = np.array(list(_lattice(N, K)), dtype=float) / K
    A = np.einsum("mi,ijk->mjk", lams, P_inv)
    kind = CostKind.parse(kind)
    if kind is CostKind.TRACE:
        vals = -np.trace(A, axis1=1, axis2=2)
    elif kind is CostKind.LOGDET:
        sign, ld = np.linalg.slogdet(A)
        vals = np.where(sign > 0, -ld, np.inf)
    else:
        vals = np.full(len(A), np.inf)
        ok = np.linalg.eigvalsh(A)[:, 0] > 0
        vals[ok] = np.trace(np.linalg.inv(A[ok]), axis1=1, axis2=2)
    best = int(np.argmin(vals))
    lam = lams[best]
    sol = OracleSolution(lam, simplex_objective(lam, P_inv, kind), len(lams), True, method="grid")
    sol.kkt_residual = float(np.linalg.norm(_tangent_projection(lam, simplex_gradient(lam, P_inv, kind))))
    return sol


def solve_relaxed(P_list, kind, epsilon: float, **kwargs) -> OracleSolution:
    """Optimum over the shell ``1 - eps <= s <= 1`` in weight coordinates.

    ``Q(x) = s * A(lambda / s)``, and each size measure is monotone in the
    scale ``s``, so the optimum sits at ``s = 1`` or ``s = 1 - eps``.
    """
    sol = solve_simplex(P_list, kind, **kwargs)
    P_inv = inverse_stack(P_list)
    A = _weighted(sol.lambda_star, P_inv)
    best_scale = min((1.0 - epsilon, 1.0), key=lambda c: cost_value(kind, c * A))
    lam = best_scale * sol.lambda_star
    return OracleSolution(lam, cost_value(kind, best_scale * A), sol.iterations, sol.converged,
                          sol.kkt_residual, "relaxed")


def epsilon_gap_bound(P_list, kind, epsilon: float, lambda_star) -> float:
    """Relative increase of ``f`` when the optimal weights are shrunk to ``s = 1 - eps``."""
    A = _weighted(np.asarray(lambda_star, float), inverse_stack(P_list))
    f1 = cost_value(kind, A)
    f_eps = cost_value(kind, (1.0 - epsilon) * A)
    return abs(f_eps - f1) / abs(f1)


def project_tangent_cone_qp(x, grad, epsilon: float, rtol: float = 1e-9) -> np.ndarray:
    """``argmin_w |w + grad|^2`` s.t. ``w . grad_gamma_k <= 0`` for active constraints.

    Enumerates every subset of the active constraints as equalities, solves the
    equality-constrained least squares, and keeps the best candidate that is
    feasible with non-negative multipliers.
    """
    x = np.asarray(x, dtype=float)
    c = -np.asarray(grad, dtype=float)
    N = len(x)
    s = float(x @ x) / N
    normals = []
    if abs(s - 1.0) <= rtol:
        normals.append(2.0 * x / N)
    if abs(s - (1.0 - epsilon)) <= rtol * (1.0 - epsilon):
        normals.append(-2.0 * x / N)
    best, best_val = None, math.inf
    for r in range(len(normals) + 1):
        for subset in itertools.combinations(range(len(normals)), r):
            if subset:
                A = np.stack([normals[k] for k in subset])
                # w = c - A^T nu with A w = 0  ->  (A A^T) nu = A c
                nu = np.linalg.lstsq(A @ A.T, A @ c, rcond=None)[0]
                if np.any(nu < -1e-12):
                    continue
                w = c - A.T @ nu
            else:
                w = c
            scale = max(1.0, float(np.linalg.norm(c)))
            if any(w @ a > 1e-12 * scale * np.linalg.norm(a) for a in normals):
                continue
            val = float(np.sum((w - c) ** 2))
            if val < best_val:
                best, best_val = w, val
    return best
