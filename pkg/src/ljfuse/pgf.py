"""Projected gradient flow on the shell ``C = {x : 1 - eps <= |x|^2 / N <= 1}``.

Contains the per-agent two-branch controller, the synchronised (ideal) flow it
reduces to after consensus, the closed-form projection of ``-grad F`` onto the
tangent cone of ``C``, and the velocity bound ``h(N)`` used for gain tuning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostKind, grad_component, grad_components, gradient
from .ellipsoid import SpectralBounds
from .errors import InvalidBounds, NotInManifold, NotPositiveDefinite

BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class ControllerParams:
    kappa_c: float
    epsilon: float
    t_c: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidBounds(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.kappa_c < 0.0:
            raise InvalidBounds("kappa_c must be non-negative")
        if self.t_c <= 0.0:
            raise InvalidBounds("t_c must be positive")


@dataclass(frozen=True)
class FeasibleManifold:
    epsilon: float
    n_agents: int

    def contains(self, x, rtol: float = 0.0) -> bool:
        s = s_of_x(x)
        return (1.0 - self.epsilon) * (1.0 - rtol) <= s <= 1.0 + rtol

    def active_constraints(self, x, rtol: float = BOUNDARY_RTOL) -> tuple[bool, bool]:
        """``(outer, inner)`` flags: ``s(x) == 1`` and ``s(x) == 1 - eps`` within ``rtol``."""
        s = s_of_x(x)
        return abs(s - 1.0) <= rtol, abs(s - (1.0 - self.epsilon)) <= rtol * (1.0 - self.epsilon)


def s_of_x(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ x) / len(x)


def in_band(s, epsilon: float):
    """Closed-interval membership ``s in [1 - eps, 1]`` (boundary ties go to the gradient branch)."""
    return (s >= 1.0 - epsilon) & (s <= 1.0)


def control_input(i, t, x_i, s_hat_i, Q_hat_i, P_i, kind, params: ControllerParams) -> float:
    """Control of one agent from purely local quantities."""
    if t < params.t_c:
        return 0.0
    if not in_band(s_hat_i, params.epsilon):
        return params.kappa_c * x_i * float(np.sign((1.0 - params.epsilon / 2.0) - s_hat_i))
    return -params.kappa_c * grad_component(kind, x_i, Q_hat_i, P_i)


def control_inputs(t, x, s_hat, Q_hat, P_inv, kind, params: ControllerParams) -> np.ndarray:
    """Vectorised controller for all agents.

    ``Q_hat`` is the ``(N, n, n)`` stack of local estimates.  Estimates are only
    inverted for agents in the gradient branch; a non-PD estimate there raises
    :class:`NotPositiveDefinite`.
    """
    x = np.asarray(x, dtype=float)
    u = np.zeros_like(x)
    if t < params.t_c:
        return u
    kind = CostKind.parse(kind)
    grad_mask = in_band(s_hat, params.epsilon)
    push = ~grad_mask
    u[push] = params.kappa_c * x[push] * np.sign((1.0 - params.epsilon / 2.0) - s_hat[push])
    if np.any(grad_mask):
        idx = np.flatnonzero(grad_mask)
        if kind is CostKind.TRACE:
            g = grad_components(kind, x[idx], None, P_inv[idx])
        else:
            Qh = Q_hat[idx]
            try:
                np.linalg.cholesky(Qh)
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite(
                    f"local estimate Q_hat is not positive definite at t={t:.6g} "
                    "while the gradient branch is active"
                ) from None
            g = grad_components(kind, x[idx], np.linalg.inv(Qh), P_inv[idx])
        u[idx] = -params.kappa_c * g
    return u


def ideal_flow_derivative(x, P_inv, kind, params: ControllerParams) -> np.ndarray:
    """Right-hand side of the flow when every agent knows ``s(x)`` and ``Q(x)`` exactly."""
    x = np.asarray(x, dtype=float)
    s = s_of_x(x)
    if not in_band(s, params.epsilon):
        return params.kappa_c * x * float(np.sign((1.0 - params.epsilon / 2.0) - s))
    return -params.kappa_c * len(x) * gradient(kind, x, P_inv)


def projected_gradient(x, grad, epsilon: float, rtol: float = BOUNDARY_RTOL) -> np.ndarray:
    """Projection of ``-grad`` onto the tangent cone of ``C`` at ``x``.

    On the outer sphere (``|x|^2 = N``) an outward-pointing ``-grad`` loses its
    radial part; on the inner sphere (``|x|^2 = N(1 - eps)``) an inward-pointing
    one does.  In both cases ``w = -grad + (x.grad / |x|^2) x``, where ``|x|^2``
    is ``N`` or ``N (1 - eps)``.  Elsewhere ``-grad`` is returned unchanged.
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    n = len(x)
    manifold = FeasibleManifold(epsilon, n)
    if not manifold.contains(x, rtol=rtol):
        raise NotInManifold(f"s(x) = {s_of_x(x):.12g} is outside [{1 - epsilon}, 1]")
    outer, inner = manifold.active_constraints(x, rtol=rtol)
    xg = float(x @ grad)
    # |x|^2 is N (outer) or N(1 - eps) (inner) up to rtol; the exact norm keeps w tangent
    if (outer and xg <= 0.0) or (inner and xg >= 0.0):
        return -grad + (xg / float(x @ x)) * x
    return -grad


def velocity_bound(
    params: ControllerParams,
    bounds: SpectralBounds,
    b_lo: float,
    b_hi: float,
    n_agents: int,
    mu,
) -> float:
    """``h(N) = kappa_c * max(sqrt(N) b_hi, 2 b_hi sigma_hi N^(mu+1) (sigma_lo min(b_lo^2, 1-eps))^(-mu))``."""
    if not (0.0 < b_lo < b_hi and b_hi > 1.0):
        raise InvalidBounds(f"need 0 < b_lo < b_hi and b_hi > 1, got b_lo={b_lo}, b_hi={b_hi}")
    mu = int(CostKind.parse(mu))
    floor = bounds.sigma_lo * min(b_lo**2, 1.0 - params.epsilon)
    radial = np.sqrt(n_agents) * b_hi
    grad_term = 2.0 * b_hi * bounds.sigma_hi * n_agents ** (mu + 1) * floor ** (-mu)
    return float(params.kappa_c * max(radial, grad_term))

