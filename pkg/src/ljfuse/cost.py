"""Ellipsoid size measures ``f(Q)`` and the per-agent gradient terms ``g_i``.

``Q(x) = (1/N) sum_i x_i^2 inv(P_i)`` is the shape matrix of the outer
ellipsoid; the size measure is one of

====  ==================  ======================================
 mu   f(Q)                g_i(x_i, Q)
====  ==================  ======================================
 0    -tr(Q)              -2 x_i tr(inv(P_i))
 1    log det(inv(Q))     -2 x_i tr(inv(Q) inv(P_i))
 2    tr(inv(Q))          -2 x_i tr(inv(Q) inv(P_i) inv(Q))
====  ==================  ======================================

and ``d f(Q(x)) / d x_i = g_i / N``.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .ellipsoid import cholesky, logdet_spd, spd_inverse
from .errors import AllZeroWeights, ConfigError, InvalidSize


class CostKind(IntEnum):
    TRACE = 0
    LOGDET = 1
    TRACE_INVERSE = 2

    @property
    def config_name(self) -> str:
        return _NAMES[self]

    @classmethod
    def parse(cls, value) -> "CostKind":
        if isinstance(value, CostKind):
            return value
        if isinstance(value, str):
            for kind, name in _NAMES.items():
                if value == name:
                    return kind
            raise ConfigError(f"unknown cost {value!r}; expected one of {sorted(_NAMES.values())}")
        try:
            return cls(int(value))
        except ValueError:
            raise ConfigError(f"unknown cost label mu={value!r}") from None


_NAMES = {
    CostKind.TRACE: "trace",
    CostKind.LOGDET: "logdet",
    CostKind.TRACE_INVERSE: "trace_inverse",
}


def inverse_stack(P_list) -> np.ndarray:
    """``(N, n, n)`` array of ``inv(P_i)``."""
    return np.stack([spd_inverse(P) for P in P_list])


def q_from_inverses(x, P_inv: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (P_inv.shape[0],):
        raise InvalidSize(f"x has shape {x.shape}, expected ({P_inv.shape[0]},)")
    if not np.any(x != 0.0):
        raise AllZeroWeights("Q(x) is singular when every x_i is zero")
    return np.einsum("i,ijk->jk", x * x, P_inv) / len(x)


def q_of_x(x, P_list) -> np.ndarray:
    return q_from_inverses(x, inverse_stack(P_list))


def cost_value(kind, Q) -> float:
    kind = CostKind.parse(kind)
    Q = np.asarray(Q, dtype=float)
    if kind is CostKind.TRACE:
        cholesky(Q)
        return -float(np.trace(Q))
    if kind is CostKind.LOGDET:
        return -logdet_spd(Q)
    return float(np.trace(spd_inverse(Q)))


def grad_component(kind, x_i: float, Q, P_i) -> float:
    """``g_i`` for a single agent given its (estimated) ``Q`` and covariance ``P_i``."""
    kind = CostKind.parse(kind)
    P_inv = spd_inverse(P_i)
    if kind is CostKind.TRACE:
        return -2.0 * x_i * float(np.trace(P_inv))
    Q_inv = spd_inverse(Q)
    if kind is CostKind.LOGDET:
        return -2.0 * x_i * float(np.sum(Q_inv * P_inv))
    return -2.0 * x_i * float(np.sum((Q_inv @ Q_inv) * P_inv))


def grad_components(kind, x, Q_inv, P_inv) -> np.ndarray:
    """Vectorised ``g_i`` for all agents.

    ``Q_inv`` is either one ``(n, n)`` matrix shared by everybody or a stack
    ``(N, n, n)`` of per-agent inverses (the local estimates).  Unused for
    ``mu = 0``.  All matrices are symmetric, so ``tr(A B) = sum(A * B)``.
    """
    kind = CostKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if kind is CostKind.TRACE:
        return -2.0 * x * np.trace(P_inv, axis1=1, axis2=2)
    if kind is CostKind.LOGDET:
        return -2.0 * x * np.sum(Q_inv * P_inv, axis=(-2, -1))
    QQ = Q_inv @ Q_inv
    return -2.0 * x * np.sum(QQ * P_inv, axis=(-2, -1))


def gradient(kind, x, P_inv) -> np.ndarray:
    """Full gradient ``d f(Q(x)) / dx`` (the ``g_i`` divided by ``N``)."""
    x = np.asarray(x, dtype=float)
    Q = q_from_inverses(x, P_inv)
    kind = CostKind.parse(kind)
    Q_inv = None if kind is CostKind.TRACE else spd_inverse(Q)
    return grad_components(kind, x, Q_inv, P_inv) / len(x)


def objective(kind, x, P_inv) -> float:
    return cost_value(kind, q_from_inverses(x, P_inv))
