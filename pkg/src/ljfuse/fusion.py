"""Covariance-intersection fusion of per-agent estimates with the computed weights.

Central rule::

    P(lambda) = inv(sum_i lambda_i inv(P_i))
    p_hat     = P(lambda) sum_i lambda_i inv(P_i) p_hat_i

Distributed variant: after the main run every agent holds ``x_i`` and an
estimate ``Q_hat_i`` of ``Q(x) = (1/N) sum x_i^2 inv(P_i)``.  One extra static
average-consensus pass over ``x_i^2 inv(P_i) p_hat_i`` lets each agent form
``p_hat = inv(Q_hat_i) * average``, which does not depend on the overall scale
``s(x)`` of the weights.  The covariance is reported as ``s_hat_i inv(Q_hat_i)``
so that the weights are normalised to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edc import ConsensusChannel, static_average
from .ellipsoid import spd_inverse
from .errors import (
    ConsensusNeverReached,
    EmptyList,
    InvalidSize,
    NotPositiveDefinite,
    SingularWeightMatrix,
)
from .graph import Network


@dataclass
class FusionResult:
    p_fused: np.ndarray
    P_fused: np.ndarray
    lam: np.ndarray

    def to_dict(self) -> dict:
        return {
            "p_fused": self.p_fused.tolist(),
            "P_fused": self.P_fused.tolist(),
            "lambda": self.lam.tolist(),
        }


def _check_lists(P_list, p_hat_list):
    P = np.asarray(P_list, dtype=float)
    if P.ndim != 3 or len(P) == 0:
        raise EmptyList("need a non-empty stack of covariance matrices")
    p = np.asarray(p_hat_list, dtype=float)
    if p.shape != P.shape[:2]:
        raise InvalidSize(f"estimates have shape {p.shape}, expected {P.shape[:2]}")
    return P, p


def fuse_central(lam, P_list, p_hat_list) -> FusionResult:
    """Fuse with known weights ``lam`` (non-negative, normally summing to one)."""
    P, p = _check_lists(P_list, p_hat_list)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(P),):
        raise InvalidSize(f"{lam.size} weights for {len(P)} agents")
    if np.any(lam < 0.0):
        raise InvalidSize("weights must be non-negative")
    P_inv = np.stack([spd_inverse(M) for M in P])
    A = np.einsum("i,ijk->jk", lam, P_inv)
    try:
        P_fused = spd_inverse(A)
    except NotPositiveDefinite:
        raise SingularWeightMatrix("sum of weighted information matrices is singular") from None
    info = np.einsum("i,ijk,ik->j", lam, P_inv, p)
    return FusionResult(P_fused @ info, P_fused, lam)


def fuse_distributed(
    final_state: dict,
    P_list,
    p_hat_list,
    network: Network,
    channel: ConsensusChannel,
    horizon: float,
    dt: float,
    tol: float = 1e-3,
) -> list[FusionResult]:
    """Per-agent fusion from the terminal state of a run.

    ``final_state`` needs ``x``, ``s_hat`` and ``Q_hat`` (as in
    ``SimulationTrace.final_state``).  The auxiliary pass runs ``channel`` with
    frozen inputs for ``horizon`` seconds; its ``zeta`` should be zero since the
    inputs do not move.  Raises :class:`ConsensusNeverReached` when the agents'
    fused estimates still disagree by more than ``tol`` afterwards.
    """
    P, p = _check_lists(P_list, p_hat_list)
    N = len(P)
    x = np.asarray(final_state["x"], dtype=float)
    s_hat = np.asarray(final_state["s_hat"], dtype=float)
    Q_hat = np.asarray(final_state["Q_hat"], dtype=float)
    if x.shape != (N,) or Q_hat.shape != P.shape:
        raise InvalidSize("final state does not match the number of agents or the dimension")
    P_inv = np.stack([spd_inverse(M) for M in P])
    z = (x**2)[:, None] * np.einsum("ijk,ik->ij", P_inv, p)
    avg = static_average(network, z, channel, horizon, dt)

    results = []
    for i in range(N):
        try:
            Qi_inv = spd_inverse(Q_hat[i])
        except NotPositiveDefinite:
            raise SingularWeightMatrix(f"agent {i}: Q_hat is not positive definite") from None
        results.append(FusionResult(Qi_inv @ avg[i], s_hat[i] * Qi_inv, x**2 / (N * s_hat[i])))
    fused = np.stack([r.p_fused for r in results])
    spread = float(np.max(fused.max(axis=0) - fused.min(axis=0)))
    if spread >= tol:
        raise ConsensusNeverReached(f"fused estimates disagree by {spread:.3g} after the averaging pass")
    return results


def generate_estimates(P_list, seed: int, truth=None) -> np.ndarray:
    """Draw ``p_hat_i ~ Normal(truth, P_i)`` for every agent (truth defaults to zero)."""
    P = np.asarray(P_list, dtype=float)
    n = P.shape[1]
    truth = np.zeros(n) if truth is None else np.asarray(truth, dtype=float)
    rng = np.random.default_rng([seed, 2])
    return np.stack([rng.multivariate_normal(truth, M) for M in P])
