"""Exact dynamic consensus (EDC) with the fixed-time sliding nonlinearity ``phi``.

Each agent ``i`` tracks the network average of a local signal ``z_i(t)``
through ``z_hat_i = z_i - v_i``.  The auxiliary state starts at zero so that
``sum_i v_i = 0`` forever, which makes the mean of the estimates equal the true
average at every instant.  Exchange along an edge is evaluated once and applied
with opposite signs to both endpoints, so the conservation holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphMismatch, InvalidBounds
from .graph import Network


def phi(e, zeta: float, q_exp: float, boundary_layer: float = 0.0):
    """``(|e|^(1-q) + |e|^(1+q) + zeta) * sign(e)`` elementwise, with ``phi(0) = 0``.

    A positive ``boundary_layer`` replaces ``sign(e)`` in the ``zeta`` term by
    ``clip(e / boundary_layer, -1, 1)``; the default ``0`` keeps the exact sign.
    """
    e = np.asarray(e, dtype=float)
    a = np.abs(e)
    sgn = np.sign(e)
    out = (a ** (1.0 - q_exp) + a ** (1.0 + q_exp)) * sgn
    if boundary_layer > 0.0:
        out = out + zeta * np.clip(e / boundary_layer, -1.0, 1.0)
    else:
        out = out + zeta * sgn
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ConsensusChannel:
    """Gains of one EDC channel (scalar ``s`` or matrix ``Q``)."""

    kappa: float
    zeta: float
    q_exp: float
    boundary_layer: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.q_exp < 1.0:
            raise InvalidBounds(f"q must lie in (0, 1), got {self.q_exp}")
        if self.kappa < 0.0 or self.zeta < 0.0 or self.boundary_layer < 0.0:
            raise InvalidBounds("kappa, zeta and boundary_layer must be non-negative")

    def flow(self, g: Network, estimates: np.ndarray) -> np.ndarray:
        return consensus_derivatives(g, self, estimates)


def consensus_derivatives(g: Network, channel: ConsensusChannel, estimates) -> np.ndarray:
    """``kappa * sum_{j in N_i} phi(est_j - est_i)`` for every agent ``i``.

    ``estimates`` has shape ``(N,)`` or ``(N, m)`` (one column per matrix
    entry).  The result is the rate at which neighbour exchange pulls each
    estimate; the auxiliary state integrates its negative
    (``dv_i/dt = -flow_i``), which keeps ``z_hat_i = z_i - v_i`` attracted to
    its neighbours.
    """
    est = np.asarray(estimates, dtype=float)
    if est.shape[0] != g.n_nodes:
        raise GraphMismatch(f"{est.shape[0]} estimates for a {g.n_nodes}-node graph")
    tails, heads = g.edge_index
    edge_flow = phi(est[heads] - est[tails], channel.zeta, channel.q_exp, channel.boundary_layer)
    edge_flow = channel.kappa * np.asarray(edge_flow)
    out = np.zeros_like(est)
    np.add.at(out, tails, edge_flow)
    np.subtract.at(out, heads, edge_flow)
    return out


def consensus_error(estimates, true_average) -> float:
    """Largest max-norm deviation of any agent's estimate from the true average."""
    est = np.asarray(estimates, dtype=float)
    avg = np.asarray(true_average, dtype=float)
    if est.size == 0:
        return 0.0
    dev = np.abs(est - avg)
    return float(dev.max())


def upper_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the ``n(n+1)/2`` independent entries of a symmetric matrix."""
    return np.triu_indices(n)


def pack_sym(mats: np.ndarray) -> np.ndarray:
    """``(N, n, n)`` symmetric stack -> ``(N, n(n+1)/2)`` upper triangles."""
    iu = upper_indices(mats.shape[-1])
    return mats[..., iu[0], iu[1]]


def unpack_sym(packed: np.ndarray, n: int) -> np.ndarray:
    iu = upper_indices(n)
    out = np.zeros(packed.shape[:-1] + (n, n))
    out[..., iu[0], iu[1]] = packed
    out[..., iu[1], iu[0]] = packed
    return out


def static_average(
    g: Network,
    inputs,
    channel: ConsensusChannel,
    horizon: float,
    dt: float,
) -> np.ndarray:
    """Run EDC with frozen inputs for ``horizon`` seconds; returns each agent's estimate.

    With constant inputs the disturbance bound is zero, so ``zeta = 0`` is
    admissible and avoids sign chattering in the result.
    """
    z = np.asarray(inputs, dtype=float)
    v = np.zeros_like(z)
    steps = int(round(horizon / dt))
    for _ in range(steps):
        v -= dt * consensus_derivatives(g, channel, z - v)
    return z - v
