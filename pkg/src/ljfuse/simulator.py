"""Fixed-step simulation of the networked two-stage protocol.

Stage one (``t < T_c``) only runs the two consensus channels; stage two adds
the local controller.  Every step evaluates all derivatives from the current
snapshot and then applies a forward-Euler update to ``v``, ``V`` and ``x``
together (synchronous rounds).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import special_ortho_group

from .cost import CostKind, cost_value, inverse_stack
from .edc import ConsensusChannel, consensus_derivatives, pack_sym, unpack_sym
from .ellipsoid import SpectralBounds, as_spd, spectral_bounds
from .errors import (
    ConsensusNeverReached,
    GenerationFailed,
    InvalidSize,
    NotPositiveDefinite,
    NumericalDivergence,
)
from .graph import Network, default_six_node, make_cycle
from .pgf import control_inputs, in_band, s_of_x, velocity_bound
from .tuning import ProtocolParams

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass
class ProblemInstance:
    P_list: np.ndarray
    network: Network
    p_hat: np.ndarray | None = None

    def __post_init__(self):
        P = np.stack([as_spd(M) for M in self.P_list])
        if P.shape[0] != self.network.n_nodes:
            raise InvalidSize(f"{P.shape[0]} matrices for a {self.network.n_nodes}-node network")
        self.P_list = P
        self.P_inv = inverse_stack(P)
        if self.p_hat is not None:
            self.p_hat = np.asarray(self.p_hat, dtype=float).reshape(self.n_agents, self.dim)

    @property
    def n_agents(self) -> int:
        return self.P_list.shape[0]

    @property
    def dim(self) -> int:
        return self.P_list.shape[1]

    def spectral_bounds(self) -> SpectralBounds:
        return spectral_bounds(self.P_list)

    def to_dict(self) -> dict:
        d = {"matrices": self.P_list.tolist(), "graph": self.network.to_dict()}
        if self.p_hat is not None:
            d["estimates"] = self.p_hat.tolist()
        return d


def generate_instance(
    n_agents: int,
    dim: int,
    seed: int,
    cond_limit: float = 1e4,
    network: Network | None = None,
    jitter: float = 1e-6,
) -> ProblemInstance:
    """Random covariances ``P_i = M_i^T M_i + jitter I`` with ``M_i`` uniform on ``[-1, 1]``.

    Matrices whose condition number exceeds ``cond_limit`` are redrawn (at most
    100 times each).  Without an explicit network, six agents use the default
    six-node graph and any other count a cycle.
    """
    if n_agents < 2 or dim < 1:
        raise InvalidSize("need at least two agents and dimension >= 1")
    if network is None:
        network = default_six_node() if n_agents == 6 else make_cycle(n_agents)
    rng = np.random.default_rng(seed)
    mats = []
    for i in range(n_agents):
        for _ in range(100):
            M = rng.uniform(-1.0, 1.0, size=(dim, dim))
            P = M.T @ M + jitter * np.eye(dim)
            if np.linalg.cond(P) <= cond_limit:
                mats.append(P)
                break
        else:
            raise GenerationFailed(f"matrix {i}: 100 draws exceeded cond_limit={cond_limit:g}")
    return ProblemInstance(np.stack(mats), network)


def generate_well_conditioned(
    n_agents: int,
    dim: int,
    seed: int,
    eig_range: tuple[float, float] = (0.5, 2.0),
    network: Network | None = None,
) -> ProblemInstance:
    """Random rotations of diagonal matrices with eigenvalues uniform on ``eig_range``.

    Keeps ``sigma_hi / sigma_lo`` small, so the gains required by the
    convergence theorem stay moderate.
    """
    lo, hi = eig_range
    if n_agents < 2 or dim < 1 or not 0.0 < lo <= hi:
        raise InvalidSize("need at least two agents, dim >= 1 and 0 < lo <= hi")
    if network is None:
        network = default_six_node() if n_agents == 6 else make_cycle(n_agents)
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(n_agents):
        R = special_ortho_group.rvs(dim, random_state=rng) if dim > 1 else np.ones((1, 1))
        mats.append(R @ np.diag(rng.uniform(lo, hi, size=dim)) @ R.T)
    return ProblemInstance(np.stack(mats), network)


@dataclass
class SimConfig:
    params: ProtocolParams
    dt: float = 1e-4
    t_end: float = 30.0
    record_every: int = 100
    seed: int = 0
    tol_cons: float = 1e-3
    sustain_steps: int = 100
    b_lo: float = 0.1
    b_hi: float = 1.1
    x0: np.ndarray | None = None
    x0_box: tuple[float, float] | None = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidSize("dt must be positive")
        if self.t_end <= self.params.t_c:
            raise InvalidSize("t_end must exceed t_c")
        if self.record_every < 1 or self.sustain_steps < 1:
            raise InvalidSize("record_every and sustain_steps must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def initial_x(self, n_agents: int) -> np.ndarray:
        """``x(0)``: explicit, or uniform on ``x0_box`` (default ``[b_lo, b_hi]``)."""
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float)
            if x0.ndim == 0:
                x0 = np.full(n_agents, float(x0))
            if x0.shape != (n_agents,):
                raise InvalidSize(f"x0 has {x0.size} entries for {n_agents} agents")
            return x0.copy()
        lo, hi = self.x0_box if self.x0_box is not None else (self.b_lo, self.b_hi)
        rng = np.random.default_rng([self.seed, 1])
        return rng.uniform(lo, hi, size=n_agents)


@dataclass
class SimulationTrace:
    times: np.ndarray
    x: np.ndarray
    s_hat: np.ndarray
    s: np.ndarray
    f: np.ndarray
    cons_err_s: np.ndarray
    cons_err_q: np.ndarray
    u_norm: np.ndarray
    t_c: float
    dt: float
    epsilon: float | None = None
    t_cons: float | None = None
    t_cons_q: float | None = None
    t_feasible: float | None = None
    max_cons_err_after_tc: float = math.nan
    s_range_after_feasible: tuple[float, float] | None = None
    h: float | None = None
    max_u_over_h: float | None = None
    velocity_violations: int = 0
    max_conservation_residual: float = 0.0
    final_state: dict = field(default_factory=dict)

    @property
    def lam(self) -> np.ndarray:
        return self.x**2 / self.x.shape[1]

    @property
    def t_eps(self) -> float | None:
        return None if self.t_feasible is None else self.t_feasible - self.t_c

    def index_at(self, t: float) -> int:
        return int(np.clip(np.searchsorted(self.times, t - 0.5 * self.dt), 0, len(self.times) - 1))

    def events(self) -> dict:
        return {
            "t_cons": self.t_cons,
            "t_cons_q": self.t_cons_q,
            "t_feasible": self.t_feasible,
            "t_eps": self.t_eps,
        }


class _Debounce:
    """First time a condition starts holding for ``sustain`` consecutive steps."""

    def __init__(self, sustain: int):
        self.sustain = sustain
        self.run = 0
        self.start = None
        self.time = None

    def update(self, ok: bool, t: float) -> None:
        if self.time is not None:
            return
        if ok:
            if self.run == 0:
                self.start = t
            self.run += 1
            if self.run >= self.sustain:
                self.time = self.start
        else:
            self.run = 0


def _batch_cost(kind, x_rec: np.ndarray, P_inv: np.ndarray) -> np.ndarray:
    """``f(Q(x))`` for every recorded row."""
    N = x_rec.shape[1]
    Q = np.einsum("ti,ijk->tjk", x_rec**2, P_inv) / N
    kind = CostKind.parse(kind)
    if kind is CostKind.TRACE:
        return -np.trace(Q, axis1=1, axis2=2)
    if kind is CostKind.LOGDET:
        return -np.linalg.slogdet(Q)[1]
    return np.trace(np.linalg.inv(Q), axis1=1, axis2=2)


def _finish(trace: SimulationTrace, h: float | None) -> SimulationTrace:
    if h is not None:
        trace.h = h
        ratio = trace.u_norm / h
        trace.max_u_over_h = float(ratio.max())
        trace.velocity_violations = int(np.sum(ratio > 1.0 + 1e-6))
    log.info("run finished: %s", trace.events())
    return trace


def _integrate(instance: ProblemInstance, config: SimConfig, x0: np.ndarray, exact: bool):
    from . import _kernel

    p = config.params
    P_inv = np.ascontiguousarray(instance.P_inv)
    P_inv_packed = np.ascontiguousarray(pack_sym(P_inv))
    iu0, iu1 = (np.ascontiguousarray(a) for a in np.triu_indices(instance.dim))
    tails, heads = instance.network.edge_index
    ctrl = p.controller
    return _kernel.integrate(
        np.asarray(x0, dtype=float).copy(), P_inv, P_inv_packed, iu0, iu1,
        np.ascontiguousarray(tails), np.ascontiguousarray(heads),
        float(p.kappa_s), float(p.zeta_s), float(p.kappa_q), float(p.zeta_q),
        float(p.q_exp), float(p.sign_boundary_layer),
        int(p.mu), float(ctrl.kappa_c), float(ctrl.epsilon), float(ctrl.t_c),
        float(config.dt), int(config.n_steps), int(config.record_every),
        float(config.tol_cons), int(config.sustain_steps), exact,
    )


def run(instance: ProblemInstance, config: SimConfig, h: float | None = None) -> SimulationTrace:
    """Integrate the networked system and record a decimated trace.

    Events are detected at full step resolution.  ``h`` (the velocity bound)
    is optional; when given, ``|u|`` is checked against it at every recorded
    step.
    """
    from . import _kernel

    p = config.params
    n = instance.dim
    P_inv = np.ascontiguousarray(instance.P_inv)
    P_inv_packed = np.ascontiguousarray(pack_sym(P_inv))
    ctrl = p.controller
    out = _integrate(instance, config, config.initial_x(instance.n_agents), exact=False)
    status, r, rt, rx, rsh, res, req, ru, stats, x, v, V = out
    if status == _kernel.STATUS_DIVERGED:
        raise NumericalDivergence(f"state diverged at t={stats[7]:.6g}")
    if status == _kernel.STATUS_NOT_PD:
        raise NotPositiveDefinite(
            f"local estimate Q_hat is not positive definite at t={stats[7]:.6g} "
            "while the gradient branch is active"
        )

    def event(val):
        return None if math.isnan(val) else float(val)

    t_feas = event(stats[2])
    trace = SimulationTrace(
        times=rt[:r].copy(),
        x=rx[:r].copy(),
        s_hat=rsh[:r].copy(),
        s=np.mean(rx[:r] ** 2, axis=1),
        f=_batch_cost(p.mu, rx[:r], P_inv),
        cons_err_s=res[:r].copy(),
        cons_err_q=req[:r].copy(),
        u_norm=ru[:r].copy(),
        t_c=ctrl.t_c,
        epsilon=ctrl.epsilon,
        dt=config.dt,
        t_cons=event(stats[0]),
        t_cons_q=event(stats[1]),
        t_feasible=t_feas,
        max_cons_err_after_tc=float(stats[3]),
        s_range_after_feasible=None if t_feas is None else (float(stats[4]), float(stats[5])),
        max_conservation_residual=float(stats[6]),
    )
    trace.final_state = {
        "t": config.n_steps * config.dt,
        "x": x.tolist(),
        "v": v.tolist(),
        "s_hat": (x * x - v).tolist(),
        "Q_hat": unpack_sym((x * x)[:, None] * P_inv_packed - V, n).tolist(),
    }
    return _finish(trace, h)


def run_reference(instance: ProblemInstance, config: SimConfig, h: float | None = None) -> SimulationTrace:
    """Pure-numpy twin of :func:`run` built from the ``edc`` and ``pgf`` functions.

    Slow; used to cross-check the compiled loop on short horizons.
    """
    p = config.params
    g = instance.network
    N, n = instance.n_agents, instance.dim
    P_inv = instance.P_inv
    P_inv_packed = pack_sym(P_inv)
    ch_s = ConsensusChannel(p.kappa_s, p.zeta_s, p.q_exp, p.sign_boundary_layer)
    ch_q = ConsensusChannel(p.kappa_q, p.zeta_q, p.q_exp, p.sign_boundary_layer)
    ctrl = p.controller
    kind = p.mu
    dt = config.dt

    x = config.initial_x(N)
    v = np.zeros(N)
    V = np.zeros((N, P_inv_packed.shape[1]))

    n_steps = config.n_steps
    n_rec = n_steps // config.record_every + 1
    rec = {
        "times": np.empty(n_rec),
        "x": np.empty((n_rec, N)),
        "s_hat": np.empty((n_rec, N)),
        "s": np.empty(n_rec),
        "f": np.empty(n_rec),
        "cons_err_s": np.empty(n_rec),
        "cons_err_q": np.empty(n_rec),
        "u_norm": np.empty(n_rec),
    }
    cons = _Debounce(config.sustain_steps)
    cons_q = _Debounce(config.sustain_steps)
    feas = _Debounce(config.sustain_steps)
    max_err_after_tc = 0.0
    s_lo, s_hi = math.inf, -math.inf
    max_cons_resid = 0.0
    r = 0

    for k in range(n_steps + 1):
        t = k * dt
        x2 = x * x
        s_hat = x2 - v
        zq = x2[:, None] * P_inv_packed
        q_hat = zq - V
        s_true = float(x2.mean())
        q_true = zq.mean(axis=0)
        err_s = float(np.max(np.abs(s_hat - s_true)))
        err_q = float(np.max(np.abs(q_hat - q_true)))

        cons.update(err_s < config.tol_cons, t)
        cons_q.update(err_q < config.tol_cons, t)
        if t >= ctrl.t_c:
            max_err_after_tc = max(max_err_after_tc, err_s)
            feas.update(bool(np.all(in_band(s_hat, ctrl.epsilon))), t)
            if feas.time is not None:
                s_lo, s_hi = min(s_lo, s_true), max(s_hi, s_true)

        if t >= ctrl.t_c:
            u = control_inputs(t, x, s_hat, unpack_sym(q_hat, n), P_inv, kind, ctrl)
        else:
            u = np.zeros(N)

        if k % config.record_every == 0:
            # sum_i v_i stays zero under antisymmetric exchange
            max_cons_resid = max(max_cons_resid, abs(float(v.sum())), float(np.max(np.abs(V.sum(axis=0)))))
            rec["times"][r] = t
            rec["x"][r] = x
            rec["s_hat"][r] = s_hat
            rec["s"][r] = s_true
            rec["f"][r] = cost_value(kind, unpack_sym(q_true, n))
            rec["cons_err_s"][r] = err_s
            rec["cons_err_q"][r] = err_q
            rec["u_norm"][r] = float(np.linalg.norm(u))
            r += 1

        if k == n_steps:
            break
        fs = consensus_derivatives(g, ch_s, s_hat)
        fq = consensus_derivatives(g, ch_q, q_hat)
        v -= dt * fs
        V -= dt * fq
        x = x + dt * u
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise NumericalDivergence(f"state diverged at t={t:.6g}")

    trace = SimulationTrace(
        **{key: val[:r] for key, val in rec.items()},
        t_c=ctrl.t_c,
        epsilon=ctrl.epsilon,
        dt=dt,
        t_cons=cons.time,
        t_cons_q=cons_q.time,
        t_feasible=feas.time,
        max_cons_err_after_tc=max_err_after_tc,
        s_range_after_feasible=None if feas.time is None else (s_lo, s_hi),
        max_conservation_residual=max_cons_resid,
    )
    trace.final_state = {
        "t": n_steps * dt,
        "x": x.tolist(),
        "v": v.tolist(),
        "s_hat": (x * x - v).tolist(),
        "Q_hat": unpack_sym((x * x)[:, None] * P_inv_packed - V, n).tolist(),
    }
    return _finish(trace, h)


def run_ideal(instance: ProblemInstance, config: SimConfig, x_start: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the synchronised flow from ``x_start`` at ``t = T_c`` with the same stepper.

    Returns ``(times, x)`` sampled at the recording grid of :func:`run`.
    """
    status, r, rt, rx, *_rest, stats, _x, _v, _V = _integrate(instance, config, x_start, exact=True)
    if status != 0:
        raise NumericalDivergence(f"ideal flow failed at t={stats[7]:.6g}")
    return rt[:r].copy(), rx[:r].copy()


@dataclass
class IdealComparison:
    times: np.ndarray
    deviation: np.ndarray
    max_deviation: float


def compare_to_ideal(trace: SimulationTrace, instance: ProblemInstance, config: SimConfig) -> IdealComparison:
    """Max-norm gap between the networked and synchronised trajectories after ``t_cons``."""
    if trace.t_cons is None:
        raise ConsensusNeverReached("consensus was never detected; nothing to compare")
    times, x_ideal = run_ideal(instance, config, trace.x[0])
    m = min(len(times), len(trace.times))
    dev = np.max(np.abs(trace.x[:m] - x_ideal[:m]), axis=1)
    mask = trace.times[:m] >= trace.t_cons
    return IdealComparison(trace.times[:m][mask], dev[mask], float(dev[mask].max()))


def trace_velocity_bound(instance: ProblemInstance, config: SimConfig) -> float:
    return velocity_bound(
        config.params.controller,
        instance.spectral_bounds(),
        config.b_lo,
        config.b_hi,
        instance.n_agents,
        config.params.mu,
    )


def feasibility_time_bound(x_tc, b_lo: float, kappa_c: float, epsilon: float) -> float:
    """Worst-case time to reach ``C`` from ``x(T_c)`` under the synchronised flow.

    Below the shell the Lyapunov function ``(1 - eps) - s`` decays at rate at
    least ``2 kappa_c b_lo^2``; above it, ``s - 1`` decays at rate at least
    ``2 kappa_c``.
    """
    s = s_of_x(x_tc)
    if s < 1.0 - epsilon:
        return ((1.0 - epsilon) - s) / (2.0 * kappa_c * b_lo**2)
    if s > 1.0:
        return (s - 1.0) / (2.0 * kappa_c)
    return 0.0


def objective_of(instance: ProblemInstance, kind, x) -> float:
    from .cost import objective

    return objective(CostKind.parse(kind), x, instance.P_inv)
