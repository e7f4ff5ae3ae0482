"""Consensus gains that satisfy the convergence theorem's sufficient conditions.

The four conditions are::

    kappa_s, kappa_Q > l * pi / (q * lambda_G * T_c)
    zeta_s > 4 * b_hi * h(N)       / (kappa_s * sqrt(lambda_G))
    zeta_Q > 4 * p * b_hi * h(N)   / (kappa_Q * sqrt(lambda_G))

They are conservative: much smaller gains usually converge in practice.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .cost import CostKind
from .ellipsoid import SpectralBounds
from .errors import InvalidAssumption, InvalidBounds
from .graph import GraphConstants
from .pgf import ControllerParams, velocity_bound


@dataclass(frozen=True)
class ProtocolParams:
    kappa_s: float
    kappa_q: float
    zeta_s: float
    zeta_q: float
    q_exp: float = 0.5
    kappa_c: float = 0.1
    epsilon: float = 0.05
    t_c: float = 1.0
    mu: CostKind = CostKind.TRACE_INVERSE
    safety_factor: float = 1.1
    sign_boundary_layer: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", CostKind.parse(self.mu))
        if not 0.0 < self.q_exp < 1.0:
            raise InvalidBounds(f"q must lie in (0, 1), got {self.q_exp}")
        if self.safety_factor < 1.0:
            raise InvalidBounds("safety_factor must be >= 1")
        # also validates epsilon, kappa_c, t_c
        self.controller

    @property
    def controller(self) -> ControllerParams:
        return ControllerParams(self.kappa_c, self.epsilon, self.t_c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu"] = int(self.mu)
        d["cost"] = self.mu.config_name
        return d


@dataclass(frozen=True)
class BoundCheck:
    name: str
    value: float
    bound: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.value - self.bound


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[BoundCheck, ...]
    h: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "h": self.h,
            "checks": [
                {"name": c.name, "value": c.value, "bound": c.bound, "margin": c.margin, "passed": c.passed}
                for c in self.checks
            ],
        }


def _check_assumption(b_lo: float, b_hi: float) -> None:
    if b_lo <= 0.0:
        raise InvalidAssumption(f"b_lo must be positive, got {b_lo}")
    if b_hi <= 1.0:
        raise InvalidAssumption(f"b_hi must exceed 1, got {b_hi}")
    if b_lo >= b_hi:
        raise InvalidAssumption(f"b_lo ({b_lo}) must be below b_hi ({b_hi})")


def kappa_lower_bound(gc: GraphConstants, q_exp: float, t_c: float) -> float:
    return gc.n_edges * math.pi / (q_exp * gc.algebraic_connectivity * t_c)


def tune(
    gc: GraphConstants,
    sb: SpectralBounds,
    b_lo: float,
    b_hi: float,
    t_c: float = 1.0,
    kappa_c: float = 0.1,
    q_exp: float = 0.5,
    epsilon: float = 0.05,
    mu=CostKind.TRACE_INVERSE,
    safety_factor: float = 1.1,
) -> ProtocolParams:
    """Set every gain to ``safety_factor`` times its strict lower bound."""
    _check_assumption(b_lo, b_hi)
    if not 0.0 < q_exp < 1.0 or t_c <= 0.0 or kappa_c <= 0.0:
        raise InvalidBounds("need q in (0, 1), t_c > 0 and kappa_c > 0")
    if safety_factor <= 1.0:
        raise InvalidBounds("safety_factor must exceed 1 for the strict inequalities")
    ctrl = ControllerParams(kappa_c, epsilon, t_c)
    h = velocity_bound(ctrl, sb, b_lo, b_hi, gc.n_nodes, mu)
    kappa = safety_factor * kappa_lower_bound(gc, q_exp, t_c)
    sqrt_lg = math.sqrt(gc.algebraic_connectivity)
    zeta_s = safety_factor * 4.0 * b_hi * h / (kappa * sqrt_lg)
    zeta_q = safety_factor * 4.0 * sb.p_max * b_hi * h / (kappa * sqrt_lg)
    return ProtocolParams(
        kappa_s=kappa,
        kappa_q=kappa,
        zeta_s=zeta_s,
        zeta_q=zeta_q,
        q_exp=q_exp,
        kappa_c=kappa_c,
        epsilon=epsilon,
        t_c=t_c,
        mu=mu,
        safety_factor=safety_factor,
    )


def validate(
    params: ProtocolParams,
    gc: GraphConstants,
    sb: SpectralBounds,
    b_lo: float,
    b_hi: float,
) -> ValidationReport:
    """Check each sufficient condition; never raises on failing gains."""
    try:
        h = velocity_bound(params.controller, sb, b_lo, b_hi, gc.n_nodes, params.mu)
    except InvalidBounds:
        h = math.inf
    k_lo = kappa_lower_bound(gc, params.q_exp, params.t_c)
    sqrt_lg = math.sqrt(gc.algebraic_connectivity)

    def zeta_bound(scale, kappa):
        return math.inf if kappa <= 0.0 else scale * 4.0 * b_hi * h / (kappa * sqrt_lg)

    zs = zeta_bound(1.0, params.kappa_s)
    zq = zeta_bound(sb.p_max, params.kappa_q)
    checks = (
        BoundCheck("kappa_s", params.kappa_s, k_lo, params.kappa_s > k_lo),
        BoundCheck("kappa_q", params.kappa_q, k_lo, params.kappa_q > k_lo),
        BoundCheck("zeta_s", params.zeta_s, zs, params.zeta_s > zs),
        BoundCheck("zeta_q", params.zeta_q, zq, params.zeta_q > zq),
    )
    return ValidationReport(checks, h)
