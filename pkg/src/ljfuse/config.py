"""JSON experiment configuration, validated with pydantic.

Unknown keys are rejected; every validation failure is re-raised as
:class:`ConfigError` carrying the dotted location of the offending key.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .cost import CostKind
from .errors import ConfigError, InvalidAssumption
from .graph import Network, default_six_node, make_complete, make_cycle, make_from_edges, make_path
from .simulator import ProblemInstance, SimConfig, generate_instance, generate_well_conditioned
from .tuning import ProtocolParams, tune

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GraphSpec(_Strict):
    kind: Literal["default", "cycle", "path", "complete", "edges"] = "default"
    edges: Optional[list[tuple[int, int]]] = None

    @model_validator(mode="after")
    def _edges_given(self):
        if self.kind == "edges" and not self.edges:
            raise ValueError("graph kind 'edges' needs a non-empty 'edges' list")
        return self


class GenerateSpec(_Strict):
    n_agents: int = Field(6, ge=2)
    dim: int = Field(2, ge=1)
    kind: Literal["uniform", "well_conditioned"] = "uniform"
    cond_limit: float = Field(1e4, gt=1.0)
    eig_range: tuple[float, float] = (0.5, 2.0)


class InstanceSpec(_Strict):
    generate: Optional[GenerateSpec] = None
    matrices: Optional[list[list[list[float]]]] = None
    graph: GraphSpec = GraphSpec()
    estimates: Optional[list[list[float]]] = None
    estimate_truth: Optional[list[float]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.generate is None) == (self.matrices is None):
            raise ValueError("give exactly one of 'generate' or 'matrices'")
        return self


class ProtocolSpec(_Strict):
    tune: Literal["manual", "auto"] = "manual"
    kappa_s: float = Field(10.0, ge=0.0)
    kappa_q: float = Field(10.0, ge=0.0)
    zeta_s: float = Field(1.0, ge=0.0)
    zeta_q: float = Field(1.0, ge=0.0)
    q: float = Field(0.5, gt=0.0, lt=1.0)
    kappa_c: float = Field(0.1, ge=0.0)
    epsilon: float = Field(0.05, gt=0.0, lt=1.0)
    t_c: float = Field(1.0, gt=0.0)
    cost: Literal["trace", "logdet", "trace_inverse"] = "trace_inverse"
    safety_factor: float = Field(1.1, ge=1.0)
    sign_boundary_layer: float = Field(0.0, ge=0.0)


class SimulationSpec(_Strict):
    dt: float = Field(1e-4, gt=0.0)
    t_end: float = Field(30.0, gt=0.0)
    record_every: int = Field(100, ge=1)
    tol_cons: float = Field(1e-3, gt=0.0)
    sustain_steps: int = Field(100, ge=1)
    b_lo: float = 0.1
    b_hi: float = 1.1
    x0: Optional[list[float]] = None
    x0_box: Optional[tuple[float, float]] = None
    compare_ideal: bool = False


class OracleSpec(_Strict):
    enabled: bool = True
    tol: float = Field(1e-10, gt=0.0)
    max_iter: int = Field(20_000, ge=1)
    starts: int = Field(10, ge=1)
    grid_resolution: float = Field(0.01, gt=0.0, le=1.0)


class ContainmentSpec(_Strict):
    probes: int = Field(10, ge=0)
    samples: int = Field(10_000, ge=1)


class FusionSpec(_Strict):
    enabled: bool = False
    horizon: Optional[float] = Field(None, gt=0.0)
    dt: float = Field(1e-4, gt=0.0)


class SweepCell(_Strict):
    n_agents: int = Field(ge=2)
    dim: int = Field(ge=1)


class SweepSpec(_Strict):
    graph: Literal["cycle", "path", "complete"] = "cycle"
    cells: list[SweepCell]


class OutputSpec(_Strict):
    plots: bool = True


class ExperimentConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    seed: int = Field(0, ge=0)
    instance: InstanceSpec = InstanceSpec(generate=GenerateSpec())
    protocol: ProtocolSpec = ProtocolSpec()
    simulation: SimulationSpec = SimulationSpec()
    oracle: OracleSpec = OracleSpec()
    containment: ContainmentSpec = ContainmentSpec()
    fusion: FusionSpec = FusionSpec()
    sweep: Optional[SweepSpec] = None
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _version(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        return self


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from None


def load_config(path) -> ExperimentConfig:
    return parse_config(load_json(path))


def load_instance_spec(path) -> InstanceSpec:
    """Accept either a full experiment config or a bare instance object."""
    data = load_json(path)
    if isinstance(data, dict) and "instance" in data:
        return parse_config(data).instance
    try:
        return InstanceSpec.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def build_network(spec: GraphSpec, n_agents: int) -> Network:
    if spec.kind == "default":
        return default_six_node() if n_agents == 6 else make_cycle(n_agents)
    if spec.kind == "cycle":
        return make_cycle(n_agents)
    if spec.kind == "path":
        return make_path(n_agents)
    if spec.kind == "complete":
        return make_complete(n_agents)
    return make_from_edges(n_agents, spec.edges)


def build_instance(spec: InstanceSpec, seed: int) -> ProblemInstance:
    if spec.generate is not None:
        gen = spec.generate
        network = build_network(spec.graph, gen.n_agents)
        if gen.kind == "uniform":
            inst = generate_instance(gen.n_agents, gen.dim, seed, cond_limit=gen.cond_limit, network=network)
        else:
            inst = generate_well_conditioned(gen.n_agents, gen.dim, seed, tuple(gen.eig_range), network=network)
    else:
        P = np.asarray(spec.matrices, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ConfigError("instance.matrices: expected a list of square matrices")
        inst = ProblemInstance(P, build_network(spec.graph, len(P)))
    if spec.estimates is not None:
        inst.p_hat = np.asarray(spec.estimates, dtype=float).reshape(inst.n_agents, inst.dim)
    return inst


def build_params(spec: ProtocolSpec, instance: ProblemInstance, b_lo: float, b_hi: float) -> ProtocolParams:
    """Literal gains for ``tune = "manual"``; theorem-derived gains for ``"auto"``."""
    if spec.tune == "auto":
        tuned = tune(
            instance.network.constants(),
            instance.spectral_bounds(),
            b_lo,
            b_hi,
            t_c=spec.t_c,
            kappa_c=spec.kappa_c,
            q_exp=spec.q,
            epsilon=spec.epsilon,
            mu=spec.cost,
            safety_factor=max(spec.safety_factor, 1.0 + 1e-12),
        )
        return ProtocolParams(**{**tuned.__dict__, "sign_boundary_layer": spec.sign_boundary_layer})
    if b_lo <= 0.0 or b_hi <= 1.0 or b_lo >= b_hi:
        raise InvalidAssumption(f"need 0 < b_lo < b_hi and b_hi > 1, got b_lo={b_lo}, b_hi={b_hi}")
    return ProtocolParams(
        kappa_s=spec.kappa_s,
        kappa_q=spec.kappa_q,
        zeta_s=spec.zeta_s,
        zeta_q=spec.zeta_q,
        q_exp=spec.q,
        kappa_c=spec.kappa_c,
        epsilon=spec.epsilon,
        t_c=spec.t_c,
        mu=CostKind.parse(spec.cost),
        safety_factor=spec.safety_factor,
        sign_boundary_layer=spec.sign_boundary_layer,
    )


def build_sim_config(spec: SimulationSpec, params: ProtocolParams, seed: int) -> SimConfig:
    return SimConfig(
        params=params,
        dt=spec.dt,
        t_end=spec.t_end,
        record_every=spec.record_every,
        seed=seed,
        tol_cons=spec.tol_cons,
        sustain_steps=spec.sustain_steps,
        b_lo=spec.b_lo,
        b_hi=spec.b_hi,
        x0=None if spec.x0 is None else np.asarray(spec.x0, dtype=float),
        x0_box=None if spec.x0_box is None else tuple(spec.x0_box),
    )
