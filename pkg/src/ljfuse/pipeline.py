"""End-to-end experiment driver shared by the CLI and the acceptance tests."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    SCHEMA_VERSION,
    ExperimentConfig,
    build_instance,
    build_params,
    build_sim_config,
)
from .edc import ConsensusChannel
from .ellipsoid import Ellipsoid, contains_intersection_sampled
from .errors import LJFuseError
from .fusion import fuse_central, fuse_distributed, generate_estimates
from .graph import make_complete, make_cycle, make_path
from .oracle import epsilon_gap_bound, grid_search, solve_simplex
from .simulator import (
    ProblemInstance,
    SimulationTrace,
    compare_to_ideal,
    generate_instance,
    run,
    trace_velocity_bound,
)
from .tuning import validate

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "s", "f", "cons_err_s", "cons_err_q", "u_norm")
SWEEP_COLUMNS = ("N", "edges", "lambda_G", "n", "t_cons", "t_cons_q", "t_feasible", "t_eps", "max_cons_err_after_tc")


def trace_header(n_agents: int) -> list[str]:
    cols = list(TRACE_COLUMNS)
    for prefix in ("x", "s_hat", "lambda"):
        cols += [f"{prefix}_{i + 1}" for i in range(n_agents)]
    return cols


def write_trace_csv(trace: SimulationTrace, path) -> None:
    N = trace.x.shape[1]
    lam = trace.lam
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(N))
        for k in range(len(trace.times)):
            row = [trace.times[k], trace.s[k], trace.f[k], trace.cons_err_s[k], trace.cons_err_q[k], trace.u_norm[k]]
            row += list(trace.x[k]) + list(trace.s_hat[k]) + list(lam[k])
            w.writerow([repr(float(v)) for v in row])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def probe_times(trace: SimulationTrace, count: int) -> list[float]:
    """``count`` recorded times spread evenly over ``[t_feasible, t_end]``."""
    if trace.t_feasible is None or count == 0:
        return []
    start = trace.index_at(trace.t_feasible)
    if trace.times[start] < trace.t_feasible:
        start += 1
    idx = np.unique(np.linspace(start, len(trace.times) - 1, count).round().astype(int))
    return [float(trace.times[i]) for i in idx]


def shape_at(trace: SimulationTrace, instance: ProblemInstance, t: float) -> np.ndarray:
    x = trace.x[trace.index_at(t)]
    return np.einsum("i,ijk->jk", x**2 / len(x), instance.P_inv)


def containment_reports(trace, instance, probes: int, samples: int, seed: int) -> list[dict]:
    out = []
    for k, t in enumerate(probe_times(trace, probes)):
        rep = contains_intersection_sampled(Ellipsoid(shape_at(trace, instance, t)), instance.P_list, samples, seed=seed + k)
        out.append({"t": t, **rep.to_dict()})
    return out


def oracle_summary(instance: ProblemInstance, kind, cfg: ExperimentConfig, terminal_f: float | None = None) -> dict:
    oc = cfg.oracle
    sol = solve_simplex(instance.P_list, kind, tol=oc.tol, max_iter=oc.max_iter, seed=cfg.seed, starts=oc.starts)
    out = {"simplex": sol.to_dict()}
    if instance.n_agents <= 4:
        grid = grid_search(instance.P_list, kind, oc.grid_resolution)
        out["grid"] = grid.to_dict()
        out["grid_gap"] = grid.f_star - sol.f_star
    out["epsilon_bound"] = epsilon_gap_bound(instance.P_list, kind, cfg.protocol.epsilon, sol.lambda_star)
    if terminal_f is not None:
        out["relative_gap"] = (terminal_f - sol.f_star) / abs(sol.f_star)
    return out, sol


def _estimates(instance: ProblemInstance, cfg: ExperimentConfig) -> np.ndarray:
    if instance.p_hat is not None:
        return instance.p_hat
    return generate_estimates(instance.P_list, cfg.seed, cfg.instance.estimate_truth)


def run_experiment(cfg: ExperimentConfig, out_dir=None, plots: bool | None = None) -> dict:
    """Simulate, certify against the oracle, and optionally write artifacts to ``out_dir``."""
    instance = build_instance(cfg.instance, cfg.seed)
    sim = cfg.simulation
    params = build_params(cfg.protocol, instance, sim.b_lo, sim.b_hi)
    sim_cfg = build_sim_config(sim, params, cfg.seed)
    report = validate(params, instance.network.constants(), instance.spectral_bounds(), sim.b_lo, sim.b_hi)
    if not report.passed:
        log.info("gains do not meet the sufficient conditions: %s", ", ".join(report.failing()))
    h = trace_velocity_bound(instance, sim_cfg)
    trace = run(instance, sim_cfg, h=h)
    kind = params.mu

    summary = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "seed": cfg.seed,
        "events": trace.events(),
        "max_cons_err_after_tc": trace.max_cons_err_after_tc,
        "s_range_after_feasible": trace.s_range_after_feasible,
        "terminal_f": float(trace.f[-1]),
        "terminal_lambda": trace.lam[-1].tolist(),
        "velocity": {
            "h": h,
            "max_u_over_h": trace.max_u_over_h,
            "violations": trace.velocity_violations,
        },
        "conservation_residual": trace.max_conservation_residual,
        "params": params.to_dict(),
        "validation": report.to_dict(),
        "graph": {"n_nodes": instance.network.n_nodes, **instance.network.constants().__dict__},
    }
    lam_star = None
    if cfg.oracle.enabled:
        summary["oracle"], sol = oracle_summary(instance, kind, cfg, float(trace.f[-1]))
        lam_star = sol.lambda_star
    summary["containment"] = containment_reports(
        trace, instance, cfg.containment.probes, cfg.containment.samples, cfg.seed
    )
    if sim.compare_ideal and trace.t_cons is not None:
        summary["ideal_max_deviation"] = compare_to_ideal(trace, instance, sim_cfg).max_deviation
    if cfg.fusion.enabled:
        try:
            summary["fusion"] = fusion_summary(trace, instance, params, cfg)
        except LJFuseError as err:
            log.warning("fusion pass failed: %s", err)
            summary["fusion"] = {"error": getattr(err, "code", type(err).__name__), "message": str(err)}

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace, out / "trace.csv")
        write_json(summary, out / "summary.json")
        write_json(trace.final_state, out / "final_state.json")
        write_json(instance.to_dict(), out / "instance.json")
        if cfg.output.plots if plots is None else plots:
            render_plots(trace, instance, out, lam_star)
    return summary


def fusion_summary(trace, instance, params, cfg: ExperimentConfig) -> dict:
    p_hat = _estimates(instance, cfg)
    channel = ConsensusChannel(params.kappa_q, 0.0, params.q_exp)
    horizon = cfg.fusion.horizon or params.t_c
    per_agent = fuse_distributed(
        trace.final_state, instance.P_list, p_hat, instance.network, channel, horizon, cfg.fusion.dt,
        tol=cfg.simulation.tol_cons,
    )
    x = np.asarray(trace.final_state["x"])
    central = fuse_central(x**2 / len(x), instance.P_list, p_hat)
    return {
        "central": central.to_dict(),
        "agents": [r.to_dict() for r in per_agent],
        "max_deviation_from_central": float(
            max(np.abs(r.p_fused - central.p_fused).max() for r in per_agent)
        ),
    }


def render_plots(trace, instance, out: Path, lambda_star=None) -> list[str]:
    from . import plotting

    files = ["consensus.svg", "weights.svg"]
    plotting.plot_consensus(trace, out / files[0])
    plotting.plot_weights(trace, out / files[1], lambda_star)
    if instance.dim == 2:
        shapes = {}
        if trace.t_feasible is not None:
            shapes[f"t = {trace.t_feasible:.3g}"] = shape_at(trace, instance, trace.t_feasible)
        shapes[f"t = {trace.times[-1]:.3g}"] = shape_at(trace, instance, trace.times[-1])
        plotting.plot_ellipses(instance.P_list, shapes, out / "ellipses.svg")
        files.append("ellipses.svg")
    return files


def _sweep_cell(args) -> dict:
    cfg, n_agents, dim, graph = args
    builder = {"cycle": make_cycle, "path": make_path, "complete": make_complete}[graph]
    network = builder(n_agents)
    instance = generate_instance(n_agents, dim, cfg.seed, cond_limit=cfg.instance.generate.cond_limit
                                 if cfg.instance.generate else 1e4, network=network)
    sim = cfg.simulation
    params = build_params(cfg.protocol, instance, sim.b_lo, sim.b_hi)
    trace = run(instance, build_sim_config(sim, params, cfg.seed))
    gc = network.constants()
    return {
        "N": n_agents,
        "edges": gc.n_edges,
        "lambda_G": gc.algebraic_connectivity,
        "n": dim,
        "t_cons": trace.t_cons,
        "t_cons_q": trace.t_cons_q,
        "t_feasible": trace.t_feasible,
        "t_eps": trace.t_eps,
        "max_cons_err_after_tc": trace.max_cons_err_after_tc,
    }


def sweep_workers() -> int:
    raw = os.environ.get("LJFUSE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise LJFuseError(f"LJFUSE_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def run_sweep(cfg: ExperimentConfig, out_dir=None, workers: int | None = None) -> list[dict]:
    """Run every cell of ``cfg.sweep`` (one seeded instance per cell) and collect event times."""
    if cfg.sweep is None:
        raise LJFuseError("config has no 'sweep' section")
    jobs = [(cfg, c.n_agents, c.dim, cfg.sweep.graph) for c in cfg.sweep.cells]
    workers = min(workers or sweep_workers(), len(jobs))
    if workers <= 1:
        rows = [_sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})
        write_json({"schema_version": SCHEMA_VERSION, "seed": cfg.seed, "rows": rows}, out / "sweep.json")
    return rows

