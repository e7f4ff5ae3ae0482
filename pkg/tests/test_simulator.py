from dataclasses import replace

import numpy as np
import pytest

from ljfuse.errors import (
    ConsensusNeverReached,
    GenerationFailed,
    InvalidSize,
    NotPositiveDefinite,
    NumericalDivergence,
)
from ljfuse.graph import make_cycle
from ljfuse.pgf import ControllerParams, ideal_flow_derivative
from ljfuse.simulator import (
    ProblemInstance,
    SimConfig,
    compare_to_ideal,
    feasibility_time_bound,
    generate_instance,
    generate_well_conditioned,
    run,
    run_ideal,
    run_reference,
    trace_velocity_bound,
)
from ljfuse.tuning import ProtocolParams, tune

SECTION5 = ProtocolParams(kappa_s=10.0, kappa_q=10.0, zeta_s=1.0, zeta_q=1.0)


def test_generation_is_deterministic_and_spd():
    a = generate_instance(6, 2, seed=3)
    b = generate_instance(6, 2, seed=3)
    np.testing.assert_array_equal(a.P_list, b.P_list)
    for P in a.P_list:
        np.linalg.cholesky(P)
        assert np.linalg.cond(P) <= 1e4
    sb = a.spectral_bounds()
    assert 0 < sb.sigma_lo <= sb.sigma_hi < np.inf
    assert a.network.n_edges == 8
    assert generate_instance(7, 3, seed=0).network.n_edges == 7


def test_generation_failure_and_sizes():
    with pytest.raises(GenerationFailed):
        generate_instance(3, 3, seed=0, cond_limit=1.0001)
    with pytest.raises(InvalidSize):
        generate_instance(1, 2, seed=0)
    with pytest.raises(InvalidSize):
        ProblemInstance(np.stack([np.eye(2)] * 3), make_cycle(4))


def test_well_conditioned_generator():
    inst = generate_well_conditioned(6, 3, seed=1, eig_range=(0.5, 2.0))
    for P in inst.P_list:
        ev = np.linalg.eigvalsh(P)
        assert 0.5 - 1e-12 <= ev.min() and ev.max() <= 2.0 + 1e-12


def test_config_validation():
    with pytest.raises(InvalidSize):
        SimConfig(SECTION5, dt=0.0)
    with pytest.raises(InvalidSize):
        SimConfig(SECTION5, t_end=0.5)
    cfg = SimConfig(SECTION5, seed=4)
    x0 = cfg.initial_x(6)
    assert np.all((x0 >= 0.1) & (x0 <= 1.1))
    np.testing.assert_array_equal(x0, SimConfig(SECTION5, seed=4).initial_x(6))
    with pytest.raises(InvalidSize):
        SimConfig(SECTION5, x0=np.ones(3)).initial_x(6)


def _short(params=SECTION5, **kw):
    base = dict(dt=1e-3, t_end=2.5, record_every=10, seed=2)
    base.update(kw)
    return SimConfig(params, **base)


@pytest.mark.parametrize("mu", [0, 1, 2])
def test_kernel_matches_reference(mu):
    inst = generate_instance(6, 2, seed=2)
    cfg = _short(replace(SECTION5, mu=mu), x0_box=(0.9, 1.0))
    fast = run(inst, cfg)
    slow = run_reference(inst, cfg)
    np.testing.assert_allclose(fast.x, slow.x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(fast.s_hat, slow.s_hat, rtol=0, atol=1e-12)
    np.testing.assert_allclose(fast.cons_err_s, slow.cons_err_s, atol=1e-12)
    assert fast.events() == slow.events()
    for k in ("x", "v", "s_hat"):
        np.testing.assert_allclose(fast.final_state[k], slow.final_state[k], atol=1e-12)


def test_run_is_bitwise_deterministic():
    inst = generate_instance(6, 2, seed=1)
    cfg = _short(t_end=3.0)
    a, b = run(inst, cfg), run(inst, cfg)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.s_hat, b.s_hat)
    assert a.events() == b.events()


def test_trace_shapes_and_output_identity():
    inst = generate_instance(6, 2, seed=0)
    tr = run(inst, _short())
    assert np.all(np.diff(tr.times) > 0)
    assert tr.x.shape == tr.s_hat.shape == (len(tr.times), 6)
    assert len(tr.f) == len(tr.s) == len(tr.times)
    np.testing.assert_allclose(tr.lam.sum(axis=1), tr.s)
    fs = tr.final_state
    np.testing.assert_allclose(fs["s_hat"], np.array(fs["x"]) ** 2 - np.array(fs["v"]), atol=0)
    # pairwise antisymmetric exchange keeps the auxiliary states summing to zero
    assert tr.max_conservation_residual < 1e-9
    np.testing.assert_allclose(tr.s_hat.mean(axis=1), tr.s, atol=1e-9)


def test_frozen_state_gives_static_consensus():
    inst = generate_instance(6, 2, seed=0)
    # inputs are frozen, so the discontinuous tracking term is not needed
    cfg = _short(replace(SECTION5, kappa_c=0.0, zeta_s=0.0, zeta_q=0.0), dt=1e-4, record_every=100, t_end=2.0)
    tr = run(inst, cfg)
    np.testing.assert_array_equal(tr.x[-1], tr.x[0])
    assert tr.t_cons is not None and tr.t_cons < 1.0
    assert np.abs(tr.s_hat[-1] - tr.s[0]).max() < 1e-3


def test_no_coupling_never_reaches_consensus():
    inst = generate_instance(6, 2, seed=0)
    tr = run(inst, _short(replace(SECTION5, kappa_s=0.0)))
    assert tr.t_cons is None
    with pytest.raises(ConsensusNeverReached):
        compare_to_ideal(tr, inst, _short(replace(SECTION5, kappa_s=0.0)))


def test_divergence_is_reported():
    inst = generate_instance(6, 2, seed=0)
    with pytest.raises((NumericalDivergence, NotPositiveDefinite)):
        run(inst, _short(replace(SECTION5, kappa_c=1e9)))


def test_ideal_flow_kernel_matches_numpy_loop():
    inst = generate_well_conditioned(4, 2, seed=0)
    cfg = _short(replace(SECTION5, mu=2), t_end=3.0)
    x0 = np.array([0.9, 0.6, 0.8, 0.7])
    times, xs = run_ideal(inst, cfg, x0)
    ctrl = ControllerParams(0.1, 0.05, 1.0)
    x = x0.copy()
    for k in range(cfg.n_steps):
        t = k * cfg.dt
        if k % cfg.record_every == 0:
            np.testing.assert_allclose(xs[k // cfg.record_every], x, atol=1e-12)
        if t >= ctrl.t_c:
            x = x + cfg.dt * ideal_flow_derivative(x, inst.P_inv, 2, ctrl)
    assert times[0] == 0.0


def test_feasibility_time_bound():
    assert feasibility_time_bound(np.full(4, 0.5), 0.1, 0.1, 0.05) == pytest.approx((0.95 - 0.25) / (2 * 0.1 * 0.01))
    assert feasibility_time_bound(np.full(4, 1.2), 0.1, 0.1, 0.05) == pytest.approx((1.44 - 1) / 0.2)
    assert feasibility_time_bound(np.full(4, 0.99), 0.1, 0.1, 0.05) == 0.0


def test_velocity_bound_on_compliant_run():
    inst = generate_well_conditioned(6, 2, seed=0)
    p = tune(inst.network.constants(), inst.spectral_bounds(), 0.5, 1.1, mu=0)
    cfg = SimConfig(p, dt=1e-5, t_end=2.5, record_every=1000, b_lo=0.5)
    tr = run(inst, cfg, h=trace_velocity_bound(inst, cfg))
    assert tr.velocity_violations == 0
    assert tr.max_u_over_h <= 1 + 1e-6


def test_step_halving_changes_terminal_cost_little():
    inst = generate_well_conditioned(6, 2, seed=2)
    p = replace(SECTION5, mu=0, sign_boundary_layer=0.0)
    f = []
    for dt in (2e-5, 1e-5):
        cfg = SimConfig(p, dt=dt, t_end=1.5, record_every=int(round(0.01 / dt)), x0_box=(0.5, 0.6))
        f.append(run(inst, cfg).f[-1])
    assert abs(f[1] - f[0]) < 1e-4 * abs(f[1])
