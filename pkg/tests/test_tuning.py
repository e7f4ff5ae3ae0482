import math

import pytest

from ljfuse.ellipsoid import SpectralBounds
from ljfuse.errors import InvalidAssumption, InvalidBounds
from ljfuse.graph import default_six_node, make_cycle
from ljfuse.simulator import generate_instance
from ljfuse.tuning import ProtocolParams, kappa_lower_bound, tune, validate

SB = SpectralBounds(0.5, 2.0, 2.0)


def test_kappa_bound_cycle10():
    gc = make_cycle(10).constants()
    assert kappa_lower_bound(gc, 0.5, 1.0) == pytest.approx(10 * math.pi / (0.5 * 0.381966), rel=1e-5)
    assert kappa_lower_bound(gc, 0.5, 1.0) == pytest.approx(164.5, abs=0.1)


def test_tuned_params_pass():
    gc = default_six_node().constants()
    for mu in (0, 1, 2):
        p = tune(gc, SB, 0.5, 1.1, mu=mu)
        rep = validate(p, gc, SB, 0.5, 1.1)
        assert rep.passed, rep.failing()
        assert all(c.margin > 0 for c in rep.checks)


def test_tight_safety_factor_still_passes():
    gc = default_six_node().constants()
    p = tune(gc, SB, 0.5, 1.1, safety_factor=1 + 1e-9)
    assert validate(p, gc, SB, 0.5, 1.1).passed


def test_zero_kappa_fails_with_negative_margin():
    gc = default_six_node().constants()
    p = ProtocolParams(kappa_s=0.0, kappa_q=10.0, zeta_s=1.0, zeta_q=1.0)
    rep = validate(p, gc, SB, 0.5, 1.1)
    assert not rep.passed
    k = next(c for c in rep.checks if c.name == "kappa_s")
    assert not k.passed and k.margin < 0
    assert "zeta_s" in rep.failing()


def test_hand_picked_gains_give_mixed_report():
    inst = generate_instance(6, 2, seed=0)
    gc = inst.network.constants()
    p = ProtocolParams(kappa_s=10.0, kappa_q=10.0, zeta_s=1.0, zeta_q=1.0)
    rep = validate(p, gc, inst.spectral_bounds(), 0.1, 1.1)
    assert not rep.passed
    assert set(rep.failing()) <= {"kappa_s", "kappa_q", "zeta_s", "zeta_q"}
    assert rep.to_dict()["passed"] is False


def test_bad_assumption_and_bounds():
    gc = default_six_node().constants()
    with pytest.raises(InvalidAssumption):
        tune(gc, SB, 0.0, 1.1)
    with pytest.raises(InvalidAssumption):
        tune(gc, SB, 0.1, 0.9)
    with pytest.raises(InvalidBounds):
        tune(gc, SB, 0.1, 1.1, safety_factor=1.0)
    with pytest.raises(InvalidBounds):
        ProtocolParams(1.0, 1.0, 1.0, 1.0, q_exp=1.5)


def test_params_dict():
    d = ProtocolParams(10.0, 10.0, 1.0, 1.0).to_dict()
    assert d["cost"] == "trace_inverse" and d["mu"] == 2
