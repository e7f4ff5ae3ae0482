import numpy as np
import pytest

from conftest import random_spd
from ljfuse.cost import (
    CostKind,
    cost_value,
    grad_component,
    grad_components,
    gradient,
    inverse_stack,
    objective,
    q_from_inverses,
    q_of_x,
)
from ljfuse.errors import AllZeroWeights, ConfigError, InvalidSize, NotPositiveDefinite


def test_parse():
    assert CostKind.parse("logdet") is CostKind.LOGDET
    assert CostKind.parse(2) is CostKind.TRACE_INVERSE
    assert CostKind.TRACE.config_name == "trace"
    with pytest.raises(ConfigError):
        CostKind.parse("volume")
    with pytest.raises(ConfigError):
        CostKind.parse(7)


def test_q_of_x_examples(rng):
    N = 3
    P = [np.eye(2), random_spd(rng, 2), random_spd(rng, 2)]
    np.testing.assert_allclose(q_of_x([np.sqrt(N), 0.0, 0.0], P), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(q_of_x(np.ones(4), [np.eye(2)] * 4), np.eye(2))
    x = rng.uniform(0.1, 1.1, size=5)
    Ps = [random_spd(rng, 3) for _ in range(5)]
    direct = np.zeros((3, 3))
    for xi, Pi in zip(x, Ps):
        direct += xi * xi * np.linalg.inv(Pi) / 5
    np.testing.assert_allclose(q_of_x(x, Ps), direct, atol=1e-12)


def test_q_errors():
    with pytest.raises(AllZeroWeights):
        q_of_x(np.zeros(2), [np.eye(2)] * 2)
    with pytest.raises(InvalidSize):
        q_from_inverses(np.ones(3), inverse_stack([np.eye(2)] * 2))


def test_cost_examples():
    assert cost_value(0, np.eye(2)) == -2.0
    assert cost_value(1, np.diag([np.e, np.e])) == pytest.approx(-2.0)
    assert cost_value(2, np.diag([2.0, 4.0])) == pytest.approx(0.75)
    with pytest.raises(NotPositiveDefinite):
        cost_value(2, -np.eye(2))


def test_grad_component_examples(rng):
    P = random_spd(rng, 2)
    for kind in CostKind:
        assert grad_component(kind, 0.0, np.eye(2), P) == 0.0
    assert grad_component(0, 1.0, np.eye(2), np.eye(2)) == -4.0


@pytest.mark.parametrize("kind", list(CostKind))
def test_vectorised_matches_scalar(kind, rng):
    Ps = [random_spd(rng, 3) for _ in range(4)]
    x = rng.uniform(0.2, 1.0, size=4)
    Q = q_of_x(x, Ps)
    scalar = [grad_component(kind, xi, Q, Pi) for xi, Pi in zip(x, Ps)]
    vec = grad_components(kind, x, np.linalg.inv(Q), inverse_stack(Ps))
    np.testing.assert_allclose(vec, scalar, rtol=1e-12)


def test_trace_scaling_identity(rng):
    P_inv = inverse_stack([random_spd(rng, 2) for _ in range(3)])
    x = rng.uniform(0.2, 1.0, size=3)
    assert objective(0, 2 * x, P_inv) == pytest.approx(4 * objective(0, x, P_inv))


def test_lower_bound_on_shell(rng):
    Ps = [random_spd(rng, 2, 0.2, 3.0) for _ in range(5)]
    sigma_lo = min(np.linalg.eigvalsh(np.linalg.inv(P)).min() for P in Ps)
    eps = 0.05
    for _ in range(50):
        x = rng.uniform(0.1, 1.0, size=5)
        x *= np.sqrt(rng.uniform(1 - eps, 1.0) * 5 / (x @ x))
        Q = q_of_x(x, Ps)
        assert np.linalg.eigvalsh(Q).min() >= sigma_lo * (1 - eps) * (1 - 1e-12)


def test_gradient_matches_finite_differences_small(rng):
    # quick in-suite version; the full 100-instance sweep lives in the acceptance suite
    for kind in CostKind:
        Ps = [random_spd(rng, 2) for _ in range(4)]
        P_inv = inverse_stack(Ps)
        x = rng.uniform(0.2, 1.0, size=4)
        g = gradient(kind, x, P_inv)
        h = 1e-6
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            fd = (objective(kind, x + e, P_inv) - objective(kind, x - e, P_inv)) / (2 * h)
            assert abs(g[i] - fd) <= 1e-5 * max(abs(fd), 1e-8)
