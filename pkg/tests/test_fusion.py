import numpy as np
import pytest

from conftest import random_spd
from ljfuse.edc import ConsensusChannel
from ljfuse.errors import ConsensusNeverReached, InvalidSize, SingularWeightMatrix
from ljfuse.fusion import fuse_central, fuse_distributed, generate_estimates
from ljfuse.graph import default_six_node


def test_single_agent_returns_its_estimate():
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    r = fuse_central([1.0], [P], [[1.0, -1.0]])
    np.testing.assert_allclose(r.p_fused, [1.0, -1.0])
    np.testing.assert_allclose(r.P_fused, P)


def test_identical_covariances_average_the_estimates(rng):
    P = random_spd(rng, 3)
    p = rng.normal(size=(4, 3))
    lam = rng.dirichlet(np.ones(4))
    r = fuse_central(lam, [P] * 4, p)
    np.testing.assert_allclose(r.p_fused, lam @ p, atol=1e-12)
    np.testing.assert_allclose(r.P_fused, P, atol=1e-12)


def test_zero_and_equal_estimates(rng):
    P = [random_spd(rng, 2) for _ in range(3)]
    lam = rng.dirichlet(np.ones(3))
    np.testing.assert_allclose(fuse_central(lam, P, np.zeros((3, 2))).p_fused, 0.0, atol=1e-15)
    c = np.array([0.5, -2.0])
    np.testing.assert_allclose(fuse_central(lam, P, np.tile(c, (3, 1))).p_fused, c, atol=1e-12)


def test_central_errors():
    with pytest.raises(SingularWeightMatrix):
        fuse_central([0.0, 0.0], [np.eye(2)] * 2, np.zeros((2, 2)))
    with pytest.raises(InvalidSize):
        fuse_central([1.0], [np.eye(2)] * 2, np.zeros((2, 2)))
    with pytest.raises(InvalidSize):
        fuse_central([1.0, 0.0], [np.eye(2)] * 2, np.zeros((2, 3)))


def _exact_state(P, x):
    N = len(P)
    P_inv = np.linalg.inv(P)
    Q = np.einsum("i,ijk->jk", x**2 / N, P_inv)
    return {"x": x.tolist(), "s_hat": [float(x @ x / N)] * N, "Q_hat": [Q.tolist()] * N}


def test_distributed_matches_central_with_exact_estimates(rng):
    net = default_six_node()
    P = np.stack([random_spd(rng, 2) for _ in range(6)])
    p = generate_estimates(P, seed=0, truth=[1.0, -2.0])
    x = rng.uniform(0.3, 1.0, size=6)
    agents = fuse_distributed(_exact_state(P, x), P, p, net, ConsensusChannel(10.0, 0.0, 0.5), 1.0, 1e-4)
    central = fuse_central(x**2 / 6, P, p)
    for a in agents:
        np.testing.assert_allclose(a.p_fused, central.p_fused, atol=1e-4)
        assert a.lam.sum() == pytest.approx(1.0)


def test_distributed_reports_disagreement(rng):
    net = default_six_node()
    P = np.stack([random_spd(rng, 2) for _ in range(6)])
    p = rng.normal(size=(6, 2)) * 10
    x = rng.uniform(0.3, 1.0, size=6)
    with pytest.raises(ConsensusNeverReached):
        fuse_distributed(_exact_state(P, x), P, p, net, ConsensusChannel(0.0, 0.0, 0.5), 0.1, 1e-3)


def test_generated_estimates_are_seeded():
    P = np.stack([np.eye(2)] * 3)
    np.testing.assert_array_equal(generate_estimates(P, 3), generate_estimates(P, 3))
    assert generate_estimates(P, 3).shape == (3, 2)
