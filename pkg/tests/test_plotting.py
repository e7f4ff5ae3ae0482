import numpy as np

from ljfuse import plotting
from ljfuse.simulator import SimConfig, generate_instance, run
from ljfuse.tuning import ProtocolParams


def _trace():
    inst = generate_instance(6, 2, seed=0)
    p = ProtocolParams(kappa_s=10.0, kappa_q=10.0, zeta_s=1.0, zeta_q=1.0)
    return inst, run(inst, SimConfig(p, dt=1e-3, t_end=2.0, record_every=10))


def test_svg_output_is_deterministic(tmp_path):
    inst, tr = _trace()
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        plotting.plot_consensus(tr, d / "c.svg")
        plotting.plot_weights(tr, d / "w.svg", np.full(6, 1 / 6))
        plotting.plot_ellipses(inst.P_list, {"final": np.eye(2)}, d / "e.svg")
    for f in ("c.svg", "w.svg", "e.svg"):
        a = (tmp_path / "a" / f).read_bytes()
        assert a == (tmp_path / "b" / f).read_bytes()
        assert a.startswith(b"<?xml") and b"<dc:date>" not in a
