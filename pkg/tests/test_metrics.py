import numpy as np
import pytest

from agcbench.closed_loop import Trajectory, simulate
from agcbench.metrics import eta_index, evaluate, phi_index, tie_flows, tie_line_flow
from agcbench.network import make_topology
from agcbench.scenarios import AREA_TABLE, builtin_scenario


def _traj(x, u=None, x_ref=None, u_ref=None, ids=(1,), Ts=1.0):
    T = x.shape[0] - 1
    M = len(ids)
    z = np.zeros((T, M))
    return Trajectory(
        x=x, u=z if u is None else u, load=z.copy(),
        x_ref=np.zeros((T, 4 * M)) if x_ref is None else x_ref,
        u_ref=z.copy() if u_ref is None else u_ref, area_ids=ids, Ts=Ts,
    )


def test_tie_flow_examples():
    assert tie_line_flow(4, 0.05, -0.025) == pytest.approx(0.3)
    assert tie_line_flow(4, 0.07, 0.07) == 0.0
    assert tie_line_flow(2, 0.1, 0.03) == -tie_line_flow(2, 0.03, 0.1)


def test_eta_zero_at_setpoint():
    T = 5
    x_ref = np.tile([0, 0, 0.2, 0.2], (T, 1))
    x = np.vstack([x_ref, x_ref[-1]])
    traj = _traj(x, u=np.full((T, 1), 0.2), x_ref=x_ref, u_ref=np.full((T, 1), 0.2))
    assert eta_index(traj) == 0.0


def test_eta_single_angle_error():
    x = np.zeros((3, 4))
    x[0, 0] = 0.1
    assert eta_index(_traj(x)) == pytest.approx(2.5)


def test_eta_ignores_final_sample():
    x = np.zeros((3, 4))
    x[2, 0] = 1.0
    assert eta_index(_traj(x)) == 0.0


def test_eta_length_mismatch():
    traj = _traj(np.zeros((4, 4)))
    traj.x_ref = np.zeros((2, 4))
    with pytest.raises(ValueError):
        eta_index(traj)


def _two_area_topology(P=4.0):
    return make_topology([AREA_TABLE[1], AREA_TABLE[2]], [(1, 2, P)])


def _constant_gap(T=10, gap=0.05):
    x = np.zeros((T + 1, 8))
    x[:, 0] = gap
    return _traj(x, ids=(1, 2))


def test_phi_examples():
    topo = _two_area_topology()
    traj = _constant_gap()
    assert phi_index(traj, topo, directed=True) == pytest.approx(0.4)
    assert phi_index(traj, topo) == pytest.approx(0.2)
    assert phi_index(_traj(np.zeros((11, 8)), ids=(1, 2)), topo) == 0.0


def test_phi_scales_with_ts():
    topo = _two_area_topology()
    traj = _constant_gap()
    traj.Ts = 0.5
    assert phi_index(traj, topo) == pytest.approx(0.1)


def test_flows_table():
    labels, flows = tie_flows(_constant_gap(T=3), _two_area_topology())
    assert labels == [(1, 2)]
    np.testing.assert_allclose(flows[:, 0], 0.2)
    assert flows.shape == (4, 1)


@pytest.fixture(scope="module")
def s2_run():
    spec = builtin_scenario(2)
    return spec, simulate(spec, "D", "zero")


def test_directed_is_exactly_double(s2_run):
    spec, traj = s2_run
    assert phi_index(traj, spec.topology, directed=True) == 2.0 * phi_index(traj, spec.topology)


def test_translation_invariance(s2_run):
    spec, traj = s2_run
    shifted = _traj(traj.x.copy(), traj.u, traj.x_ref, traj.u_ref, ids=traj.area_ids)
    shifted.x[:, 0::4] += 0.0625
    np.testing.assert_allclose(tie_flows(shifted, spec.topology)[1], tie_flows(traj, spec.topology)[1], atol=1e-15)
    assert phi_index(shifted, spec.topology) == pytest.approx(phi_index(traj, spec.topology), rel=1e-12)


def test_eta_permutation_invariance(s2_run):
    _, traj = s2_run
    perm = [3, 0, 4, 2, 1]
    cols = np.concatenate([np.arange(4 * k, 4 * k + 4) for k in perm])
    q = np.array([500, 0.01, 0.01, 10.0])
    Q = np.diag(np.concatenate([q * (k + 1) for k in range(5)]))
    R = np.diag([10.0 * (k + 1) for k in range(5)])
    Qp = Q[np.ix_(cols, cols)]
    Rp = R[np.ix_(perm, perm)]
    permuted = _traj(traj.x[:, cols], traj.u[:, perm], traj.x_ref[:, cols], traj.u_ref[:, perm],
                     ids=tuple(traj.area_ids[k] for k in perm))
    assert eta_index(permuted, Qp, Rp) == pytest.approx(eta_index(traj, Q, R), rel=1e-12)


def test_truncation_to_zero_tail():
    topo = _two_area_topology()
    x = np.zeros((21, 8))
    x[:10, 0] = 0.05
    long = _traj(x, ids=(1, 2))
    short = _traj(x[:11], ids=(1, 2))
    assert phi_index(long, topo) * 20 == pytest.approx(phi_index(short, topo) * 10)
    assert eta_index(long) * 20 == pytest.approx(eta_index(short) * 10)


def test_report_breakdowns(s2_run):
    spec, traj = s2_run
    rep = evaluate(traj, spec.topology)
    assert rep.eta >= 0 and rep.phi >= 0
    assert abs(rep.eta_per_step.sum() / traj.T_sim - rep.eta) <= 1e-12
    assert abs(rep.phi_per_step.sum() / traj.T_sim - rep.phi) <= 1e-12
    assert rep.tie_flows.shape == (101, 5)
