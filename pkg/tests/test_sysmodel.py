import numpy as np
import pytest
from hypothesis import given, strategies as st

from zdaswitch.graph import laplacian, path_graph, random_connected_graph
from zdaswitch.linalg import InvalidInputError
from zdaswitch.sysmodel import (AttackerConfig, OutputConfig, ScheduleRangeError,
                                SwitchedSystem, SwitchingSchedule, active_topology, assemble_A,
                                assemble_output, injection_matrix)


def test_assemble_A_single_agent():
    assert np.array_equal(assemble_A(np.zeros((1, 1))), [[0, 1], [0, -1]])


def test_assemble_A_p3_blocks():
    L = laplacian(path_graph(3))
    A = assemble_A(L)
    assert np.array_equal(A[:3, :3], np.zeros((3, 3)))
    assert np.array_equal(A[:3, 3:], np.eye(3))
    assert np.array_equal(A[3:, :3], -L)
    assert np.array_equal(A[3:, 3:], -np.eye(3))


def test_assemble_A_p3_spectrum():
    eig = np.linalg.eigvals(assemble_A(laplacian(path_graph(3))))
    roots = np.concatenate([np.roots([1, 1, lam]) for lam in (0, 1, 3)])
    # all roots are simple, so nearest-neighbour matching is a bijection
    assert max(np.min(np.abs(eig - r)) for r in roots) < 1e-9
    assert max(np.min(np.abs(roots - e)) for e in eig) < 1e-9


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_consensus_direction_in_kernel(n, seed):
    rng = np.random.default_rng(seed)
    one = np.concatenate([np.ones(n), np.zeros(n)])
    A = assemble_A(laplacian(random_connected_graph(n, rng, 0.4)))
    assert np.array_equal(A @ one, np.zeros(2 * n))
    Aw = assemble_A(laplacian(random_connected_graph(n, rng, 0.4, (0.5, 2.0))))
    assert np.max(np.abs(Aw @ one)) <= 1e-14


def test_output_smallest_case():
    C, D = assemble_output(OutputConfig((1,), (1.0,), (0.0,)), AttackerConfig(d=(0.0,)), 2)
    assert np.array_equal(C, [[1, 0, 0, 0]])
    assert np.array_equal(D, np.zeros((1, 4)))


def test_output_velocity_only_16():
    C, _ = assemble_output(OutputConfig.uniform(3, 0.0, 1.0), None, 16)
    expected = np.zeros((3, 32))
    expected[:, 16:19] = np.eye(3)
    assert np.array_equal(C, expected)


def test_output_feedthrough_layout():
    _, D = assemble_output(OutputConfig((1,), (1.0,), (0.0,)), AttackerConfig(d=(2.0,)), 2)
    assert np.array_equal(D, [[0, 0, 2, 0]])


def test_output_rejects_large_monitored_index():
    with pytest.raises(InvalidInputError):
        assemble_output(OutputConfig.uniform(3, 1.0, 0.0), None, 2)


@pytest.mark.parametrize("kwargs", [
    dict(monitored=(), c1=(), c2=()),
    dict(monitored=(2,), c1=(1.0,), c2=(0.0,)),
    dict(monitored=(1, 2), c1=(1.0,), c2=(0.0, 0.0)),
    dict(monitored=(1,), c1=(0.0,), c2=(0.0,)),
    dict(monitored=(1,), c1=(np.inf,), c2=(0.0,)),
])
def test_output_config_validation(kwargs):
    with pytest.raises(InvalidInputError):
        OutputConfig(**kwargs)


@pytest.mark.parametrize("c1,c2,case", [
    (0.0, 1.0, "velocity-only"), (1.0, 0.0, "position-only"),
    (0.7, 0.7, "partial-equal"), (1.0, 2.0, "partial-general"),
])
def test_output_case(c1, c2, case):
    assert OutputConfig.uniform(2, c1, c2).case == case


@given(st.integers(1, 6), st.integers(0, 6), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_c_and_d_structure(m, extra, coeffs):
    n = m + extra
    c1 = [coeffs[i] or 1.0 for i in range(m)]
    cfg = OutputConfig(tuple(range(1, m + 1)), tuple(c1), tuple(coeffs[:m]))
    C, D = assemble_output(cfg, AttackerConfig(d=tuple(coeffs[:m])), n)
    for i in range(m):
        assert set(np.flatnonzero(C[i])) <= {i, n + i}
        assert set(np.flatnonzero(D[i])) <= {n + i}
    assert np.all(D[:, :n] == 0)


def test_attacker_validation():
    with pytest.raises(InvalidInputError):
        AttackerConfig((4,), inference_delay=-0.1)
    assert AttackerConfig((5, 4, 5)).misbehaving == (4, 5)


def test_injection_matrix():
    B = injection_matrix(3, (2,))
    assert B.shape == (6, 1) and B[4, 0] == 1 and B.sum() == 1
    with pytest.raises(InvalidInputError):
        injection_matrix(3, (4,))


SCHED = SwitchingSchedule((("1", 2.0), ("2", 2.0)), 0.0, True)


@pytest.mark.parametrize("t,rid,interval", [
    (0.0, "1", (0.0, 2.0)), (2.0, "2", (2.0, 4.0)), (5.5, "1", (4.0, 6.0)),
    (1.999999, "1", (0.0, 2.0)), (4000.0, "1", (4000.0, 4002.0)),
])
def test_active_topology(t, rid, interval):
    r, (lo, hi) = active_topology(SCHED, t)
    assert r == rid
    assert lo == pytest.approx(interval[0]) and hi == pytest.approx(interval[1])


def test_active_topology_out_of_range():
    finite = SwitchingSchedule((("a", 1.0), ("b", 0.5)), 1.0, False)
    with pytest.raises(ScheduleRangeError):
        active_topology(finite, 0.5)
    with pytest.raises(ScheduleRangeError):
        active_topology(finite, 2.5)
    assert active_topology(finite, 2.2)[0] == "b"


@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=4), st.floats(0, 5),
       st.floats(0, 30))
def test_switch_times_increase_and_match(dwells, t0, horizon):
    sched = SwitchingSchedule(tuple((str(i), d) for i, d in enumerate(dwells)), t0, True)
    times = sched.switch_times(horizon)
    assert all(a < b for a, b in zip(times, times[1:]))
    for a, b in zip([t0] + times, times):
        mid = (a + b) / 2
        assert active_topology(sched, mid)[1][0] == pytest.approx(a)


def test_schedule_validation():
    with pytest.raises(InvalidInputError):
        SwitchingSchedule(())
    with pytest.raises(InvalidInputError):
        SwitchingSchedule((("1", 0.0),))


def test_switched_system_build():
    topo = {"p": path_graph(4, id="p")}
    sched = SwitchingSchedule((("p", 1.0),))
    sys = SwitchedSystem.build(topo, sched, OutputConfig.uniform(1, 1.0, 0.0))
    assert sys.state_dim == 8
    assert np.array_equal(sys.A_at(0.5), assemble_A(laplacian(topo["p"])))
    with pytest.raises(InvalidInputError):
        SwitchedSystem.build(topo, SwitchingSchedule((("q", 1.0),)), OutputConfig.uniform(1, 1, 0))
