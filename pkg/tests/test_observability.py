import numpy as np
import pytest
from hypothesis import given, strategies as st

from zdaswitch import reference as ref
from zdaswitch.graph import laplacian, path_graph, random_connected_graph
from zdaswitch.linalg import Subspace, matrix_exponential, stacked_kernel, subspace_distance
from zdaswitch.observability import (classify_detectability, closed_form_kernel, obs_kernel,
                                     obs_matrix, obs_matrix_paused, limit_unobservable_subspace,
                                     unobservable_subspace_sequence)
from zdaswitch.sysmodel import (AttackerConfig, OutputConfig, SwitchingSchedule, assemble_A,
                                assemble_output)

SINGLE_A = np.array([[0.0, 1.0], [0.0, -1.0]])


def random_system(seed, n=None, m=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 5))
    A = assemble_A(laplacian(random_connected_graph(n, rng, 0.3)))
    m = m or int(rng.integers(1, n + 1))
    C = np.zeros((m, 2 * n))
    for i in range(m):
        C[i, i] = rng.choice([0.0, 1.0, 0.7])
        C[i, n + i] = rng.choice([0.0, 1.0]) if C[i, i] else 1.0
    return rng, A, C


def test_obs_matrix_single_agent():
    O = obs_matrix(SINGLE_A, np.array([[1.0, 0.0]]))
    assert np.array_equal(O, [[1, 0], [0, 1]])
    assert np.linalg.matrix_rank(O) == 2


def test_obs_matrix_zero_output():
    C = np.zeros((1, 2))
    assert np.array_equal(obs_matrix(SINGLE_A, C), np.zeros((2, 2)))
    assert obs_kernel(SINGLE_A, C).dim == 2


def test_obs_matrix_velocity_p16_rank():
    n = 16
    A = assemble_A(laplacian(path_graph(n)))
    C, _ = assemble_output(OutputConfig((1,), (0.0,), (1.0,)), None, n)
    assert obs_kernel(A, C).dim == 1
    assert obs_kernel(A, C).contains(np.concatenate([np.ones(n), np.zeros(n)]))


def test_paused_kernel_distinction():
    # A u = 0 with C u != 0: u is hidden once the constant output is held
    A = SINGLE_A
    C = np.array([[1.0, 0.0]])
    u = np.array([1.0, 0.0])
    assert obs_kernel(A, C, paused=True).contains(u)
    assert not obs_kernel(A, C).contains(u)


@given(st.integers(0, 10_000))
def test_consensus_direction_in_paused_kernel(seed):
    _, A, C = random_system(seed)
    n = A.shape[0] // 2
    one = np.concatenate([np.ones(n), np.zeros(n)])
    assert obs_kernel(A, C, paused=True).contains(one)
    assert obs_kernel(A, C).contains(one) == bool(np.allclose(C @ one, 0))


@given(st.integers(0, 10_000))
def test_kernels_match_stacked_oracle(seed):
    _, A, C = random_system(seed)
    assert subspace_distance(obs_kernel(A, C), stacked_kernel([obs_matrix(A, C)])) < 1e-8
    assert subspace_distance(obs_kernel(A, C, paused=True),
                             stacked_kernel([obs_matrix_paused(A, C)])) < 1e-8


def test_recursion_base_case():
    _, A, C = random_system(5)
    N = unobservable_subspace_sequence([(A, 1.0)], C)
    assert subspace_distance(N, obs_kernel(A, C)) < 1e-12


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_recursion_monotone(seed, m):
    rng, A1, C = random_system(seed)
    n = A1.shape[0] // 2
    A2 = assemble_A(laplacian(random_connected_graph(n, rng, 0.5)))
    plan = [(A1, 0.7), (A2, 1.3)] * m
    dims = [unobservable_subspace_sequence(plan[:k], C).dim for k in range(1, len(plan) + 1)]
    assert all(a >= b for a, b in zip(dims, dims[1:]))


def test_recursion_matches_stacked_three_topologies():
    rng, A1, C = random_system(11, n=4, m=1)
    A2 = assemble_A(laplacian(random_connected_graph(4, rng, 0.5)))
    A3 = assemble_A(laplacian(random_connected_graph(4, rng, 0.5)))
    taus = (0.5, 1.0, 2.0)
    E1 = matrix_exponential(A1, taus[0])
    E2 = matrix_exponential(A2, taus[1])
    oracle = stacked_kernel([obs_matrix(A1, C), obs_matrix(A2, C) @ E1,
                             obs_matrix(A3, C) @ E2 @ E1])
    N = unobservable_subspace_sequence(list(zip((A1, A2, A3), taus)), C)
    assert subspace_distance(N, oracle) < 1e-8


def _pair_system(c1, c2):
    topo = ref.defended_topologies()
    sched = SwitchingSchedule((("3", 2.0), ("4", 2.0)))
    return topo, sched, OutputConfig.uniform(3, c1, c2)


@pytest.mark.parametrize("c1,c2,case", [
    (0.0, 1.0, "velocity-only"), (1.0, 0.0, "position-only"), (1.0, 1.0, "partial-equal"),
])
def test_defended_pair_closed_forms(c1, c2, case):
    topo, sched, cfg = _pair_system(c1, c2)
    A = {r: assemble_A(laplacian(t)) for r, t in topo.items()}
    C, _ = assemble_output(cfg, None, 16)
    N, _ = limit_unobservable_subspace(A, sched, C)
    assert subspace_distance(N, closed_form_kernel(case, 16)) < 1e-8
    rep = classify_detectability(cfg, AttackerConfig(ref.TWINS), topo, sched)
    assert rep.case == case and rep.closed_form_match and rep.detectable


def test_partial_equal_start_at_t0_with_feedthrough_not_guaranteed():
    topo, sched, cfg = _pair_system(1.0, 1.0)
    att = AttackerConfig((1, 4), (1.0, 0.0, 0.0), 0.3, 0.0, initial_known=True)
    rep = classify_detectability(cfg, att, topo, sched)
    assert rep.case == "partial-equal"
    assert not rep.detectable
    assert rep.conditions_used["D_zero"] is False
    late = AttackerConfig((1, 4), (1.0, 0.0, 0.0), 0.3, 0.0, initial_known=False)
    assert classify_detectability(cfg, late, topo, sched).detectable


def test_failing_topology_reported():
    topo = ref.attackable_topologies()
    sched = SwitchingSchedule((("1", 2.0), ("2", 2.0)))
    rep = classify_detectability(OutputConfig.uniform(3, 0.0, 1.0), AttackerConfig(ref.TWINS),
                                 topo, sched)
    assert not rep.detectable and set(rep.failing_topologies) == {"1", "2"}
    twin = ref.twin_attack_entry().z0
    assert rep.N_infinity.contains(twin)


def test_partial_general_has_no_closed_form():
    topo, sched, _ = _pair_system(0, 1)
    cfg = OutputConfig((1, 2, 3), (1.0, 1.0, 1.0), (2.0, 1.0, 1.0))
    rep = classify_detectability(cfg, AttackerConfig(ref.TWINS), topo, sched)
    assert rep.case == "partial-general" and rep.closed_form_match is None
    assert not rep.detectable


def test_report_record():
    topo, sched, cfg = _pair_system(0.0, 1.0)
    rec = classify_detectability(cfg, AttackerConfig(ref.TWINS), topo, sched).to_record()
    assert rec["N_infinity"]["dim"] == 1
    basis = np.array(rec["N_infinity"]["basis"][0])
    assert np.allclose(basis, np.concatenate([np.ones(16), np.zeros(16)]) / 4)


def test_finite_schedule_uses_whole_sequence():
    topo, _, cfg = _pair_system(0.0, 1.0)
    A = {r: assemble_A(laplacian(t)) for r, t in topo.items()}
    C, _ = assemble_output(cfg, None, 16)
    sched = SwitchingSchedule((("3", 1.0), ("4", 1.0)), periodic=False)
    N, periods = limit_unobservable_subspace(A, sched, C)
    assert periods == 1
    assert subspace_distance(N, Subspace.from_vectors(
        np.concatenate([np.ones(16), np.zeros(16)]))) < 1e-8
