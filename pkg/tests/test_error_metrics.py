import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vevp.error_metrics import (ErrorReport, ErrorTracker, NormEvaluator, compute_error, fit_slope,
                                loglog_slope, mesh_size, norm_H, norm_V, norm_W)
from vevp.experiments import EXAMPLE1_SIDES, example1_problem
from vevp.fespace import prolongate
from vevp.mesh import generate_rectangle, refine_uniform
from vevp.timestepper import SchemeParams, SimState, Simulation, Trajectory, run


@pytest.fixture(scope="module")
def square():
    return generate_rectangle(1, 1, 8, 8, EXAMPLE1_SIDES)


def test_norms_of_p1_functions(square):
    x, y = square.nodes.T
    one = np.ones_like(x)
    assert norm_W(one, square) == pytest.approx(1.0, rel=1e-13)
    # x is in P1: int x^2 = 1/3, int |grad x|^2 = 1
    assert norm_W(x, square) == pytest.approx(np.sqrt(4 / 3), rel=1e-13)
    u = np.column_stack([x, one]).ravel()
    assert norm_H(u, square) == pytest.approx(np.sqrt(1 / 3 + 1), rel=1e-13)
    assert norm_V(u, square) == pytest.approx(np.sqrt(4 / 3 + 1), rel=1e-13)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_norm_homogeneity_and_triangle(a, b):
    m = generate_rectangle(1, 1, 3, 3, EXAMPLE1_SIDES)
    ev = NormEvaluator(m)
    rng = np.random.default_rng(7)
    f, g = rng.standard_normal(m.n_nodes), rng.standard_normal(m.n_nodes)
    assert ev.norm_W(a * f) == pytest.approx(abs(a) * ev.norm_W(f), rel=1e-12, abs=1e-12)
    assert ev.norm_W(a * f + b * g) <= ev.norm_W(a * f) + ev.norm_W(b * g) + 1e-12


def test_norm_invariant_under_nested_refinement(square, rng):
    fine = refine_uniform(square)
    phi = rng.standard_normal(square.n_nodes)
    assert norm_W(prolongate(phi, square, fine), fine) == pytest.approx(norm_W(phi, square), rel=1e-12)


def test_self_reference_is_zero():
    traj = run(example1_problem(4), SchemeParams(1.0, 10))
    assert compute_error(traj, traj) == 0.0


def test_refined_reference_of_embedded_trajectory_is_zero():
    coarse = run(example1_problem(4), SchemeParams(1.0, 5))
    fine_mesh = refine_uniform(coarse.mesh)
    states = [SimState(s.n, s.t, prolongate(s.u, coarse.mesh, fine_mesh), prolongate(s.v, coarse.mesh, fine_mesh),
                       prolongate(s.phi, coarse.mesh, fine_mesh), np.zeros((fine_mesh.n_triangles, 3)),
                       np.zeros((fine_mesh.n_triangles, 3))) for s in coarse.states]
    ref = Trajectory(fine_mesh, SchemeParams(1.0, 5), states)
    assert compute_error(coarse, ref) <= 1e-14


def test_tracker_requires_full_coarse_trajectory():
    traj = Simulation(example1_problem(4), SchemeParams(1.0, 10)).run(snapshot_stride=5)
    tracker = ErrorTracker(traj.mesh, 1.0)
    with pytest.raises(ValueError):
        tracker.add(traj)


def test_tracker_rejects_unmatched_time_grid():
    coarse = run(example1_problem(4), SchemeParams(1.0, 4))
    ref = run(example1_problem(8), SchemeParams(1.0, 6))
    with pytest.raises(ValueError):
        compute_error(coarse, ref)


def test_live_and_stored_coarse_runs_agree():
    coarse_traj = run(example1_problem(4), SchemeParams(1.0, 10))
    ref_sim = Simulation(example1_problem(8), SchemeParams(1.0, 20))
    tracker = ErrorTracker(ref_sim.problem.mesh, 1.0)
    i = tracker.add(coarse_traj)
    j = tracker.add_simulation(Simulation(example1_problem(4), SchemeParams(1.0, 10)))
    ref_sim.run(snapshot_stride=20, callback=tracker.observe)
    assert tracker.result(i) == tracker.result(j) > 0


@given(st.floats(0.2, 3.0), st.floats(0.01, 100.0))
def test_loglog_slope_recovers_power(p, c):
    x = np.array([0.4, 0.2, 0.1, 0.05])
    assert loglog_slope(x, c * x ** p) == pytest.approx(p, rel=1e-10)


def sample_report():
    rep = ErrorReport(reference="N_el=64")
    for n in (4, 8, 16):
        for k in (0.1, 0.05, 0.025):
            rep.add(n, k, (mesh_size(n) + k) * 1e-2)
    return rep


def test_report_diagonal_and_slope():
    rep = sample_report()
    assert rep.nels() == [4, 8, 16] and rep.ks() == [0.1, 0.05, 0.025]
    assert [d[:2] for d in rep.diagonal()] == [(4, 0.1), (8, 0.05), (16, 0.025)]
    assert fit_slope(rep) == pytest.approx(1.0, rel=1e-12)
    table = rep.table()
    assert table.shape == (3, 3) and table[0, 0] == rep.value(4, 0.1)
    with pytest.raises(KeyError):
        rep.value(32, 0.1)


def test_report_csv_round_trip(tmp_path):
    rep = sample_report()
    text = rep.to_csv(tmp_path / "errors.csv")
    assert text.splitlines()[0] == "N_el,k,E_hk"
    assert text.splitlines()[-1].startswith("slope,,")
    back = ErrorReport.from_csv(tmp_path / "errors.csv")
    assert back.rows == rep.rows


def test_report_rejects_negative():
    with pytest.raises(ValueError):
        ErrorReport().add(4, 0.1, -1.0)
    with pytest.raises(ValueError):
        fit_slope(ErrorReport(rows=[(4, 0.1, 1.0)]))


def test_mesh_size():
    assert mesh_size(4) == pytest.approx(np.sqrt(2) / 4)
    assert isinstance(mesh_size(8), float)
