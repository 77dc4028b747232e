import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vevp import constitutive as cl
from vevp.cli import main
from vevp.experiments import (AffineLoad, ConfigError, SimulationConfig, example_config, export_vtk,
                              read_vtk_counts, run_config, run_example1_convergence, run_example2,
                              run_example3, step_amplification, table_grid)
from vevp.timestepper import SchemeParams, SimState, Simulation


def test_affine_load_example1():
    f = example_config(1).loads["fF"]
    out = f(np.array([0.25, 0.25]), np.array([1.0, 0.5]), 0.5)
    assert np.allclose(out, [[0.0, -22.5], [0.0, 0.0]])


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 1))
def test_affine_load_formula(x, y, t):
    f = AffineLoad(((1.0, 2.0, -3.0),), time=(0.5, 2.0))
    assert f(x, y, t) == pytest.approx((1 + 2 * x - 3 * y) * (0.5 + 2 * t))


def test_affine_load_validation():
    with pytest.raises(ConfigError):
        AffineLoad(((1, 2),))
    with pytest.raises(ConfigError):
        AffineLoad(((1, 2, 3),), on=("z", 0.0))
    with pytest.raises(ConfigError):
        SimulationConfig("x", example_config(1).geometry, loads={"qF": AffineLoad(((1, 0, 0), (0, 0, 0)))})


@pytest.mark.parametrize("number", [1, 2, 3])
def test_ini_round_trip(number):
    cfg = example_config(number)
    assert SimulationConfig.from_ini(cfg.to_ini()) == cfg


def test_ini_minimal_and_errors():
    cfg = SimulationConfig.from_ini("[geometry]\nkind = rectangle\nnx = 2\nny = 2\nright = D A\n[scheme]\nk = 0.25\n")
    assert cfg.scheme.N == 4 and cfg.geometry.sides == {"right": ("D", "A")}
    with pytest.raises(ConfigError):
        SimulationConfig.from_ini("[scheme]\nN = 3\n")
    with pytest.raises(ConfigError):
        SimulationConfig.from_ini("[geometry]\nkind = circle\n")
    with pytest.raises(ConfigError):
        SimulationConfig.from_ini("[geometry]\nright = D\n")
    with pytest.raises(ValueError):
        SimulationConfig.from_ini("[geometry]\nright = D A\n[material]\nE = -1\n")


def test_overrides():
    cfg = example_config(2).override(nel=8, k=0.05, c_p=0.0)
    assert (cfg.geometry.nx, cfg.geometry.ny) == (8, 2)
    assert cfg.scheme.N == 20 and cfg.material.c_p == 0.0
    assert example_config(3).override(nel=5).geometry.cell == 10.0


def test_table_grid():
    assert table_grid(32) == ([4, 8, 16, 32], [0.1, 0.05, 0.025, 0.0125])


def test_vtk_zero_state(tmp_path):
    mesh = example_config(1).override(nel=4).mesh()
    z2, z1, z3 = np.zeros(2 * mesh.n_nodes), np.zeros(mesh.n_nodes), np.zeros((mesh.n_triangles, 3))
    path = tmp_path / "s.vtk"
    export_vtk(SimState(0, 0.0, z2, z2, z1, z3, z3), mesh, path)
    assert read_vtk_counts(path) == (mesh.n_nodes, mesh.n_triangles)
    text = path.read_text()
    assert "warped" not in text
    data = text.split("POINT_DATA")[1]
    nums = [float(w) for line in data.splitlines()[1:] for w in line.split()
            if line and line[0] not in "SVLC"]
    assert not any(nums)


def test_vtk_von_mises_and_warp(tmp_path, rng):
    mesh = example_config(1).override(nel=2).mesh()
    sigma = rng.standard_normal((mesh.n_triangles, 3))
    u = rng.standard_normal(2 * mesh.n_nodes)
    s = SimState(3, 0.3, u, u, np.zeros(mesh.n_nodes), sigma, sigma)
    path = tmp_path / "s.vtk"
    export_vtk(s, mesh, path, deform_scale=10.0)
    lines = path.read_text().splitlines()
    i = lines.index("SCALARS von_mises double 1")
    vm = np.array([float(v) for v in lines[i + 2: i + 2 + mesh.n_triangles]])
    assert np.array_equal(vm, cl.von_mises(sigma))
    j = lines.index("VECTORS warped double")
    warped = np.array([[float(v) for v in lines[j + 1 + a].split()] for a in range(mesh.n_nodes)])
    assert np.allclose(warped[:, :2], mesh.nodes + 10.0 * u.reshape(-1, 2), rtol=1e-15)


def test_read_vtk_rejects_other_files(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        read_vtk_counts(p)


def test_example2_without_charge_is_zero():
    cfg = example_config(2).override(nel=8, N=5).with_(loads={})
    traj, _ = run_example2(cfg)
    assert not any(s.u.any() or s.phi.any() for s in traj.states)


def test_example3_without_traction_is_zero():
    cfg = example_config(3).override(N=5).with_(loads={})
    traj, _ = run_example3(cfg)
    assert not any(s.u.any() or s.sigma.any() for s in traj.states)


def test_example2_constraints():
    traj, cfg = run_example2(example_config(2).override(nel=16, N=10))
    mesh = traj.mesh
    clamped = mesh.boundary_nodes(mech="D")
    grounded = mesh.boundary_nodes(elec="A")
    f = traj.final
    assert not f.u.reshape(-1, 2)[clamped].any()
    assert not f.phi[grounded].any()
    assert np.abs(f.u).max() > 0


def test_example3_clamped_bottom():
    traj, _ = run_example3(example_config(3).override(N=10))
    clamped = traj.mesh.boundary_nodes(mech="D")
    assert np.allclose(traj.mesh.nodes[clamped, 1], 0.0)
    assert not traj.final.u.reshape(-1, 2)[clamped].any()


def test_run_config_outputs(tmp_path):
    cfg = example_config(3).override(N=4).with_(snapshot_stride=2)
    run_config(cfg, tmp_path, timestamp=False)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["displacement.csv", "manifest.txt", "potential.csv", "state_0.vtk", "state_2.vtk",
                     "state_4.vtk", "stress.csv"]
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "[config]" in manifest and "written" not in manifest


def test_self_reference_convergence_table_is_zero():
    rep = run_example1_convergence(max_nel=4, reference_nel=4, k_ref=0.1, ks=[0.1])
    assert rep.rows == [(4, 0.1, 0.0)]


def test_convergence_input_checks():
    with pytest.raises(ValueError):
        run_example1_convergence(max_nel=8, reference_nel=24)
    with pytest.raises(ValueError):
        run_example1_convergence(max_nel=8, reference_nel=2048)
    with pytest.raises(ValueError, match="multiple"):
        run_example1_convergence(max_nel=8, reference_nel=16, k_ref=0.1)


def test_lagged_contact_stability_limit():
    # the step map of experiment 1 with active contact leaves the unit disk for large k
    cfg = example_config(1)
    unstable = Simulation(cfg.override(nel=4).problem(), SchemeParams.from_step(1.0, 0.1))
    stable = Simulation(cfg.override(nel=4).problem(), SchemeParams.from_step(1.0, 0.1 / 64))
    assert step_amplification(unstable) > 5.0
    assert step_amplification(stable) < 1.0
    assert step_amplification(unstable, contact_active=False) < 1.0


def test_cli_run_reproducible(tmp_path, capsys):
    args = ["run", "--example", "2", "--Nel", "8", "--N", "4", "--no-timestamp"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
    assert "example2" in capsys.readouterr().out


def test_cli_config_and_mesh(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text(example_config(1).override(nel=4, N=4).to_ini())
    assert main(["run", "--config", str(ini), "--out-dir", str(tmp_path / "r")]) == 0
    assert "written" in (tmp_path / "r" / "manifest.txt").read_text()
    assert main(["mesh", "gen", "--example", "3", "--out-dir", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "example3.mesh").exists()


def test_cli_converge(tmp_path, capsys):
    out = tmp_path / "conv"
    assert main(["converge", "--max-Nel", "16", "--ref-Nel", "32", "--k-ref", "0.025", "--diagonal-only",
                 "--cp", "0", "--out-dir", str(out), "--no-timestamp"]) == 0
    for name in ("errors.csv", "slope.txt", "fig2.csv", "manifest.txt"):
        assert (out / name).exists()
    assert float((out / "slope.txt").read_text()) > 0


def test_batched_convergence_matches_single_pass():
    one = run_example1_convergence(max_nel=8, reference_nel=16, k_ref=0.025, ks=[0.1, 0.05])
    many = run_example1_convergence(max_nel=8, reference_nel=16, k_ref=0.025, ks=[0.1, 0.05], batch_nodes=81)
    assert one.rows == many.rows
