import math

import numpy as np
import pytest

from driftbound import (
    DriftSpec,
    ScalarField,
    SolverConfig,
    TorusGrid,
    VectorField,
    build_drift,
    mollify_drift,
    solve,
    unshift,
)


def sin_mode(grid):
    return ScalarField.from_function(
        grid, lambda *xs: np.sin(2 * np.pi * np.broadcast_to(xs[0], grid.shape))
    )


def constant_drift(grid, beta=1.0):
    vec = (beta,) + (0.0,) * (grid.dim - 1)
    return build_drift(DriftSpec(kind="constant", vector=vec), grid)


class TestSolveAnalytic:
    def test_pure_diffusion_eigenfunction(self, grid1d):
        f = sin_mode(grid1d)
        cfg = SolverConfig(dt=1e-4, t_final=0.1, snapshot_stride=200)
        traj = solve(VectorField.zeros(grid1d), f, cfg)
        x = grid1d.axis_coordinates()
        exact = math.exp(-4 * math.pi**2 * 0.1) * np.sin(2 * np.pi * x)
        assert np.abs(traj.snapshots[-1].values - exact).max() <= 1e-8

    def test_constant_drift_translates_and_decays(self, grid1d):
        f = sin_mode(grid1d)
        cfg = SolverConfig(dt=1e-4, t_final=0.1, snapshot_stride=200)
        traj = solve(constant_drift(grid1d), f, cfg)
        x = grid1d.axis_coordinates()
        exact = math.exp(-4 * math.pi**2 * 0.1) * np.sin(2 * np.pi * (x - 0.1))
        assert np.abs(traj.snapshots[-1].values - exact).max() <= 1e-8

    def test_heun_is_second_order(self, grid1d):
        f = sin_mode(grid1d)
        x = grid1d.axis_coordinates()
        exact = math.exp(-4 * math.pi**2 * 0.1) * np.sin(2 * np.pi * (x - 0.1))
        errors = []
        for dt in (2e-3, 1e-3, 5e-4):
            cfg = SolverConfig(dt=dt, t_final=0.1, snapshot_stride=10**6)
            traj = solve(constant_drift(grid1d), f, cfg)
            errors.append(np.abs(traj.snapshots[-1].values - exact).max())
        for coarse, fine in zip(errors, errors[1:]):
            assert 3.5 < coarse / fine < 4.5

    def test_euler_is_first_order(self, grid1d):
        f = sin_mode(grid1d)
        x = grid1d.axis_coordinates()
        exact = math.exp(-4 * math.pi**2 * 0.1) * np.sin(2 * np.pi * (x - 0.1))
        errors = []
        for dt in (2e-3, 1e-3):
            cfg = SolverConfig(dt=dt, t_final=0.1, scheme="if_euler", snapshot_stride=10**6)
            traj = solve(constant_drift(grid1d), f, cfg)
            errors.append(np.abs(traj.snapshots[-1].values - exact).max())
        assert 1.7 < errors[0] / errors[1] < 2.3


class TestInvariants:
    def test_maximum_principle(self, grid1d):
        f = sin_mode(grid1d)
        for shift in (0.0, 2.0):
            cfg = SolverConfig(dt=2e-4, t_final=0.05, shift=shift, snapshot_stride=50)
            traj = solve(constant_drift(grid1d, 0.8), f, cfg)
            assert traj.sup_u.max() <= 1.0 + 1e-10

    def test_constant_datum_is_stationary(self, grid2d):
        f = ScalarField.full(grid2d, 0.4)
        cfg = SolverConfig(dt=1e-3, t_final=0.05, snapshot_stride=10)
        traj = solve(constant_drift(grid2d, 0.3), f, cfg)
        assert np.abs(traj.snapshots[-1].values - 0.4).max() < 1e-13
        assert traj.sup_u.max() <= 0.4 + 1e-12

    def test_energy_identity_pure_diffusion(self, grid1d):
        # d/dt <u^2> = -2 <|grad u|^2> discretely to O(dt^2)
        f = sin_mode(grid1d)
        gaps = []
        for dt in (2e-3, 1e-3):
            cfg = SolverConfig(dt=dt, t_final=0.02, snapshot_stride=10**6)
            traj = solve(VectorField.zeros(grid1d), f, cfg)
            mass = traj.lp_u(2) ** 2
            rate = (mass[2:] - mass[:-2]) / (2 * dt)
            gaps.append(np.abs(rate + 2 * traj.dirichlet_u[1:-1]).max())
        assert gaps[0] / gaps[1] > 3.0

    def test_snapshot_zero_is_bit_exact(self, grid1d):
        f = sin_mode(grid1d)
        cfg = SolverConfig(dt=1e-3, t_final=0.01, snapshot_stride=5)
        traj = solve(constant_drift(grid1d), f, cfg)
        assert np.array_equal(traj.snapshots[0].values, f.values)
        assert traj.times[0] == 0.0
        assert np.all(np.diff(traj.times) > 0)

    def test_grid_refinement_stability(self):
        # same continuum problem on n=16 and n=32: terminal diagnostics
        # within 1% for band-limited data and a fixed mollified Hardy drift
        terminal = {}
        for n in (16, 32):
            grid = TorusGrid(3, n)
            f = ScalarField.from_function(
                grid,
                lambda x, y, z: 0.5 * np.cos(2 * np.pi * np.broadcast_to(x, grid.shape)),
            )
            b = build_drift(
                DriftSpec(kind="hardy", delta=4.0, sign=-1, core_radius=0.125), grid
            )
            b_eps = mollify_drift(b, 3e-3)
            cfg = SolverConfig(dt=1e-3, t_final=0.05, snapshot_stride=50)
            traj = solve(b_eps, f, cfg)
            terminal[n] = (
                traj.sup_u[-1],
                traj.lp_u(2)[-1],
                traj.diag["modular_u"][-1],
                traj.dirichlet_u[-1],
            )
        for coarse, fine in zip(terminal[16], terminal[32]):
            assert abs(coarse - fine) <= 0.01 * max(abs(fine), 1e-12)


class TestErrors:
    def test_cfl_violation_rejected(self, grid1d):
        cfg = SolverConfig(dt=0.01, t_final=0.1)
        with pytest.raises(ValueError, match="CFL"):
            solve(constant_drift(grid1d, 10.0), sin_mode(grid1d), cfg)

    def test_non_multiple_horizon_rejected(self, grid1d):
        cfg = SolverConfig(dt=3e-4, t_final=0.1)
        with pytest.raises(ValueError, match="whole number"):
            solve(VectorField.zeros(grid1d), sin_mode(grid1d), cfg)

    def test_nan_aborts_with_partial_trajectory(self, grid1d):
        # cfl_safety large enough to let an unstable advective step overflow
        cfg = SolverConfig(dt=0.01, t_final=20.0, cfl_safety=1e6, snapshot_stride=10)
        traj = solve(constant_drift(grid1d, 50.0), sin_mode(grid1d), cfg)
        assert traj.aborted
        assert "non-finite" in traj.abort_message
        assert len(traj.times) < 2001
        assert np.all(np.isfinite(traj.diag["sup_v"]))

    def test_mismatched_grids_rejected(self, grid1d):
        other = TorusGrid(1, 32)
        cfg = SolverConfig(dt=1e-3, t_final=0.01)
        with pytest.raises(ValueError, match="grids"):
            solve(VectorField.zeros(other), sin_mode(grid1d), cfg)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": -1.0, "t_final": 1.0},
            {"dt": 1e-3, "t_final": 0.0},
            {"dt": 1e-3, "t_final": 1.0, "shift": -1.0},
            {"dt": 1e-3, "t_final": 1.0, "scheme": "rk9"},
            {"dt": 1e-3, "t_final": 1.0, "p_list": (3,)},
        ],
    )
    def test_bad_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestUnshift:
    def test_identity_at_zero(self, grid1d):
        cfg = SolverConfig(dt=1e-3, t_final=0.01, shift=1.0, snapshot_stride=5)
        traj = solve(VectorField.zeros(grid1d), sin_mode(grid1d), cfg)
        assert unshift(traj, 0.0) is traj

    def test_single_snapshot_constant_field(self, grid1d):
        # a hand-built trajectory whose only stored state is the constant a:
        # unshifting rescales that snapshot to a * exp(lam * t)
        from driftbound import Trajectory
        from driftbound.solver import _diagnostic_columns

        a, lam, t = 0.7, 2.0, 0.25
        columns = {name: np.zeros(1) for name in _diagnostic_columns((2, 4))}
        traj = Trajectory(
            grid=grid1d,
            shift=lam,
            p_list=(2, 4),
            times=np.array([t]),
            diag=columns,
            snapshot_indices=[0],
            snapshots=[ScalarField.full(grid1d, a)],
        )
        out = unshift(traj, lam)
        assert np.abs(out.snapshots[0].values - a * math.exp(lam * t)).max() < 1e-14

    def test_shifted_solve_of_constant_recovers_constant(self, grid1d):
        # v solves the shifted equation so v = a exp(-shift t); the
        # unshifted solution is the constant a itself
        f = ScalarField.full(grid1d, 0.7)
        cfg = SolverConfig(dt=1e-3, t_final=0.01, shift=2.0, snapshot_stride=10)
        out = unshift(solve(VectorField.zeros(grid1d), f, cfg), 2.0)
        assert np.abs(out.snapshots[-1].values - 0.7).max() < 1e-12

    def test_matches_direct_zero_shift_solve(self, grid1d):
        f = sin_mode(grid1d)
        shifted = solve(
            VectorField.zeros(grid1d),
            f,
            SolverConfig(dt=1e-4, t_final=0.05, shift=3.0, snapshot_stride=100),
        )
        direct = solve(
            VectorField.zeros(grid1d),
            f,
            SolverConfig(dt=1e-4, t_final=0.05, shift=0.0, snapshot_stride=100),
        )
        out = unshift(shifted, 3.0)
        assert np.abs(out.snapshots[-1].values - direct.snapshots[-1].values).max() < 1e-9
        assert np.abs(out.diag["modular_v"] - direct.diag["modular_v"]).max() < 1e-9

    def test_other_shift_values_rejected(self, grid1d):
        cfg = SolverConfig(dt=1e-3, t_final=0.01, shift=1.0)
        traj = solve(VectorField.zeros(grid1d), sin_mode(grid1d), cfg)
        with pytest.raises(ValueError, match="unshift"):
            unshift(traj, 0.5)


def test_csv_stream(tmp_path, grid1d):
    cfg = SolverConfig(dt=1e-3, t_final=0.01, snapshot_stride=5)
    traj = solve(constant_drift(grid1d), sin_mode(grid1d), cfg)
    path = tmp_path / "diag.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    header = lines[1].split(",")
    assert header[:7] == ["t", "sup", "l2", "l4", "orlicz", "modular", "dirichlet"]
    assert "exp_modular_p2" in header and "exp_gradexp_p4" in header
    assert len(lines) == 2 + len(traj.times)
    first = [float(tok) for tok in lines[2].split(",")]
    assert first[0] == 0.0
    assert first[1] == pytest.approx(1.0, rel=1e-12)
