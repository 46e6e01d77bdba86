import numpy as np
import pytest
from hypothesis import given, strategies as st

from weaktame.brownian import BrownianPath, TimeGrid, coarsen, sample_path
from weaktame.schemes import (
    DRIFT_TAMED,
    INCREMENT_TAMED,
    NAIVE_EM,
    SATURATION_LIMIT,
    WEAK_TAMED_ENKF,
    SchemeSpec,
    Trajectory,
    integrate,
    integrate_increments,
    interpolant_values,
    regularized_em,
    step,
)

ALL_SPECS = [NAIVE_EM, WEAK_TAMED_ENKF, DRIFT_TAMED, INCREMENT_TAMED, regularized_em(0.25)]


def test_spec_validation():
    with pytest.raises(ValueError):
        SchemeSpec("heun")
    with pytest.raises(ValueError):
        SchemeSpec("regularized_em")  # epsilon required
    with pytest.raises(ValueError):
        SchemeSpec("regularized_em", -1.0)
    with pytest.raises(ValueError):
        SchemeSpec("naive_em", 0.5)  # takes no epsilon
    assert regularized_em(0.25).epsilon == 0.25
    assert "0.25" in regularized_em(0.25).label


def test_step_pinned_values():
    assert step(WEAK_TAMED_ENKF, 1.0, 1.0, 0.0) == 0.5
    assert step(NAIVE_EM, 10.0, 0.1, 0.0) == -90.0
    assert step(WEAK_TAMED_ENKF, 2.0, 0.25, 0.5) == 2.0


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.label)
def test_zero_is_fixed_point(spec):
    assert step(spec, 0.0, 0.125, 0.7) == 0.0


def test_step_validates_inputs():
    with pytest.raises(ValueError):
        step(WEAK_TAMED_ENKF, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        step(WEAK_TAMED_ENKF, np.nan, 0.1, 0.0)
    with pytest.raises(ValueError):
        step(WEAK_TAMED_ENKF, 1.0, 0.1, np.inf)


def test_comparator_closed_forms():
    u, h, dw = 1.5, 0.125, -0.3
    cube = u**3
    assert step(DRIFT_TAMED, u, h, dw) == pytest.approx(
        u - h * cube / (1.0 + h * cube) + u * u * dw, rel=1e-15
    )
    incr = -h * cube + u * u * dw
    assert step(INCREMENT_TAMED, u, h, dw) == pytest.approx(
        u + incr / max(1.0, abs(incr)), rel=1e-15
    )
    # a huge increment is cut to modulus one
    assert step(INCREMENT_TAMED, 100.0, 0.5, 0.0) == 99.0


@given(
    st.floats(-1e6, 1e6, allow_nan=False),
    st.floats(1e-6, 4.0, allow_nan=False),
)
def test_weak_tamed_deterministic_contraction(u, h):
    out = step(WEAK_TAMED_ENKF, u, h, 0.0)
    assert abs(out) <= abs(u) * (1 + 1e-12) + 1e-300
    assert abs(out) <= 1.0 / (2.0 * np.sqrt(h)) * (1 + 1e-12)


def test_weak_tamed_equals_regularized_at_eps_h():
    grid = TimeGrid(1.0, 6, 1)
    path = sample_path(9, 0, grid)
    wt = integrate(WEAK_TAMED_ENKF, grid, path, 1.3)
    reg = integrate(regularized_em(grid.h), grid, path, 1.3)
    assert np.array_equal(wt.values, reg.values)
    assert wt.blow_up_step == reg.blow_up_step


def test_integrate_matches_scalar_step_loop():
    grid = TimeGrid(1.0, 4, 1)
    path = sample_path(2, 5, grid)
    for spec in ALL_SPECS:
        traj = integrate(spec, grid, path, 0.8)
        u = 0.8
        for n, dw in enumerate(path.increments):
            u = step(spec, u, grid.h, dw)
            assert traj.values[n + 1] == u
        assert traj.blow_up_step is None


def test_integrate_rejects_grid_mismatch():
    path = sample_path(2, 5, TimeGrid(1.0, 4, 1))
    with pytest.raises(ValueError):
        integrate(WEAK_TAMED_ENKF, TimeGrid(1.0, 5, 1), path, 1.0)


def test_zero_initial_condition_stays_zero():
    grid = TimeGrid(1.0, 5, 1)
    path = sample_path(0, 1, grid)
    for spec in ALL_SPECS:
        assert not integrate(spec, grid, path, 0.0).values.any()


def test_naive_em_blowup_flagged_and_saturated():
    grid = TimeGrid(1.0, 0, 10)  # h = 0.1
    quiet = BrownianPath(grid=grid, increments=np.zeros(grid.n_steps))
    traj = integrate(NAIVE_EM, grid, quiet, 10.0)
    assert abs(traj.values[3]) > 1e10
    assert traj.blow_up_step is not None
    assert traj.saturated
    tail = traj.values[traj.blow_up_step :]
    assert np.all(np.abs(tail) == SATURATION_LIMIT)
    # weak-tamed on the same path stays tame
    wt = integrate(WEAK_TAMED_ENKF, grid, quiet, 10.0)
    assert wt.blow_up_step is None
    assert np.abs(wt.values).max() == 10.0


def test_naive_em_expands_above_threshold():
    # |u0| > sqrt(2/h) forces |u1| > |u0| on the quiet path
    h = 0.1
    u0 = np.sqrt(2.0 / h) + 0.5
    assert abs(step(NAIVE_EM, u0, h, 0.0)) > u0


def test_batch_engine_freezes_dead_rows():
    increments = np.array([[0.0] * 6, [0.0] * 6])
    values, blow = integrate_increments(NAIVE_EM, 0.1, increments, np.array([10.0, 1.0]))
    assert blow[0] > 0 and blow[1] == -1
    assert np.all(values[0, blow[0] :] == values[0, blow[0]])
    # the healthy row is bit-equal to its solo integration
    solo, _ = integrate_increments(NAIVE_EM, 0.1, increments[1:], 1.0)
    assert np.array_equal(values[1], solo[0])


def test_batch_engine_clamps_overflow_to_sentinel():
    increments = np.array([[0.0] * 8])
    values, blow = integrate_increments(NAIVE_EM, 0.5, increments, -6.0)
    assert blow[0] > 0
    assert np.all(np.isfinite(values))
    assert np.abs(values[0]).max() == SATURATION_LIMIT


def test_batch_engine_repairs_nan_with_previous_sign():
    # an increment-carried NaN poisons the update; the sentinel inherits the
    # sign of the previous value instead of the NaN
    increments = np.array([[0.1, np.nan, 0.1, 0.1]])
    values, blow = integrate_increments(WEAK_TAMED_ENKF, 0.25, increments, -1.5)
    assert blow[0] == 2
    assert values[0, 2] == -SATURATION_LIMIT  # previous value was negative
    assert np.all(values[0, 2:] == -SATURATION_LIMIT)


def test_trajectory_validates_length():
    with pytest.raises(ValueError):
        Trajectory(grid=TimeGrid(1.0, 2, 1), values=np.zeros(3))


def test_interpolant_identity_at_factor_one():
    grid = TimeGrid(1.0, 4, 1)
    path = sample_path(4, 7, grid)
    traj = integrate(WEAK_TAMED_ENKF, grid, path, 1.0)
    same = interpolant_values(WEAK_TAMED_ENKF, traj, path)
    assert np.array_equal(same.values, traj.values)


def test_interpolant_copies_coarse_nodes_bitwise():
    fine_grid = TimeGrid(1.0, 6, 1)
    fine_path = sample_path(8, 3, fine_grid)
    coarse_path = coarsen(fine_path, 4)
    for spec in ALL_SPECS:
        coarse = integrate(spec, coarse_path.grid, coarse_path, 1.1)
        interp = interpolant_values(spec, coarse, fine_path)
        assert interp.grid == fine_grid
        assert np.array_equal(interp.values[::4], coarse.values)


def test_interpolant_zero_noise_midpoint():
    # one coarse step split in two: midpoint = v0 + (h/2) f(v0) with the
    # weak-tamed frozen drift f(v) = -v^3/(1 + h_coarse v^2)
    fine_grid = TimeGrid(1.0, 1, 1)
    coarse_grid = TimeGrid(1.0, 0, 1)
    quiet_fine = BrownianPath(grid=fine_grid, increments=np.zeros(2))
    v0 = 1.4
    coarse = integrate(WEAK_TAMED_ENKF, coarse_grid, coarsen(quiet_fine, 2), v0)
    interp = interpolant_values(WEAK_TAMED_ENKF, coarse, quiet_fine)
    frozen_drift = -(v0**3) / (1.0 + coarse_grid.h * v0**2)
    assert interp.values[1] == pytest.approx(v0 + 0.5 * frozen_drift, rel=1e-15)


def test_interpolant_rejects_non_power_of_two_refinement():
    fine = sample_path(1, 0, TimeGrid(1.0, 0, 3))
    coarse_traj = integrate(
        WEAK_TAMED_ENKF, TimeGrid(1.0, 0, 1), coarsen(fine, 3), 1.0
    )
    with pytest.raises(ValueError):
        interpolant_values(WEAK_TAMED_ENKF, coarse_traj, fine)


def test_interpolant_inherits_coarse_blowup():
    fine_grid = TimeGrid(1.0, 1, 5)  # 10 fine steps, h=0.1 coarse after /2
    quiet = BrownianPath(grid=fine_grid, increments=np.zeros(10))
    coarse = integrate(NAIVE_EM, TimeGrid(1.0, 0, 5), coarsen(quiet, 2), 10.0)
    assert coarse.blow_up_step is not None
    interp = interpolant_values(NAIVE_EM, coarse, quiet)
    assert interp.blow_up_step is not None
    assert interp.blow_up_step <= coarse.blow_up_step * 2
