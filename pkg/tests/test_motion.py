import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mova import motion as mo


def params(sigma=100.0, delta_t=0.016, num_frames=312):
    return mo.MotionParams(sigma=sigma, delta_t=delta_t, num_frames=num_frames)


class TestClosedForms:
    def test_half_normal_identity(self):
        # |X| of a zero-mean Gaussian: E|X|^2 * pi/2 == Var(X)
        p = params()
        for t in (1, 10, 312):
            mean_abs = mo.expected_abs_displacement(p, t)
            var = mo.displacement_variance(p, t)
            assert abs(mean_abs**2 * np.pi / 2.0 - var) < 1e-9 * max(var, 1.0)

    def test_sigma_round_trip(self):
        for disp in (90.0, 180.0, 360.0):
            sigma = mo.sigma_from_displacement(disp, 0.016, 312)
            p = params(sigma=sigma)
            assert mo.expected_abs_displacement(p, 312) == pytest.approx(disp, rel=1e-12)

    def test_variance_grows_with_time(self):
        p = params()
        vs = [mo.displacement_variance(p, t) for t in range(1, 50)]
        assert np.all(np.diff(vs) > 0)

    def test_monte_carlo_matches_formulas(self):
        p = params(sigma=mo.sigma_from_displacement(180.0, 0.016, 312))
        disp = mo.sample_displacements(p, num_runs=20000, seed=3)
        d = disp[:, 312]
        assert np.mean(np.abs(d)) == pytest.approx(
            mo.expected_abs_displacement(p, 312), rel=0.03
        )
        assert np.var(d) == pytest.approx(mo.displacement_variance(p, 312), rel=0.05)


class TestWrapping:
    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_wrap_range(self, theta):
        w = mo.wrap_deg(theta)
        assert 0.0 <= w < 360.0

    @given(st.floats(min_value=-1e4, max_value=1e4), st.integers(-5, 5))
    def test_wrap_periodic(self, theta, k):
        assert mo.wrap_deg(theta + 360.0 * k) == pytest.approx(
            mo.wrap_deg(theta), abs=1e-6
        )


class TestSampling:
    def test_trajectory_deterministic(self):
        p = params(num_frames=50)
        a = mo.sample_trajectory(mo.CVState(10.0, 0.0), p, seed=7)
        b = mo.sample_trajectory(mo.CVState(10.0, 0.0), p, seed=7)
        np.testing.assert_array_equal(a.thetas, b.thetas)

    def test_trajectory_shape_and_wrap(self):
        p = params(num_frames=50)
        traj = mo.sample_trajectory(mo.CVState(350.0, 0.0), p, seed=1)
        assert len(traj) == 51
        assert traj.num_frames == 50
        assert np.all((traj.thetas >= 0) & (traj.thetas < 360))

    def test_zero_sigma_is_static(self):
        p = params(sigma=0.0, num_frames=20)
        traj = mo.sample_trajectory(mo.CVState(42.0, 0.0), p, seed=0)
        np.testing.assert_allclose(traj.thetas, 42.0)

    def test_cv_step_matches_sampler(self):
        p = params(num_frames=5)
        rng = np.random.default_rng(11)
        noise = rng.normal(0.0, p.sigma, size=p.num_frames)
        state = mo.CVState(100.0, 0.0)
        manual = [state.theta]
        for nu in noise:
            state = mo.cv_step(state, p, nu)
            manual.append(state.theta)
        traj = mo.sample_trajectory(mo.CVState(100.0, 0.0), p, seed=11)
        np.testing.assert_allclose(manual, traj.thetas, atol=1e-9)


class TestValidation:
    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            mo.MotionParams(sigma=-1.0, delta_t=0.016, num_frames=10)

    def test_bad_theta_rejected(self):
        with pytest.raises(ValueError):
            mo.CVState(theta=360.0, theta_dot=0.0)

    def test_displacement_needs_positive_t(self):
        with pytest.raises(ValueError):
            mo.displacement_variance(params(), 0)


def test_trajectory_csv_round_trip(tmp_path):
    p = params(num_frames=30)
    traj = mo.sample_trajectory(mo.CVState(123.4, 0.0), p, seed=5)
    path = tmp_path / "traj.csv"
    mo.write_trajectory_csv(path, traj)
    back = mo.read_trajectory_csv(path, delta_t=p.delta_t)
    np.testing.assert_allclose(back.thetas, traj.thetas, atol=1e-6)


def test_trajectory_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n0,1\n")
    with pytest.raises(ValueError):
        mo.read_trajectory_csv(path, delta_t=0.016)
