import numpy as np
import pytest

from cooptrack.pixel_track import PixelState, cv_predict, cv_update
from cooptrack.errors import InvalidStateError

DT = 0.02
Q_PX = 200.0
R_PX = 2.0


def make_state(u, v, ud, vd, P=None):
    return PixelState(u, v, ud, vd, np.eye(4) if P is None else P)


class TestCvPredict:
    def test_zero_velocity_keeps_position(self):
        s = cv_predict(make_state(10, 20, 0, 0), DT, Q_PX)
        assert (s.px_u, s.px_v) == (10, 20)

    def test_exact_linear_motion(self):
        s = cv_predict(make_state(0, 0, 50, -25), DT, Q_PX)
        assert s.px_u == pytest.approx(1.0)
        assert s.px_v == pytest.approx(-0.5)
        assert (s.px_u_dot, s.px_v_dot) == (50, -25)

    def test_covariance_matches_closed_form_blocks(self):
        P0 = np.zeros((4, 4))
        s = cv_predict(make_state(0, 0, 0, 0, P0), DT, Q_PX)
        q_block = Q_PX * np.array([[DT ** 3 / 3, DT ** 2 / 2],
                                   [DT ** 2 / 2, DT]])
        expected = np.zeros((4, 4))
        for pos, vel in ((0, 2), (1, 3)):
            expected[np.ix_([pos, vel], [pos, vel])] = q_block
        np.testing.assert_allclose(s.covariance, expected, atol=1e-15)

    def test_mean_propagation_is_linear(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s1, s2 = rng.normal(0, 30, 4), rng.normal(0, 30, 4)
            a, b = rng.normal(0, 2, 2)
            combined = cv_predict(make_state(*(a * s1 + b * s2)), DT, Q_PX)
            separate = (a * cv_predict(make_state(*s1), DT, Q_PX).as_array()
                        + b * cv_predict(make_state(*s2), DT, Q_PX).as_array())
            np.testing.assert_allclose(combined.as_array(), separate, atol=1e-9)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            cv_predict(make_state(0, 0, 0, 0), 0.0, Q_PX)
        with pytest.raises(InvalidStateError):
            cv_predict(make_state(np.nan, 0, 0, 0), DT, Q_PX)


class TestCvUpdate:
    def test_zero_residual_keeps_state(self):
        s0 = make_state(5, 6, 1, 2)
        s = cv_update(s0, (5, 6), R_PX)
        np.testing.assert_allclose(s.as_array(), s0.as_array(), atol=1e-12)

    def test_huge_noise_keeps_state(self):
        s0 = make_state(5, 6, 1, 2)
        s = cv_update(s0, (500, -600), 1e9)
        np.testing.assert_allclose(s.as_array(), s0.as_array(), atol=1e-6)

    def test_scalar_case_matches_hand_kalman_update(self):
        P0 = np.diag([1.0, 0.0, 0.0, 0.0])
        s = cv_update(make_state(0, 0, 0, 0, P0), (2.0, 0.0), 1.0)
        assert s.px_u == pytest.approx(1.0, abs=1e-12)
        assert s.covariance[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_covariance_stays_symmetric_psd(self):
        rng = np.random.default_rng(1)
        s = make_state(0, 0, 10, -5)
        for _ in range(200):
            s = cv_predict(s, DT, Q_PX)
            s = cv_update(s, (s.px_u + rng.normal(0, 2), s.px_v + rng.normal(0, 2)),
                          R_PX)
            P = s.covariance
            assert np.abs(P - P.T).max() < 1e-9
            assert np.linalg.eigvalsh(P).min() > -1e-9
