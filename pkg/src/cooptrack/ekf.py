"""Constant-turn-rate ("bike model") extended Kalman filter.

State vector: [x, y, gamma, gamma_dot, v] with x/y the position east/north
in meters, gamma the yaw in rad (kept in (-pi, pi]), gamma_dot the yaw rate
in rad/s and v the speed along the heading in m/s.  Over one step of length
T the position moves along a circular arc of radius v/gamma_dot; speed and
yaw rate are modeled constant, with process noise entering as a yaw-rate
offset and a constant acceleration.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidStateError, NumericalError

# Below this |gamma_dot| the transition and its derivatives switch to their
# analytic straight-line limits; the exact formulas divide by gamma_dot.
EPS_YAW = 1e-6

STATE_DIM = 5


def wrap_angle(angle):
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class BikeState:
    x: float
    y: float
    gamma: float
    gamma_dot: float
    v: float

    def as_array(self):
        return np.array([self.x, self.y, self.gamma, self.gamma_dot, self.v])

    @classmethod
    def from_array(cls, arr):
        x, y, gamma, gamma_dot, v = (float(c) for c in arr)
        return cls(x, y, gamma, gamma_dot, v)


@dataclass(frozen=True)
class StateEstimate:
    """A bike state together with its 5x5 covariance."""

    state: BikeState
    covariance: np.ndarray


@dataclass(frozen=True)
class ProcessNoiseParams:
    """Process noise: yaw-rate offset and along-heading acceleration."""

    sigma_w_gamma_dot: float = 1.5   # rad/s
    sigma_w_v_dot: float = 2.5       # m/s^2
    T: float = 0.020                 # filter step, s

    def __post_init__(self):
        if not (self.sigma_w_gamma_dot > 0 and self.sigma_w_v_dot > 0 and self.T > 0):
            raise ValueError("process noise parameters must be strictly positive")


@dataclass(frozen=True)
class MeasurementNoiseParams:
    """Measurement noise standard deviations.

    sigma_v comes from the velocity estimator per measurement and is not
    stored here.  With r_divide_by_T (default) the per-step device noise
    entries of R are (sigma/T)^2 instead of sigma^2; the flag exists for
    ablation runs.
    """

    sigma_x: float = 0.15            # m
    sigma_y: float = 0.15            # m
    sigma_gamma_dot: float = 0.3     # rad/s
    r_divide_by_T: bool = True

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0 and self.sigma_gamma_dot > 0):
            raise ValueError("measurement noise parameters must be strictly positive")


class MeasurementKind(Enum):
    POSITION_AND_DEVICE = "position_and_device"
    DEVICE_ONLY = "device_only"
    POSITION_ONLY = "position_only"


@dataclass(frozen=True)
class Measurement:
    """One fused observation; fields are present iff the kind requires them."""

    kind: MeasurementKind
    position: tuple | None = None    # (x, y) in m
    gamma_dot: float | None = None   # rad/s
    v: float | None = None           # m/s
    sigma_v: float | None = None     # m/s
    timestamp: float = 0.0

    def __post_init__(self):
        needs_pos = self.kind in (MeasurementKind.POSITION_AND_DEVICE,
                                  MeasurementKind.POSITION_ONLY)
        needs_dev = self.kind in (MeasurementKind.POSITION_AND_DEVICE,
                                  MeasurementKind.DEVICE_ONLY)
        if needs_pos != (self.position is not None):
            raise ValueError(f"position must be set iff kind requires it ({self.kind})")
        has_dev = (self.gamma_dot is not None and self.v is not None
                   and self.sigma_v is not None)
        no_dev = (self.gamma_dot is None and self.v is None and self.sigma_v is None)
        if needs_dev and not has_dev:
            raise ValueError(f"gamma_dot, v and sigma_v required for {self.kind}")
        if not needs_dev and not no_dev:
            raise ValueError(f"device fields must be absent for {self.kind}")
        if self.sigma_v is not None and not self.sigma_v > 0:
            raise ValueError("sigma_v must be strictly positive")

    @classmethod
    def position_only(cls, x, y, timestamp=0.0):
        return cls(MeasurementKind.POSITION_ONLY, position=(x, y), timestamp=timestamp)

    @classmethod
    def device_only(cls, gamma_dot, v, sigma_v, timestamp=0.0):
        return cls(MeasurementKind.DEVICE_ONLY, gamma_dot=gamma_dot, v=v,
                   sigma_v=sigma_v, timestamp=timestamp)

    @classmethod
    def position_and_device(cls, x, y, gamma_dot, v, sigma_v, timestamp=0.0):
        return cls(MeasurementKind.POSITION_AND_DEVICE, position=(x, y),
                   gamma_dot=gamma_dot, v=v, sigma_v=sigma_v, timestamp=timestamp)


def _require_finite(s: BikeState):
    if not (math.isfinite(s.x) and math.isfinite(s.y) and math.isfinite(s.gamma)
            and math.isfinite(s.gamma_dot) and math.isfinite(s.v)):
        raise InvalidStateError(f"non-finite state: {s}")


def _arc_terms(gamma_dot, v, T):
    """Arc displacements a (along heading) and b (lateral) for one step."""
    if abs(gamma_dot) < EPS_YAW:
        return v * T, 0.0
    wt = gamma_dot * T
    a = v * math.sin(wt) / gamma_dot
    # 1 - cos(wt) written as 2 sin^2(wt/2) to avoid cancellation
    b = v * 2.0 * math.sin(0.5 * wt) ** 2 / gamma_dot
    return a, b


def predict_state(s: BikeState, T: float) -> BikeState:
    """Propagate a state through one noise-free transition of length T."""
    if not T > 0:
        raise ValueError("T must be positive")
    _require_finite(s)
    a, b = _arc_terms(s.gamma_dot, s.v, T)
    cg, sg = math.cos(s.gamma), math.sin(s.gamma)
    return BikeState(
        x=s.x + cg * a - sg * b,
        y=s.y + sg * a + cg * b,
        gamma=wrap_angle(s.gamma + s.gamma_dot * T),
        gamma_dot=s.gamma_dot,
        v=s.v,
    )


def noisy_transition(s: BikeState, w, T: float) -> BikeState:
    """Transition including the process noise w = [w_gamma_dot, w_v_dot].

    The noise acts as a constant yaw-rate offset and a constant acceleration
    over the step, so the effective speed for the arc is v + 0.5 T w_v_dot.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    _require_finite(s)
    w_gd, w_vd = float(w[0]), float(w[1])
    omega = s.gamma_dot + w_gd
    v_eff = 0.5 * T * w_vd + s.v
    if abs(omega) < EPS_YAW:
        a, b = v_eff * T, 0.0
    else:
        wt = omega * T
        a = v_eff * math.sin(wt) / omega
        b = v_eff * 2.0 * math.sin(0.5 * wt) ** 2 / omega
    cg, sg = math.cos(s.gamma), math.sin(s.gamma)
    return BikeState(
        x=s.x + cg * a - sg * b,
        y=s.y + sg * a + cg * b,
        gamma=wrap_angle(s.gamma + omega * T),
        gamma_dot=omega,
        v=s.v + w_vd * T,
    )


def _arc_derivatives(gamma_dot, v, T):
    """Derivatives of the arc terms: (da/dgd, db/dgd, da/dv, db/dv)."""
    if abs(gamma_dot) < EPS_YAW:
        # second-order Taylor limits at gamma_dot -> 0
        return 0.0, 0.5 * v * T * T, T, 0.0
    wt = gamma_dot * T
    sin_wt = math.sin(wt)
    one_m_cos = 2.0 * math.sin(0.5 * wt) ** 2
    inv = 1.0 / gamma_dot
    da_dgd = v * (T * math.cos(wt) - sin_wt * inv) * inv
    db_dgd = v * (T * sin_wt - one_m_cos * inv) * inv
    da_dv = sin_wt * inv
    db_dv = one_m_cos * inv
    return da_dgd, db_dgd, da_dv, db_dv


def jacobian_f(s: BikeState, T: float) -> np.ndarray:
    """Jacobian of the noise-free transition, evaluated at s."""
    if not T > 0:
        raise ValueError("T must be positive")
    _require_finite(s)
    a, b = _arc_terms(s.gamma_dot, s.v, T)
    da_dgd, db_dgd, da_dv, db_dv = _arc_derivatives(s.gamma_dot, s.v, T)
    cg, sg = math.cos(s.gamma), math.sin(s.gamma)
    F = np.eye(STATE_DIM)
    F[0, 2] = -sg * a - cg * b
    F[0, 3] = cg * da_dgd - sg * db_dgd
    F[0, 4] = cg * da_dv - sg * db_dv
    F[1, 2] = cg * a - sg * b
    F[1, 3] = sg * da_dgd + cg * db_dgd
    F[1, 4] = sg * da_dv + cg * db_dv
    F[2, 3] = T
    return F


def noise_gain(s: BikeState, T: float) -> np.ndarray:
    """Jacobian of the noisy transition w.r.t. the noise, at w = 0 (5x2)."""
    if not T > 0:
        raise ValueError("T must be positive")
    _require_finite(s)
    da_dgd, db_dgd, _, _ = _arc_derivatives(s.gamma_dot, s.v, T)
    if abs(s.gamma_dot) < EPS_YAW:
        da_dvd, db_dvd = 0.5 * T * T, 0.0
    else:
        wt = s.gamma_dot * T
        da_dvd = 0.5 * T * math.sin(wt) / s.gamma_dot
        db_dvd = 0.5 * T * 2.0 * math.sin(0.5 * wt) ** 2 / s.gamma_dot
    cg, sg = math.cos(s.gamma), math.sin(s.gamma)
    G = np.zeros((STATE_DIM, 2))
    G[0, 0] = cg * da_dgd - sg * db_dgd
    G[0, 1] = cg * da_dvd - sg * db_dvd
    G[1, 0] = sg * da_dgd + cg * db_dgd
    G[1, 1] = sg * da_dvd + cg * db_dvd
    G[2, 0] = T
    G[3, 0] = 1.0
    G[4, 1] = T
    return G


def process_noise_cov(s: BikeState, p: ProcessNoiseParams) -> np.ndarray:
    """Q = Gamma(s) diag[sigma_w_gd^2, sigma_w_vd^2] Gamma(s)^T, symmetrized."""
    G = noise_gain(s, p.T)
    Q = (G * [p.sigma_w_gamma_dot ** 2, p.sigma_w_v_dot ** 2]) @ G.T
    return 0.5 * (Q + Q.T)


def _symmetrize(P):
    return 0.5 * (P + P.T)


def ekf_predict(e: StateEstimate, p: ProcessNoiseParams) -> StateEstimate:
    """Time update: state through the transition, P <- F P F^T + Q."""
    state = predict_state(e.state, p.T)
    F = jacobian_f(e.state, p.T)
    Q = process_noise_cov(e.state, p)
    P = _symmetrize(F @ e.covariance @ F.T + Q)
    if np.linalg.eigvalsh(P).min() < -1e-6:
        raise NumericalError("predicted covariance is indefinite")
    return StateEstimate(state, P)


def measurement_matrix(kind: MeasurementKind) -> np.ndarray:
    if kind is MeasurementKind.POSITION_AND_DEVICE:
        rows = (0, 1, 3, 4)
    elif kind is MeasurementKind.DEVICE_ONLY:
        rows = (3, 4)
    else:
        rows = (0, 1)
    H = np.zeros((len(rows), STATE_DIM))
    H[range(len(rows)), rows] = 1.0
    return H


def measurement_noise_cov(kind: MeasurementKind, n: MeasurementNoiseParams,
                          p: ProcessNoiseParams, sigma_v=None) -> np.ndarray:
    """Diagonal R for the given measurement kind.

    Device entries are divided by T before squaring when n.r_divide_by_T is
    set (the per-step reading of the device noise); sigma_v comes from the
    velocity estimator.
    """
    scale = 1.0 / p.T if n.r_divide_by_T else 1.0
    diag = []
    if kind in (MeasurementKind.POSITION_AND_DEVICE, MeasurementKind.POSITION_ONLY):
        diag += [n.sigma_x ** 2, n.sigma_y ** 2]
    if kind in (MeasurementKind.POSITION_AND_DEVICE, MeasurementKind.DEVICE_ONLY):
        if sigma_v is None:
            raise ValueError("sigma_v required for device measurements")
        diag += [(n.sigma_gamma_dot * scale) ** 2, (sigma_v * scale) ** 2]
    return np.diag(diag)


def _measurement_vector(m: Measurement) -> np.ndarray:
    z = []
    if m.position is not None:
        z += [m.position[0], m.position[1]]
    if m.gamma_dot is not None:
        z += [m.gamma_dot, m.v]
    return np.array(z, dtype=float)


def ekf_update(e: StateEstimate, m: Measurement, n: MeasurementNoiseParams,
               p: ProcessNoiseParams) -> StateEstimate:
    """Measurement update; gamma re-wrapped, covariance symmetrized."""
    _require_finite(e.state)
    H = measurement_matrix(m.kind)
    R = measurement_noise_cov(m.kind, n, p, sigma_v=m.sigma_v)
    x = e.state.as_array()
    P = e.covariance
    z = _measurement_vector(m)
    y = z - H @ x
    S = H @ P @ H.T + R
    try:
        S_chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is not invertible") from exc
    # K = P H^T S^-1 via the Cholesky factor
    PHt = P @ H.T
    K = np.linalg.solve(S_chol.T, np.linalg.solve(S_chol, PHt.T)).T
    x_new = x + K @ y
    x_new[2] = wrap_angle(x_new[2])
    IKH = np.eye(STATE_DIM) - K @ H
    P_new = _symmetrize(IKH @ P @ IKH.T + K @ R @ K.T)
    return StateEstimate(BikeState.from_array(x_new), P_new)


def newborn_covariance(n: MeasurementNoiseParams) -> np.ndarray:
    """Initial covariance for a track spawned from a single position fix.

    gamma and v are unobservable from one fix, so their variances are wide:
    (pi/2)^2 for yaw, 1 for yaw rate, 2^2 for speed.
    """
    return np.diag([n.sigma_x ** 2, n.sigma_y ** 2, (math.pi / 2) ** 2, 1.0, 4.0])
