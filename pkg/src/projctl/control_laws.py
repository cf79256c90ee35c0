"""Generalized control torques for tracking and regulation.

Both laws emit a torque tau_c that lives in the admissible force space
(tau_c = P tau_c); turning it into actuator torques is the allocator's job,
either by minimum-norm pseudo-inversion here or by the power-optimal program
in :mod:`projctl.torque_qcqp`.  When the allocator cannot meet
P B u = tau_c exactly, the residual phi enters the task error dynamics as the
disturbance d = M_bar^-1 phi.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .constrained_dynamics import ConstraintFrame, RobotState
from .constraint_geometry import pseudo_inverse
from .errors import ActuationError, InputError
from .task_space import TaskMap


def _check_spd(K: np.ndarray, name: str, dim: int):
    K = np.asarray(K, dtype=float)
    if K.shape != (dim, dim):
        raise InputError(f"{name} must be {dim}x{dim}, got {K.shape}")
    if np.abs(K - K.T).max() > 1e-10 * max(1.0, np.abs(K).max()):
        raise InputError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise InputError(f"{name} must be positive-definite")
    return K


@dataclass(frozen=True)
class ControllerGains:
    """Proportional/derivative gain pair.

    For the tracking law both act on the l-dimensional task error; the
    regulation law instead applies K_D to the full joint velocity, so there
    K_D must be n x n.
    """

    K_P: np.ndarray
    K_D: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K_P", np.asarray(self.K_P, dtype=float))
        object.__setattr__(self, "K_D", np.asarray(self.K_D, dtype=float))

    @classmethod
    def critically_damped(cls, dim: int, omega: float) -> "ControllerGains":
        """K_P = omega^2 I, K_D = 2 omega I: double real pole at -omega."""
        if omega <= 0:
            raise InputError("omega must be positive")
        return cls(K_P=omega**2 * np.eye(dim), K_D=2.0 * omega * np.eye(dim))


@dataclass(frozen=True)
class ControlCommand:
    """Controller output plus allocation bookkeeping.

    tau_c is always populated; u, phi and d are filled in once an allocator
    has run (phi = tau_c - P B u, d = M_bar^-1 phi).
    """

    tau_c: np.ndarray
    e: np.ndarray
    e_dot: np.ndarray
    u: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None

    def with_actuation(self, frame: ConstraintFrame, B: np.ndarray, u: np.ndarray) -> "ControlCommand":
        u = np.asarray(u, dtype=float)
        phi = self.tau_c - frame.P @ (np.asarray(B, dtype=float) @ u)
        return replace(self, u=u, phi=phi, d=tracking_disturbance(frame, phi))


def tracking_torque(
    state: RobotState,
    frame: ConstraintFrame,
    task: TaskMap,
    x_d: np.ndarray,
    x_d_dot: np.ndarray,
    x_d_ddot: np.ndarray,
    gains: ControllerGains,
) -> ControlCommand:
    """Operational-space tracking law.

    tau_c = P C qd - P tau_g + P M (Lambda^+ (xdd_d + K_D ed + K_P e) - Gamma qd)
    with e = x_d - x.  Exactly realized, the closed loop obeys
    edd + K_D ed + K_P e = 0.
    """
    l = task.l
    K_P = _check_spd(gains.K_P, "K_P", l)
    K_D = _check_spd(gains.K_D, "K_D", l)
    x_d = np.asarray(x_d, dtype=float)
    x_d_dot = np.asarray(x_d_dot, dtype=float)
    x_d_ddot = np.asarray(x_d_ddot, dtype=float)
    for name, v in (("x_d", x_d), ("x_d_dot", x_d_dot), ("x_d_ddot", x_d_ddot)):
        if v.shape != (l,) or not np.all(np.isfinite(v)):
            raise InputError(f"{name} must be a finite vector of length {l}")

    e = x_d - task.x
    e_dot = x_d_dot - task.x_dot
    x_cmd = x_d_ddot + K_D @ e_dot + K_P @ e
    qd = state.q_dot
    P = frame.P
    tau_c = P @ (frame.C @ qd) - P @ frame.tau_g + P @ frame.M @ (
        task.Lambda_pinv @ x_cmd - task.Gamma_ctl @ qd
    )
    return ControlCommand(tau_c=tau_c, e=e, e_dot=e_dot)


def regulation_torque(
    state: RobotState,
    frame: ConstraintFrame,
    task: TaskMap,
    x_d: np.ndarray,
    gains: ControllerGains,
) -> ControlCommand:
    """Set-point regulation law tau_c = P(-tau_g - K_D qd + Lambda^T K_P e).

    K_D acts on the full joint velocity here (n x n).  Along the closed loop
    the function V = qd^T M_bar qd / 2 + e^T K_P e / 2 is non-increasing and
    the state settles on e = 0, qd = 0.
    """
    K_P = _check_spd(gains.K_P, "K_P", task.l)
    K_D = _check_spd(gains.K_D, "K_D (joint-space)", frame.n)
    x_d = np.asarray(x_d, dtype=float)
    if x_d.shape != (task.l,) or not np.all(np.isfinite(x_d)):
        raise InputError(f"x_d must be a finite vector of length {task.l}")
    e = x_d - task.x
    tau_c = frame.P @ (-frame.tau_g - K_D @ state.q_dot + task.Lambda.T @ (K_P @ e))
    return ControlCommand(tau_c=tau_c, e=e, e_dot=-task.x_dot)


def regulation_lyapunov(frame: ConstraintFrame, q_dot: np.ndarray, e: np.ndarray, K_P: np.ndarray) -> float:
    """V = qd^T M_bar qd / 2 + e^T K_P e / 2."""
    q_dot = np.asarray(q_dot, dtype=float)
    e = np.asarray(e, dtype=float)
    return float(0.5 * q_dot @ frame.M_bar @ q_dot + 0.5 * e @ np.asarray(K_P, dtype=float) @ e)


def min_norm_actuation(
    frame: ConstraintFrame, B: np.ndarray, tau_c: np.ndarray, tol: float = 1e-8
) -> np.ndarray:
    """Least-norm actuator torques with P B u = tau_c.

    u = (P B)^+ tau_c.  Raises ActuationError when tau_c is outside the range
    of P B, i.e. the actuators cannot span the admissible force space.
    """
    B = np.asarray(B, dtype=float)
    tau_c = np.asarray(tau_c, dtype=float)
    PB = frame.P @ B
    u = pseudo_inverse(PB) @ tau_c
    residual = np.linalg.norm(tau_c - PB @ u)
    if residual > tol * max(1.0, np.linalg.norm(tau_c)):
        raise ActuationError(
            f"requested generalized force is not realizable: residual {residual:.3e} "
            "(actuation matrix does not span the admissible force space)"
        )
    return u


def tracking_disturbance(frame: ConstraintFrame, phi: np.ndarray) -> np.ndarray:
    """Disturbance d = M_bar^-1 phi entering the task error dynamics.

    With the tracking law in closed loop, Lambda^+ (edd + K_D ed + K_P e) = d.
    """
    phi = np.asarray(phi, dtype=float)
    return frame.M_bar_inv @ phi
