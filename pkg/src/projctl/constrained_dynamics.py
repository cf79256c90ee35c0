"""Non-minimal constrained dynamics built on the null-space projector.

The central object is the :class:`ConstraintFrame`: given a robot model and a
state with an active contact set, it holds the projector bundle together with
the constrained inertia matrix M_bar = P M P + nu (I - P), the matching
Coriolis matrix C_bar, the oblique force projector S = I - M M_bar^-1 P and
the bias map Q = M Omega + C.  Accelerations and contact forces are then plain
matrix-vector evaluations on the frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .constraint_geometry import (
    DEFAULT_RANK_TOL,
    ProjectorBundle,
    jacobian_rate,
    null_projector,
    projector_rate,
)
from .errors import InputError


@dataclass(frozen=True)
class ContactSpec:
    """One frictional point contact.

    jacobian(q) returns the 3xn row block (x, y, z) mapping generalized
    velocity to the negative contact-point velocity, so that the associated
    multipliers are the force applied to the robot with z along the outward
    normal.  jacobian_rate(q, qd), when given, must return d/dt of that block.
    point(q), when given, returns the 3-vector contact-point position and is
    only needed for position-level stabilization.
    """

    jacobian: Callable[[np.ndarray], np.ndarray]
    friction: float
    jacobian_rate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    point: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        if not self.friction > 0:
            raise InputError(f"friction coefficient must be positive, got {self.friction}")


@dataclass(frozen=True)
class RobotModel:
    """Generalized-coordinate robot with frictional point contacts.

    Attributes:
        n: configuration dimension.
        p: actuator count.
        mass_matrix: q -> (n, n) symmetric positive-definite inertia.
        coriolis_matrix: (q, qd) -> (n, n) Coriolis matrix consistent with the
            inertia in the sense that d/dt(M) - 2C is skew-symmetric.
        gravity: q -> (n,) generalized gravity force (enters the dynamics on
            the applied-force side).
        actuation: constant (n, p) map from actuator torques to generalized
            forces.
        contacts: all contact candidates; a state selects the active subset.
        u_min, u_max: (p,) actuator torque box.
        motor_resistance: (p,) winding resistances (ohm).
        torque_constant: (p,) torque constants (N*m/A).
    """

    n: int
    p: int
    mass_matrix: Callable[[np.ndarray], np.ndarray]
    coriolis_matrix: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gravity: Callable[[np.ndarray], np.ndarray]
    actuation: np.ndarray
    contacts: Tuple[ContactSpec, ...]
    u_min: np.ndarray
    u_max: np.ndarray
    motor_resistance: np.ndarray
    torque_constant: np.ndarray
    name: str = "robot"

    def __post_init__(self):
        B = np.asarray(self.actuation, dtype=float)
        if B.shape != (self.n, self.p):
            raise InputError(f"actuation matrix must be {self.n}x{self.p}, got {B.shape}")
        object.__setattr__(self, "actuation", B)
        object.__setattr__(self, "contacts", tuple(self.contacts))
        for attr in ("u_min", "u_max", "motor_resistance", "torque_constant"):
            v = np.asarray(getattr(self, attr), dtype=float)
            if v.shape != (self.p,):
                raise InputError(f"{attr} must have shape ({self.p},), got {v.shape}")
            object.__setattr__(self, attr, v)
        if not np.all(self.u_min < self.u_max):
            raise InputError("u_min must be strictly below u_max componentwise")
        if np.any(self.torque_constant == 0.0):
            raise InputError("torque constants must be nonzero")
        if np.any(self.motor_resistance <= 0.0):
            raise InputError("motor resistances must be positive")

    @property
    def k(self) -> int:
        return len(self.contacts)

    def contact_stack(self, q: np.ndarray, active: Sequence[int]) -> np.ndarray:
        """Stacked (3k_active, n) Jacobian of the active contacts."""
        if len(active) == 0:
            return np.zeros((0, self.n))
        return np.vstack([self.contacts[i].jacobian(q) for i in active])

    def contact_stack_rate(
        self, q: np.ndarray, q_dot: np.ndarray, active: Sequence[int], h: float = 1e-6
    ) -> np.ndarray:
        if len(active) == 0:
            return np.zeros((0, self.n))
        rows = []
        for i in active:
            c = self.contacts[i]
            rows.append(jacobian_rate(c.jacobian, q, q_dot, h=h, analytic_rate=c.jacobian_rate))
        return np.vstack(rows)

    def friction_coefficients(self, active: Sequence[int]) -> np.ndarray:
        return np.array([self.contacts[i].friction for i in active])


@dataclass(frozen=True)
class RobotState:
    """Time, configuration, velocity and the indices of active contacts."""

    t: float
    q: np.ndarray
    q_dot: np.ndarray
    active_contacts: Tuple[int, ...] = ()

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.q_dot, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise InputError("q and q_dot must be 1-d vectors of equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q_dot", qd)
        object.__setattr__(self, "active_contacts", tuple(self.active_contacts))


@dataclass(frozen=True)
class ConstraintFrame:
    """All projection-derived quantities evaluated at one state."""

    bundle: ProjectorBundle
    M: np.ndarray
    C: np.ndarray
    tau_g: np.ndarray
    M_bar: np.ndarray
    C_bar: np.ndarray
    M_bar_inv: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    nu: float
    Gamma_dyn: np.ndarray
    active: Tuple[int, ...] = ()

    @property
    def P(self) -> np.ndarray:
        return self.bundle.P

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class ContactWrench:
    """Stacked contact forces (x, y, z per contact) and cone margins.

    margin_i = mu_i * lambda_z_i - sqrt(lambda_x_i^2 + lambda_y_i^2); the
    unilateral and friction-cone conditions hold iff lambda_z_i > 0 and
    margin_i > 0.  degenerate is set when the contact stack is rank-deficient
    and the forces are therefore the minimum-norm representative.
    """

    forces: np.ndarray
    margins: np.ndarray
    degenerate: bool = False

    @property
    def k(self) -> int:
        return self.forces.size // 3

    def per_contact(self) -> np.ndarray:
        return self.forces.reshape(self.k, 3)

    @property
    def normal(self) -> np.ndarray:
        return self.per_contact()[:, 2]


def cone_margins(forces: np.ndarray, mu: np.ndarray) -> np.ndarray:
    lam = forces.reshape(-1, 3)
    return mu * lam[:, 2] - np.hypot(lam[:, 0], lam[:, 1])


def build_frame(
    model: RobotModel,
    state: RobotState,
    nu: Optional[float] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    fd_step: float = 1e-6,
) -> ConstraintFrame:
    """Assemble the constraint frame at a state.

    nu defaults to trace(M(q))/n; callers that integrate over time should fix
    it once at the initial state so M_bar stays smooth in time.
    """
    q, qd = state.q, state.q_dot
    M = np.asarray(model.mass_matrix(q), dtype=float)
    C = np.asarray(model.coriolis_matrix(q, qd), dtype=float)
    tau_g = np.asarray(model.gravity(q), dtype=float)
    n = model.n
    if M.shape != (n, n) or C.shape != (n, n) or tau_g.shape != (n,):
        raise InputError("model callbacks returned inconsistent shapes")

    A = model.contact_stack(q, state.active_contacts)
    A_dot = model.contact_stack_rate(q, qd, state.active_contacts, h=fd_step)
    bundle = projector_rate(A, A_dot, null_projector(A, rank_tol))

    if nu is None:
        nu = float(np.trace(M)) / n
    if not nu > 0:
        raise InputError(f"nu must be positive, got {nu}")

    P = bundle.P
    I = np.eye(n)
    L = bundle.L
    M_bar = P @ M @ P + nu * (I - P)
    M_bar = 0.5 * (M_bar + M_bar.T)
    C_bar = P @ C @ P + P @ M @ bundle.P_dot - nu * L
    try:
        M_bar_inv = np.linalg.inv(M_bar)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - nu > 0 excludes this
        raise AssertionError("constrained inertia matrix is singular despite nu > 0") from exc
    S = I - M @ M_bar_inv @ P
    Q = M @ bundle.Omega + C
    return ConstraintFrame(
        bundle=bundle,
        M=M,
        C=C,
        tau_g=tau_g,
        M_bar=M_bar,
        C_bar=C_bar,
        M_bar_inv=M_bar_inv,
        S=S,
        Q=Q,
        nu=float(nu),
        Gamma_dyn=L,
        active=state.active_contacts,
    )


def constrained_accel(
    frame: ConstraintFrame, model: RobotModel, state: RobotState, u: np.ndarray
) -> np.ndarray:
    """Generalized acceleration under the active constraints.

    qdd = M_bar^-1 (P B u + P tau_g - C_bar qd); the component outside the
    admissible subspace automatically satisfies (I - P) qdd = Omega qd.
    """
    u = np.asarray(u, dtype=float)
    rhs = frame.P @ (model.actuation @ u + frame.tau_g) - frame.C_bar @ state.q_dot
    return frame.M_bar_inv @ rhs


def contact_forces(
    frame: ConstraintFrame, model: RobotModel, state: RobotState, u: np.ndarray
) -> ContactWrench:
    """Contact forces consistent with the applied actuation.

    Solves A^T lam = S (B u + tau_g - Q qd); S maps applied forces onto the
    row space of A, so the system is always consistent and the minimum-norm
    multiplier is returned (flagged degenerate when A is rank-deficient).
    """
    if len(state.active_contacts) == 0:
        raise InputError("contact_forces requires a nonempty active contact set")
    u = np.asarray(u, dtype=float)
    w = frame.S @ (model.actuation @ u + frame.tau_g - frame.Q @ state.q_dot)
    lam = frame.bundle.A_pinv.T @ w
    mu = model.friction_coefficients(state.active_contacts)
    degenerate = frame.bundle.rank < frame.bundle.m
    return ContactWrench(forces=lam, margins=cone_margins(lam, mu), degenerate=degenerate)
