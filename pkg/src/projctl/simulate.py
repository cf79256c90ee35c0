"""Fixed-step constrained simulation with scheduled contact switching.

The integrator advances the projected dynamics with classical RK4 under a
zero-order-hold actuation, then projects the velocity back onto the active
null space each step (with optional position-level stabilization against the
contact anchors).  Contact switches are schedule-driven: activating a contact
projects the velocity impulsively onto the new admissible space; all matrices
stay n x n throughout, so the controller code path never changes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constrained_dynamics import (
    ConstraintFrame,
    RobotModel,
    RobotState,
    build_frame,
    contact_forces,
)
from .constraint_geometry import DEFAULT_RANK_TOL, null_projector
from .control_laws import (
    ControllerGains,
    min_norm_actuation,
    regulation_lyapunov,
    regulation_torque,
    tracking_torque,
)
from .errors import InputError, SimulationError, SolverError
from .task_space import TaskDef, build_task
from .torque_qcqp import (
    BarrierParams,
    assemble_cone_constraints,
    assemble_program,
    power_loss,
    relax_program,
    solve_barrier,
)


@dataclass(frozen=True)
class IntegratorOptions:
    dt: float = 1e-3
    method: str = "rk4"
    baumgarte: bool = False
    baumgarte_gains: Tuple[float, float] = (20.0, 100.0)
    drift_hard_limit: float = 1e-6
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        if self.dt <= 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if self.method not in ("rk4", "euler"):
            raise InputError(f"unknown integrator method '{self.method}'")


@dataclass(frozen=True)
class Reference:
    """Task reference trajectory with analytic first and second derivatives."""

    value: Callable[[float], np.ndarray]
    rate: Callable[[float], np.ndarray]
    accel: Callable[[float], np.ndarray]


def constant_reference(x_d) -> Reference:
    x_d = np.atleast_1d(np.asarray(x_d, dtype=float))
    zero = np.zeros_like(x_d)
    return Reference(value=lambda t: x_d, rate=lambda t: zero, accel=lambda t: zero)


def sinusoid_reference(center, amplitude, frequency_hz, phase=None) -> Reference:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), center.shape)
    omega = 2.0 * np.pi * np.broadcast_to(np.asarray(frequency_hz, dtype=float), center.shape)
    phase = (
        np.zeros_like(center)
        if phase is None
        else np.broadcast_to(np.asarray(phase, dtype=float), center.shape)
    )
    return Reference(
        value=lambda t: center + amplitude * np.sin(omega * t + phase),
        rate=lambda t: amplitude * omega * np.cos(omega * t + phase),
        accel=lambda t: -amplitude * omega**2 * np.sin(omega * t + phase),
    )


@dataclass(frozen=True)
class OptimizerSpec:
    """Torque allocation choice: min_norm, qcqp or qcqp_relaxed."""

    kind: str = "min_norm"
    barrier: BarrierParams = field(default_factory=BarrierParams)
    rho: float = 10.0

    def __post_init__(self):
        if self.kind not in ("min_norm", "qcqp", "qcqp_relaxed"):
            raise InputError(f"unknown optimizer '{self.kind}'")


@dataclass(frozen=True)
class Scenario:
    """Everything a deterministic run needs."""

    model: RobotModel
    initial: RobotState
    task: TaskDef
    reference: Reference
    controller: str  # "tracking" | "regulation"
    gains: ControllerGains
    optimizer: OptimizerSpec
    duration: float
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    schedule: Tuple[Tuple[float, Tuple[int, ...]], ...] = ()
    nu: Optional[float] = None
    name: str = "scenario"

    def __post_init__(self):
        if self.controller not in ("tracking", "regulation"):
            raise InputError(f"unknown controller '{self.controller}'")
        if self.duration <= 0:
            raise InputError("duration must be positive")
        times = [t for t, _ in self.schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("schedule times must be strictly increasing")


@dataclass
class SimTrace:
    """Column-oriented record of one run (one row per step, including t=0)."""

    name: str
    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    x: np.ndarray
    x_d: np.ndarray
    e_norm: np.ndarray
    u: np.ndarray
    lam: np.ndarray  # (steps, 3k) stacked per model contact, zeros when inactive
    margins: np.ndarray  # (steps, k), zeros when inactive
    p_loss: np.ndarray
    lyapunov: np.ndarray
    phi_norm: np.ndarray
    d_norm: np.ndarray
    newton_iters: np.ndarray
    centering: np.ndarray
    eta: np.ndarray
    status: List[str]
    drift: np.ndarray
    active: List[Tuple[int, ...]]

    @property
    def steps(self) -> int:
        return self.t.size

    def header(self) -> List[str]:
        n = self.q.shape[1]
        p = self.u.shape[1]
        l = self.x.shape[1]
        k = self.margins.shape[1]
        cols = ["t"]
        cols += [f"q{i}" for i in range(n)]
        cols += [f"dq{i}" for i in range(n)]
        cols += [f"x{i}" for i in range(l)]
        cols += [f"xd{i}" for i in range(l)]
        cols += ["e_norm"]
        cols += [f"u{i}" for i in range(p)]
        for i in range(k):
            cols += [f"lam_x_{i}", f"lam_y_{i}", f"lam_z_{i}", f"margin_{i}"]
        cols += ["p_loss", "lyapunov", "phi_norm", "d_norm", "newton_iters", "eta", "status"]
        return cols

    def rows(self):
        k = self.margins.shape[1]
        for i in range(self.steps):
            row: List[str] = [_fmt(self.t[i])]
            row += [_fmt(v) for v in self.q[i]]
            row += [_fmt(v) for v in self.q_dot[i]]
            row += [_fmt(v) for v in self.x[i]]
            row += [_fmt(v) for v in self.x_d[i]]
            row.append(_fmt(self.e_norm[i]))
            row += [_fmt(v) for v in self.u[i]]
            for c in range(k):
                row += [_fmt(self.lam[i, 3 * c + j]) for j in range(3)]
                row.append(_fmt(self.margins[i, c]))
            row += [
                _fmt(self.p_loss[i]),
                _fmt(self.lyapunov[i]),
                _fmt(self.phi_norm[i]),
                _fmt(self.d_norm[i]),
                str(int(self.newton_iters[i])),
                _fmt(self.eta[i]),
                self.status[i],
            ]
            yield row

    def to_csv(self) -> str:
        lines = [",".join(self.header())]
        lines += [",".join(r) for r in self.rows()]
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def switch_contacts(
    state: RobotState,
    new_active: Sequence[int],
    model: RobotModel,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> RobotState:
    """Replace the active set; newly activated contacts absorb velocity.

    Activation projects q_dot onto the new null space (inelastic impact);
    deactivation keeps the velocity untouched.  Dimensions never change.
    """
    new = tuple(sorted(int(i) for i in new_active))
    if any(i < 0 or i >= model.k for i in new):
        raise InputError(f"active set {new} references unknown contacts (k={model.k})")
    if new == tuple(sorted(state.active_contacts)):
        return state
    q_dot = state.q_dot
    if set(new) - set(state.active_contacts):
        P = null_projector(model.contact_stack(state.q, new), rank_tol).P
        q_dot = P @ q_dot
    return RobotState(t=state.t, q=state.q, q_dot=q_dot, active_contacts=new)


def _baumgarte_correction(
    model: RobotModel,
    q: np.ndarray,
    q_dot: np.ndarray,
    active: Tuple[int, ...],
    anchors: Dict[int, np.ndarray],
    gains: Tuple[float, float],
    rank_tol: float,
) -> np.ndarray:
    if not active:
        return np.zeros_like(q)
    k_v, k_p = gains
    A = model.contact_stack(q, active)
    g = []
    for i in active:
        point_fn = model.contacts[i].point
        if point_fn is None or i not in anchors:
            g.append(np.zeros(3))
        else:
            g.append(np.asarray(point_fn(q), dtype=float) - anchors[i])
    g = np.concatenate(g)
    bundle = null_projector(A, rank_tol)
    return bundle.A_pinv @ (-k_v * (A @ q_dot) + k_p * g)


def step(
    model: RobotModel,
    state: RobotState,
    u: np.ndarray,
    dt: float,
    opts: Optional[IntegratorOptions] = None,
    nu: Optional[float] = None,
    anchors: Optional[Dict[int, np.ndarray]] = None,
) -> RobotState:
    """Advance one step under constant u, then re-project the velocity.

    The post-state satisfies ||A(q) q_dot|| below the integrator's hard drift
    limit or a SimulationError is raised.
    """
    opts = opts or IntegratorOptions(dt=dt)
    u = np.asarray(u, dtype=float)
    if np.any(u < model.u_min - 1e-9) or np.any(u > model.u_max + 1e-9):
        warnings.warn("actuation outside its box limits", stacklevel=2)
    active = state.active_contacts

    def accel(q, q_dot):
        s = RobotState(t=state.t, q=q, q_dot=q_dot, active_contacts=active)
        frame = build_frame(model, s, nu=nu, rank_tol=opts.rank_tol)
        qdd = frame.M_bar_inv @ (
            frame.P @ (model.actuation @ u + frame.tau_g) - frame.C_bar @ q_dot
        )
        if opts.baumgarte and anchors:
            qdd = qdd + _baumgarte_correction(
                model, q, q_dot, active, anchors, opts.baumgarte_gains, opts.rank_tol
            )
        return qdd

    q, qd = state.q, state.q_dot
    if opts.method == "euler":
        a1 = accel(q, qd)
        q_new = q + dt * qd
        qd_new = qd + dt * a1
    else:
        k1v = accel(q, qd)
        k1q = qd
        k2v = accel(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v)
        k2q = qd + 0.5 * dt * k1v
        k3v = accel(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v)
        k3q = qd + 0.5 * dt * k2v
        k4v = accel(q + dt * k3q, qd + dt * k3v)
        k4q = qd + dt * k3v
        q_new = q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd_new = qd + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)

    A_new = model.contact_stack(q_new, active)
    if A_new.shape[0]:
        P_new = null_projector(A_new, opts.rank_tol).P
        qd_new = P_new @ qd_new
        drift = float(np.linalg.norm(A_new @ qd_new))
        if drift > opts.drift_hard_limit:
            raise SimulationError(
                f"constraint drift {drift:.3e} exceeds {opts.drift_hard_limit:.1e} at t={state.t + dt:.4f}"
            )
    return RobotState(t=state.t + dt, q=q_new, q_dot=qd_new, active_contacts=active)


def _allocate(scenario: Scenario, frame: ConstraintFrame, state, tau_c, prev_u):
    """Dispatch to the torque allocator; returns (u, newton_iters, eta, status)."""
    model = scenario.model
    spec = scenario.optimizer
    if spec.kind == "min_norm":
        u = min_norm_actuation(frame, model.actuation, tau_c)
        return u, 0, 0, 0.0, "optimal"
    cones = assemble_cone_constraints(model, state, frame)
    program = assemble_program(model, state, frame, tau_c, cones=cones)
    if spec.kind == "qcqp_relaxed":
        program = relax_program(program, frame, spec.rho)
    report = solve_barrier(program, spec.barrier, u0=prev_u)
    if report.status not in ("optimal", "relaxed"):
        raise SolverError(
            f"torque program {report.status} at t={state.t:.4f} "
            f"(kkt={report.kkt_residual:.2e}, gap={report.duality_gap:.2e})"
        )
    return report.u_star, report.newton_iters, report.centering_steps, report.eta_final, report.status


def simulate(scenario: Scenario) -> SimTrace:
    """Run a scenario to completion and return its trace.

    Deterministic: no randomness anywhere, so identical scenarios produce
    identical traces.
    """
    model = scenario.model
    opts = scenario.integrator
    dt = opts.dt
    n_steps = int(round(scenario.duration / dt))
    if abs(n_steps * dt - scenario.duration) > 1e-9:
        raise InputError("duration must be an integer multiple of dt")

    state = switch_contacts(scenario.initial, scenario.initial.active_contacts, model) \
        if scenario.initial.active_contacts else scenario.initial
    # enforce the velocity-level constraint at the start
    if state.active_contacts:
        P0 = null_projector(model.contact_stack(state.q, state.active_contacts), opts.rank_tol).P
        state = replace(state, q_dot=P0 @ state.q_dot)

    nu = scenario.nu
    if nu is None:
        nu = float(np.trace(model.mass_matrix(state.q))) / model.n

    anchors: Dict[int, np.ndarray] = {}

    def refresh_anchors(st: RobotState):
        for i in st.active_contacts:
            fn = model.contacts[i].point
            if fn is not None and i not in anchors:
                anchors[i] = np.asarray(fn(st.q), dtype=float)

    if opts.baumgarte:
        refresh_anchors(state)

    k_model = model.k
    cols: Dict[str, list] = {key: [] for key in (
        "t", "q", "dq", "x", "xd", "e_norm", "u", "lam", "margins", "p_loss",
        "lyapunov", "phi_norm", "d_norm", "newton", "centering", "eta", "status", "drift", "active",
    )}

    pending = list(scenario.schedule)
    prev_u = None
    for i in range(n_steps + 1):
        t = i * dt
        while pending and pending[0][0] <= t + 0.5 * dt:
            _, new_set = pending.pop(0)
            state = switch_contacts(state, new_set, model, opts.rank_tol)
            for gone in set(anchors) - set(state.active_contacts):
                del anchors[gone]
            if opts.baumgarte:
                refresh_anchors(state)
        state = replace(state, t=t)

        frame = build_frame(model, state, nu=nu, rank_tol=opts.rank_tol)
        task = build_task(model, state, frame, scenario.task)
        ref = scenario.reference
        if scenario.controller == "tracking":
            cmd = tracking_torque(state, frame, task, ref.value(t), ref.rate(t), ref.accel(t), scenario.gains)
        else:
            cmd = regulation_torque(state, frame, task, ref.value(t), scenario.gains)
        u, n_newton, n_center, eta, status = _allocate(scenario, frame, state, cmd.tau_c, prev_u)
        prev_u = u
        cmd = cmd.with_actuation(frame, model.actuation, u)

        lam_row = np.zeros(3 * k_model)
        margin_row = np.zeros(k_model)
        if state.active_contacts:
            wrench = contact_forces(frame, model, state, u)
            per = wrench.per_contact()
            for slot, idx in enumerate(state.active_contacts):
                lam_row[3 * idx : 3 * idx + 3] = per[slot]
                margin_row[idx] = wrench.margins[slot]

        W = np.diag(model.motor_resistance / model.torque_constant**2)
        cols["t"].append(t)
        cols["q"].append(state.q.copy())
        cols["dq"].append(state.q_dot.copy())
        cols["x"].append(task.x.copy())
        cols["xd"].append(np.asarray(ref.value(t), dtype=float).copy())
        cols["e_norm"].append(float(np.linalg.norm(cmd.e)))
        cols["u"].append(u.copy())
        cols["lam"].append(lam_row)
        cols["margins"].append(margin_row)
        cols["p_loss"].append(power_loss(u, W))
        cols["lyapunov"].append(regulation_lyapunov(frame, state.q_dot, cmd.e, scenario.gains.K_P))
        cols["phi_norm"].append(float(np.linalg.norm(cmd.phi)))
        cols["d_norm"].append(float(np.linalg.norm(cmd.d)))
        cols["newton"].append(n_newton)
        cols["centering"].append(n_center)
        cols["eta"].append(eta)
        cols["status"].append(status)
        A = frame.bundle.A
        cols["drift"].append(float(np.linalg.norm(A @ state.q_dot)) if A.size else 0.0)
        cols["active"].append(state.active_contacts)

        if i < n_steps:
            state = step(model, state, u, dt, opts, nu=nu, anchors=anchors)

    return SimTrace(
        name=scenario.name,
        t=np.asarray(cols["t"]),
        q=np.asarray(cols["q"]),
        q_dot=np.asarray(cols["dq"]),
        x=np.asarray(cols["x"]),
        x_d=np.asarray(cols["xd"]),
        e_norm=np.asarray(cols["e_norm"]),
        u=np.asarray(cols["u"]),
        lam=np.asarray(cols["lam"]),
        margins=np.asarray(cols["margins"]),
        p_loss=np.asarray(cols["p_loss"]),
        lyapunov=np.asarray(cols["lyapunov"]),
        phi_norm=np.asarray(cols["phi_norm"]),
        d_norm=np.asarray(cols["d_norm"]),
        newton_iters=np.asarray(cols["newton"]),
        centering=np.asarray(cols["centering"]),
        eta=np.asarray(cols["eta"]),
        status=cols["status"],
        drift=np.asarray(cols["drift"]),
        active=cols["active"],
    )
