"""Power-minimizing torque allocation as a log-barrier QCQP.

The program over actuator torques u is

    minimize    u^T W u                      (motor power loss)
    subject to  P B u = tau_c                (task-space equality)
                c(u) >= 0                    (cones, unilaterality, torque box)

where c(u) stacks, per contact, the linear normal-force row
z_i^T u + alpha_i and the quadratic cone row u^T G_i u + gamma_i^T u + beta_i,
followed by the box rows u_max - u and u - u_min, plus any appended moment
rows.  It is solved by following the central path of the barrier problem

    minimize    u^T W u - eta * sum_i log c_i(u)    s.t.  P B u = tau_c

with an equality-constrained (infeasible-start) Newton method for each fixed
eta, shrinking eta by kappa until the duality-gap bound r * eta drops below
eps.  The quadratic cone rows are generally indefinite, so the Newton Hessian
is regularized on the equality null space whenever it loses definiteness; the
report flags this, and the KKT residual is always returned.

The relaxed variant removes the equality and minimizes
u^T W' u - rho b^T u, the expansion of u^T W u + rho ||d(u)||^2 with
d(u) = M_bar^-1 (tau_c - P B u), trading task fidelity against power.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .constrained_dynamics import ConstraintFrame, RobotModel, RobotState
from .errors import InputError


def motor_weighting(R, K_t) -> np.ndarray:
    """Diagonal weighting with W_jj = R_j / K_t_j^2, so u^T W u = i^T R i."""
    R = np.asarray(R, dtype=float)
    K_t = np.asarray(K_t, dtype=float)
    if R.shape != K_t.shape or R.ndim != 1:
        raise InputError("R and K_t must be 1-d vectors of equal length")
    if np.any(K_t == 0.0):
        raise InputError("torque constants must be nonzero")
    if np.any(R <= 0.0):
        raise InputError("winding resistances must be positive")
    return np.diag(R / K_t**2)


def power_loss(u, W) -> float:
    """Instantaneous dissipated power u^T W u (watt)."""
    u = np.asarray(u, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != (u.size, u.size):
        raise InputError(f"W must be {u.size}x{u.size}, got {W.shape}")
    return float(u @ W @ u)


@dataclass(frozen=True)
class ConeConstraint:
    """Per-contact cone data in torque space.

    z^T u + alpha reproduces the normal force lambda_z(u); the quadratic form
    u^T G u + gamma^T u + beta reproduces mu^2 lambda_z^2 - lambda_x^2
    - lambda_y^2.
    """

    z: np.ndarray
    alpha: float
    G: np.ndarray
    gamma: np.ndarray
    beta: float
    Pi: np.ndarray


def assemble_cone_constraints(
    model: RobotModel, state: RobotState, frame: ConstraintFrame
) -> List[ConeConstraint]:
    """Cone coefficients for every active contact.

    With w0 = tau_g - Q qd and a_* the pseudo-inverse columns selecting each
    force component, lambda_*(u) = a_*^T S (B u + w0); the coefficients below
    are that expression expanded in u.
    """
    active = state.active_contacts
    if len(active) == 0:
        raise InputError("cone constraints need at least one active contact")
    B = model.actuation
    S = frame.S
    A_pinv = frame.bundle.A_pinv
    w0 = frame.tau_g - frame.Q @ state.q_dot
    Sw0 = S @ w0
    SB = S @ B
    out = []
    for idx, contact in enumerate(active):
        mu = model.contacts[contact].friction
        a_x = A_pinv[:, 3 * idx + 0]
        a_y = A_pinv[:, 3 * idx + 1]
        a_z = A_pinv[:, 3 * idx + 2]
        Pi = S.T @ (-np.outer(a_x, a_x) - np.outer(a_y, a_y) + mu**2 * np.outer(a_z, a_z)) @ S
        out.append(
            ConeConstraint(
                z=B.T @ (S.T @ a_z),
                alpha=float(a_z @ Sw0),
                G=B.T @ Pi @ B,
                gamma=2.0 * (B.T @ (Pi @ w0)),
                beta=float(w0 @ Pi @ w0),
                Pi=Pi,
            )
        )
    return out


@dataclass(frozen=True)
class Relaxation:
    rho: float
    W_prime: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class TorqueProgram:
    """Data of one torque-allocation instance.

    Constraint stack order (length r = 2(k + p) + extra rows): per contact the
    linear row then the quadratic row, box upper u_max - u, box lower
    u - u_min, then appended linear extension rows.
    """

    W: np.ndarray
    eq_mat: np.ndarray
    eq_rhs: np.ndarray
    cones: Tuple[ConeConstraint, ...]
    u_min: np.ndarray
    u_max: np.ndarray
    extra_z: np.ndarray = field(default=None)  # (j, p)
    extra_alpha: np.ndarray = field(default=None)  # (j,)
    relaxation: Optional[Relaxation] = None
    n_base_eq: int = -1

    def __post_init__(self):
        p = self.W.shape[0]
        if self.extra_z is None:
            object.__setattr__(self, "extra_z", np.zeros((0, p)))
            object.__setattr__(self, "extra_alpha", np.zeros(0))
        if self.n_base_eq < 0:
            object.__setattr__(self, "n_base_eq", self.eq_mat.shape[0])

    @property
    def p(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return len(self.cones)

    @property
    def r(self) -> int:
        return 2 * (self.k + self.p) + self.extra_z.shape[0]

    @property
    def relaxed(self) -> bool:
        return self.relaxation is not None

    # objective in the active mode (power, or power + rho ||d||^2 expansion)
    def objective_quad(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.relaxation is not None:
            return self.relaxation.W_prime, -self.relaxation.rho * self.relaxation.b
        return self.W, np.zeros(self.p)

    def objective(self, u: np.ndarray) -> float:
        Wq, lin = self.objective_quad()
        return float(u @ Wq @ u + lin @ u)

    def constraint_values(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        vals = np.empty(self.r)
        i = 0
        for c in self.cones:
            vals[i] = c.z @ u + c.alpha
            vals[i + 1] = u @ c.G @ u + c.gamma @ u + c.beta
            i += 2
        vals[i : i + self.p] = self.u_max - u
        i += self.p
        vals[i : i + self.p] = u - self.u_min
        i += self.p
        if self.extra_z.shape[0]:
            vals[i:] = self.extra_z @ u + self.extra_alpha
        return vals

    def constraint_gradients(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        grads = np.zeros((self.r, self.p))
        i = 0
        for c in self.cones:
            grads[i] = c.z
            grads[i + 1] = 2.0 * (c.G @ u) + c.gamma
            i += 2
        grads[i : i + self.p] = -np.eye(self.p)
        i += self.p
        grads[i : i + self.p] = np.eye(self.p)
        i += self.p
        if self.extra_z.shape[0]:
            grads[i:] = self.extra_z
        return grads

    def quad_indices(self) -> List[int]:
        return [2 * j + 1 for j in range(self.k)]

    def scale(self) -> float:
        s = max(1.0, float(np.abs(self.u_max - self.u_min).max()))
        for c in self.cones:
            s = max(s, abs(c.alpha), abs(c.beta))
        return s


def assemble_program(
    model: RobotModel,
    state: RobotState,
    frame: ConstraintFrame,
    tau_c: np.ndarray,
    cones: Optional[Sequence[ConeConstraint]] = None,
    tau_c_tol: float = 1e-8,
) -> TorqueProgram:
    """Bundle the equality map, cone rows and torque box into a program.

    tau_c must lie in the admissible force space (range of P).
    """
    tau_c = np.asarray(tau_c, dtype=float)
    if tau_c.shape != (model.n,):
        raise InputError(f"tau_c must have shape ({model.n},)")
    off = np.linalg.norm((np.eye(model.n) - frame.P) @ tau_c)
    if off > tau_c_tol * max(1.0, np.linalg.norm(tau_c)):
        raise InputError(f"tau_c has a component outside range(P): {off:.3e}")
    cones = list(cones) if cones is not None else assemble_cone_constraints(model, state, frame)
    return TorqueProgram(
        W=motor_weighting(model.motor_resistance, model.torque_constant),
        eq_mat=frame.P @ model.actuation,
        eq_rhs=tau_c,
        cones=tuple(cones),
        u_min=model.u_min.copy(),
        u_max=model.u_max.copy(),
    )


def relax_program(program: TorqueProgram, frame: ConstraintFrame, rho: float) -> TorqueProgram:
    """Replace the equality by the trade-off objective u^T W' u - rho b^T u.

    W' = W + rho B'^T Minv2 B' and b = 2 B'^T Minv2 tau_c with B' = P B and
    Minv2 = M_bar^-2, the exact expansion of ||u||_W^2 + rho ||d(u)||^2 up to
    a constant.
    """
    if rho <= 0:
        raise InputError("rho must be positive")
    Minv2 = frame.M_bar_inv @ frame.M_bar_inv
    E = program.eq_mat  # P B
    W_prime = program.W + rho * (E.T @ Minv2 @ E)
    W_prime = 0.5 * (W_prime + W_prime.T)
    b = 2.0 * (E.T @ (Minv2 @ program.eq_rhs))
    return replace(
        program,
        relaxation=Relaxation(rho=float(rho), W_prime=W_prime, b=b),
        eq_mat=np.zeros((0, program.p)),
        eq_rhs=np.zeros(0),
    )


def add_moment_constraints(
    program: TorqueProgram,
    frame: ConstraintFrame,
    model: RobotModel,
    state: RobotState,
    selector: np.ndarray,
) -> TorqueProgram:
    """Append rows enforcing selected multiplier combinations to be <= 0.

    selector maps the stacked multipliers to the moments of interest
    (lambda_m = selector @ lambda); each appended row is -lambda_m(u) >= 0.
    """
    selector = np.atleast_2d(np.asarray(selector, dtype=float))
    m = frame.bundle.m
    if selector.shape[0] == 0:
        return program
    if selector.shape[1] != m:
        raise InputError(f"selector must have {m} columns, got {selector.shape[1]}")
    T = selector @ frame.bundle.A_pinv.T @ frame.S  # rows x n
    w0 = frame.tau_g - frame.Q @ state.q_dot
    z_new = -(T @ model.actuation)
    alpha_new = -(T @ w0)
    return replace(
        program,
        extra_z=np.vstack([program.extra_z, z_new]),
        extra_alpha=np.concatenate([program.extra_alpha, alpha_new]),
    )


def add_force_regulation(
    program: TorqueProgram,
    frame: ConstraintFrame,
    model: RobotModel,
    state: RobotState,
    selector: np.ndarray,
    lambda_desired: np.ndarray,
) -> TorqueProgram:
    """Append equality rows pinning selected multipliers to desired values.

    lambda_e(u) = selector @ lambda(u) = lambda_desired joins the equality
    block; infeasible targets surface as infeasible_equality at solve time.
    """
    selector = np.atleast_2d(np.asarray(selector, dtype=float))
    lambda_desired = np.atleast_1d(np.asarray(lambda_desired, dtype=float))
    m = frame.bundle.m
    if selector.shape[1] != m:
        raise InputError(f"selector must have {m} columns, got {selector.shape[1]}")
    if lambda_desired.shape != (selector.shape[0],):
        raise InputError("lambda_desired length must match selector row count")
    T = selector @ frame.bundle.A_pinv.T @ frame.S
    w0 = frame.tau_g - frame.Q @ state.q_dot
    F = T @ model.actuation
    rhs = lambda_desired - T @ w0
    return replace(
        program,
        eq_mat=np.vstack([program.eq_mat, F]),
        eq_rhs=np.concatenate([program.eq_rhs, rhs]),
        n_base_eq=program.n_base_eq,
    )


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class BarrierParams:
    """Interior-point parameters (defaults follow standard practice)."""

    eta0: float = 1.0
    kappa: float = 0.2
    eps: float = 1e-8
    newton_tol: float = 1e-10
    max_newton: int = 100
    max_centering: int = 80
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    margin_scale: float = 1e-9
    phase1_max_iter: int = 600


@dataclass(frozen=True)
class PhaseOneResult:
    u: np.ndarray
    feasible: bool
    margin: float
    iters: int


@dataclass(frozen=True)
class SolverReport:
    u_star: Optional[np.ndarray]
    omega: Optional[np.ndarray]
    eta_final: float
    newton_iters: int
    centering_steps: int
    duality_gap: float
    objective: float
    kkt_residual: float
    constraint_margins: Optional[np.ndarray]
    status: str
    regularized: bool = False
    path: Tuple[Tuple[float, float], ...] = ()


def _strictly_feasible(program: TorqueProgram, u: np.ndarray, margin: float) -> bool:
    return bool(np.all(program.constraint_values(u) > margin))


def phase1_feasible_point(
    program: TorqueProgram,
    params: Optional[BarrierParams] = None,
    u_seed: Optional[np.ndarray] = None,
) -> PhaseOneResult:
    """Find a strictly feasible start, or certify that none exists.

    Tries cheap candidates first (the seed, the least-squares equality
    solution, B^T tau_c via the equality data, the box center), then descends
    a smoothed max of the violated constraints; afterwards it pulls toward the
    equality set while preserving strict feasibility.
    """
    params = params or BarrierParams()
    margin = params.margin_scale * program.scale()
    p = program.p
    center = 0.5 * (program.u_min + program.u_max)
    if np.any(program.u_max - program.u_min <= 2 * margin):
        return PhaseOneResult(u=center, feasible=False, margin=float("-inf"), iters=0)

    candidates = []
    if u_seed is not None:
        candidates.append(np.asarray(u_seed, dtype=float))
    if program.eq_mat.shape[0]:
        sol, *_ = np.linalg.lstsq(program.eq_mat, program.eq_rhs, rcond=None)
        candidates.append(sol)
        candidates.append(program.eq_mat.T @ program.eq_rhs)
    candidates.append(center)
    candidates.append(np.zeros(p))

    best = None
    best_margin = -np.inf
    for cand in candidates:
        cand = np.clip(cand, program.u_min + 2 * margin, program.u_max - 2 * margin)
        worst = float(program.constraint_values(cand).min())
        if worst > best_margin:
            best, best_margin = cand, worst
        if worst > 2 * margin:
            u = _equality_pull(program, cand, margin)
            return PhaseOneResult(u=u, feasible=True, margin=float(program.constraint_values(u).min()), iters=0)

    # smoothed-max descent on f(u) = s * log sum exp(-c_i(u)/s)
    u = best.copy()
    s = max(0.05 * program.scale(), 10 * margin)
    iters = 0
    for iters in range(1, params.phase1_max_iter + 1):
        c = program.constraint_values(u)
        worst = float(c.min())
        if worst > 2 * margin:
            break
        w = np.exp(-(c - c.min()) / s)
        w /= w.sum()
        grad = -(program.constraint_gradients(u).T @ w)
        gnorm2 = float(grad @ grad)
        if gnorm2 <= 1e-24:
            break
        step = min(1.0, program.scale() / np.sqrt(gnorm2))
        f0 = -worst
        improved = False
        for _ in range(40):
            u_try = u - step * grad
            f_try = -float(program.constraint_values(u_try).min())
            # sufficient decrease, so a narrow feasible dip is not stepped over
            if f_try <= f0 - 0.25 * step * gnorm2:
                u = u_try
                improved = True
                break
            step *= 0.5
        if not improved:
            if s > 1e-6 * program.scale():
                s *= 0.2
            else:
                break
    c = program.constraint_values(u)
    worst = float(c.min())
    if worst <= margin:
        return PhaseOneResult(u=u, feasible=False, margin=worst, iters=iters)
    u = _equality_pull(program, u, margin)
    return PhaseOneResult(u=u, feasible=True, margin=float(program.constraint_values(u).min()), iters=iters)


def _equality_pull(program: TorqueProgram, u: np.ndarray, margin: float) -> np.ndarray:
    """Reduce ||eq_mat u - eq_rhs|| while keeping strict inequality margin."""
    if program.eq_mat.shape[0] == 0:
        return u
    for _ in range(60):
        resid = program.eq_rhs - program.eq_mat @ u
        if np.linalg.norm(resid) <= 1e-12:
            break
        du, *_ = np.linalg.lstsq(program.eq_mat, resid, rcond=None)
        t = 1.0
        moved = False
        for _ in range(30):
            u_try = u + t * du
            if program.constraint_values(u_try).min() > 0.5 * margin:
                u = u_try
                moved = True
                break
            t *= 0.5
        if not moved or t < 1e-9:
            break
    return u


def _barrier_terms(program: TorqueProgram, u: np.ndarray, eta: float):
    """Value may be +inf outside the domain; gradient/Hessian assume interior."""
    Wq, lin = program.objective_quad()
    c = program.constraint_values(u)
    grads = program.constraint_gradients(u)
    grad = 2.0 * (Wq @ u) + lin - eta * (grads.T @ (1.0 / c))
    H = 2.0 * Wq + eta * (grads.T @ np.diag(1.0 / c**2) @ grads)
    for j, row in zip(program.quad_indices(), program.cones):
        H -= (eta / c[j]) * (2.0 * row.G)
    return c, grad, H


def barrier_value(program: TorqueProgram, u: np.ndarray, eta: float) -> float:
    """psi(u, eta) = objective(u) - eta sum_i log c_i(u); +inf outside."""
    u = np.asarray(u, dtype=float)
    c = program.constraint_values(u)
    if np.any(c <= 0):
        return np.inf
    return program.objective(u) - eta * float(np.log(c).sum())


def barrier_gradient(program: TorqueProgram, u: np.ndarray, eta: float) -> np.ndarray:
    """Gradient of the barrier objective at an interior point."""
    u = np.asarray(u, dtype=float)
    _, grad, _ = _barrier_terms(program, u, eta)
    return grad


def _regularize(H: np.ndarray, Z: Optional[np.ndarray]) -> Tuple[np.ndarray, bool]:
    """Add tau I until H is positive-definite on the null space spanned by Z."""
    Hr = 0.5 * (H + H.T)
    probe = Hr if Z is None else Z.T @ Hr @ Z
    if probe.size == 0:
        return Hr, False
    lo = float(np.linalg.eigvalsh(probe).min())
    floor = 1e-8 * max(1.0, float(np.abs(Hr).max()))
    if lo >= floor:
        return Hr, False
    tau = floor - lo
    return Hr + tau * np.eye(Hr.shape[0]), True


def solve_barrier(
    program: TorqueProgram,
    params: Optional[BarrierParams] = None,
    u0: Optional[np.ndarray] = None,
) -> SolverReport:
    """Follow the central path to the program's solution.

    For each eta, an infeasible-start Newton method solves the barrier
    problem's KKT system in (u, omega); eta then shrinks by kappa until the
    duality-gap bound r*eta falls below eps.  Backtracking keeps every iterate
    strictly inside c(u) > 0.
    """
    params = params or BarrierParams()
    p = program.p
    r = program.r
    margin = params.margin_scale * program.scale()

    def failure(status, u=None):
        return SolverReport(
            u_star=u,
            omega=None,
            eta_final=float("nan"),
            newton_iters=0,
            centering_steps=0,
            duality_gap=float("inf"),
            objective=float("nan") if u is None else power_loss(u, program.W),
            kkt_residual=float("inf"),
            constraint_margins=None if u is None else program.constraint_values(u),
            status=status,
        )

    # reduce the equality block to full row rank and test consistency
    n_eq = program.eq_mat.shape[0]
    if n_eq:
        U, s, Vt = np.linalg.svd(program.eq_mat)
        smax = s[0] if s.size and s[0] > 0 else 1.0
        rank = int(np.sum(s > 1e-10 * smax))
        U1 = U[:, :rank]
        E = U1.T @ program.eq_mat
        rhs = U1.T @ program.eq_rhs
        resid = program.eq_rhs - U1 @ (U1.T @ program.eq_rhs)
        if np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(program.eq_rhs)):
            return failure("infeasible_equality")
        Z = Vt[rank:].T if rank < p else None
        lift = U1
    else:
        E = np.zeros((0, p))
        rhs = np.zeros(0)
        Z = np.eye(p)
        lift = None
        rank = 0

    if u0 is None or not _strictly_feasible(program, np.asarray(u0, dtype=float), margin):
        phase1 = phase1_feasible_point(program, params, u_seed=u0)
        if not phase1.feasible:
            rep = failure("infeasible_inequality", u=phase1.u)
            return replace(rep, constraint_margins=program.constraint_values(phase1.u))
        u = phase1.u
    else:
        u = np.asarray(u0, dtype=float).copy()

    nu_dual = np.zeros(rank)
    eta = params.eta0
    total_newton = 0
    centering = 0
    regularized = False
    path: List[Tuple[float, float]] = []
    kkt_res = float("inf")

    while True:
        converged = False
        for _ in range(params.max_newton):
            _, grad, H = _barrier_terms(program, u, eta)
            r_dual = grad + (E.T @ nu_dual if rank else 0.0)
            r_pri = E @ u - rhs if rank else np.zeros(0)
            kkt_res = float(np.linalg.norm(np.concatenate([np.atleast_1d(r_dual), r_pri])))
            if kkt_res <= params.newton_tol:
                converged = True
                break
            Hr, reg = _regularize(H, Z)
            regularized = regularized or reg
            if rank:
                KKT = np.block([[Hr, E.T], [E, np.zeros((rank, rank))]])
                rhs_vec = -np.concatenate([r_dual, r_pri])
                try:
                    sol = np.linalg.solve(KKT, rhs_vec)
                except np.linalg.LinAlgError:
                    sol, *_ = np.linalg.lstsq(KKT, rhs_vec, rcond=None)
                du, dnu = sol[:p], sol[p:]
            else:
                try:
                    du = np.linalg.solve(Hr, -r_dual)
                except np.linalg.LinAlgError:
                    du, *_ = np.linalg.lstsq(Hr, -r_dual, rcond=None)
                dnu = np.zeros(0)

            # backtracking: stay strictly feasible, then Armijo on the residual
            t = 1.0
            accepted = False
            while t > 1e-14:
                u_try = u + t * du
                if not _strictly_feasible(program, u_try, 0.0):
                    t *= params.ls_beta
                    continue
                nu_try = nu_dual + t * dnu
                _, grad_t, _ = _barrier_terms(program, u_try, eta)
                rd_t = grad_t + (E.T @ nu_try if rank else 0.0)
                rp_t = E @ u_try - rhs if rank else np.zeros(0)
                res_t = np.linalg.norm(np.concatenate([np.atleast_1d(rd_t), rp_t]))
                if res_t <= (1.0 - params.ls_alpha * t) * kkt_res + 1e-16:
                    u, nu_dual = u_try, nu_try
                    accepted = True
                    break
                t *= params.ls_beta
            total_newton += 1
            if not accepted:
                break
        centering += 1
        path.append((eta, power_loss(u, program.W)))
        if not converged:
            # round-off floor on badly scaled instances: accept when the
            # residual is small relative to the objective gradient magnitude
            Wq, lin = program.objective_quad()
            grad_scale = max(1.0, float(np.linalg.norm(2.0 * (Wq @ u) + lin)))
            converged = kkt_res <= 1e3 * params.newton_tol * grad_scale
        if not converged:
            return SolverReport(
                u_star=u,
                omega=lift @ nu_dual if lift is not None else None,
                eta_final=eta,
                newton_iters=total_newton,
                centering_steps=centering,
                duality_gap=r * eta,
                objective=power_loss(u, program.W),
                kkt_residual=kkt_res,
                constraint_margins=program.constraint_values(u),
                status="failed",
                regularized=regularized,
                path=tuple(path),
            )
        if r * eta <= params.eps or centering >= params.max_centering:
            break
        eta *= params.kappa

    status = "relaxed" if program.relaxed else "optimal"
    return SolverReport(
        u_star=u,
        omega=lift @ nu_dual if lift is not None else np.zeros(program.eq_mat.shape[0]),
        eta_final=eta,
        newton_iters=total_newton,
        centering_steps=centering,
        duality_gap=r * eta,
        objective=power_loss(u, program.W),
        kkt_residual=kkt_res,
        constraint_margins=program.constraint_values(u),
        status=status,
        regularized=regularized,
        path=tuple(path),
    )
