import numpy as np
import pytest

from projctl.constrained_dynamics import (
    RobotState,
    build_frame,
    cone_margins,
    constrained_accel,
    contact_forces,
)
from projctl.constraint_geometry import null_projector
from projctl.errors import InputError

from conftest import ARM_HOME, BIPED_HOME, manifold_state, point_mass_model, random_manifold_state
from oracles import integrate_saddle, saddle_point_state


def toy_model(M, A_block, n=None):
    """Inline model with constant inertia and a constant 3-row contact."""
    from projctl.constrained_dynamics import ContactSpec, RobotModel

    n = n or M.shape[0]
    block = np.zeros((3, n))
    block[: A_block.shape[0], :] = A_block
    contact = ContactSpec(
        jacobian=lambda q: block,
        jacobian_rate=lambda q, qd: np.zeros((3, n)),
        friction=0.5,
    )
    return RobotModel(
        n=n,
        p=n,
        mass_matrix=lambda q: M,
        coriolis_matrix=lambda q, qd: np.zeros((n, n)),
        gravity=lambda q: np.zeros(n),
        actuation=np.eye(n),
        contacts=(contact,),
        u_min=-10 * np.ones(n),
        u_max=10 * np.ones(n),
        motor_resistance=np.ones(n),
        torque_constant=np.ones(n),
    )


class TestBuildFrame:
    def test_no_contacts_reduces_to_plain_dynamics(self, arm):
        state = RobotState(t=0.0, q=ARM_HOME, q_dot=np.array([0.1, 0.2, -0.1]), active_contacts=())
        frame = build_frame(arm, state)
        assert np.allclose(frame.M_bar, frame.M, atol=1e-12)
        assert np.allclose(frame.C_bar, frame.C, atol=1e-12)
        assert np.allclose(frame.S, 0.0, atol=1e-12)

    def test_fully_constrained(self):
        model = point_mass_model()
        state = RobotState(t=0.0, q=np.zeros(3), q_dot=np.zeros(3), active_contacts=(0,))
        frame = build_frame(model, state, nu=1.0)
        assert np.allclose(frame.P, 0.0, atol=1e-12)
        assert np.allclose(frame.M_bar, np.eye(3), atol=1e-12)
        assert np.allclose(frame.S, np.eye(3), atol=1e-12)

    def test_hand_example(self):
        # M = diag(2, 3), single row [1, 0], nu = 1 -> P = diag(0, 1), M_bar = diag(1, 3)
        model = toy_model(np.diag([2.0, 3.0]), np.array([[1.0, 0.0]]))
        state = RobotState(t=0.0, q=np.zeros(2), q_dot=np.zeros(2), active_contacts=(0,))
        frame = build_frame(model, state, nu=1.0)
        assert np.allclose(frame.P, np.diag([0.0, 1.0]), atol=1e-12)
        assert np.allclose(frame.M_bar, np.diag([1.0, 3.0]), atol=1e-12)

    def test_bad_nu(self, arm):
        state = RobotState(t=0.0, q=ARM_HOME, q_dot=np.zeros(3), active_contacts=(0,))
        with pytest.raises(InputError):
            build_frame(arm, state, nu=-1.0)


class TestInertiaProperties:
    def test_random_matrix_suite(self, rng):
        # positive definiteness, norm bound and the spectrum union property
        for _ in range(300):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 5))
            G = rng.standard_normal((n, n))
            M = G.T @ G + 0.1 * np.eye(n)
            A = rng.standard_normal((m, n))
            if rng.random() < 0.25 and m >= 2:
                A[-1] = 2.0 * A[0]
            nu = float(rng.uniform(0.2, 5.0))
            bundle = null_projector(A)
            P = bundle.P
            r = bundle.rank
            M_bar = P @ M @ P + nu * (np.eye(n) - P)
            M_bar = 0.5 * (M_bar + M_bar.T)
            eig = np.linalg.eigvalsh(M_bar)
            assert eig.min() > 0
            assert np.linalg.norm(M_bar, 2) <= max(nu, np.linalg.norm(M, 2)) + 1e-12

            pm = np.linalg.eigvalsh(P @ M @ P)
            expected = np.sort(np.concatenate([np.full(r, nu), pm[n - (n - r):][-(n - r):] if n > r else np.empty(0)]))
            expected = np.sort(np.concatenate([np.full(r, nu), np.sort(pm)[r:]]))
            assert np.allclose(np.sort(eig), expected, atol=1e-8)

            # lower bound: min eig >= min(nu, smallest eigenvalue of M on null(A))
            if n > r:
                _, _, Vt = np.linalg.svd(A)
                Z = Vt[np.linalg.matrix_rank(A):].T
                if Z.shape[1] == n - r:
                    bound = min(nu, np.linalg.eigvalsh(Z.T @ M @ Z).min())
                    assert eig.min() >= bound - 1e-9

    def test_mbar_rate_skew_on_models(self, arm, biped, rng):
        # h = 1e-5 balances truncation against difference-quotient roundoff
        h = 1e-5
        cases = [(arm, ARM_HOME, None), (biped, BIPED_HOME, None)]
        for model, home, _ in cases:
            for _ in range(20):
                state = random_manifold_state(model, rng, home, spread=0.15)
                nu = float(np.trace(model.mass_matrix(state.q)) / model.n)

                def mbar(q, qd):
                    s = RobotState(t=0.0, q=q, q_dot=qd, active_contacts=state.active_contacts)
                    return build_frame(model, s, nu=nu).M_bar

                frame = build_frame(model, state, nu=nu)
                step = h * state.q_dot
                Md = (mbar(state.q + step, state.q_dot) - mbar(state.q - step, state.q_dot)) / (2 * h)
                D = Md - 2.0 * frame.C_bar
                assert np.abs(D + D.T).max() <= 1e-8

    def test_oblique_projector_identities(self, arm, biped, rng):
        witnessed_nonsymmetric = False
        for model, home in ((arm, ARM_HOME), (biped, BIPED_HOME)):
            for _ in range(15):
                state = random_manifold_state(model, rng, home, spread=0.2)
                frame = build_frame(model, state)
                S, P, M_bar = frame.S, frame.P, frame.M_bar
                assert np.abs(S @ S - S).max() <= 1e-10
                assert np.abs(P @ M_bar - M_bar @ P).max() <= 1e-10
                if np.abs(S - S.T).max() > 1e-6:
                    witnessed_nonsymmetric = True
        assert witnessed_nonsymmetric


class TestConstrainedAccel:
    def test_static_equilibrium(self):
        model = point_mass_model()
        state = RobotState(t=0.0, q=np.zeros(3), q_dot=np.zeros(3), active_contacts=(0,))
        frame = build_frame(model, state, nu=1.0)
        qdd = constrained_accel(frame, model, state, np.zeros(3))
        assert np.allclose(qdd, 0.0, atol=1e-12)

    def test_free_motion(self, arm):
        state = RobotState(t=0.0, q=ARM_HOME, q_dot=np.zeros(3), active_contacts=())
        frame = build_frame(arm, state)
        u = np.array([1.0, -2.0, 0.5])
        qdd = constrained_accel(frame, arm, state, u)
        M = arm.mass_matrix(state.q)
        expected = np.linalg.solve(M, u + arm.gravity(state.q))
        assert np.allclose(qdd, expected, atol=1e-10)

    def test_matches_saddle_point_oracle(self, arm, biped, rng):
        for model, home in ((arm, ARM_HOME), (biped, BIPED_HOME)):
            for _ in range(25):
                state = random_manifold_state(model, rng, home, spread=0.2)
                u = rng.uniform(model.u_min, model.u_max)
                frame = build_frame(model, state)
                qdd = constrained_accel(frame, model, state, u)
                qdd_oracle, _ = saddle_point_state(model, state, u)
                assert np.abs(qdd - qdd_oracle).max() <= 1e-8

    def test_orthogonal_component_is_omega_qdot(self, arm, rng):
        for _ in range(20):
            state = random_manifold_state(arm, rng, ARM_HOME, spread=0.2)
            u = rng.uniform(arm.u_min, arm.u_max)
            frame = build_frame(arm, state)
            qdd = constrained_accel(frame, arm, state, u)
            lhs = (np.eye(arm.n) - frame.P) @ qdd
            rhs = frame.bundle.Omega @ state.q_dot
            assert np.abs(lhs - rhs).max() <= 1e-8


class TestContactForces:
    def test_zero_case(self):
        model = toy_model(np.diag([1.0, 1.0]), np.array([[1.0, 0.0]]))
        state = RobotState(t=0.0, q=np.zeros(2), q_dot=np.zeros(2), active_contacts=(0,))
        frame = build_frame(model, state, nu=1.0)
        wrench = contact_forces(frame, model, state, np.zeros(2))
        assert np.allclose(wrench.forces, 0.0, atol=1e-12)

    def test_point_mass_statics(self):
        mass, g = 2.0, 9.81
        model = point_mass_model(mass=mass, g=g)
        state = RobotState(t=0.0, q=np.zeros(3), q_dot=np.zeros(3), active_contacts=(0,))
        frame = build_frame(model, state, nu=1.0)
        wrench = contact_forces(frame, model, state, np.zeros(3))
        assert np.allclose(wrench.forces, [0.0, 0.0, mass * g], atol=1e-10)
        assert wrench.margins[0] > 0
        assert not wrench.degenerate

    def test_matches_saddle_point_oracle(self, arm, biped, rng):
        for model, home in ((arm, ARM_HOME), (biped, BIPED_HOME)):
            for _ in range(30):
                state = random_manifold_state(model, rng, home, spread=0.2)
                u = rng.uniform(model.u_min, model.u_max)
                frame = build_frame(model, state)
                wrench = contact_forces(frame, model, state, u)
                _, lam_oracle = saddle_point_state(model, state, u)
                assert np.abs(wrench.forces - lam_oracle).max() <= 1e-8

    def test_planar_stack_flagged_degenerate(self, arm, rng):
        state = random_manifold_state(arm, rng, ARM_HOME)
        frame = build_frame(arm, state)
        wrench = contact_forces(frame, arm, state, np.zeros(3))
        assert wrench.degenerate  # the y row of a planar contact is zero

    def test_requires_active_contacts(self, arm):
        state = RobotState(t=0.0, q=ARM_HOME, q_dot=np.zeros(3), active_contacts=())
        frame = build_frame(arm, state)
        with pytest.raises(InputError):
            contact_forces(frame, arm, state, np.zeros(3))


class TestProjectedEquationOfMotion:
    def test_residual_along_oracle_trajectory(self, arm):
        # P (M qdd + C qd - B u - tau_g) = 0 along a saddle-point-integrated run
        q0 = ARM_HOME.copy()
        P0 = null_projector(arm.contact_stack(q0, (0,))).P
        qd0 = P0 @ np.array([0.4, -0.2, 0.3])
        u_fn = lambda t, q, qd: np.array([0.5 * np.sin(3 * t), -0.3, 0.2])
        traj = integrate_saddle(arm, q0, qd0, (0,), u_fn, 1e-3, 300)
        t = 0.0
        for q, qd in traj[:: 30]:
            state = RobotState(t=t, q=q, q_dot=qd, active_contacts=(0,))
            u = u_fn(t, q, qd)
            qdd, _ = saddle_point_state(arm, state, u)
            res = null_projector(arm.contact_stack(q, (0,))).P @ (
                arm.mass_matrix(q) @ qdd
                + arm.coriolis_matrix(q, qd) @ qd
                - arm.actuation @ u
                - arm.gravity(q)
            )
            assert np.abs(res).max() <= 1e-8
            t += 30 * 1e-3


def test_cone_margin_helper():
    forces = np.array([3.0, 4.0, 10.0])
    assert np.isclose(cone_margins(forces, np.array([0.8]))[0], 0.8 * 10.0 - 5.0)
