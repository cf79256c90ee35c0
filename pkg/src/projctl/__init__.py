"""Projection-based dynamics and power-optimal torque allocation.

Constrained rigid-body dynamics through null-space projectors, operational
space control in the admissible motion space, and actuator torque allocation
posed as a log-barrier QCQP that keeps contact forces strictly inside their
friction cones while minimizing motor power loss.
"""

from .constrained_dynamics import (
    ConstraintFrame,
    ContactSpec,
    ContactWrench,
    RobotModel,
    RobotState,
    build_frame,
    constrained_accel,
    contact_forces,
)
from .constraint_geometry import (
    JacobianStack,
    ProjectorBundle,
    jacobian_rate,
    null_projector,
    projector_rate,
    pseudo_inverse,
)
from .control_laws import (
    ControlCommand,
    ControllerGains,
    min_norm_actuation,
    regulation_torque,
    tracking_disturbance,
    tracking_torque,
)
from .errors import (
    ActuationError,
    ConfigError,
    InputError,
    SimulationError,
    SolverError,
    TaskInconsistencyError,
)
from .models import (
    ArmParams,
    BipedParams,
    build_model,
    floating_biped,
    make_task,
    planar_arm_contact,
    standing_pose,
)
from .simulate import (
    IntegratorOptions,
    OptimizerSpec,
    Reference,
    Scenario,
    SimTrace,
    constant_reference,
    simulate,
    sinusoid_reference,
    step,
    switch_contacts,
)
from .task_space import (
    FeasibilityReport,
    TaskDef,
    TaskMap,
    build_task,
    check_feasibility,
    task_accel_decompose,
)
from .torque_qcqp import (
    BarrierParams,
    ConeConstraint,
    SolverReport,
    TorqueProgram,
    add_force_regulation,
    add_moment_constraints,
    assemble_cone_constraints,
    assemble_program,
    motor_weighting,
    phase1_feasible_point,
    power_loss,
    relax_program,
    solve_barrier,
)

__version__ = "0.1.0"
