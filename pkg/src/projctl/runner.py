"""Scenario configs, run orchestration and report/trace output.

A scenario is one JSON document (see configs/ for bundled examples):

    {
      "model":         {"type": "planar_arm", "params": {...}},
      "initial_state": {"q": [...], "q_dot": [...], "active_contacts": [0]},
      "task":          {"type": "link_orientation",
                        "reference": {"type": "sinusoid", "center": [...],
                                       "amplitude": [...], "frequency": [...],
                                       "phase": [...]}},
      "controller":    {"type": "tracking", "gains": {"omega": 5.0}},
      "optimizer":     {"type": "qcqp", "eta0": 1.0, "kappa": 0.2,
                        "eps": 1e-8, "rho": 10.0},
      "contacts":      {"schedule": [[1.0, [0]], [1.3, [0, 1]]]},
      "integrator":    {"dt": 0.001, "method": "rk4", "baumgarte": false},
      "duration":      5.0,
      "output":        {"dir": "out", "prefix": "arm_tracking"}
    }

Validation errors carry the offending field path.  Outputs (trace CSV plus a
JSON run report) are written atomically and contain no timestamps, so a fixed
config produces byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .constrained_dynamics import RobotState
from .control_laws import ControllerGains
from .errors import ConfigError, InputError
from .models import build_model, make_task
from .simulate import (
    IntegratorOptions,
    OptimizerSpec,
    Reference,
    Scenario,
    SimTrace,
    constant_reference,
    simulate,
    sinusoid_reference,
)
from .torque_qcqp import BarrierParams


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return cfg[key]


def _as_number(value, path: str, positive=False) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value}")
    return float(value)


def _as_vector(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(path, "expected a list of numbers")
    return np.asarray(value, dtype=float)


def _gain_matrix(value, dim: int, path: str) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(dim)
    if isinstance(value, list):
        M = np.asarray(value, dtype=float)
        if M.shape == (dim, dim):
            return M
    raise ConfigError(path, f"expected a scalar or {dim}x{dim} matrix")


def _build_reference(cfg: dict, dim: int, path: str) -> Reference:
    kind = _require(cfg, "type", path)
    if kind == "constant":
        value = _as_vector(_require(cfg, "value", path), f"{path}.value")
        if value.size != dim:
            raise ConfigError(f"{path}.value", f"expected {dim} entries")
        return constant_reference(value)
    if kind == "sinusoid":
        center = _as_vector(_require(cfg, "center", path), f"{path}.center")
        if center.size != dim:
            raise ConfigError(f"{path}.center", f"expected {dim} entries")
        amp = _as_vector(_require(cfg, "amplitude", path), f"{path}.amplitude")
        freq = _as_vector(_require(cfg, "frequency", path), f"{path}.frequency")
        phase = cfg.get("phase")
        phase = _as_vector(phase, f"{path}.phase") if phase is not None else None
        return sinusoid_reference(center, amp, freq, phase)
    raise ConfigError(f"{path}.type", f"unknown reference type '{kind}'")


def _build_optimizer(cfg: dict, kind: str, path: str) -> OptimizerSpec:
    barrier = BarrierParams(
        eta0=_as_number(cfg.get("eta0", 1.0), f"{path}.eta0", positive=True),
        kappa=_as_number(cfg.get("kappa", 0.2), f"{path}.kappa", positive=True),
        eps=_as_number(cfg.get("eps", 1e-8), f"{path}.eps", positive=True),
        newton_tol=_as_number(cfg.get("newton_tol", 1e-10), f"{path}.newton_tol", positive=True),
    )
    if barrier.kappa >= 1.0:
        raise ConfigError(f"{path}.kappa", "decrement must satisfy 0 < kappa < 1")
    rho = _as_number(cfg.get("rho", 10.0), f"{path}.rho", positive=True)
    try:
        return OptimizerSpec(kind=kind, barrier=barrier, rho=rho)
    except InputError as exc:
        raise ConfigError(f"{path}.type", str(exc)) from None


def load_scenario(cfg: dict, name: str = "scenario", optimizer_kind: Optional[str] = None) -> Scenario:
    """Turn a parsed config document into a runnable Scenario."""
    if not isinstance(cfg, dict):
        raise ConfigError("", "config root must be an object")

    mcfg = _require(cfg, "model", "")
    kind = _require(mcfg, "type", "model")
    try:
        model = build_model(kind, mcfg.get("params", {}))
    except (InputError, TypeError) as exc:
        raise ConfigError("model.params", str(exc)) from None

    scfg = _require(cfg, "initial_state", "")
    q = _as_vector(_require(scfg, "q", "initial_state"), "initial_state.q")
    q_dot = _as_vector(_require(scfg, "q_dot", "initial_state"), "initial_state.q_dot")
    if q.size != model.n or q_dot.size != model.n:
        raise ConfigError("initial_state.q", f"model '{kind}' has n={model.n} coordinates")
    active = tuple(int(i) for i in scfg.get("active_contacts", []))
    if any(i < 0 or i >= model.k for i in active):
        raise ConfigError("initial_state.active_contacts", f"contact indices must be in [0, {model.k})")
    initial = RobotState(t=0.0, q=q, q_dot=q_dot, active_contacts=active)

    tcfg = _require(cfg, "task", "")
    ttype = _require(tcfg, "type", "task")
    try:
        task = make_task(model, ttype, **({"indices": tcfg["indices"]} if "indices" in tcfg else {}))
    except (InputError, KeyError) as exc:
        raise ConfigError("task.type", str(exc)) from None
    reference = _build_reference(_require(tcfg, "reference", "task"), task.dim, "task.reference")

    ccfg = _require(cfg, "controller", "")
    ctype = _require(ccfg, "type", "controller")
    if ctype not in ("tracking", "regulation"):
        raise ConfigError("controller.type", f"unknown controller '{ctype}'")
    gcfg = _require(ccfg, "gains", "controller")
    if "omega" in gcfg:
        omega = _as_number(gcfg["omega"], "controller.gains.omega", positive=True)
        if ctype == "tracking":
            gains = ControllerGains.critically_damped(task.dim, omega)
        else:
            gains = ControllerGains(
                K_P=omega**2 * np.eye(task.dim), K_D=2.0 * omega * np.eye(model.n)
            )
    else:
        kp = _gain_matrix(_require(gcfg, "kp_task", "controller.gains"), task.dim, "controller.gains.kp_task")
        if ctype == "tracking":
            kd = _gain_matrix(_require(gcfg, "kd_task", "controller.gains"), task.dim, "controller.gains.kd_task")
        else:
            kd = _gain_matrix(_require(gcfg, "kd_joint", "controller.gains"), model.n, "controller.gains.kd_joint")
        gains = ControllerGains(K_P=kp, K_D=kd)

    ocfg = _require(cfg, "optimizer", "")
    if optimizer_kind is None:
        optimizer_kind = _require(ocfg, "type", "optimizer")
        if not isinstance(optimizer_kind, str):
            raise ConfigError("optimizer.type", "expected a string (use 'types' only with compare)")
    optimizer = _build_optimizer(ocfg, optimizer_kind, "optimizer")

    icfg = cfg.get("integrator", {})
    try:
        integrator = IntegratorOptions(
            dt=_as_number(icfg.get("dt", 1e-3), "integrator.dt", positive=True),
            method=icfg.get("method", "rk4"),
            baumgarte=bool(icfg.get("baumgarte", False)),
        )
    except InputError as exc:
        raise ConfigError("integrator", str(exc)) from None

    schedule: List[Tuple[float, Tuple[int, ...]]] = []
    for i, entry in enumerate(cfg.get("contacts", {}).get("schedule", [])):
        p = f"contacts.schedule[{i}]"
        if not isinstance(entry, list) or len(entry) != 2:
            raise ConfigError(p, "expected [time, [contact indices]]")
        t_sw = _as_number(entry[0], f"{p}[0]")
        ids = entry[1]
        if not isinstance(ids, list) or any(not isinstance(j, int) or j < 0 or j >= model.k for j in ids):
            raise ConfigError(f"{p}[1]", f"contact indices must be integers in [0, {model.k})")
        schedule.append((t_sw, tuple(sorted(ids))))

    duration = _as_number(_require(cfg, "duration", ""), "duration", positive=True)
    try:
        return Scenario(
            model=model,
            initial=initial,
            task=task,
            reference=reference,
            controller=ctype,
            gains=gains,
            optimizer=optimizer,
            duration=duration,
            integrator=integrator,
            schedule=tuple(schedule),
            name=name,
        )
    except InputError as exc:
        raise ConfigError("", str(exc)) from None


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# reporting


@dataclass
class ControllerRow:
    optimizer: str
    dissipated_energy: float
    violation_count: int
    final_tracking_error: float
    max_tracking_error: float
    mean_newton_iters: float
    trace_file: str = ""


@dataclass
class RunReport:
    scenario: str
    final_tracking_error: float
    dissipated_energy: float
    violation_count: int
    mean_newton_iters: float
    mean_centering_steps: float
    max_drift: float
    rows: List[ControllerRow] = field(default_factory=list)
    power_dominance_ok: Optional[bool] = None
    exit_status: str = "ok"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def count_violations(trace: SimTrace, u_min, u_max, tol: float = 1e-9) -> int:
    """Steps violating unilaterality, the friction cone or the torque box."""
    bad = 0
    for i in range(trace.steps):
        active = trace.active[i]
        cone_bad = False
        for c in active:
            if trace.lam[i, 3 * c + 2] <= tol or trace.margins[i, c] <= tol:
                cone_bad = True
        box_bad = bool(np.any(trace.u[i] < u_min - tol) or np.any(trace.u[i] > u_max + tol))
        if cone_bad or box_bad:
            bad += 1
    return bad


def dissipated_energy(trace: SimTrace) -> float:
    return float(np.trapezoid(trace.p_loss, trace.t))


def build_report(trace: SimTrace, scenario: Scenario) -> RunReport:
    qsteps = trace.newton_iters > 0
    return RunReport(
        scenario=scenario.name,
        final_tracking_error=float(trace.e_norm[-1]),
        dissipated_energy=dissipated_energy(trace),
        violation_count=count_violations(trace, scenario.model.u_min, scenario.model.u_max),
        mean_newton_iters=float(trace.newton_iters[qsteps].mean()) if qsteps.any() else 0.0,
        mean_centering_steps=float(trace.centering[qsteps].mean()) if qsteps.any() else 0.0,
        max_drift=float(trace.drift.max()),
    )


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def output_paths(cfg: dict, out_dir: Optional[str], prefix_default: str) -> Tuple[Path, str]:
    ocfg = cfg.get("output", {})
    directory = Path(out_dir) if out_dir else Path(ocfg.get("dir", "out"))
    prefix = ocfg.get("prefix", prefix_default)
    return directory, prefix


def run_scenario(config_path, out_dir: Optional[str] = None, quiet: bool = False):
    """Run one scenario end to end; writes <prefix>_trace.csv and <prefix>_report.json."""
    cfg = load_config(config_path)
    directory, prefix = output_paths(cfg, out_dir, Path(str(config_path)).stem)
    scenario = load_scenario(cfg, name=prefix)
    trace = simulate(scenario)
    report = build_report(trace, scenario)
    trace_path = directory / f"{prefix}_trace.csv"
    report_path = directory / f"{prefix}_report.json"
    atomic_write(trace_path, trace.to_csv())
    atomic_write(report_path, report.to_json())
    if not quiet:
        print(f"scenario {scenario.name}: final |e| = {report.final_tracking_error:.3e}, "
              f"energy = {report.dissipated_energy:.6f} J, violations = {report.violation_count}")
        print(f"wrote {trace_path} and {report_path}")
    return trace, report, (trace_path, report_path)


def compare_controllers(config_path, out_dir: Optional[str] = None, quiet: bool = False):
    """Run the same scenario under each optimizer named in optimizer.types.

    Reports dissipated energy and violation counts side by side and checks
    power dominance: with every inequality inactive, the power-weighted
    program can never dissipate more than the unweighted least-norm rule.
    """
    cfg = load_config(config_path)
    ocfg = _require(cfg, "optimizer", "")
    kinds = ocfg.get("types")
    if not isinstance(kinds, list) or len(kinds) < 2:
        raise ConfigError("optimizer.types", "compare needs a list of at least two optimizer types")
    directory, prefix = output_paths(cfg, out_dir, Path(str(config_path)).stem)

    rows = []
    traces = {}
    for kind in kinds:
        if not isinstance(kind, str):
            raise ConfigError("optimizer.types", "entries must be strings")
        scenario = load_scenario(cfg, name=f"{prefix}_{kind}", optimizer_kind=kind)
        trace = simulate(scenario)
        traces[kind] = trace
        trace_path = directory / f"{prefix}_{kind}_trace.csv"
        atomic_write(trace_path, trace.to_csv())
        qsteps = trace.newton_iters > 0
        rows.append(
            ControllerRow(
                optimizer=kind,
                dissipated_energy=dissipated_energy(trace),
                violation_count=count_violations(trace, scenario.model.u_min, scenario.model.u_max),
                final_tracking_error=float(trace.e_norm[-1]),
                max_tracking_error=float(trace.e_norm.max()),
                mean_newton_iters=float(trace.newton_iters[qsteps].mean()) if qsteps.any() else 0.0,
                trace_file=str(trace_path),
            )
        )

    dominance = None
    by_kind = {row.optimizer: row for row in rows}
    if "min_norm" in by_kind and "qcqp" in by_kind:
        mn, qc = by_kind["min_norm"], by_kind["qcqp"]
        if mn.violation_count == 0 and qc.violation_count == 0:
            dominance = qc.dissipated_energy <= mn.dissipated_energy * (1 + 1e-9)

    base = rows[0]
    report = RunReport(
        scenario=prefix,
        final_tracking_error=base.final_tracking_error,
        dissipated_energy=base.dissipated_energy,
        violation_count=base.violation_count,
        mean_newton_iters=base.mean_newton_iters,
        mean_centering_steps=0.0,
        max_drift=max(float(traces[k].drift.max()) for k in traces),
        rows=rows,
        power_dominance_ok=dominance,
    )
    report_path = directory / f"{prefix}_compare.json"
    atomic_write(report_path, report.to_json())
    if not quiet:
        for row in rows:
            print(f"{row.optimizer:>12}: energy = {row.dissipated_energy:.6f} J, "
                  f"violations = {row.violation_count}, final |e| = {row.final_tracking_error:.3e}")
        if dominance is not None:
            print(f"power dominance (qcqp <= min_norm): {'ok' if dominance else 'VIOLATED'}")
        print(f"wrote {report_path}")
    return traces, report, report_path
