"""Greedy syndrome-decoding solver loop.

One engine drives both the pure-greedy and the self-tuning modes; they differ
only in how the vertex is selected and how the step size is produced. The
default configuration is the faithful one: H assembled once at x = 0 and kept
frozen, residual s = H x maintained incrementally in O(deg) per step with a
periodic full recomputation for drift control.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateTriangleError, MicroRicciError
from .laplacian import build_cotan_laplacian, inf_norm
from .mesh import gauss_curvature, _check_log_radii

__all__ = [
    "SolveConfig",
    "SolveReport",
    "select_greedy",
    "greedy_step",
    "max_safe_step",
    "solve_greedy",
]

STAGES = ("matvec", "select", "step_predict", "update")


@dataclass
class SolveConfig:
    """Solver knobs.

    epsilon_mode: "safe" (1/||H||inf), "fixed" (use ``epsilon``) or "learned"
    (step size comes from a regressor; only via the self-tuning entry point).
    residual_mode: "syndrome" (s = H x) or "curvature" (s = K(x)).
    h_policy: "frozen" assembles H once at x = 0; "refresh" rebuilds it from
    the current metric every ``refresh_every`` accepted steps.
    select_top_k: optional fast path scoring only the k largest residuals in
    the self-tuning mode; not faithful to the all-vertices loop, off by default.
    """

    epsilon_mode: str = "safe"
    epsilon: float | None = None
    tau: float = 1e-4
    max_steps: int = 1_000_000
    residual_mode: str = "syndrome"
    h_policy: str = "frozen"
    refresh_every: int = 0
    recompute_every: int = 100
    divergence_factor: float = 10.0
    record_energy_every: int = 0
    energy_nodes: int = 16
    clamp_angles: bool = False
    select_top_k: int | None = None
    stall_limit: int = 1000

    def __post_init__(self):
        if self.epsilon_mode not in ("safe", "fixed", "learned"):
            raise ValueError(f"bad epsilon_mode {self.epsilon_mode!r}")
        if self.epsilon_mode == "fixed":
            if self.epsilon is None or self.epsilon <= 0:
                raise ValueError("fixed epsilon_mode needs epsilon > 0")
        if self.tau <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tau}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.residual_mode not in ("syndrome", "curvature"):
            raise ValueError(f"bad residual_mode {self.residual_mode!r}")
        if self.h_policy not in ("frozen", "refresh"):
            raise ValueError(f"bad h_policy {self.h_policy!r}")
        if self.h_policy == "refresh" and self.refresh_every < 1:
            raise ValueError("refresh h_policy needs refresh_every >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    """Everything a solve produced. ``stage_times`` maps each stage name to a
    per-iteration array of nanoseconds; timing is the only non-deterministic
    content and the reporting helpers keep it in a separate subtree."""

    iterations_used: int
    terminated_by: str  # tolerance | max_steps | error
    residual_trace: np.ndarray
    final_x: np.ndarray
    stage_times: dict = field(default_factory=dict)
    energy_trace: np.ndarray | None = None
    energy_every: int = 0
    error: dict | None = None
    initial_residual_inf: float = 0.0
    final_residual_inf: float = 0.0
    final_syndrome_inf: float | None = None
    final_curvature_inf: float | None = None
    epsilon_nominal: float | None = None
    eps_min_applied: float | None = None
    eps_max_applied: float | None = None
    nonmonotone_count: int = 0
    nonmonotone_first: list = field(default_factory=list)
    drift_max: float = 0.0
    clamped_faces: int = 0
    wall_ns: int = 0
    config: SolveConfig | None = None
    mesh_info: dict = field(default_factory=dict)

    def theorem_bound(self):
        """Iteration bound ||s(0)||inf / (eps_min * tau); None if undefined."""
        if not self.eps_min_applied or self.config is None:
            return None
        return self.initial_residual_inf / (self.eps_min_applied * self.config.tau)

    def to_result_dict(self):
        d = {
            "iterations_used": self.iterations_used,
            "terminated_by": self.terminated_by,
            "initial_residual_inf": self.initial_residual_inf,
            "final_residual_inf": self.final_residual_inf,
            "final_syndrome_inf": self.final_syndrome_inf,
            "final_curvature_inf": self.final_curvature_inf,
            "epsilon_nominal": self.epsilon_nominal,
            "eps_min_applied": self.eps_min_applied,
            "eps_max_applied": self.eps_max_applied,
            "theorem_bound": self.theorem_bound(),
            "nonmonotone_count": self.nonmonotone_count,
            "nonmonotone_first": list(self.nonmonotone_first),
            "drift_max": self.drift_max,
            "clamped_faces": self.clamped_faces,
            "residual_trace": [float(v) for v in self.residual_trace],
            "final_x": [float(v) for v in self.final_x],
            "mesh_info": dict(self.mesh_info),
        }
        if self.error is not None:
            d["error"] = dict(self.error)
        if self.energy_trace is not None:
            d["energy_trace"] = [float(v) for v in self.energy_trace]
            d["energy_every"] = self.energy_every
        return d

    def to_timing_dict(self):
        return {
            "wall_ns": int(self.wall_ns),
            "stage_ns_total": {k: int(v.sum()) for k, v in self.stage_times.items()},
            "stage_ns_mean": {
                k: float(v.mean()) if len(v) else 0.0
                for k, v in self.stage_times.items()
            },
        }


def select_greedy(s):
    """Index of the largest |s_i|; ties break to the lowest index."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty residual vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("residual vector has non-finite entries")
    return int(np.argmax(np.abs(s)))


def greedy_step(x, s, i, eps):
    """Single-coordinate update x_i -> x_i - eps * s_i; returns a new vector."""
    if eps < 0:
        raise ValueError("step size must be nonnegative")
    out = np.array(x, dtype=np.float64, copy=True)
    out[i] -= eps * s[i]
    return out


def max_safe_step(H):
    """Largest step with the selected-coordinate contraction guarantee: 1/||H||inf."""
    nrm = inf_norm(H)
    if nrm == 0.0:
        raise ValueError("zero matrix has no finite safe step")
    return 1.0 / nrm


def solve_greedy(mesh, x0, config=None):
    """Pure greedy loop: residual, tolerance check, argmax, single-coordinate
    update. Returns a :class:`SolveReport`; solver failures (divergence,
    degenerate metric) are reported, not raised, so corpus sweeps survive."""
    config = config or SolveConfig()
    if config.epsilon_mode == "learned":
        raise ValueError("learned epsilon_mode requires the self-tuning entry point")
    return _solve_engine(mesh, x0, config)


class _Run:
    """Mutable loop state; exists to keep the exit paths honest about the
    trace-length invariant (len(trace) == iterations + 1)."""

    def __init__(self):
        self.trace = []
        self.stage = {k: [] for k in STAGES}

    def record(self, matvec=0, select=0, step_predict=0, update=0):
        self.stage["matvec"].append(matvec)
        self.stage["select"].append(select)
        self.stage["step_predict"].append(step_predict)
        self.stage["update"].append(update)


def _solve_engine(mesh, x0, config, scorer=None, eps_provider=None, observer=None):
    """Shared loop. ``scorer(s, abs_s) -> scores`` picks the vertex (argmax of
    scores, ties lowest index); ``eps_provider(s, i) -> eps`` supplies the step.
    Either being None selects the pure-greedy behavior for that stage."""
    x = np.array(_check_log_radii(mesh, x0), copy=True)
    n = mesh.n_vertices
    t_wall0 = time.perf_counter_ns()

    clamped = []
    clamp = config.clamp_angles
    syndrome_mode = config.residual_mode == "syndrome"
    frozen = config.h_policy == "frozen"

    report = SolveReport(
        iterations_used=0, terminated_by="error", residual_trace=np.zeros(1),
        final_x=x, config=config,
        mesh_info={"n_vertices": mesh.n_vertices, "n_edges": mesh.n_edges,
                   "n_faces": mesh.n_faces},
    )

    def fail_early(exc):
        report.error = {"kind": "degenerate_metric", "iteration": 0,
                        "detail": str(exc)}
        report.wall_ns = time.perf_counter_ns() - t_wall0
        return report

    try:
        H = build_cotan_laplacian(mesh, np.zeros(n) if frozen else x,
                                  clamp=clamp, clamped_out=clamped)
    except DegenerateTriangleError as exc:
        return fail_early(exc)

    if config.epsilon_mode == "fixed":
        eps_const = float(config.epsilon)
    else:
        eps_const = max_safe_step(H)
    report.epsilon_nominal = None if config.epsilon_mode == "learned" else eps_const

    def residual():
        if syndrome_mode:
            return H.matvec(x)
        return gauss_curvature(mesh, x, clamp=clamp, clamped_out=clamped)

    try:
        s = residual()
    except DegenerateTriangleError as exc:
        return fail_early(exc)

    if config.record_energy_every > 0:
        from .energy import ricci_energy  # here to avoid an import cycle
        energy_trace = []
    else:
        energy_trace = None

    run = _Run()
    eps_lo, eps_hi = np.inf, 0.0
    run_min = np.inf
    prev = None
    noops = 0
    last_vertex = -1
    drift_max = 0.0
    terminated = "error"
    error = None
    t = 0

    while True:
        t0 = time.perf_counter_ns()
        # -- residual maintenance + convergence test (the "matvec" stage;
        #    for pure greedy this also holds the argmax scan)
        if syndrome_mode and frozen and t > 0 and config.recompute_every > 0 \
                and t % config.recompute_every == 0:
            s_full = H.matvec(x)
            drift = float(np.max(np.abs(s - s_full)))
            drift_max = max(drift_max, drift / (1.0 + float(np.max(np.abs(s_full)))))
            s = s_full
        elif not syndrome_mode and t > 0:
            try:
                s = residual()
            except DegenerateTriangleError as exc:
                error = {"kind": "degenerate_metric", "iteration": t,
                         "detail": str(exc)}
                run.trace.append(run.trace[-1] if run.trace else float("inf"))
                run.record()
                break
        if not np.all(np.isfinite(s)):
            bad = int(np.flatnonzero(~np.isfinite(s))[0])
            error = {"kind": "nonfinite_residual", "iteration": t, "vertex": bad,
                     "detail": f"residual at vertex {bad} is not finite"}
            run.trace.append(float("inf"))
            run.record()
            break
        abs_s = np.abs(s)
        imax = int(np.argmax(abs_s))
        cur = float(abs_s[imax])
        run.trace.append(cur)
        if prev is not None and prev > 0.0 and cur >= prev:
            report.nonmonotone_count += 1
            if len(report.nonmonotone_first) < 32:
                report.nonmonotone_first.append(t)
        prev = cur
        if energy_trace is not None and t % config.record_energy_every == 0:
            energy_trace.append(ricci_energy(mesh, x, config.energy_nodes,
                                             clamp=clamp).value)
        t1 = time.perf_counter_ns()

        if cur < config.tau:
            terminated = "tolerance"
            run.record(matvec=t1 - t0)
            break
        if cur > config.divergence_factor * run_min:
            error = {"kind": "divergence", "iteration": t, "vertex": last_vertex,
                     "detail": f"residual {cur:.3e} exceeds "
                               f"{config.divergence_factor:g} x running min "
                               f"{run_min:.3e}"}
            run.record(matvec=t1 - t0)
            break
        run_min = min(run_min, cur)
        if t >= config.max_steps:
            terminated = "max_steps"
            run.record(matvec=t1 - t0)
            break

        if observer is not None:
            observer(t, s, abs_s, imax)

        # -- vertex selection (ML scoring when a scorer is attached; the pure
        #    greedy argmax already happened in the matvec stage)
        if scorer is None:
            i = imax
            select_ns = 0
        else:
            t2 = time.perf_counter_ns()
            i = int(np.argmax(scorer(s, abs_s)))
            select_ns = time.perf_counter_ns() - t2

        # -- step-size prediction
        if eps_provider is None:
            eps = eps_const
            predict_ns = 0
        else:
            t2 = time.perf_counter_ns()
            eps = float(eps_provider(s, i))
            predict_ns = time.perf_counter_ns() - t2
        t4 = time.perf_counter_ns()

        # -- single-coordinate update + incremental syndrome maintenance
        step = eps * s[i]
        x[i] -= step
        if syndrome_mode:
            cols, vals = H.row(i)
            s[cols] -= step * vals
        eps_lo = min(eps_lo, eps)
        eps_hi = max(eps_hi, eps)
        if step == 0.0:
            noops += 1
        else:
            noops = 0
            last_vertex = i
        t += 1
        t5 = time.perf_counter_ns()
        run.record(matvec=t1 - t0, select=select_ns, step_predict=predict_ns,
                   update=t5 - t4)

        if noops > config.stall_limit:
            error = {"kind": "stalled", "iteration": t, "vertex": i,
                     "detail": f"{noops} consecutive zero-size steps"}
            run.trace.append(cur)
            run.record()
            break

        if syndrome_mode and not frozen and config.refresh_every > 0 \
                and t % config.refresh_every == 0:
            try:
                H = build_cotan_laplacian(mesh, x, clamp=clamp,
                                          clamped_out=clamped)
                s = H.matvec(x)
                if config.epsilon_mode == "safe":
                    eps_const = max_safe_step(H)
            except DegenerateTriangleError as exc:
                error = {"kind": "degenerate_metric", "iteration": t,
                         "detail": str(exc)}
                run.trace.append(float(np.max(np.abs(s))))
                run.record()
                break

    if error is not None:
        terminated = "error"
    report.iterations_used = len(run.trace) - 1
    report.terminated_by = terminated
    report.error = error
    report.residual_trace = np.asarray(run.trace)
    report.final_x = x
    report.stage_times = {k: np.asarray(v, dtype=np.int64)
                          for k, v in run.stage.items()}
    if energy_trace is not None:
        report.energy_trace = np.asarray(energy_trace)
        report.energy_every = config.record_energy_every
    report.initial_residual_inf = float(run.trace[0])
    report.final_residual_inf = float(run.trace[-1])
    report.eps_min_applied = None if not np.isfinite(eps_lo) else float(eps_lo)
    report.eps_max_applied = float(eps_hi) if eps_hi > 0 else None
    report.drift_max = drift_max
    report.clamped_faces = len(set(clamped))
    if syndrome_mode:
        report.final_syndrome_inf = float(np.max(np.abs(H.matvec(x))))
    else:
        try:
            H0 = build_cotan_laplacian(mesh, np.zeros(n), clamp=True)
            report.final_syndrome_inf = float(np.max(np.abs(H0.matvec(x))))
        except MicroRicciError:
            report.final_syndrome_inf = None
    try:
        report.final_curvature_inf = float(np.max(np.abs(
            gauss_curvature(mesh, x, clamp=clamp))))
    except DegenerateTriangleError:
        report.final_curvature_inf = None
    report.wall_ns = time.perf_counter_ns() - t_wall0
    return report
