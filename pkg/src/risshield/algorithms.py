"""SCA inner loops, two-step initialization and the outer alternating driver.

The driver alternates two blocks: (W, Phi) through the jamming SOCP and
(u, element partition) through the sparsity program with thresholded
reassignment.  Three modes share the machinery:

* ``adaptive``  - full pipeline with element reassignment,
* ``fixed``     - u is optimized but the partition never changes,
* ``sense-max`` - benchmark maximizing the summed sensing SINR surrogates
  with u and the partition frozen (no protection objective).

Iterates are only accepted if the tracked true objective did not decrease
beyond solver slack, which makes the recorded trace monotone by construction
and guards against interior-point noise near stationarity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .scenario import (ChannelSet, ElementPartition, PartitionedChannels, ScenarioConfig,
                       build_scenario, initial_partition, partition_channels)
from .metrics import (BeamformingState, constraint_report, interference_power,
                      max_detector_sinr, sensing_sinr_ris)
from . import subproblems as sub
from .surrogates import stack_psi, unstack_psi

#: interference power below this is treated as zero when forming relative gains
_POWER_FLOOR = 1e-30


@dataclass
class AlgorithmSettings:
    """Iteration controls; thresholds on psi/u steps are absolute squared norms,
    outer-gain and ascent slacks are relative."""

    eps_converge: float = 1e-5      # stop ||psi_t - psi_{t-1}||^2 (and u analogue)
    eps_outer: float = 1e-3         # relative interference-power gain to continue
    eps_penalty: float = 1e-3       # unit-modulus penalty weight, relative to objective scale
    eps_feas: float = 1e-9          # relative slack-sum defining initialization success
    u_zero_thresh: float = 1e-3     # |u_i| <= thresh * max|u| marks an element droppable
    max_iter_inner: int = 40
    max_iter_outer: int = 5
    max_iter_u: int = 15
    max_iter_init: int = 25
    init_r_fraction: float = 0.625  # initial share of reflecting elements
    ascent_rel_slack: float = 1e-6  # tolerated relative objective decrease per accepted step
    projection_rel_tol: float = 1e-4  # constraint slack allowed to the modulus projection
    obj_stall_rel: float = 0.0      # optional early inner exit on relative gain below this
    u_norm_slack: float = 0.25      # trust lens opening the degenerate norm pair (43)
    backend: str | None = None

    def __post_init__(self):
        for name in ("eps_converge", "eps_outer", "eps_penalty", "eps_feas", "u_zero_thresh"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("max_iter_inner", "max_iter_outer", "max_iter_u", "max_iter_init"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class TraceRow:
    phase: str
    outer: int
    inner: int
    interference: float
    max_det_sinr_db: float
    n_r: int
    residual: float
    status: str


@dataclass
class RunTrace:
    """Per-iteration convergence bookkeeping.

    CSV column order (wall-clock time is deliberately excluded so identical
    runs serialize byte-for-byte): phase, outer, inner, interference_power,
    max_detector_sinr_db, n_r, residual, solver_status.
    """

    rows: list[TraceRow] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    COLUMNS = ("phase", "outer", "inner", "interference_power",
               "max_detector_sinr_db", "n_r", "residual", "solver_status")

    def add(self, row: TraceRow) -> None:
        self.rows.append(row)
        self.wall_times.append(time.perf_counter())

    def interference_series(self, phase: str | None = None) -> np.ndarray:
        rows = [r for r in self.rows if phase is None or r.phase == phase]
        return np.array([r.interference for r in rows])

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                fh.write(f"{r.phase},{r.outer},{r.inner},{r.interference:.6g},"
                         f"{r.max_det_sinr_db:.6g},{r.n_r},{r.residual:.6g},{r.status}\n")


@dataclass
class RunOutcome:
    cfg: ScenarioConfig
    state: BeamformingState
    partition: ElementPartition
    channels: PartitionedChannels
    trace: RunTrace
    feasible: bool
    status: str


def _residual(report: dict) -> float:
    return max(0.0, -report["sensing_margin"], -report["comm_margin"],
               -report["power_margin"])


def _clip_into_constraints(w: np.ndarray, phi: np.ndarray, p_max: float) -> tuple[np.ndarray, np.ndarray]:
    # pull solver output strictly inside the power ball and modulus box so the
    # next linearization point is feasible for its own subproblem
    power = float(np.linalg.norm(w) ** 2)
    if power > p_max:
        w = w * np.sqrt(p_max / power)
    mag = np.abs(phi)
    over = mag > 1.0
    if np.any(over):
        phi = phi.copy()
        phi[over] = phi[over] / mag[over]
    return w, phi


def _balanced_beams(phi: np.ndarray, channels: PartitionedChannels, cfg: ScenarioConfig,
                    mmse_alpha: float) -> tuple[np.ndarray, float]:
    """Regularized-inverse beams with interference-aware power balancing.

    Returns the power-scaled beams and the worst user's SINR margin
    (min_k sinr_k / gamma_k) at the full budget.
    """
    rows = np.vstack([(channels.h_r[k] * phi) @ channels.g_r for k in range(cfg.k)])
    if mmse_alpha > 0.0:
        gram = rows @ rows.conj().T
        reg = mmse_alpha * np.trace(gram).real / cfg.k
        w = rows.conj().T @ np.linalg.inv(gram + reg * np.eye(cfg.k))
    else:
        w = np.linalg.pinv(rows)
    col_norms = np.linalg.norm(w, axis=0)
    if np.any(col_norms < 1e-300):
        w = np.ones((cfg.m, cfg.k), dtype=complex)
        col_norms = np.linalg.norm(w, axis=0)
    w = w / col_norms[None, :]

    gains = np.abs(rows @ w) ** 2   # gains[k, i]: power of beam i at user k
    leak = np.array([cfg.detector_power * abs((channels.h_r[k] * phi) @ channels.e_r) ** 2
                     for k in range(cfg.k)])
    own = np.maximum(np.diag(gains), 1e-300)
    p = np.full(cfg.k, cfg.p_max / cfg.k)
    for _ in range(40):
        denom = gains @ p - own * p + leak + cfg.noise_c_bar_values
        need = cfg.gamma_c_values * denom / own
        p = need * cfg.p_max / max(need.sum(), 1e-300)
    denom = gains @ p - own * p + leak + cfg.noise_c_bar_values
    margin = float(np.min(own * p / denom / cfg.gamma_c_values))
    return w * np.sqrt(p)[None, :], margin


def judicious_state(channels: PartitionedChannels, cfg: ScenarioConfig) -> BeamformingState:
    """Step-one initial point.

    Phases: best of identity plus a deterministic batch of random draws,
    scored by the worst user's balanced SINR margin (coherent alignment is
    counterproductive here: closely spaced users collapse the effective
    channel rank).  Beams: regularized inverse with interference-aware
    per-user power balancing over the full budget.  Combiner: dominant
    sensing eigendirection projected off the detector's direct path.
    """
    rng = np.random.default_rng(cfg.seed + 0x5EED)
    candidates = [(np.ones(channels.n_r, dtype=complex), 0.0)]
    for _ in range(24):
        phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, channels.n_r))
        candidates.append((phases, 0.0))
        candidates.append((phases, 0.03))
    best = None
    for phases, alpha in candidates:
        w_cand, margin = _balanced_beams(phases, channels, cfg, alpha)
        if best is None or margin > best[2]:
            best = (w_cand, phases, margin)
    w, phi, _ = best

    if channels.n_a == 0:
        return BeamformingState(w=w, phi=phi, u=np.zeros(0, dtype=complex))
    covariance = sum(np.outer(channels.c_a[l], np.conj(channels.c_a[l]))
                     for l in range(cfg.l))
    _, vecs = np.linalg.eigh(covariance)
    u = vecs[:, -1]
    e_norm = np.linalg.norm(channels.e_a)
    if e_norm > 0 and channels.n_a > 1:
        e_hat = channels.e_a / e_norm
        projected = u - e_hat * np.vdot(e_hat, u)
        if np.linalg.norm(projected) > 1e-9:
            u = projected
    u = u / np.linalg.norm(u)
    return BeamformingState(w=w, phi=phi, u=u)


def _violation_watts(state: BeamformingState, channels: PartitionedChannels,
                     cfg: ScenarioConfig) -> float:
    """Total constraint violation in watts (zero iff sensing and comm hold)."""
    report = constraint_report(state, channels, cfg)
    rho2 = cfg.detector_power
    omega0 = rho2 * abs(np.vdot(state.u, channels.e_a)) ** 2 + cfg.noise_s
    total = 0.0
    for l in range(cfg.l):
        gap = cfg.gamma_s_values[l] - report["sensing_sinr"][l]
        total += max(0.0, gap * omega0)
    for k in range(cfg.k):
        row = (channels.h_r[k] * state.phi) @ channels.g_r
        gains = np.abs(row @ state.w) ** 2
        leak = rho2 * abs((channels.h_r[k] * state.phi) @ channels.e_r) ** 2
        denom = float(np.sum(gains)) - float(gains[k]) + leak + cfg.noise_c_bar_values[k]
        total += max(0.0, cfg.gamma_c_values[k] * denom - float(gains[k]))
    return total


def find_initial_point(channels: ChannelSet, cfg: ScenarioConfig,
                       settings: AlgorithmSettings) -> tuple[BeamformingState, ElementPartition, str]:
    """Two-step initialization: judicious start, then alternating slack minimization.

    Returns a state satisfying all design constraints (status "feasible"), or
    the best effort with status "infeasible" when the violation stalls above
    zero for this realization.  The true violation is non-increasing over
    accepted refinement steps.
    """
    n_r0 = min(cfg.n, int(np.ceil(settings.init_r_fraction * cfg.n)))
    partition = initial_partition(cfg.n, n_r0)
    pch = partition_channels(channels, partition)
    state = judicious_state(pch, cfg)
    backend = settings.backend

    violation = _violation_watts(state, pch, cfg)
    for _ in range(settings.max_iter_init):
        if violation <= 0.0:
            break
        result = sub.solve(sub.assemble_init_problem(pch, state, cfg), backend)
        if not result.ok:
            return state, partition, f"init-{result.status}"
        psi = sub.extract_psi(result, cfg.m, cfg.k, pch.n_r)
        w, phi = unstack_psi(psi)
        w, phi = _clip_into_constraints(w, phi, cfg.p_max)
        candidate = BeamformingState(w=w, phi=phi, u=state.u)

        if pch.n_a >= 1:
            u_res = sub.solve(sub.assemble_init_u_problem(pch, candidate, candidate.u, cfg),
                              backend)
            if u_res.ok:
                u = sub.extract_u(u_res)
                norm = np.linalg.norm(u)
                if norm > 1e-12:
                    candidate = BeamformingState(w=candidate.w, phi=candidate.phi, u=u / norm)

        new_violation = _violation_watts(candidate, pch, cfg)
        if new_violation >= violation * (1.0 - 1e-6):
            break  # refinement stalled; keep the best point found so far
        state = candidate
        violation = new_violation

    # make the unit-modulus constraint hold exactly when the projection keeps
    # the point feasible; otherwise hand the relaxed point to the main loop
    projected = _project_phases(state, pch, cfg, settings)
    if projected is not None:
        state = projected
    report = constraint_report(state, pch, cfg)
    status = "feasible" if _residual(report) <= 1e-9 else "infeasible"
    return state, partition, status


def _project_phases(state: BeamformingState, channels: PartitionedChannels,
                    cfg: ScenarioConfig, settings: AlgorithmSettings) -> BeamformingState | None:
    """Project Phi entries to unit modulus; None if the projection breaks a constraint.

    Entries at exactly zero magnitude (freshly reassigned elements not yet
    optimized, whose phase is undefined) are left untouched.
    """
    mag = np.abs(state.phi)
    assigned = mag > 1e-3
    if not np.any(assigned):
        return None
    phi = state.phi.copy()
    phi[assigned] = phi[assigned] / mag[assigned]
    candidate = BeamformingState(w=state.w.copy(), phi=phi, u=state.u.copy())
    report = constraint_report(candidate, channels, cfg)
    if (report["sensing_margin"] >= -settings.projection_rel_tol
            and report["comm_margin"] >= -settings.projection_rel_tol
            and report["power_margin"] >= -1e-6):
        return candidate
    return None


def optimize_psi(state: BeamformingState, channels: PartitionedChannels,
                 cfg: ScenarioConfig, settings: AlgorithmSettings,
                 outer: int = 0, trace: RunTrace | None = None,
                 objective: str = "jam") -> tuple[BeamformingState, str]:
    """SCA loop over psi = (W, Phi); returns the new state and a status string.

    objective "jam" maximizes interference at the adversarial detector;
    "sense-max" maximizes the summed sensing-SINR surrogates (benchmark).
    The true tracked objective is non-decreasing over accepted iterates.
    """
    assemble = (sub.assemble_psi_socp if objective == "jam"
                else sub.assemble_sense_max_socp)

    def tracked(st: BeamformingState) -> float:
        if objective == "jam":
            return interference_power(st, channels)
        # controllable part of the summed sensing SINRs: the BS-echo powers
        # (the detector-bounce contribution is independent of W and Phi)
        total = 0.0
        for l in range(cfg.l):
            row = (np.conj(channels.c_r[l]) * st.phi) @ channels.g_r
            total += cfg.rcs_values[l] * float(np.linalg.norm(row @ st.w) ** 2)
        return total

    value_prev = tracked(state)
    psi_prev = stack_psi(state.w, state.phi)
    status = "max-iter"
    for inner in range(1, settings.max_iter_inner + 1):
        eps_eff = settings.eps_penalty * max(
            interference_power(state, channels), cfg.noise_d) / max(channels.n_r, 1)
        result = sub.solve(assemble(channels, state, cfg, eps_eff), settings.backend)
        if not result.ok:
            status = f"solver-{result.status}"
            break
        psi = sub.extract_psi(result, cfg.m, cfg.k, channels.n_r)
        w, phi = unstack_psi(psi)
        w, phi = _clip_into_constraints(w, phi, cfg.p_max)
        candidate = BeamformingState(w=w, phi=phi, u=state.u)
        value_new = tracked(candidate)
        if value_new < value_prev - settings.ascent_rel_slack * max(value_prev, _POWER_FLOOR):
            status = "stalled"
            break
        state = candidate
        if trace is not None:
            report = constraint_report(state, channels, cfg)
            trace.add(TraceRow(
                phase="psi", outer=outer, inner=inner,
                interference=interference_power(state, channels),
                max_det_sinr_db=_db(max_detector_sinr(state, channels, cfg)),
                n_r=channels.n_r, residual=_residual(report), status=result.status))
        delta = float(np.linalg.norm(psi.data - psi_prev.data) ** 2)
        gain = value_new - value_prev
        value_prev = value_new
        psi_prev = psi
        if delta <= settings.eps_converge:
            status = "converged"
            break
        if settings.obj_stall_rel > 0.0 and gain <= settings.obj_stall_rel * max(
                value_new, _POWER_FLOOR):
            status = "obj-stall"
            break

    projected = _project_phases(state, channels, cfg, settings)
    if projected is not None:
        state = projected
    else:
        status += "+projection-rejected"
    return state, status


def droppable_indices(u: np.ndarray, rel_thresh: float) -> np.ndarray:
    """Positions within the absorptive set whose combiner magnitude is below
    the relative threshold; never empties the set entirely."""
    mags = np.abs(u)
    droppable = np.flatnonzero(mags <= rel_thresh * float(mags.max()))
    if droppable.size == mags.size:
        droppable = np.setdiff1d(droppable, [int(np.argmax(mags))])
    return droppable


def optimize_u_and_partition(state: BeamformingState, channels: ChannelSet,
                             partition: ElementPartition, cfg: ScenarioConfig,
                             settings: AlgorithmSettings, allow_reassign: bool = True,
                             ) -> tuple[BeamformingState, ElementPartition, PartitionedChannels, str]:
    """SCA on the combiner plus thresholded element reassignment.

    Absorptive elements whose combiner magnitude falls below the relative
    threshold are moved to the reflecting set; the reflecting count never
    decreases and every channel view is refreshed from the parent set.
    """
    pch = partition_channels(channels, partition)
    if pch.n_a == 0:
        return state, partition, pch, "no-absorptive"

    u_prev = state.u.copy()
    status = "max-iter"
    for _ in range(settings.max_iter_u):
        result = sub.solve(sub.assemble_u_l1(pch, state, u_prev, cfg,
                                             norm_slack=settings.u_norm_slack),
                           settings.backend)
        if result.status == sub.INFEASIBLE:
            # current (W, Phi) cannot support the sensing thresholds with any
            # unit combiner: leave u and the partition untouched
            return state, partition, pch, "u-infeasible"
        if not result.ok:
            status = f"solver-{result.status}"
            break
        u_new = sub.extract_u(result)
        norm = np.linalg.norm(u_new)
        if norm < 1e-12:
            status = "degenerate-u"
            break
        u_new = u_new / norm
        delta = float(np.linalg.norm(u_new - u_prev) ** 2)
        u_prev = u_new
        if delta <= settings.eps_converge:
            status = "converged"
            break
    state = BeamformingState(w=state.w, phi=state.phi, u=u_prev)

    if not allow_reassign:
        return state, partition, pch, status

    droppable = droppable_indices(state.u, settings.u_zero_thresh)
    if droppable.size == 0:
        return state, partition, pch, status

    dropped_elements = partition.absorptive[droppable]
    keep = np.setdiff1d(np.arange(pch.n_a), droppable)
    new_partition = partition.reassign(dropped_elements)
    new_pch = partition_channels(channels, new_partition)
    new_u = state.u[keep]
    new_u = new_u / np.linalg.norm(new_u)

    # newly reflecting elements: greedy unit-modulus insertion — per element,
    # pick the constraint-preserving phase with the largest jamming gain over
    # a phase grid, falling back to zero magnitude (ramped up by the next
    # beamforming pass) when no phase keeps the point feasible
    phi_map = dict(zip(partition.reflecting.tolist(), state.phi))
    phi = np.array([phi_map.get(idx, 0.0 + 0.0j) for idx in new_partition.reflecting])
    candidate = BeamformingState(w=state.w, phi=phi, u=new_u)
    for idx in dropped_elements.tolist():
        pos = int(np.searchsorted(new_partition.reflecting, idx))
        candidate = _insert_element_phase(candidate, pos, new_pch, cfg,
                                          settings.projection_rel_tol)
    return candidate, new_partition, new_pch, status


def _insert_element_phase(state: BeamformingState, pos: int,
                          channels: PartitionedChannels, cfg: ScenarioConfig,
                          rel_tol: float, grid: int = 64) -> BeamformingState:
    best_phase = None
    best_jam = -np.inf
    phi = state.phi.copy()
    for angle in np.linspace(0.0, 2.0 * np.pi, grid, endpoint=False):
        phi[pos] = np.exp(1j * angle)
        candidate = BeamformingState(w=state.w, phi=phi, u=state.u)
        report = constraint_report(candidate, channels, cfg)
        if (report["sensing_margin"] >= -rel_tol and report["comm_margin"] >= -rel_tol):
            jam = interference_power(candidate, channels)
            if jam > best_jam:
                best_jam = jam
                best_phase = np.exp(1j * angle)
    phi[pos] = best_phase if best_phase is not None else 0.0
    return BeamformingState(w=state.w, phi=phi, u=state.u)


def _db(x: float) -> float:
    return 10.0 * np.log10(max(x, _POWER_FLOOR))


def run_main(cfg: ScenarioConfig, settings: AlgorithmSettings | None = None,
             mode: str = "adaptive") -> RunOutcome:
    """Full pipeline: scenario synthesis, initialization, then outer alternation."""
    if mode not in ("adaptive", "fixed", "sense-max"):
        raise ValueError(f"unknown mode {mode!r}")
    settings = settings or AlgorithmSettings()
    channels, _, _ = build_scenario(cfg)
    trace = RunTrace()

    state, partition, init_status = find_initial_point(channels, cfg, settings)
    pch = partition_channels(channels, partition)
    trace.notes["init_status"] = init_status
    trace.notes["mode"] = mode
    report = constraint_report(state, pch, cfg)
    trace.add(TraceRow(
        phase="init", outer=0, inner=0,
        interference=interference_power(state, pch),
        max_det_sinr_db=_db(max_detector_sinr(state, pch, cfg)),
        n_r=pch.n_r, residual=_residual(report), status=init_status))
    if init_status != "feasible":
        return RunOutcome(cfg, state, partition, pch, trace, feasible=False, status=init_status)

    objective = "sense-max" if mode == "sense-max" else "jam"
    value_prev = interference_power(state, pch)
    status = "max-outer"
    for outer in range(1, settings.max_iter_outer + 1):
        state, psi_status = optimize_psi(state, pch, cfg, settings, outer=outer,
                                         trace=trace, objective=objective)
        partition_changed = False
        u_status = "skipped"
        if mode != "sense-max":
            n_r_before = partition.n_r
            state, partition, pch, u_status = optimize_u_and_partition(
                state, channels, partition, cfg, settings,
                allow_reassign=(mode == "adaptive"))
            partition_changed = partition.n_r != n_r_before

        value_new = interference_power(state, pch)
        report = constraint_report(state, pch, cfg)
        trace.add(TraceRow(
            phase="outer", outer=outer, inner=0, interference=value_new,
            max_det_sinr_db=_db(max_detector_sinr(state, pch, cfg)),
            n_r=pch.n_r, residual=_residual(report),
            status=f"{psi_status}/{u_status}"))
        gain = value_new - value_prev
        value_prev = value_new
        if objective == "sense-max":
            status = "converged"
            break
        # when reassignment just changed the partition the gain arrives one
        # iteration late, so force another pass
        if gain <= settings.eps_outer * max(value_new, _POWER_FLOOR) and not partition_changed:
            status = "converged"
            break

    # elements reassigned in the last pass still carry zero-magnitude phases;
    # one more beamforming pass assigns them before the final audit
    if np.any(np.abs(np.abs(state.phi) - 1.0) > 1e-3):
        state, psi_status = optimize_psi(state, pch, cfg, settings,
                                         outer=settings.max_iter_outer + 1,
                                         trace=trace, objective=objective)
        report = constraint_report(state, pch, cfg)
        trace.add(TraceRow(
            phase="outer", outer=settings.max_iter_outer + 1, inner=0,
            interference=interference_power(state, pch),
            max_det_sinr_db=_db(max_detector_sinr(state, pch, cfg)),
            n_r=pch.n_r, residual=_residual(report), status=f"{psi_status}/final"))

    report = constraint_report(state, pch, cfg)
    feasible = (report["sensing_margin"] >= -settings.projection_rel_tol
                and report["comm_margin"] >= -settings.projection_rel_tol
                and report["power_margin"] >= -1e-6
                and report["phi_modulus_err"] <= 1e-3
                and report["u_norm_err"] <= 1e-6)
    trace.notes["final_report"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                   for k, v in report.items()}
    return RunOutcome(cfg, state, partition, pch, trace, feasible=feasible, status=status)
