"""Solver-agnostic SOCP assembly for the three convex subproblems.

Complex decision blocks are lifted to interleaved real/imaginary pairs, so a
complex vector z of length q occupies 2q real variables with x[2j] = Re z_j,
x[2j+1] = Im z_j.  Every constraint is either an affine row (row . x <= b) or
a second-order cone ||F x + g|| <= c . x + c_off; quadratic-under-affine
constraints use the standard rotation ||v||^2 <= s  <=>  ||(2v, s-1)|| <= s+1.

Each cone/row is normalized by its largest coefficient at assembly time, so
the 1e-6 absolute revalidation tolerance is meaningful across the very
different power scales appearing in the model.

The solve() backend contract is any conic solver handling linear objectives,
affine rows and second-order cones; solutions are re-validated against the
stored problem before being accepted.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .scenario import PartitionedChannels, ScenarioConfig
from .metrics import BeamformingState
from . import surrogates
from .surrogates import PsiVector, stack_psi

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

#: absolute feasibility tolerance enforced when revalidating backend output
VALIDATION_TOL = 1e-6
#: tolerance requested from the backend
SOLVER_TOL = 1e-8


@dataclass
class SocBlock:
    """||f x + g||_2 <= c_row . x + c_off"""

    f: np.ndarray
    g: np.ndarray
    c_row: np.ndarray
    c_off: float
    label: str = ""

    @property
    def dim(self) -> int:
        return self.f.shape[0] + 1


@dataclass
class ConicProblem:
    num_vars: int
    objective: np.ndarray          # maximize objective . x
    objective_offset: float
    ineq_a: np.ndarray             # (m, n): ineq_a x <= ineq_b
    ineq_b: np.ndarray
    ineq_labels: list[str]
    soc_blocks: list[SocBlock]
    annotations: dict[str, slice]
    var_scale: np.ndarray | None = None   # physical value = var_scale * solver value
    obj_scale: float = 1.0                # physical objective = obj_scale * stored + offset

    def validate_structure(self) -> None:
        covered = np.zeros(self.num_vars, dtype=int)
        for sl in self.annotations.values():
            covered[sl] += 1
        if not np.all(covered == 1):
            raise ValueError("annotations must cover every variable exactly once")
        for blk in self.soc_blocks:
            if blk.dim < 2:
                raise ValueError("every SOC block must have dimension >= 2")
            if blk.f.shape[1] != self.num_vars or blk.c_row.size != self.num_vars:
                raise ValueError("SOC block width does not match num_vars")
        if self.ineq_a.size and self.ineq_a.shape[1] != self.num_vars:
            raise ValueError("affine row width does not match num_vars")

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        if self.ineq_a.size:
            worst = float(np.max(self.ineq_a @ x - self.ineq_b, initial=0.0))
        for blk in self.soc_blocks:
            resid = np.linalg.norm(blk.f @ x + blk.g) - (blk.c_row @ x + blk.c_off)
            worst = max(worst, float(resid))
        return worst

    def objective_value(self, x: np.ndarray) -> float:
        return self.obj_scale * float(self.objective @ x) + self.objective_offset

    def to_text(self) -> str:
        """Self-contained dump for cross-checking against external solvers.

        Field order (one record per line, %.17g floats):
        header, num_vars, objective_offset, objective coefficients,
        annotations (name start stop), affine rows (b then coefficients, in
        assembly order), SOC blocks (bound row first, then norm rows).
        """
        out = io.StringIO()
        fmt = lambda v: format(float(v), ".17g")
        out.write("CONIC-PROBLEM v1\n")
        out.write(f"vars {self.num_vars}\n")
        out.write(f"offset {fmt(self.objective_offset)}\n")
        out.write(f"objscale {fmt(self.obj_scale)}\n")
        out.write("maximize " + " ".join(fmt(v) for v in self.objective) + "\n")
        for name, sl in self.annotations.items():
            out.write(f"annotation {name} {sl.start} {sl.stop}\n")
        for i in range(self.ineq_a.shape[0]):
            out.write(f"ineq {self.ineq_labels[i]} {fmt(self.ineq_b[i])} "
                      + " ".join(fmt(v) for v in self.ineq_a[i]) + "\n")
        for blk in self.soc_blocks:
            out.write(f"soc {blk.f.shape[0]} {blk.label}\n")
            out.write(f"bound {fmt(blk.c_off)} " + " ".join(fmt(v) for v in blk.c_row) + "\n")
            for j in range(blk.f.shape[0]):
                out.write(f"row {fmt(blk.g[j])} " + " ".join(fmt(v) for v in blk.f[j]) + "\n")
        return out.getvalue()


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    primal: dict[str, np.ndarray]
    objective: float
    backend: str
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# complex-to-real lifting


def lift_matrix(c: np.ndarray) -> np.ndarray:
    """Real (2p x 2q) matrix computing the interleaved lift of z -> C z."""
    c = np.atleast_2d(c)
    p, q = c.shape
    out = np.empty((2 * p, 2 * q))
    out[0::2, 0::2] = c.real
    out[0::2, 1::2] = -c.imag
    out[1::2, 0::2] = c.imag
    out[1::2, 1::2] = c.real
    return out


def lift_real_row(v: np.ndarray) -> np.ndarray:
    """Real row r with r . x = Re{v^H z} for the interleaved lift x of z."""
    out = np.empty(2 * v.size)
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


def lift_vector(z: np.ndarray) -> np.ndarray:
    """Interleaved real image of a complex vector."""
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def restore_complex(x: np.ndarray) -> np.ndarray:
    return x[0::2] + 1j * x[1::2]


class ProblemBuilder:
    """Incremental ConicProblem assembly in physical units.

    Two scalings keep the huge wattage dynamic range solvable:

    * each variable block declares a natural magnitude (``scale``) and a
      reference value; finalize() hands the solver the problem in units of
      those magnitudes and solve() maps the solution back,
    * every quadratic-under-affine constraint is rotated in units of its own
      value at the reference point, so the rotation constants never swamp
      physically tiny constraints.
    """

    def __init__(self):
        self._blocks: list[tuple[str, int]] = []
        self._n = 0
        self._scales: list[np.ndarray] = []
        self._refs: list[np.ndarray] = []
        self._ineq_rows: list[np.ndarray] = []
        self._ineq_b: list[float] = []
        self._ineq_labels: list[str] = []
        self._socs: list[SocBlock] = []
        self.objective: np.ndarray | None = None
        self.objective_offset = 0.0

    def add_vars(self, name: str, count: int, scale=1.0, ref=None) -> slice:
        sl = slice(self._n, self._n + count)
        self._blocks.append((name, count))
        self._scales.append(np.broadcast_to(np.asarray(scale, dtype=float), (count,)).copy())
        if ref is None:
            ref = self._scales[-1]
        self._refs.append(np.broadcast_to(np.asarray(ref, dtype=float), (count,)).copy())
        self._n += count
        return sl

    @property
    def num_vars(self) -> int:
        return self._n

    @property
    def x_ref(self) -> np.ndarray:
        return np.concatenate(self._refs) if self._refs else np.zeros(0)

    def row(self) -> np.ndarray:
        return np.zeros(self._n)

    def embed(self, dense: np.ndarray, sl: slice) -> np.ndarray:
        dense = np.atleast_2d(dense)
        out = np.zeros((dense.shape[0], self._n))
        out[:, sl] = dense
        return out

    def add_ineq(self, row: np.ndarray, b: float, label: str = "") -> None:
        self._ineq_rows.append(row)
        self._ineq_b.append(b)
        self._ineq_labels.append(label)

    def add_soc(self, f: np.ndarray, g: np.ndarray, c_row: np.ndarray, c_off: float,
                label: str = "") -> None:
        self._socs.append(SocBlock(np.atleast_2d(np.asarray(f, dtype=float)),
                                   np.asarray(g, dtype=float),
                                   np.asarray(c_row, dtype=float), float(c_off), label))

    def add_quad_le_affine(self, f: np.ndarray, g: np.ndarray, s_row: np.ndarray,
                           s_off: float, label: str = "") -> None:
        """||f x + g||^2 <= s_row . x + s_off, rotated in reference-point units."""
        x0 = self.x_ref
        sigma = max(float(np.linalg.norm(f @ x0 + g) ** 2),
                    abs(float(s_row @ x0 + s_off)), 1e-300)
        fq = np.vstack([2.0 * f / np.sqrt(sigma), s_row[None, :] / sigma])
        gq = np.concatenate([2.0 * np.asarray(g, dtype=float) / np.sqrt(sigma),
                             [s_off / sigma - 1.0]])
        self.add_soc(fq, gq, s_row / sigma, s_off / sigma + 1.0, label)

    def finalize(self) -> ConicProblem:
        if self.objective is None:
            raise ValueError("objective not set")
        col = np.concatenate(self._scales) if self._scales else np.zeros(0)
        ineq_a = np.vstack(self._ineq_rows) if self._ineq_rows else np.zeros((0, self._n))
        ineq_a = ineq_a * col[None, :]
        ineq_b = np.asarray(self._ineq_b, dtype=float)
        # normalize affine rows so the absolute validation tolerance is meaningful
        norms = np.maximum(np.max(np.abs(ineq_a), axis=1, initial=0.0), np.abs(ineq_b))
        norms = np.maximum(norms, 1e-300)
        socs = []
        for blk in self._socs:
            f = blk.f * col[None, :]
            c_row = blk.c_row * col
            scale = max(float(np.max(np.abs(f), initial=0.0)),
                        float(np.max(np.abs(blk.g), initial=0.0)),
                        float(np.max(np.abs(c_row), initial=0.0)),
                        abs(blk.c_off), 1e-300)
            socs.append(SocBlock(f / scale, blk.g / scale, c_row / scale,
                                 blk.c_off / scale, blk.label))
        obj = self.objective * col
        obj_scale = max(float(np.max(np.abs(obj), initial=0.0)), 1e-300)
        prob = ConicProblem(
            num_vars=self._n,
            objective=obj / obj_scale,
            objective_offset=self.objective_offset,
            ineq_a=ineq_a / norms[:, None],
            ineq_b=ineq_b / norms,
            ineq_labels=self._ineq_labels,
            soc_blocks=socs,
            annotations=self._annotations(),
            var_scale=col,
            obj_scale=obj_scale,
        )
        prob.validate_structure()
        return prob

    def _annotations(self) -> dict[str, slice]:
        out, pos = {}, 0
        for name, count in self._blocks:
            out[name] = slice(pos, pos + count)
            pos += count
        return out


# ---------------------------------------------------------------------------
# shared constraint families


def _pair_scales(psi0: PsiVector, channels: PartitionedChannels,
                 cfg: ScenarioConfig) -> np.ndarray:
    """Natural magnitudes of the interference slack variables at the reference point."""
    scales = []
    for k in range(cfg.k):
        a = np.conj(channels.h_r[k])
        floor = np.sqrt(cfg.noise_c_bar_values[k])
        for i in range(cfg.k):
            if i == k:
                continue
            scales.append(max(abs(surrogates.cascade_user_value(a, i, psi0, channels)), floor))
    return np.asarray(scales)


def _comm_scale(k: int, psi0: PsiVector, channels: PartitionedChannels,
                cfg: ScenarioConfig) -> float:
    """Magnitude of user k's SINR constraint at the reference point."""
    a = np.conj(channels.h_r[k])
    _, phi0 = surrogates.unstack_psi(psi0)
    leak = abs((channels.h_r[k] * channels.e_r) @ phi0) ** 2
    total = cfg.noise_c_bar_values[k] + cfg.detector_power * leak
    for i in range(cfg.k):
        total += abs(surrogates.cascade_user_value(a, i, psi0, channels)) ** 2
    return float(cfg.gamma_c_values[k] * total)


def gamma_bar(l: int, state: BeamformingState, channels: PartitionedChannels,
              cfg: ScenarioConfig) -> float:
    """Effective BS-echo power requirement for location l at the current combiner."""
    rho2 = cfg.detector_power
    omega0 = rho2 * abs(np.vdot(state.u, channels.e_a)) ** 2 + cfg.noise_s
    coef = cfg.rcs_values[l] * abs(np.vdot(state.u, channels.c_a[l])) ** 2
    if coef <= 0.0:
        return np.inf
    return cfg.gamma_s_values[l] * omega0 / coef - rho2 * abs(channels.d[l]) ** 2


def _add_power_cone(builder: ProblemBuilder, psi_sl: slice, mk: int, p_max: float) -> None:
    f = np.zeros((2 * mk, builder.num_vars))
    f[:, psi_sl.start:psi_sl.start + 2 * mk] = np.eye(2 * mk)
    builder.add_soc(f, np.zeros(2 * mk), builder.row(), np.sqrt(p_max), "power")


def _add_modulus_cones(builder: ProblemBuilder, psi_sl: slice, mk: int, n_r: int) -> None:
    for n in range(n_r):
        f = np.zeros((2, builder.num_vars))
        base = psi_sl.start + 2 * (mk + n)
        f[0, base] = 1.0
        f[1, base + 1] = 1.0
        builder.add_soc(f, np.zeros(2), builder.row(), 1.0, f"modulus[{n}]")


def _psi_lift(builder: ProblemBuilder, mat: np.ndarray, psi_sl: slice) -> np.ndarray:
    return builder.embed(lift_matrix(mat), psi_sl)


def _psi_real_row(builder: ProblemBuilder, vec: np.ndarray, psi_sl: slice) -> np.ndarray:
    row = builder.row()
    row[psi_sl] = lift_real_row(vec)
    return row


def _add_comm_constraints(builder: ProblemBuilder, psi_sl: slice, delta_sl: slice,
                          chi_sl: slice, psi0: PsiVector, channels: PartitionedChannels,
                          cfg: ScenarioConfig, extra_affine: dict[int, int] | None = None) -> None:
    """Per-user SINR constraint plus the four slack bounds per interferer.

    extra_affine maps user index -> a variable index added to the affine side
    (the feasibility slacks of the initialization problem).
    """
    pairs = [(k, i) for k in range(cfg.k) for i in range(cfg.k) if i != k]
    pair_pos = {pair: idx for idx, pair in enumerate(pairs)}
    for k in range(cfg.k):
        a = np.conj(channels.h_r[k])
        gamma_c = cfg.gamma_c_values[k]
        minor = surrogates.corollary2_minorant(a, k, psi0, channels)

        # quadratic side: interferer slacks, detector leak, and the minorant's own quadratic
        rows = []
        for i in range(cfg.k):
            if i == k:
                continue
            for sl in (delta_sl, chi_sl):
                r = builder.row()
                r[sl.start + pair_pos[(k, i)]] = np.sqrt(gamma_c)
                rows.append(r)
        leak = np.concatenate([
            np.zeros(psi0.mk, dtype=complex),
            np.conj(channels.h_r[k] * channels.e_r),
        ])
        rows.append(np.sqrt(gamma_c * cfg.detector_power)
                    * _psi_lift(builder, leak[None, :], psi_sl))
        rows.append(_psi_lift(builder, minor.xi1, psi_sl) / np.sqrt(2.0))
        f = np.vstack(rows)

        s_row = _psi_real_row(builder, minor.lin, psi_sl)
        if extra_affine and k in extra_affine:
            s_row[extra_affine[k]] += 1.0
        s_off = minor.const - gamma_c * cfg.noise_c_bar_values[k]
        builder.add_quad_le_affine(f, np.zeros(f.shape[0]), s_row, s_off, f"comm[{k}]")

    # slack bounds: delta_{k,i} >= Lambda_i(+-a_k), chi_{k,i} >= Lambda_i(+-j a_k)
    for idx, (k, i) in enumerate(pairs):
        a = np.conj(channels.h_r[k])
        major = surrogates.lemma3_majorant(a, i, psi0, channels)
        for slack_sl, forms, tag in ((delta_sl, major.rho_forms, "re"),
                                     (chi_sl, major.zeta_forms, "im")):
            for sgn, form in zip("+-", forms):
                f = 0.5 * _psi_lift(builder, form.quad, psi_sl)
                s_row = 0.5 * _psi_real_row(builder, form.lin, psi_sl)
                s_row[slack_sl.start + idx] += 1.0
                builder.add_quad_le_affine(f, np.zeros(f.shape[0]), s_row, -form.const,
                                           f"slack[{k},{i},{tag}{sgn}]")


def _add_sensing_minorant(builder: ProblemBuilder, psi_sl: slice, l: int,
                          psi0: PsiVector, channels: PartitionedChannels,
                          bound: float) -> None:
    minor = surrogates.lemma1_minorant(channels.c_r[l], psi0, channels)
    f = _psi_lift(builder, minor.xi1, psi_sl) / np.sqrt(2.0)
    s_row = _psi_real_row(builder, minor.lin, psi_sl)
    builder.add_quad_le_affine(f, np.zeros(f.shape[0]), s_row, minor.const - bound,
                               f"sensing[{l}]")


# ---------------------------------------------------------------------------
# the three subproblems


def assemble_psi_socp(channels: PartitionedChannels, state_prev: BeamformingState,
                      cfg: ScenarioConfig, eps_penalty: float = 0.0) -> ConicProblem:
    """Jamming-maximization SOCP over psi around the previous iterate.

    Objective: minorant of the detector interference power plus the scaled
    unit-modulus penalty surrogate (the target-echo numerator term is dropped
    as negligible against the direct RIS-detector path).  Constraints: power,
    sensing minorants at the current combiner, per-user communication SINR
    with slack majorants, and the relaxed modulus bound.
    """
    psi0 = stack_psi(state_prev.w, state_prev.phi)
    n_pairs = cfg.k * (cfg.k - 1)
    minor = surrogates.lemma1_minorant(channels.e_r, psi0, channels)
    t_ref = max(0.5 * float(np.linalg.norm(minor.xi1 @ psi0.data) ** 2), 1e-300)

    builder = ProblemBuilder()
    psi_sl = builder.add_vars("psi", 2 * psi0.data.size, ref=lift_vector(psi0.data))
    pair_scale = _pair_scales(psi0, channels, cfg)
    delta_sl = builder.add_vars("slack_delta", n_pairs, scale=pair_scale)
    chi_sl = builder.add_vars("slack_chi", n_pairs, scale=pair_scale)
    t_sl = builder.add_vars("obj_epigraph", 1, scale=t_ref)

    _add_power_cone(builder, psi_sl, psi0.mk, cfg.p_max)
    _add_modulus_cones(builder, psi_sl, psi0.mk, psi0.n_r)
    for l in range(cfg.l):
        bound = gamma_bar(l, state_prev, channels, cfg)
        if bound == np.inf:
            builder.add_ineq(builder.row(), -1.0, f"sensing[{l}]-impossible")
        elif bound > 0.0:
            _add_sensing_minorant(builder, psi_sl, l, psi0, channels, bound)
    _add_comm_constraints(builder, psi_sl, delta_sl, chi_sl, psi0, channels, cfg)

    f = _psi_lift(builder, minor.xi1, psi_sl) / np.sqrt(2.0)
    s_row = builder.row()
    s_row[t_sl.start] = 1.0
    builder.add_quad_le_affine(f, np.zeros(f.shape[0]), s_row, 0.0, "objective-epigraph")

    obj = _psi_real_row(builder, minor.lin, psi_sl)
    obj[t_sl.start] = -1.0
    if eps_penalty > 0.0:
        obj += eps_penalty * _psi_real_row(
            builder, surrogates.penalty_linearization(psi0), psi_sl)
    builder.objective = obj
    builder.objective_offset = minor.const
    return builder.finalize()


def assemble_sense_max_socp(channels: PartitionedChannels, state_prev: BeamformingState,
                            cfg: ScenarioConfig, eps_penalty: float = 0.0) -> ConicProblem:
    """Benchmark objective: maximize the sum of sensing-SINR surrogates.

    Same constraint set as the jamming SOCP, but the objective aggregates the
    per-location sensing minorants and ignores the adversarial detector.
    """
    psi0 = stack_psi(state_prev.w, state_prev.phi)
    n_pairs = cfg.k * (cfg.k - 1)
    rho2 = cfg.detector_power
    omega0 = rho2 * abs(np.vdot(state_prev.u, channels.e_a)) ** 2 + cfg.noise_s
    minors, coefs = [], []
    for l in range(cfg.l):
        coefs.append(cfg.rcs_values[l] * abs(np.vdot(state_prev.u, channels.c_a[l])) ** 2
                     / omega0)
        minors.append(surrogates.lemma1_minorant(channels.c_r[l], psi0, channels))
    t_ref = max(sum(c * 0.5 * float(np.linalg.norm(mn.xi1 @ psi0.data) ** 2)
                    for c, mn in zip(coefs, minors)), 1e-300)

    builder = ProblemBuilder()
    psi_sl = builder.add_vars("psi", 2 * psi0.data.size, ref=lift_vector(psi0.data))
    pair_scale = _pair_scales(psi0, channels, cfg)
    delta_sl = builder.add_vars("slack_delta", n_pairs, scale=pair_scale)
    chi_sl = builder.add_vars("slack_chi", n_pairs, scale=pair_scale)
    t_sl = builder.add_vars("obj_epigraph", 1, scale=t_ref)

    _add_power_cone(builder, psi_sl, psi0.mk, cfg.p_max)
    _add_modulus_cones(builder, psi_sl, psi0.mk, psi0.n_r)
    for l in range(cfg.l):
        bound = gamma_bar(l, state_prev, channels, cfg)
        if bound == np.inf:
            builder.add_ineq(builder.row(), -1.0, f"sensing[{l}]-impossible")
        elif bound > 0.0:
            _add_sensing_minorant(builder, psi_sl, l, psi0, channels, bound)
    _add_comm_constraints(builder, psi_sl, delta_sl, chi_sl, psi0, channels, cfg)

    obj = builder.row()
    offset = 0.0
    quad_rows = []
    for l in range(cfg.l):
        obj += coefs[l] * _psi_real_row(builder, minors[l].lin, psi_sl)
        offset += coefs[l] * (minors[l].const + rho2 * abs(channels.d[l]) ** 2)
        quad_rows.append(np.sqrt(coefs[l] / 2.0) * _psi_lift(builder, minors[l].xi1, psi_sl))
    s_row = builder.row()
    s_row[t_sl.start] = 1.0
    builder.add_quad_le_affine(np.vstack(quad_rows), np.zeros(2 * psi0.m * cfg.l),
                               s_row, 0.0, "objective-epigraph")
    obj[t_sl.start] = -1.0
    if eps_penalty > 0.0:
        obj += eps_penalty * _psi_real_row(
            builder, surrogates.penalty_linearization(psi0), psi_sl)
    builder.objective = obj
    builder.objective_offset = offset
    return builder.finalize()


def assemble_u_l1(channels: PartitionedChannels, state: BeamformingState,
                  u_prev: np.ndarray, cfg: ScenarioConfig,
                  norm_slack: float = 0.0) -> ConicProblem:
    """Sparsity-promoting combiner program: min ||u||_1 under linearized sensing.

    With norm_slack = 0 the norm constraints are the literal ball plus
    linearized lower bound, whose intersection at a unit-norm expansion point
    is exactly {u_prev}; a positive norm_slack opens a trust lens of radius
    sqrt(norm_slack) around u_prev so the sparsification can actually move
    (callers renormalize accepted iterates, which never hurts sensing).
    """
    n_a = channels.n_a
    builder = ProblemBuilder()
    u_sl = builder.add_vars("u", 2 * n_a, ref=lift_vector(u_prev))
    t_sl = builder.add_vars("l1_epigraph", n_a, ref=np.maximum(np.abs(u_prev), 1e-3))

    for i in range(n_a):
        f = np.zeros((2, builder.num_vars))
        f[0, u_sl.start + 2 * i] = 1.0
        f[1, u_sl.start + 2 * i + 1] = 1.0
        c_row = builder.row()
        c_row[t_sl.start + i] = 1.0
        builder.add_soc(f, np.zeros(2), c_row, 0.0, f"abs[{i}]")

    f = np.zeros((2 * n_a, builder.num_vars))
    f[:, u_sl] = np.eye(2 * n_a)
    builder.add_soc(f, np.zeros(2 * n_a), builder.row(), 1.0, "norm-upper")

    vec, const = surrogates.unit_norm_linearization(u_prev)
    row = builder.row()
    row[u_sl] = -lift_real_row(vec)
    builder.add_ineq(row, const + norm_slack, "norm-lower")

    for l in range(cfg.l):
        form = surrogates.u_sensing_linearization(l, u_prev, channels, cfg, state)
        f = builder.embed(lift_matrix(form.quad[None, :].conj()), u_sl)
        s_row = builder.row()
        s_row[u_sl] = lift_real_row(form.lin)
        builder.add_quad_le_affine(f, np.zeros(2), s_row,
                                   form.lin_const - form.rhs_const, f"sensing-u[{l}]")

    obj = builder.row()
    obj[t_sl] = -1.0
    builder.objective = obj
    return builder.finalize()


def assemble_init_problem(channels: PartitionedChannels, state_prev: BeamformingState,
                          cfg: ScenarioConfig) -> ConicProblem:
    """Feasibility-refinement program: minimize the constraint slacks over psi.

    Sensing and communication constraints carry nonnegative slacks on the
    affine side; a zero optimal slack sum certifies a feasible point for the
    original design problem at the current combiner.
    """
    psi0 = stack_psi(state_prev.w, state_prev.phi)
    n_pairs = cfg.k * (cfg.k - 1)
    rho2 = cfg.detector_power
    omega0 = rho2 * abs(np.vdot(state_prev.u, channels.e_a)) ** 2 + cfg.noise_s

    builder = ProblemBuilder()
    psi_sl = builder.add_vars("psi", 2 * psi0.data.size, ref=lift_vector(psi0.data))
    pair_scale = _pair_scales(psi0, channels, cfg)
    delta_sl = builder.add_vars("slack_delta", n_pairs, scale=pair_scale)
    chi_sl = builder.add_vars("slack_chi", n_pairs, scale=pair_scale)
    ls_scale = np.maximum(cfg.gamma_s_values * omega0, 1e-300)
    ls_sl = builder.add_vars("lambda_s", cfg.l, scale=ls_scale)
    lc_scale = np.array([max(_comm_scale(k, psi0, channels, cfg), 1e-300)
                         for k in range(cfg.k)])
    lc_sl = builder.add_vars("lambda_c", cfg.k, scale=lc_scale)

    _add_power_cone(builder, psi_sl, psi0.mk, cfg.p_max)
    _add_modulus_cones(builder, psi_sl, psi0.mk, psi0.n_r)

    for l in range(cfg.l):
        uc = abs(np.vdot(state_prev.u, channels.c_a[l])) ** 2
        coef = cfg.rcs_values[l] * uc
        off = coef * rho2 * abs(channels.d[l]) ** 2
        need = cfg.gamma_s_values[l] * omega0
        if coef <= 0.0:
            row = builder.row()
            row[ls_sl.start + l] = -1.0
            builder.add_ineq(row, off - need, f"sensing-slack[{l}]")
            continue
        minor = surrogates.lemma1_minorant(channels.c_r[l], psi0, channels)
        f = np.sqrt(coef / 2.0) * _psi_lift(builder, minor.xi1, psi_sl)
        s_row = coef * _psi_real_row(builder, minor.lin, psi_sl)
        s_row[ls_sl.start + l] = 1.0
        builder.add_quad_le_affine(f, np.zeros(f.shape[0]), s_row,
                                   coef * minor.const + off - need, f"sensing-slack[{l}]")

    extra = {k: lc_sl.start + k for k in range(cfg.k)}
    _add_comm_constraints(builder, psi_sl, delta_sl, chi_sl, psi0, channels, cfg,
                          extra_affine=extra)

    for name, sl in (("lambda_s", ls_sl), ("lambda_c", lc_sl)):
        for i in range(sl.stop - sl.start):
            row = builder.row()
            row[sl.start + i] = -1.0
            builder.add_ineq(row, 0.0, f"{name}[{i}]>=0")

    obj = builder.row()
    obj[ls_sl] = -1.0
    obj[lc_sl] = -1.0
    builder.objective = obj
    return builder.finalize()


def assemble_init_u_problem(channels: PartitionedChannels, state: BeamformingState,
                            u_prev: np.ndarray, cfg: ScenarioConfig) -> ConicProblem:
    """Combiner refinement inside initialization: minimize the sensing slacks over u."""
    n_a = channels.n_a
    builder = ProblemBuilder()
    u_sl = builder.add_vars("u", 2 * n_a, ref=lift_vector(u_prev))
    ls_scale = []
    for l in range(cfg.l):
        proj0 = abs(np.vdot(channels.c_a[l], u_prev)) ** 2
        rcs = cfg.rcs_values[l]
        bs_echo = float(np.linalg.norm(
            ((np.conj(channels.c_r[l]) * state.phi) @ channels.g_r) @ state.w) ** 2)
        denom = rcs * bs_echo + rcs * cfg.detector_power * abs(channels.d[l]) ** 2
        need = cfg.gamma_s_values[l] * (
            cfg.detector_power * abs(np.vdot(u_prev, channels.e_a)) ** 2 + cfg.noise_s)
        ls_scale.append(max(denom * proj0, need, 1e-300))
    ls_sl = builder.add_vars("lambda_s", cfg.l, scale=np.asarray(ls_scale))

    f = np.zeros((2 * n_a, builder.num_vars))
    f[:, u_sl] = np.eye(2 * n_a)
    builder.add_soc(f, np.zeros(2 * n_a), builder.row(), 1.0, "norm-upper")
    vec, const = surrogates.unit_norm_linearization(u_prev)
    row = builder.row()
    row[u_sl] = -lift_real_row(vec)
    builder.add_ineq(row, const, "norm-lower")

    for l in range(cfg.l):
        rcs = cfg.rcs_values[l]
        bs_echo = float(np.linalg.norm(
            ((np.conj(channels.c_r[l]) * state.phi) @ channels.g_r) @ state.w) ** 2)
        denom = rcs * bs_echo + rcs * cfg.detector_power * abs(channels.d[l]) ** 2
        gamma = cfg.gamma_s_values[l]
        proj = complex(np.vdot(channels.c_a[l], u_prev))
        f = builder.embed(np.sqrt(gamma * cfg.detector_power)
                          * lift_matrix(np.conj(channels.e_a)[None, :]), u_sl)
        s_row = builder.row()
        s_row[u_sl] = denom * lift_real_row(2.0 * channels.c_a[l] * proj)
        s_row[ls_sl.start + l] = 1.0
        builder.add_quad_le_affine(f, np.zeros(2), s_row,
                                   -denom * abs(proj) ** 2 - gamma * cfg.noise_s,
                                   f"sensing-slack-u[{l}]")

    for l in range(cfg.l):
        row = builder.row()
        row[ls_sl.start + l] = -1.0
        builder.add_ineq(row, 0.0, f"lambda_s[{l}]>=0")

    obj = builder.row()
    obj[ls_sl] = -1.0
    builder.objective = obj
    return builder.finalize()


# ---------------------------------------------------------------------------
# backends


def _solve_clarabel(problem: ConicProblem) -> tuple[str, np.ndarray | None, str]:
    import clarabel
    from scipy import sparse

    n = problem.num_vars
    rows = [problem.ineq_a]
    rhs = [problem.ineq_b]
    cones = []
    if problem.ineq_a.shape[0]:
        cones.append(clarabel.NonnegativeConeT(problem.ineq_a.shape[0]))
    for blk in problem.soc_blocks:
        rows.append(-np.vstack([blk.c_row[None, :], blk.f]))
        rhs.append(np.concatenate([[blk.c_off], blk.g]))
        cones.append(clarabel.SecondOrderConeT(blk.dim))
    a = sparse.csc_matrix(np.vstack(rows))
    b = np.concatenate(rhs)
    p = sparse.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = SOLVER_TOL
    settings.tol_gap_abs = SOLVER_TOL
    settings.tol_gap_rel = SOLVER_TOL
    solver = clarabel.DefaultSolver(p, -problem.objective, a, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        return OPTIMAL, np.asarray(sol.x), status
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return INFEASIBLE, None, status
    return NUMERICAL_FAILURE, None, status


def _solve_cvxopt(problem: ConicProblem) -> tuple[str, np.ndarray | None, str]:
    from cvxopt import matrix, solvers

    rows = [problem.ineq_a]
    rhs = [problem.ineq_b]
    dims = {"l": problem.ineq_a.shape[0], "q": [], "s": []}
    for blk in problem.soc_blocks:
        rows.append(-np.vstack([blk.c_row[None, :], blk.f]))
        rhs.append(np.concatenate([[blk.c_off], blk.g]))
        dims["q"].append(blk.dim)
    g = matrix(np.vstack(rows))
    h = matrix(np.concatenate(rhs))
    c = matrix(-problem.objective)
    options = {"show_progress": False, "abstol": SOLVER_TOL, "reltol": SOLVER_TOL}
    sol = solvers.conelp(c, g, h, dims, options=options)
    status = sol["status"]
    if status == "optimal":
        return OPTIMAL, np.asarray(sol["x"]).ravel(), status
    if status == "primal infeasible":
        return INFEASIBLE, None, status
    return NUMERICAL_FAILURE, None, status


_BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def default_backend() -> str:
    # cvxopt's dense path is markedly more robust on these small, badly
    # conditioned cones; clarabel remains available as a fallback/override
    try:
        import cvxopt  # noqa: F401
        return "cvxopt"
    except ImportError:
        return "clarabel"


def solve(problem: ConicProblem, backend: str | None = None) -> SolveResult:
    """Solve a ConicProblem and revalidate the solution against its description.

    On a numerical failure of the requested backend the other available
    backend is tried before giving up; infeasibility verdicts are final.
    """
    backend = backend or default_backend()
    try:
        status, x, detail = _BACKENDS[backend](problem)
    except Exception as exc:  # backend-internal breakdown counts as numerical failure
        status, x, detail = NUMERICAL_FAILURE, None, f"{type(exc).__name__}: {exc}"
    if status == NUMERICAL_FAILURE:
        for alt in _BACKENDS:
            if alt == backend:
                continue
            try:
                alt_status, alt_x, alt_detail = _BACKENDS[alt](problem)
            except Exception:  # missing backend or hard failure: keep first verdict
                continue
            if alt_status == OPTIMAL:
                backend, status, x, detail = alt, alt_status, alt_x, f"{detail}->{alt_detail}"
                break
    if status != OPTIMAL:
        return SolveResult(status=status, x=None, primal={}, objective=np.nan,
                           backend=backend, detail=detail)
    violation = problem.max_violation(x)
    if violation > VALIDATION_TOL:
        return SolveResult(status=NUMERICAL_FAILURE, x=x, primal={}, objective=np.nan,
                           backend=backend,
                           detail=f"{detail}; revalidation violation {violation:.2e}")
    scale = problem.var_scale if problem.var_scale is not None else np.ones(problem.num_vars)
    primal = {name: x[sl] * scale[sl] for name, sl in problem.annotations.items()}
    return SolveResult(status=OPTIMAL, x=x, primal=primal,
                       objective=problem.objective_value(x), backend=backend, detail=detail)


def extract_psi(result: SolveResult, m: int, k: int, n_r: int) -> PsiVector:
    return PsiVector(data=restore_complex(result.primal["psi"]), m=m, k=k, n_r=n_r)


def extract_u(result: SolveResult) -> np.ndarray:
    return restore_complex(result.primal["u"])
