"""SINRs, energy-detector thresholds and FA/MD probabilities.

Everything here is a pure function of its inputs.  The three SINR variants:

* communication SINR per user (reflected BS signal vs. interference),
* sensing SINR at the RIS absorptive elements under the target-present
  hypothesis,
* sensing SINR at the adversarial detector, which the optimizer suppresses.

Detection follows the likelihood-ratio energy test on exponential energies:
single-sample FA/MD probabilities are closed forms of the SINR alone, and
averaging t_s samples turns them into Erlang tail sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import PartitionedChannels, ScenarioConfig

#: relative hypothesis gap below which 0/0 forms switch to their limits
_LIMIT_GAP = 1e-9


@dataclass
class BeamformingState:
    """Decision variables: transmit beams W (m x k), RIS phases phi (n_r), combiner u (n_a)."""

    w: np.ndarray
    phi: np.ndarray
    u: np.ndarray

    def copy(self) -> "BeamformingState":
        return BeamformingState(self.w.copy(), self.phi.copy(), self.u.copy())


@dataclass
class DetectionStats:
    """Per-location detection quantities at the RIS processing unit."""

    omega0: float
    omega1: np.ndarray          # (l,)
    thresh: np.ndarray          # (l,) per-location energy thresholds
    global_thresh: float        # min over locations
    fa: np.ndarray              # (l,) single-sample false-alarm probability
    md: np.ndarray              # (l,) single-sample missed-detection probability
    fa_avg: np.ndarray          # (l,) t_s-averaged
    md_avg: np.ndarray          # (l,)


def reflected_row(a: np.ndarray, state: BeamformingState, g_r: np.ndarray) -> np.ndarray:
    """a^H * Phi * G_r as a 1 x m row, with Phi = diag(state.phi)."""
    return (np.conj(a) * state.phi) @ g_r


def transposed_row(a: np.ndarray, state: BeamformingState, g_r: np.ndarray) -> np.ndarray:
    """a^T * Phi * G_r (the user channels enter transposed, not conjugated)."""
    return (a * state.phi) @ g_r


def interference_power(state: BeamformingState, channels: PartitionedChannels) -> float:
    """||e_r^H Phi G_r W||^2, the jamming power delivered to the adversarial detector."""
    row = reflected_row(channels.e_r, state, channels.g_r)
    return float(np.linalg.norm(row @ state.w) ** 2)


def comm_sinr(k: int, state: BeamformingState, channels: PartitionedChannels,
              cfg: ScenarioConfig) -> float:
    """Communication SINR of user k."""
    if not 0 <= k < cfg.k:
        raise IndexError(f"user index {k} out of range")
    row = transposed_row(channels.h_r[k], state, channels.g_r)
    gains = np.abs(row @ state.w) ** 2
    leak = cfg.detector_power * abs((channels.h_r[k] * state.phi) @ channels.e_r) ** 2
    noise = cfg.noise_c_bar_values[k]
    interference = float(np.sum(gains)) - float(gains[k])
    return float(gains[k] / (interference + leak + noise))


def sensing_sinr_ris(l: int, state: BeamformingState, channels: PartitionedChannels,
                     cfg: ScenarioConfig) -> float:
    """Sensing SINR at the RIS absorptive elements for a target at location l."""
    omega0, omega1 = omega_params(l, state, channels, cfg)
    return (omega1 - omega0) / omega0


def sensing_sinr_detector(l: int, state: BeamformingState, channels: PartitionedChannels,
                          cfg: ScenarioConfig) -> float:
    """Sensing SINR at the adversarial detector for a target at location l."""
    rcs = cfg.rcs_values[l]
    rho2 = cfg.detector_power
    d_abs2 = abs(channels.d[l]) ** 2
    bs_echo = float(np.linalg.norm(
        reflected_row(channels.c_r[l], state, channels.g_r) @ state.w) ** 2)
    numer = rcs * rho2 * d_abs2 ** 2 + rcs * d_abs2 * bs_echo
    denom = interference_power(state, channels) + cfg.noise_d
    return float(numer / denom)


def max_detector_sinr(state: BeamformingState, channels: PartitionedChannels,
                      cfg: ScenarioConfig) -> float:
    return max(sensing_sinr_detector(l, state, channels, cfg) for l in range(cfg.l))


def omega_params(l: int, state: BeamformingState, channels: PartitionedChannels,
                 cfg: ScenarioConfig) -> tuple[float, float]:
    """Energy means (omega0, omega1_l) of the two detection hypotheses at the RIS."""
    if channels.n_a < 1:
        raise ValueError("omega parameters need at least one absorptive element")
    rho2 = cfg.detector_power
    omega0 = rho2 * abs(np.vdot(state.u, channels.e_a)) ** 2 + cfg.noise_s
    rcs = cfg.rcs_values[l]
    uc = abs(np.vdot(state.u, channels.c_a[l])) ** 2
    bs_echo = float(np.linalg.norm(
        reflected_row(channels.c_r[l], state, channels.g_r) @ state.w) ** 2)
    omega1 = rcs * uc * bs_echo + rcs * rho2 * abs(channels.d[l]) ** 2 * uc + omega0
    return float(omega0), float(omega1)


def detection_threshold(omega0: float, omega1: float) -> float:
    """Likelihood-ratio energy threshold omega1*omega0/(omega1-omega0)*ln(omega1/omega0)."""
    if omega0 <= 0:
        raise ValueError("omega0 must be positive")
    if omega1 <= omega0:
        raise ValueError("degenerate hypothesis pair: omega1 must exceed omega0")
    g = omega1 / omega0 - 1.0
    if g < _LIMIT_GAP:
        return omega0 * (1.0 + g / 2.0)
    return omega0 * (1.0 + g) * math.log1p(g) / g


def global_threshold(omega0: float, omega1: np.ndarray) -> float:
    """Single threshold for deciding target presence at any location: min over l."""
    return min(detection_threshold(omega0, o1) for o1 in np.atleast_1d(omega1))


def fa_probability(gamma: float) -> float:
    """Single-sample false-alarm probability (1+g)^-(1+1/g); e^-1 in the g->0 limit."""
    if gamma < 0:
        raise ValueError("sensing SINR must be nonnegative")
    if gamma < _LIMIT_GAP:
        return math.exp(-1.0 - gamma / 2.0)
    return math.exp(-(1.0 + 1.0 / gamma) * math.log1p(gamma))


def md_probability(gamma: float) -> float:
    """Single-sample missed-detection probability 1-(1+g)^-1/g; 1-e^-1 in the g->0 limit."""
    if gamma < 0:
        raise ValueError("sensing SINR must be nonnegative")
    if gamma < _LIMIT_GAP:
        return 1.0 - math.exp(-1.0 + gamma / 2.0)
    return 1.0 - math.exp(-math.log1p(gamma) / gamma)


def _erlang_tail(x: float, t_s: int) -> float:
    """exp(-x) * sum_{i=0}^{t_s-1} x^i / i!, accumulated in log space."""
    if x <= 0.0:
        return 1.0
    log_x = math.log(x)
    log_term = 0.0
    log_sum = 0.0
    for i in range(1, t_s):
        log_term += log_x - math.log(i)
        log_sum = np.logaddexp(log_sum, log_term)
    return float(math.exp(log_sum - x))


def fa_averaged(p: float, t_s: int) -> float:
    """False-alarm probability after averaging t_s received energies."""
    if t_s < 1:
        raise ValueError("t_s must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p in (0.0, 1.0):
        return p
    return _erlang_tail(-t_s * math.log(p), t_s)


def md_averaged(q: float, t_s: int) -> float:
    """Missed-detection probability after averaging t_s received energies."""
    if t_s < 1:
        raise ValueError("t_s must be at least 1")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if q in (0.0, 1.0):
        return q
    return 1.0 - _erlang_tail(-t_s * math.log1p(-q), t_s)


def detection_stats(state: BeamformingState, channels: PartitionedChannels,
                    cfg: ScenarioConfig, t_s: int | None = None) -> DetectionStats:
    """Thresholds and FA/MD probabilities across all monitored locations."""
    t_s = cfg.t_s if t_s is None else t_s
    omega1 = np.empty(cfg.l)
    thresh = np.empty(cfg.l)
    fa = np.empty(cfg.l)
    md = np.empty(cfg.l)
    omega0 = 0.0
    for l in range(cfg.l):
        omega0, omega1[l] = omega_params(l, state, channels, cfg)
        thresh[l] = detection_threshold(omega0, omega1[l])
        gamma = (omega1[l] - omega0) / omega0
        fa[l] = fa_probability(gamma)
        md[l] = md_probability(gamma)
    fa_avg = np.array([fa_averaged(p, t_s) for p in fa])
    md_avg = np.array([md_averaged(q, t_s) for q in md])
    return DetectionStats(
        omega0=omega0, omega1=omega1, thresh=thresh,
        global_thresh=float(thresh.min()), fa=fa, md=md,
        fa_avg=fa_avg, md_avg=md_avg,
    )


def constraint_report(state: BeamformingState, channels: PartitionedChannels,
                      cfg: ScenarioConfig) -> dict:
    """Independent re-evaluation of every constraint of the design problem.

    Used to audit solver output; reports worst-case margins so callers can
    apply their own tolerances.
    """
    sens = np.array([sensing_sinr_ris(l, state, channels, cfg) for l in range(cfg.l)])
    comm = np.array([comm_sinr(k, state, channels, cfg) for k in range(cfg.k)])
    power = float(np.linalg.norm(state.w) ** 2)
    phi_mag = np.abs(state.phi) if state.phi.size else np.array([1.0])
    return {
        "sensing_sinr": sens,
        "sensing_margin": float(np.min(sens / cfg.gamma_s_values)) - 1.0,
        "comm_sinr": comm,
        "comm_margin": float(np.min(comm / cfg.gamma_c_values)) - 1.0,
        "power": power,
        "power_margin": 1.0 - power / cfg.p_max,
        "phi_modulus_err": float(np.max(np.abs(phi_mag - 1.0))),
        "u_norm_err": abs(float(np.linalg.norm(state.u)) - 1.0),
    }


def feasible(report: dict, sinr_rel_tol: float = 1e-4, power_rel_tol: float = 1e-6,
             phi_tol: float = 1e-3, u_tol: float = 1e-6) -> bool:
    """Whether a constraint report satisfies the design problem at the given tolerances."""
    return (
        report["sensing_margin"] >= -sinr_rel_tol
        and report["comm_margin"] >= -sinr_rel_tol
        and report["power_margin"] >= -power_rel_tol
        and report["phi_modulus_err"] <= phi_tol
        and report["u_norm_err"] <= u_tol
    )
