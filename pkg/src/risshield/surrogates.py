"""SCA surrogate construction for the joint beamformer/phase-shift variable.

The stacked variable psi = [vec(W); conj(diag(Phi))] makes every cascaded
term a^H Phi G_r W bilinear in two blocks of psi.  Around an expansion point
psi0 this module builds:

* a concave minorant of ||a^H Phi G_r W||^2 (used for the jamming objective
  and the sensing constraints),
* its per-user variant minorizing |a^H Phi G_r w_k|^2,
* a convex majorant of |a^H Phi G_r w_k|^2 via two slack variables bounding
  the real/imaginary parts,
* affine linearizations for the combiner subproblem and the unit-modulus
  penalty.

All Kronecker constructions assume column-major vec(W); the matrices are
materialized densely, which is cheap at the problem sizes of interest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import PartitionedChannels, ScenarioConfig
from .metrics import BeamformingState


@dataclass
class PsiVector:
    """Stacked decision vector [vec(W); conj(diag(Phi))] with its block dimensions."""

    data: np.ndarray
    m: int
    k: int
    n_r: int

    def __post_init__(self):
        if self.data.size != self.m * self.k + self.n_r:
            raise ValueError("psi length does not match m*k + n_r")

    @property
    def mk(self) -> int:
        return self.m * self.k

    @property
    def w_block(self) -> np.ndarray:
        return self.data[: self.mk]

    @property
    def phi_block(self) -> np.ndarray:
        """The raw Phi block, which stores conj(diag(Phi))."""
        return self.data[self.mk:]


def stack_psi(w: np.ndarray, phi: np.ndarray) -> PsiVector:
    m, k = w.shape
    data = np.concatenate([w.reshape(-1, order="F"), np.conj(phi)])
    return PsiVector(data=data, m=m, k=k, n_r=phi.size)


def unstack_psi(psi: PsiVector) -> tuple[np.ndarray, np.ndarray]:
    w = psi.w_block.reshape(psi.m, psi.k, order="F")
    phi = np.conj(psi.phi_block)
    return w, phi


@dataclass
class MinorantData:
    """Concave form -0.5*||xi1 psi||^2 + Re{lin^H psi} + const."""

    xi1: np.ndarray
    lin: np.ndarray
    const: float

    def evaluate(self, psi_data: np.ndarray) -> float:
        quad = float(np.linalg.norm(self.xi1 @ psi_data) ** 2)
        return -0.5 * quad + float(np.real(np.vdot(self.lin, psi_data))) + self.const


@dataclass
class LambdaForm:
    """Convex form 0.25*||quad psi||^2 - 0.5*Re{lin^H psi} + const."""

    quad: np.ndarray
    lin: np.ndarray
    const: float

    def evaluate(self, psi_data: np.ndarray) -> float:
        value = 0.25 * float(np.linalg.norm(self.quad @ psi_data) ** 2)
        return value - 0.5 * float(np.real(np.vdot(self.lin, psi_data))) + self.const


@dataclass
class MajorantData:
    """Slack pair (rho_k, zeta_k) with rho >= both real-part forms, zeta >= both imaginary."""

    user: int
    rho_forms: tuple[LambdaForm, LambdaForm]
    zeta_forms: tuple[LambdaForm, LambdaForm]

    def min_slacks(self, psi_data: np.ndarray) -> tuple[float, float]:
        rho = max(f.evaluate(psi_data) for f in self.rho_forms)
        zeta = max(f.evaluate(psi_data) for f in self.zeta_forms)
        return rho, zeta


def _phase_column(a: np.ndarray, psi0: PsiVector) -> np.ndarray:
    # A * conj(phi0) with A = diag(a); psi0's Phi block already stores conj(phi0).
    return a * psi0.phi_block


def _right_block(a: np.ndarray, g_r: np.ndarray) -> np.ndarray:
    # G_r^H * diag(a), the map from the Phi block of psi to the cascade output.
    return g_r.conj().T * a[None, :]


def lemma1_minorant(a: np.ndarray, psi0: PsiVector, channels: PartitionedChannels) -> MinorantData:
    """Concave lower bound on ||a^H Phi G_r W||^2 around psi0, tight at psi0."""
    g_r = channels.g_r
    if a.size != channels.n_r:
        raise ValueError("constant vector length must equal n_r")
    w0, _ = unstack_psi(psi0)
    rblock = _right_block(a, g_r)
    z0 = w0.conj().T @ (g_r.conj().T @ _phase_column(a, psi0))
    left = np.kron(z0[None, :], np.eye(psi0.m))
    xi1 = np.hstack([left, -rblock])
    xi2 = np.hstack([left, rblock])
    xi3 = np.hstack([np.zeros((psi0.k, psi0.mk), dtype=complex), w0.conj().T @ rblock])
    lin = xi2.conj().T @ (xi2 @ psi0.data)
    const = -0.5 * float(np.linalg.norm(xi2 @ psi0.data) ** 2) \
        - float(np.linalg.norm(xi3 @ psi0.data) ** 2)
    return MinorantData(xi1=xi1, lin=lin, const=const)


def corollary2_minorant(a: np.ndarray, k: int, psi0: PsiVector,
                        channels: PartitionedChannels) -> MinorantData:
    """Concave lower bound on |a^H Phi G_r w_k|^2 around psi0."""
    if not 0 <= k < psi0.k:
        raise IndexError(f"user index {k} out of range")
    g_r = channels.g_r
    w0, _ = unstack_psi(psi0)
    rblock = _right_block(a, g_r)
    s0 = complex(w0[:, k].conj() @ (g_r.conj().T @ _phase_column(a, psi0)))
    selector = np.zeros((1, psi0.k))
    selector[0, k] = 1.0
    left = s0 * np.kron(selector, np.eye(psi0.m))
    xi1 = np.hstack([left, -rblock])
    xi2 = np.hstack([left, rblock])
    row3 = np.concatenate([np.zeros(psi0.mk, dtype=complex), w0[:, k].conj() @ rblock])
    lin = xi2.conj().T @ (xi2 @ psi0.data)
    const = -0.5 * float(np.linalg.norm(xi2 @ psi0.data) ** 2) \
        - abs(complex(row3 @ psi0.data)) ** 2
    return MinorantData(xi1=xi1, lin=lin, const=const)


def _pi_matrix(a: np.ndarray, k: int, psi0: PsiVector, g_r: np.ndarray) -> np.ndarray:
    # Pi_k(a) = [ delta_k^T (x) conj(A) G_r,  I_{n_r} ]: maps psi to conj(phi) + conj(A) G_r w_k.
    selector = np.zeros((1, psi0.k))
    selector[0, k] = 1.0
    left = np.kron(selector, np.conj(a)[:, None] * g_r)
    return np.hstack([left, np.eye(psi0.n_r, dtype=complex)])


def _lambda_form(a: np.ndarray, k: int, psi0: PsiVector, g_r: np.ndarray) -> LambdaForm:
    pi_pos = _pi_matrix(a, k, psi0, g_r)
    pi_neg = _pi_matrix(-a, k, psi0, g_r)
    ref = pi_neg @ psi0.data
    return LambdaForm(
        quad=pi_pos,
        lin=pi_neg.conj().T @ ref,
        const=0.25 * float(np.linalg.norm(ref) ** 2),
    )


def lemma3_majorant(a: np.ndarray, k: int, psi0: PsiVector,
                    channels: PartitionedChannels) -> MajorantData:
    """Convex upper bound |a^H Phi G_r w_k|^2 <= rho_k^2 + zeta_k^2.

    rho_k is constrained above both +/-Re forms and zeta_k above both +/-Im
    forms, so the minimal feasible slacks are |Re{.}| and |Im{.}| at psi0.
    """
    if not 0 <= k < psi0.k:
        raise IndexError(f"user index {k} out of range")
    g_r = channels.g_r
    return MajorantData(
        user=k,
        rho_forms=(_lambda_form(a, k, psi0, g_r), _lambda_form(-a, k, psi0, g_r)),
        zeta_forms=(_lambda_form(1j * a, k, psi0, g_r), _lambda_form(-1j * a, k, psi0, g_r)),
    )


@dataclass
class USensingForm:
    """Linearized sensing constraint in u: |quad^H u|^2 + rhs_const <= Re{lin^H u} + lin_const."""

    lin: np.ndarray
    lin_const: float
    quad: np.ndarray
    rhs_const: float

    def margin(self, u: np.ndarray) -> float:
        lhs = float(np.real(np.vdot(self.lin, u))) + self.lin_const
        rhs = abs(np.vdot(self.quad, u)) ** 2 + self.rhs_const
        return lhs - rhs


def u_sensing_linearization(l: int, u_prev: np.ndarray, channels: PartitionedChannels,
                            cfg: ScenarioConfig, state: BeamformingState) -> USensingForm:
    """Sensing-SINR constraint for location l, linearized around u_prev."""
    if np.linalg.norm(u_prev) == 0:
        raise ValueError("expansion point u_prev must be nonzero")
    rcs = cfg.rcs_values[l]
    row = (np.conj(channels.c_r[l]) * state.phi) @ channels.g_r
    bs_echo = float(np.linalg.norm(row @ state.w) ** 2)
    denom = rcs * bs_echo + rcs * cfg.detector_power * abs(channels.d[l]) ** 2
    if denom <= 0:
        raise ValueError(f"no signal energy reaches location {l}")
    c_a = channels.c_a[l]
    proj = complex(np.vdot(c_a, u_prev))
    gamma = cfg.gamma_s_values[l]
    return USensingForm(
        lin=2.0 * c_a * proj,
        lin_const=-abs(proj) ** 2,
        quad=np.sqrt(gamma * cfg.detector_power / denom) * channels.e_a,
        rhs_const=gamma * cfg.noise_s / denom,
    )


def unit_norm_linearization(u_prev: np.ndarray) -> tuple[np.ndarray, float]:
    """Affine side of ||u|| = 1: Re{vec^H u} + const >= 0, paired with ||u|| <= 1."""
    return 2.0 * u_prev, -float(np.linalg.norm(u_prev) ** 2) - 1.0


def penalty_linearization(psi_prev: PsiVector) -> np.ndarray:
    """Linear surrogate coefficient for the unit-modulus penalty ||Phi||_F^2.

    Returns v with surrogate term Re{v^H psi}; v is supported on the Phi block
    only, and 2*Re{v^H psi} - ||Phi_prev||_F^2 minorizes ||Phi||_F^2.
    """
    v = np.zeros_like(psi_prev.data)
    v[psi_prev.mk:] = psi_prev.phi_block
    return v


def cascade_value(a: np.ndarray, psi: PsiVector, channels: PartitionedChannels) -> float:
    """Direct evaluation of ||a^H Phi G_r W||^2 at psi (oracle for the surrogates)."""
    w, phi = unstack_psi(psi)
    row = (np.conj(a) * phi) @ channels.g_r
    return float(np.linalg.norm(row @ w) ** 2)


def cascade_user_value(a: np.ndarray, k: int, psi: PsiVector,
                       channels: PartitionedChannels) -> complex:
    """Direct evaluation of a^H Phi G_r w_k at psi."""
    w, phi = unstack_psi(psi)
    row = (np.conj(a) * phi) @ channels.g_r
    return complex(row @ w[:, k])
