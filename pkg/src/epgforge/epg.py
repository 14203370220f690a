"""Configuration-state (EPG) machinery and the conventional slice-corrected simulator.

States are stored one-sided: ``f_plus[k]`` and ``z[k]`` hold F+(k) and Z(k)
for k >= 0, while ``f_minus[k]`` holds the state at dephasing order -k in the
two-sided picture, so F-(0) = conj(F+(0)) for any physically real state.  The
RF mixing matrix follows the standard convention of Weigel's EPG review
(J Magn Reson Imaging 41:266-295); the spoiler advances F+ orders by one per
TR.  The small-tip-angle slice profile feeds the conventional simulator, where
each sub-slice sees an effective flip scaled and phased by the local profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import _segment_times_ms
from .dual import Dual2, dconj, deinsum, dexp, droll, dsum, value_of
from .sequence import (GAMMA_RAD_PER_S_T, RfPulse, SequenceParams, SliceGrid,
                       TissueParams)

# Mixing-matrix axis offset of the normalized pulse convention: the envelope
# normalization i*gamma*integral(B) = 1 puts the excited magnetization on +x,
# which corresponds to RF phase pi/2 in the mixing matrix below.
RF_PHASE_OFFSET = np.pi / 2.0


@dataclass
class EpgState:
    """One voxel's configuration states (F+, F-, Z) for orders 0..n_k-1."""

    f_plus: np.ndarray
    f_minus: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.f_plus = np.asarray(self.f_plus, dtype=complex)
        self.f_minus = np.asarray(self.f_minus, dtype=complex)
        self.z = np.asarray(self.z, dtype=complex)
        if not (self.f_plus.shape == self.f_minus.shape == self.z.shape):
            raise ValueError("state arrays must share one shape")

    @property
    def n_k(self) -> int:
        return self.f_plus.shape[-1]

    def copy(self) -> "EpgState":
        return EpgState(self.f_plus.copy(), self.f_minus.copy(), self.z.copy())

    def stacked(self) -> np.ndarray:
        return np.stack([self.f_plus, self.f_minus, self.z], axis=-2)


def equilibrium_state(n_k: int, m0z: float = 1.0) -> EpgState:
    if n_k < 1:
        raise ValueError("n_k must be >= 1")
    z = np.zeros(n_k, dtype=complex)
    z[0] = m0z
    return EpgState(np.zeros(n_k, dtype=complex), np.zeros(n_k, dtype=complex), z)


def rf_mixing_matrix(alpha_rad, phi_rad):
    """3x3 complex RF rotation acting identically on every order k.

    Broadcasts over any common shape of ``alpha_rad`` and ``phi_rad`` and
    returns ``(..., 3, 3)``.
    """
    alpha = np.asarray(alpha_rad, dtype=float)
    phi = np.asarray(phi_rad, dtype=float)
    alpha, phi = np.broadcast_arrays(alpha, phi)
    ca2 = np.cos(alpha / 2.0) ** 2
    sa2 = np.sin(alpha / 2.0) ** 2
    sa = np.sin(alpha)
    ca = np.cos(alpha)
    ejp = np.exp(1j * phi)
    T = np.empty(alpha.shape + (3, 3), dtype=complex)
    T[..., 0, 0] = ca2
    T[..., 0, 1] = ejp * ejp * sa2
    T[..., 0, 2] = -1j * ejp * sa
    T[..., 1, 0] = np.conj(T[..., 0, 1])
    T[..., 1, 1] = ca2
    T[..., 1, 2] = np.conj(T[..., 0, 2])
    T[..., 2, 0] = -0.5j * np.conj(ejp) * sa
    T[..., 2, 1] = np.conj(T[..., 2, 0])
    T[..., 2, 2] = ca
    return T


def rf_rotate(state: EpgState, alpha_rad: float, phi_rad: float) -> EpgState:
    """Apply an instantaneous RF rotation to all configuration orders."""
    T = rf_mixing_matrix(alpha_rad, phi_rad)
    out = T @ state.stacked()
    return EpgState(out[0], out[1], out[2])


def relax_recover(state: EpgState, dt_ms: float, t1_s: float, t2_s: float,
                  m0z: float = 1.0) -> EpgState:
    """T2 decay of F states, T1 decay of Z states, recovery into Z(0)."""
    if dt_ms < 0:
        raise ValueError("dt_ms must be >= 0")
    e1 = np.exp(-dt_ms * 1e-3 / t1_s)
    e2 = np.exp(-dt_ms * 1e-3 / t2_s)
    out = state.copy()
    out.f_plus *= e2
    out.f_minus *= e2
    out.z *= e1
    out.z[..., 0] += (1.0 - e1) * m0z
    return out


def grad_shift(state: EpgState) -> EpgState:
    """One unit of spoiler dephasing: F+ orders up, F- orders down.

    The newly exposed F+(0) is the conjugate of the old F-(1); the highest F+
    order is discarded and zero flows into the highest F- order.
    """
    out = state.copy()
    fp, fm = _shift_rows(state.f_plus, state.f_minus)
    out.f_plus = fp
    out.f_minus = fm
    return out


def _shift_rows(fp, fm):
    new_fp = droll(fp, 1, -1)
    new_fm = droll(fm, -1, -1)
    if value_of(fp).shape[-1] > 1:
        new_fp[..., 0] = dconj(fm[..., 1])
    else:
        new_fp[..., 0] = 0.0
    new_fm[..., -1] = 0.0
    return new_fp, new_fm


@dataclass(frozen=True)
class SliceProfile:
    """Complex excitation profile SS(z) per sub-slice."""

    ss: np.ndarray
    z_positions_mm: np.ndarray


def sta_slice_profile(rf: RfPulse, grid: SliceGrid) -> SliceProfile:
    """Small-tip-angle profile by midpoint quadrature over the pulse samples.

    Includes the phase of the remaining slice-select gradient after each
    sample and of the rewinder, so the profile is complex; a hard pulse gives
    ones everywhere.  The on-center value equals 1 by the envelope
    normalization.
    """
    z_mm = grid.z_positions_mm
    if rf.shape == "hard":
        return SliceProfile(np.ones(grid.n_z, dtype=complex), z_mm)
    dt_s = rf.dt_ms * 1e-3
    g = rf.gradient_mT_per_m
    # gradient area (mT*ms/m) seen from each sample midpoint to end of pulse
    tail = np.cumsum(g[::-1])[::-1] * rf.dt_ms - 0.5 * g * rf.dt_ms
    area = tail - rf.refocus_area_frac * rf.slice_area_mT_ms_per_m
    # mT/m * ms * mm = uT*ms; 1e-9 converts to T*s
    phase = -1j * GAMMA_RAD_PER_S_T * 1e-9 * np.outer(z_mm, area)
    ss = 1j * GAMMA_RAD_PER_S_T * dt_s * np.sum(rf.samples[None, :] * np.exp(phase), axis=1)
    return SliceProfile(ss, z_mm)


# ---------------------------------------------------------------------------
# Vectorized state-tensor helpers shared by the simulators.  The internal
# layout is (batch, n_z, 3, n_k) with rows (F+, F-, Z); t1/t2 and the state
# tensor may be Dual2 to propagate tangents.


def _zeros_states(b, n_z, n_k, dual: bool):
    z = np.zeros((b, n_z, 3, n_k), dtype=complex)
    return Dual2(z) if dual else z


def _relax_states(F, dt_ms, t1_s, t2_s, m0z_eq=1.0):
    """In-place relaxation over dt_ms (scalar or (B,) per-record array)."""
    dt = np.asarray(dt_ms, dtype=float) * 1e-3
    if dt.ndim == 1:
        dt = dt[:, None, None]
    e1 = dexp(-dt / t1_s)
    e2 = dexp(-dt / t2_s)
    F[:, :, 0, :] = F[:, :, 0, :] * e2
    F[:, :, 1, :] = F[:, :, 1, :] * e2
    F[:, :, 2, :] = F[:, :, 2, :] * e1
    rec = (1.0 - e1) * m0z_eq
    if np.asarray(value_of(rec)).ndim == 3:
        rec = rec[:, :, 0]
    F[:, :, 2, 0] = F[:, :, 2, 0] + rec
    return F


def _shift_states(F):
    fp, fm = _shift_rows(F[:, :, 0, :], F[:, :, 1, :])
    F[:, :, 0, :] = fp
    F[:, :, 1, :] = fm
    return F


def _timing_arrays(seq: SequenceParams, batch_shape):
    pre_echo, post_echo = _segment_times_ms(seq)
    return (np.broadcast_to(pre_echo, batch_shape),
            np.broadcast_to(post_echo, batch_shape))


def _conventional_core(t1, t2, b1, m0z_init, inv_mask, ti_ms, flip_rad,
                       pre_echo, post_echo, ss, n_k):
    """Shared conventional-EPG engine over (batch, n_z) with dual support."""
    b, n_tr = flip_rad.shape
    n_z = ss.shape[0]
    b1 = np.broadcast_to(np.asarray(b1, dtype=float), (b,))
    dual = isinstance(t1, Dual2) or isinstance(t2, Dual2)
    F = _zeros_states(b, n_z, n_k, dual)
    F[:, :, 2, 0] = (m0z_init * np.where(inv_mask, -1.0, 1.0))[:, None]
    _relax_states(F, np.where(inv_mask, ti_ms, 0.0), t1, t2)

    a_eff = flip_rad[:, :, None] * b1[:, None, None] * np.abs(ss)[None, None, :]
    phi = (np.angle(ss) + RF_PHASE_OFFSET)[None, :]
    sig = [None] * n_tr
    for n in range(n_tr):
        T = rf_mixing_matrix(a_eff[:, n, :], phi)
        F = deinsum("bzij,bzjk->bzik", T, F)
        _relax_states(F, pre_echo[:, n], t1, t2)
        sig[n] = dsum(F[:, :, 0, 0], axis=1)
        _relax_states(F, post_echo[:, n], t1, t2)
        _shift_states(F)
    return _stack_signal(sig)


def _stack_signal(sig):
    if isinstance(sig[0], Dual2):
        return Dual2(np.stack([s.val for s in sig], axis=-1),
                     np.stack([s.d1 for s in sig], axis=-1),
                     np.stack([s.d2 for s in sig], axis=-1))
    return np.stack(sig, axis=-1)


def simulate_epg_conventional(tissue: TissueParams, seq: SequenceParams,
                              n_k: int = 20) -> np.ndarray:
    """Per-TR signal of the instantaneous-RF EPG model with STA slice correction."""
    return _simulate_conventional_raw(tissue.t1, tissue.t2, tissue.b1_plus,
                                      float(tissue.m0_vec[2]), seq=seq, n_k=n_k)[0]


def _simulate_conventional_raw(t1, t2, b1, m0z, seq, n_k):
    if n_k < 2:
        raise ValueError("n_k must be >= 2")
    ss = sta_slice_profile(seq.rf, seq.slice).ss
    pre, post = _timing_arrays(seq, (1, seq.n_tr))
    flip_rad = np.deg2rad(seq.flip_deg)[None, :]
    return _conventional_core(t1, t2, b1, np.array([m0z]),
                              np.array([seq.inversion]), seq.ti_ms,
                              flip_rad, pre, post, ss, n_k)


def _simulate_conventional_batch(t1_s, t2_s, b1, seq: SequenceParams, n_k: int):
    """Vectorized conventional-EPG simulation of many tissues, (batch, n_tr)."""
    if n_k < 2:
        raise ValueError("n_k must be >= 2")
    t1_s, t2_s, b1 = np.broadcast_arrays(np.atleast_1d(np.asarray(t1_s, dtype=float)),
                                         np.asarray(t2_s, dtype=float),
                                         np.asarray(b1, dtype=float))
    b = t1_s.shape[0]
    ss = sta_slice_profile(seq.rf, seq.slice).ss
    pre, post = _timing_arrays(seq, (b, seq.n_tr))
    flip_rad = np.broadcast_to(np.deg2rad(seq.flip_deg)[None, :], (b, seq.n_tr))
    return _conventional_core(t1_s[:, None, None], t2_s[:, None, None], b1,
                              np.ones(b), np.full(b, seq.inversion), seq.ti_ms,
                              flip_rad, pre, post, ss, n_k)


def reconstruct_mz_profile(state: EpgState, n_r: int = 64) -> np.ndarray:
    """Inverse transform of the Z states onto n_r positions across one cycle.

    Mirrors the stored one-sided orders by conjugation; the result is real for
    any physically consistent state (used by symmetry checks).
    """
    x = np.arange(n_r) / n_r
    k = np.arange(state.n_k)
    basis = np.exp(2j * np.pi * np.outer(x, k))
    mz = basis @ state.z + np.conj(basis)[:, 1:] @ np.conj(state.z[1:])
    return mz
