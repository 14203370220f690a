"""Cartesian-space magnetization dynamics and the isochromat-ensemble simulator.

One evolution step is relax-then-rotate with unrotated recovery,
``m' = R (D m) + (I - D) m_eq``, where D is the diagonal relaxation operator
and R the exact exponential of the skew generator built from the RF field and
the slice gradient.  The isochromat ensemble sums many such spins spanning one
spoiler-dephasing cycle per TR and serves as the brute-force reference for the
configuration-state simulators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sequence import GAMMA_RAD_PER_S_T, SequenceParams, TissueParams


def build_rotation(b1_plus, bx_uT, by_uT, gz_z_uT, dt_ms):
    """Exact rotation operator for constant fields over one sub-step.

    Closed-form (Rodrigues) exponential of the skew generator whose entries
    are the scaled RF components ``b1_plus * (bx, by)`` and the local gradient
    field ``gz_z_uT`` (slice gradient times position), all in microtesla, over
    ``dt_ms`` milliseconds.  Broadcasts over any common leading shape of the
    field arguments and returns matrices of shape ``(..., 3, 3)``.
    """
    scale = GAMMA_RAD_PER_S_T * dt_ms * 1e-3 * 1e-6  # rad per microtesla
    wx = -scale * b1_plus * np.asarray(bx_uT, dtype=float)
    wy = -scale * b1_plus * np.asarray(by_uT, dtype=float)
    wz = -scale * np.asarray(gz_z_uT, dtype=float)
    return rotation_from_vector(wx, wy, wz)


def rotation_from_vector(wx, wy, wz):
    """Rotation matrix exp([w]x) for rotation vectors, vectorized."""
    wx, wy, wz = np.broadcast_arrays(wx, wy, wz)
    theta2 = wx * wx + wy * wy + wz * wz
    theta = np.sqrt(theta2)
    small = theta < 1e-6
    # sin(t)/t and (1-cos t)/t^2 with series fallbacks near zero
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - theta2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - theta2 / 24.0,
                     (1.0 - np.cos(theta)) / np.where(small, 1.0, theta2))
    R = np.empty(np.shape(wx) + (3, 3), dtype=float)
    R[..., 0, 0] = 1.0 - b * (wy * wy + wz * wz)
    R[..., 0, 1] = b * wx * wy - a * wz
    R[..., 0, 2] = b * wx * wz + a * wy
    R[..., 1, 0] = b * wx * wy + a * wz
    R[..., 1, 1] = 1.0 - b * (wx * wx + wz * wz)
    R[..., 1, 2] = b * wy * wz - a * wx
    R[..., 2, 0] = b * wx * wz - a * wy
    R[..., 2, 1] = b * wy * wz + a * wx
    R[..., 2, 2] = 1.0 - b * (wx * wx + wy * wy)
    return R


@dataclass(frozen=True)
class StepOperators:
    """One discrete evolution step: rotation, relaxation diagonal, recovery."""

    rotation: np.ndarray     # (3, 3) orthogonal
    relax_diag: np.ndarray   # (E2, E2, E1)
    recovery: np.ndarray     # (I - D) m_eq

    def __post_init__(self):
        R = np.asarray(self.rotation)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10 or abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("rotation must be orthogonal with determinant 1")
        if np.any(self.relax_diag <= 0.0) or np.any(self.relax_diag > 1.0):
            raise ValueError("relaxation factors must lie in (0, 1]")


def relax_factors(dt_ms, t1_s, t2_s):
    """(E1, E2) for an interval of dt_ms milliseconds."""
    dt = dt_ms * 1e-3
    return np.exp(-dt / t1_s), np.exp(-dt / t2_s)


def step_operators(rotation, dt_ms, t1_s, t2_s, m_eq=(0.0, 0.0, 1.0)) -> StepOperators:
    e1, e2 = relax_factors(dt_ms, t1_s, t2_s)
    relax = np.array([e2, e2, e1])
    recovery = (1.0 - relax) * np.asarray(m_eq, dtype=float)
    return StepOperators(np.asarray(rotation, dtype=float), relax, recovery)


def bloch_step(m, ops: StepOperators):
    """Apply relax, then rotate, then add recovery."""
    m = np.asarray(m, dtype=float)
    return ops.rotation @ (ops.relax_diag * m) + ops.recovery


def _rewinder_rotations(rf, z_mm):
    """Per-sub-slice rotation for the instantaneous slice rewinder."""
    area = -rf.refocus_area_frac * rf.slice_area_mT_ms_per_m
    # mT/m * ms * mm == uT * ms, so feed area*z as the field with dt = 1 ms
    return build_rotation(1.0, 0.0, 0.0, area * z_mm, 1.0)


def _segment_times_ms(seq: SequenceParams):
    half = seq.rf.duration_ms / 2.0
    pre_echo = seq.te_ms - half
    post_echo = seq.tr_ms - seq.te_ms - half
    if np.any(post_echo < 0.0):
        raise ValueError("TR too short: pulse, TE and rewinder do not fit")
    return pre_echo, post_echo


def simulate_isochromats(tissue: TissueParams, seq: SequenceParams, n_iso: int,
                         spoiler_cycles_per_tr: int = 1) -> np.ndarray:
    """Reference signal from an ensemble of dephasing isochromats.

    ``n_iso`` spins per sub-slice are spread uniformly over one spoiler cycle;
    each TR the spoiler advances spin i by ``2*pi*cycles*i/n_iso`` (applied
    after readout).  The per-TR signal is the ensemble mean of Mx + i My,
    summed over sub-slices, sampled at the echo time.
    """
    if n_iso < 1:
        raise ValueError("n_iso must be >= 1")
    z_mm = seq.slice.z_positions_mm
    n_z = seq.slice.n_z
    rf = seq.rf
    e1_sub, e2_sub = relax_factors(rf.dt_ms, tissue.t1, tissue.t2)
    rec_sub = 1.0 - e1_sub
    relax_sub = np.array([e2_sub, e2_sub, e1_sub])[:, None]
    pre_echo, post_echo = _segment_times_ms(seq)
    rewind = _rewinder_rotations(rf, z_mm)
    spoil = np.exp(2j * np.pi * spoiler_cycles_per_tr * np.arange(n_iso) / n_iso)

    m = np.broadcast_to(tissue.m0_vec[None, :, None], (n_z, 3, n_iso)).copy()
    if seq.inversion:
        m[:, 1, :] *= -1.0  # perfect 180 about x
        m[:, 2, :] *= -1.0
        _relax_inplace(m, seq.ti_ms, tissue)

    flip_rad = np.deg2rad(seq.flip_deg)
    bx = rf.samples.real * 1e6  # microtesla
    by = rf.samples.imag * 1e6
    gz = rf.gradient_mT_per_m[:, None] * z_mm[None, :]  # (n_rf, n_z) microtesla
    signal = np.zeros(seq.n_tr, dtype=complex)

    for n in range(seq.n_tr):
        a = flip_rad[n]
        rot = build_rotation(tissue.b1_plus, a * bx[:, None], a * by[:, None], gz, rf.dt_ms)
        for s in range(rf.n_rf):
            m *= relax_sub
            m = np.einsum("zij,zjn->zin", rot[s], m)
            m[:, 2, :] += rec_sub
        m = np.einsum("zij,zjn->zin", rewind, m)
        _relax_inplace(m, pre_echo[n], tissue)
        signal[n] = np.sum(np.mean(m[:, 0, :] + 1j * m[:, 1, :], axis=-1))
        _relax_inplace(m, post_echo[n], tissue)
        mxy = (m[:, 0, :] + 1j * m[:, 1, :]) * spoil[None, :]
        m[:, 0, :] = mxy.real
        m[:, 1, :] = mxy.imag
    return signal


def _relax_inplace(m, dt_ms, tissue):
    e1, e2 = relax_factors(dt_ms, tissue.t1, tissue.t2)
    m[:, 0, :] *= e2
    m[:, 1, :] *= e2
    m[:, 2, :] *= e1
    m[:, 2, :] += 1.0 - e1
