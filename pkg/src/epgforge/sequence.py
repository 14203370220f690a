"""Tissue and sequence parameterizations for gradient-spoiled transient-state sequences.

Defines the per-voxel tissue parameters, the per-TR sequence timing and
flip-angle arrays, the shaped RF pulse model with slice-select gradient, and
the five parameterized flip-angle train families used to drive simulations
and to build training sets.  All time fields carry their unit in the name
(``*_ms``) except relaxation times, which are in seconds.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

# Gyromagnetic ratio of 1H. GAMMA_MHZ_PER_T is gamma/2pi.
GAMMA_MHZ_PER_T = 42.577478
GAMMA_RAD_PER_S_T = 2.0 * math.pi * GAMMA_MHZ_PER_T * 1e6

FLIP_KINDS = ("spline5", "spline11", "sinsquared5", "splinenoise11", "piececonstant5")
KIND_CODES = {k: i for i, k in enumerate(FLIP_KINDS)}
_N_CONTROL = {"spline5": 5, "spline11": 11, "sinsquared5": 5,
              "splinenoise11": 11, "piececonstant5": 5}
_SEGMENT_MIN = 20  # minimum piecewise-constant segment length, in TRs


def _as_float_array(x, n=None):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and a.size == 1:
        a = np.full(n, a[0])
    return a


@dataclass(frozen=True)
class TissueParams:
    """Per-voxel tissue parameters: T1/T2 in seconds, transmit scale, initial state.

    ``m0`` is the initial magnetization vector; the longitudinal equilibrium
    used by relaxation recovery is always +1 (unit convention).  Supported
    initial states are [0, 0, 1] and [0, 0, -1].
    """

    t1: float
    t2: float
    b1_plus: float = 1.0
    m0: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise ValueError(f"relaxation times must be positive, got T1={self.t1}, T2={self.t2}")
        if not self.b1_plus > 0:
            raise ValueError(f"b1_plus must be positive, got {self.b1_plus}")
        m0 = np.asarray(self.m0, dtype=float)
        if m0.shape != (3,):
            raise ValueError("m0 must be a 3-vector")
        if abs(np.linalg.norm(m0) - 1.0) > 1e-12:
            raise ValueError(f"|m0| must be 1, got {np.linalg.norm(m0)}")

    @property
    def m0_vec(self) -> np.ndarray:
        return np.asarray(self.m0, dtype=float)


@dataclass(frozen=True)
class RfPulse:
    """Shaped RF pulse with a constant slice-select gradient.

    ``samples`` are the complex envelope B(t_n) in tesla at the midpoints of
    ``n_rf`` equal sub-steps, normalized so that ``1j * gamma * sum(samples) * dt = 1``
    (dt in seconds).  Scaling the envelope by a flip angle in radians gives a
    pulse of that nominal on-resonance flip.  ``gradient_mT_per_m`` holds the
    slice gradient during each sub-step; ``refocus_area_frac`` is the fraction
    of the slice-select area rewound (with opposite sign) right after the pulse.
    """

    shape: str
    duration_ms: float
    n_rf: int
    time_bandwidth: float
    samples: np.ndarray
    gradient_mT_per_m: np.ndarray
    refocus_area_frac: float = 0.5

    def __post_init__(self):
        if self.shape not in ("gaussian", "hard"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")
        if self.n_rf < 1:
            raise ValueError("n_rf must be >= 1")
        if self.shape == "hard" and (self.n_rf != 1 or np.any(self.gradient_mT_per_m != 0.0)):
            raise ValueError("hard pulse must have n_rf=1 and zero gradient")
        if len(self.samples) != self.n_rf or len(self.gradient_mT_per_m) != self.n_rf:
            raise ValueError("samples/gradient length must equal n_rf")
        err = abs(np.sum(self.samples) * self.dt_ms * 1e-3 * 1j * GAMMA_RAD_PER_S_T - 1.0)
        if err > 1e-9:
            raise ValueError(f"pulse normalization violated by {err:.3g}")

    @property
    def dt_ms(self) -> float:
        return self.duration_ms / self.n_rf

    @property
    def slice_area_mT_ms_per_m(self) -> float:
        """Total slice-select gradient area under the pulse."""
        return float(np.sum(self.gradient_mT_per_m) * self.dt_ms)


def make_hard_pulse(duration_ms: float = 1e-4) -> RfPulse:
    """Non-selective rectangular pulse, one sub-step, no slice gradient."""
    dt_s = duration_ms * 1e-3
    samples = np.array([-1j / (GAMMA_RAD_PER_S_T * dt_s)])
    return RfPulse("hard", duration_ms, 1, 0.0, samples, np.zeros(1), 0.0)


def make_gaussian_pulse(duration_ms: float, n_rf: int = 16, time_bandwidth: float = 2.0,
                        slice_thickness_mm: float = 5.0,
                        refocus_area_frac: float = 0.5) -> RfPulse:
    """Gaussian envelope truncated at +-2.5 sigma, constant slice gradient.

    The gradient amplitude follows from the pulse bandwidth
    ``time_bandwidth / duration`` and the requested slice thickness.
    """
    dt = duration_ms / n_rf
    t = (np.arange(n_rf) + 0.5) * dt
    sigma = duration_ms / 5.0
    env = np.exp(-0.5 * ((t - duration_ms / 2.0) / sigma) ** 2)
    dt_s = dt * 1e-3
    samples = -1j * env / (GAMMA_RAD_PER_S_T * env.sum() * dt_s)
    bw_hz = time_bandwidth / (duration_ms * 1e-3)
    grad_T_per_m = bw_hz / (GAMMA_MHZ_PER_T * 1e6 * slice_thickness_mm * 1e-3)
    gradient = np.full(n_rf, grad_T_per_m * 1e3)
    return RfPulse("gaussian", duration_ms, n_rf, time_bandwidth, samples, gradient,
                   refocus_area_frac)


@dataclass(frozen=True)
class SliceGrid:
    """Sub-slice positions across the excited slab.

    ``n_z`` cell-centered positions spanning ``fov_factor * slice_thickness_mm``,
    symmetric about z=0 (a single sub-slice sits exactly on-center).
    """

    slice_thickness_mm: float
    n_z: int = 32
    fov_factor: float = 3.0

    def __post_init__(self):
        if self.n_z < 1:
            raise ValueError("n_z must be >= 1")
        if self.slice_thickness_mm <= 0 or self.fov_factor <= 0:
            raise ValueError("slice thickness and fov_factor must be positive")

    @property
    def z_positions_mm(self) -> np.ndarray:
        width = self.fov_factor * self.slice_thickness_mm
        return (np.arange(self.n_z) + 0.5) / self.n_z * width - width / 2.0


@dataclass(frozen=True)
class SequenceParams:
    """Per-TR sequence description: flip train, timing, pulse and slice geometry.

    TE is referenced to the RF pulse center; the inversion (when enabled) is a
    perfect instantaneous 180 followed by ``ti_ms`` of free relaxation before
    the first pulse begins.
    """

    n_tr: int
    flip_deg: np.ndarray
    tr_ms: np.ndarray
    te_ms: np.ndarray
    rf: RfPulse
    slice: SliceGrid
    inversion: bool = False
    ti_ms: float = 0.0

    def __post_init__(self):
        if self.n_tr < 1:
            raise ValueError("n_tr must be >= 1")
        object.__setattr__(self, "flip_deg", _as_float_array(self.flip_deg, self.n_tr))
        object.__setattr__(self, "tr_ms", _as_float_array(self.tr_ms, self.n_tr))
        object.__setattr__(self, "te_ms", _as_float_array(self.te_ms, self.n_tr))
        for name in ("flip_deg", "tr_ms", "te_ms"):
            if len(getattr(self, name)) != self.n_tr:
                raise ValueError(f"{name} must have length n_tr={self.n_tr}")
        if np.any(self.flip_deg < 0.0) or np.any(self.flip_deg > 180.0):
            raise ValueError("flip angles must lie in [0, 180] degrees")
        if np.any(self.te_ms <= 0.0) or np.any(self.te_ms >= self.tr_ms):
            raise ValueError("need 0 < TE < TR for every pulse")
        if np.any(self.te_ms < self.rf.duration_ms / 2.0):
            raise ValueError("TE cannot precede the pulse center (TE >= duration/2)")
        if self.inversion and self.ti_ms < 0.0:
            raise ValueError("ti_ms must be >= 0")

    def fingerprint(self) -> int:
        """Stable 64-bit hash of all sequence-defining fields."""
        h = hashlib.blake2b(digest_size=8)
        h.update(np.int64(self.n_tr).tobytes())
        for a in (self.flip_deg, self.tr_ms, self.te_ms):
            h.update(np.asarray(a, dtype="<f8").tobytes())
        h.update(bytes([1 if self.inversion else 0]))
        h.update(np.float64(self.ti_ms).tobytes())
        h.update(self.rf.shape.encode())
        h.update(np.asarray([self.rf.duration_ms, self.rf.n_rf, self.rf.time_bandwidth,
                             self.rf.refocus_area_frac], dtype="<f8").tobytes())
        h.update(np.asarray(self.rf.samples, dtype="<c16").tobytes())
        h.update(np.asarray(self.rf.gradient_mT_per_m, dtype="<f8").tobytes())
        h.update(np.asarray([self.slice.slice_thickness_mm, self.slice.n_z,
                             self.slice.fov_factor], dtype="<f8").tobytes())
        return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class FlipTrainSpec:
    """Parameterization of one flip-angle train.

    ``control_deg`` are the m control amplitudes in [0, 120] degrees (m=5 or 11
    depending on kind); ``seed`` feeds the random components (noise, segment
    boundaries).  kind="explicit" passes ``explicit_deg`` through unchanged.
    """

    kind: str
    n_tr: int
    control_deg: np.ndarray | None = None
    seed: int = 0
    explicit_deg: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in FLIP_KINDS + ("explicit",):
            raise ValueError(f"unknown flip train kind {self.kind!r}")
        if self.kind == "explicit":
            if self.explicit_deg is None:
                raise ValueError("explicit kind requires explicit_deg")
            arr = _as_float_array(self.explicit_deg)
            if len(arr) != self.n_tr:
                raise ValueError("explicit_deg length must equal n_tr")
            if np.any(arr < 0.0) or np.any(arr > 180.0):
                raise ValueError("explicit flip angles must lie in [0, 180]")
            object.__setattr__(self, "explicit_deg", arr)
        else:
            m = _N_CONTROL[self.kind]
            if self.control_deg is None:
                raise ValueError(f"{self.kind} requires {m} control amplitudes")
            ctrl = _as_float_array(self.control_deg)
            if len(ctrl) != m:
                raise ValueError(f"{self.kind} needs {m} control amplitudes, got {len(ctrl)}")
            if np.any(ctrl < 0.0) or np.any(ctrl > 120.0):
                raise ValueError("control amplitudes must lie in [0, 120]")
            object.__setattr__(self, "control_deg", ctrl)


def _clamped_spline_train(n_tr, control):
    m = len(control)
    if n_tr < m:
        raise ValueError(f"spline train needs n_tr >= {m}, got {n_tr}")
    knots_x = np.concatenate([[0], [i * n_tr // m for i in range(1, m + 1)]])
    knots_y = np.concatenate([[0.0], control])
    spline = CubicSpline(knots_x, knots_y, bc_type=((1, 0.0), (1, 0.0)))
    return spline(np.arange(1, n_tr + 1))


def generate_flip_train(spec: FlipTrainSpec) -> np.ndarray:
    """Build the flip-angle train for ``spec``, clipped to [0, 120] degrees.

    Spline kinds interpolate (0, 0) and the control points
    (floor(i*n_tr/m), theta_i) with zero first derivative at both ends.
    """
    if spec.kind == "explicit":
        return spec.explicit_deg.copy()

    rng = np.random.default_rng(spec.seed)
    ctrl = spec.control_deg
    m = len(ctrl)

    if spec.kind in ("spline5", "spline11"):
        train = _clamped_spline_train(spec.n_tr, ctrl)
    elif spec.kind == "splinenoise11":
        train = _clamped_spline_train(spec.n_tr, ctrl)
        train = train + rng.normal(0.0, math.sqrt(10.0), spec.n_tr)
    elif spec.kind == "sinsquared5":
        if spec.n_tr < m:
            raise ValueError(f"sinsquared5 needs n_tr >= {m}, got {spec.n_tr}")
        lobe_len = spec.n_tr // m
        n = np.arange(1, spec.n_tr + 1)
        lobe = np.minimum(m - 1, (n - 1) // lobe_len)
        phase = (n - 1) % lobe_len
        train = ctrl[lobe] * np.sin(math.pi * phase / lobe_len) ** 2
    elif spec.kind == "piececonstant5":
        if spec.n_tr < m * _SEGMENT_MIN:
            raise ValueError(
                f"piececonstant5 needs n_tr >= {m * _SEGMENT_MIN}, got {spec.n_tr}")
        bounds = _sample_segment_bounds(rng, spec.n_tr, m)
        train = np.empty(spec.n_tr)
        for i in range(m):
            lo = 0 if i == 0 else bounds[i]  # first segment also covers n=1
            train[lo:bounds[i + 1]] = ctrl[i]
    else:  # pragma: no cover
        raise AssertionError(spec.kind)

    return np.clip(train, 0.0, 120.0)


def _sample_segment_bounds(rng, n_tr, m, max_attempts=100000):
    """Ascending interior boundaries k_1..k_{m-1} with all pairwise gaps >= 20.

    k_0 = 1 and k_m = n_tr are fixed; interior boundaries are drawn uniformly
    from [20, n_tr - 20] and rejected until the gap constraint holds.
    """
    lo, hi = _SEGMENT_MIN, n_tr - _SEGMENT_MIN
    for _ in range(max_attempts):
        k = np.sort(rng.integers(lo, hi + 1, size=m - 1))
        full = np.concatenate([[1], k, [n_tr]])
        if np.all(np.diff(full) >= _SEGMENT_MIN):
            return full
    raise ValueError(f"could not place {m} segments of length >= {_SEGMENT_MIN} "
                     f"in {n_tr} TRs")


def sample_training_sequence(rng_seed: int, mode: str, n_tr: int = 1120,
                             rf: RfPulse | None = None,
                             slice_grid: SliceGrid | None = None) -> SequenceParams:
    """Draw one random training sequence.

    mode="const": a single TR is drawn uniformly from [5, 20] ms and TE from
    [0.3, 0.7] * TR, replicated over the train.  mode="varying": independent
    per-TR draws under the same bounds.  The flip train kind is uniform over
    the five families, and the inversion flag is a fair coin (ti_ms = 0).
    """
    if mode not in ("const", "varying"):
        raise ValueError(f"mode must be 'const' or 'varying', got {mode!r}")
    rng = np.random.default_rng(rng_seed)
    if rf is None:
        rf = make_gaussian_pulse(1.0, n_rf=16, slice_thickness_mm=3.0)
    if slice_grid is None:
        slice_grid = SliceGrid(slice_thickness_mm=3.0, n_z=32)

    kind = FLIP_KINDS[rng.integers(len(FLIP_KINDS))]
    ctrl = rng.uniform(0.0, 120.0, _N_CONTROL[kind])
    train_seed = int(rng.integers(2**31))
    flip = generate_flip_train(FlipTrainSpec(kind, n_tr, ctrl, seed=train_seed))

    if mode == "const":
        tr = np.full(n_tr, rng.uniform(5.0, 20.0))
        te = tr * rng.uniform(0.3, 0.7)
    else:
        tr = rng.uniform(5.0, 20.0, n_tr)
        te = tr * rng.uniform(0.3, 0.7, n_tr)
    inversion = bool(rng.integers(2))

    return SequenceParams(n_tr=n_tr, flip_deg=flip, tr_ms=tr, te_ms=te,
                          rf=rf, slice=slice_grid, inversion=inversion, ti_ms=0.0)


def training_kind_of(seq_index: int) -> str:
    """Deterministic round-robin kind assignment used by dataset exports."""
    return FLIP_KINDS[seq_index % len(FLIP_KINDS)]


def estimate_cost(n_tr: int, n_z: int, n_k: int, n_rf: int) -> int:
    """Number of lifted-step evaluations for one voxel simulation."""
    if min(n_tr, n_z, n_k, n_rf) < 1:
        raise ValueError("all cost factors must be >= 1")
    return n_tr * n_z * n_k * n_rf


# ---------------------------------------------------------------------------
# Config file and CSV interfaces


def _parse_value(text):
    text = text.strip()
    if "," in text:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        f = float(text)
    except ValueError:
        return text
    return int(f) if f == int(f) and "." not in text and "e" not in low else f


def read_config(path) -> dict:
    """Parse a plain-text ``key = value`` config file ('#' starts a comment)."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            out[key.strip()] = _parse_value(val)
    return out


def sequence_from_config(cfg: dict) -> SequenceParams:
    """Build a SequenceParams from a parsed config dict.

    Recognized keys: n_tr, tr_ms, te_ms, flip_kind, control_deg, explicit_deg,
    seed, inversion, ti_ms, rf.shape, rf.duration_ms, rf.n_rf,
    rf.time_bandwidth, rf.refocus_area_frac, slice.thickness_mm, slice.n_z,
    slice.fov_factor.
    """
    n_tr = int(cfg["n_tr"])
    grid = SliceGrid(slice_thickness_mm=float(cfg.get("slice.thickness_mm", 5.0)),
                     n_z=int(cfg.get("slice.n_z", 32)),
                     fov_factor=float(cfg.get("slice.fov_factor", 3.0)))
    shape = str(cfg.get("rf.shape", "gaussian")).lower()
    if shape == "hard":
        rf = make_hard_pulse(float(cfg.get("rf.duration_ms", 1e-4)))
    elif shape == "gaussian":
        rf = make_gaussian_pulse(float(cfg.get("rf.duration_ms", 1.0)),
                                 n_rf=int(cfg.get("rf.n_rf", 16)),
                                 time_bandwidth=float(cfg.get("rf.time_bandwidth", 2.0)),
                                 slice_thickness_mm=grid.slice_thickness_mm,
                                 refocus_area_frac=float(cfg.get("rf.refocus_area_frac", 0.5)))
    else:
        raise ValueError(f"unknown rf.shape {shape!r}")

    kind = str(cfg.get("flip_kind", "explicit")).lower()
    spec = FlipTrainSpec(kind, n_tr,
                         control_deg=cfg.get("control_deg"),
                         seed=int(cfg.get("seed", 0)),
                         explicit_deg=cfg.get("explicit_deg"))
    flip = generate_flip_train(spec)

    return SequenceParams(n_tr=n_tr, flip_deg=flip,
                          tr_ms=cfg["tr_ms"], te_ms=cfg["te_ms"],
                          rf=rf, slice=grid,
                          inversion=bool(cfg.get("inversion", False)),
                          ti_ms=float(cfg.get("ti_ms", 0.0)))


def load_sequence_config(path) -> SequenceParams:
    return sequence_from_config(read_config(path))


def write_flip_csv(path, flip_deg) -> None:
    """Export a flip train as a single-column CSV with header ``alpha_deg``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha_deg"])
        for a in np.asarray(flip_deg, dtype=float):
            writer.writerow([f"{a:.9g}"])


def with_flip_train(seq: SequenceParams, flip_deg) -> SequenceParams:
    """Copy of ``seq`` with a replaced flip train."""
    return replace(seq, flip_deg=_as_float_array(flip_deg, seq.n_tr))
