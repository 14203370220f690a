"""Signal derivatives with respect to (log T1, log T2).

``simulate_with_grad`` reruns a configuration-state simulator with dual
scalars seeded so the two tangent lanes carry d/d(log T1) and d/d(log T2);
the value lane reproduces the plain simulation exactly.  ``finite_diff_grad``
is the independent check: central differences in log-parameter space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dual import Dual2, seed_log_tangents
from .epg import _simulate_conventional_raw
from .epgbloch import EpgBlochConfig, _simulate_epgbloch_raw
from .sequence import SequenceParams, TissueParams

MODELS = ("epg", "epgbloch")


@dataclass
class SignalWithGrad:
    """Complex per-TR signal and its log-parameter tangents."""

    s: np.ndarray
    ds_dlogt1: np.ndarray
    ds_dlogt2: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=complex)
        self.ds_dlogt1 = np.asarray(self.ds_dlogt1, dtype=complex)
        self.ds_dlogt2 = np.asarray(self.ds_dlogt2, dtype=complex)
        if not (self.s.shape == self.ds_dlogt1.shape == self.ds_dlogt2.shape):
            raise ValueError("signal and derivative arrays must share one shape")
        if not (np.all(np.isfinite(self.s)) and np.all(np.isfinite(self.ds_dlogt1))
                and np.all(np.isfinite(self.ds_dlogt2))):
            raise ValueError("non-finite signal or derivative")


def _run_raw(model, t1, t2, tissue: TissueParams, seq: SequenceParams,
             cfg: EpgBlochConfig):
    m0z = float(tissue.m0_vec[2])
    if model == "epgbloch":
        return _simulate_epgbloch_raw(t1, t2, tissue.b1_plus, m0z, seq, cfg)
    if model == "epg":
        return _simulate_conventional_raw(t1, t2, tissue.b1_plus, m0z, seq, cfg.n_k)
    raise ValueError(f"unknown model {model!r}, expected one of {MODELS}")


def simulate_with_grad(tissue: TissueParams, seq: SequenceParams,
                       cfg: EpgBlochConfig | None = None,
                       model: str = "epgbloch") -> SignalWithGrad:
    """Forward-mode signal derivatives; tangents are in log-seconds."""
    cfg = cfg or EpgBlochConfig()
    t1d, t2d = seed_log_tangents(tissue.t1, tissue.t2)
    out = _run_raw(model, t1d, t2d, tissue, seq, cfg)[0]
    return SignalWithGrad(out.val, out.d1, out.d2)


def finite_diff_grad(tissue: TissueParams, seq: SequenceParams,
                     cfg: EpgBlochConfig | None = None, model: str = "epgbloch",
                     rel_step: float = 1e-4) -> SignalWithGrad:
    """Central differences in (log T1, log T2); the oracle for the dual path."""
    if not 0.0 < rel_step < 0.1:
        raise ValueError("rel_step must lie in (0, 0.1)")
    cfg = cfg or EpgBlochConfig()
    h = rel_step

    def run(t1, t2):
        return _run_raw(model, t1, t2, tissue, seq, cfg)[0]

    s0 = run(tissue.t1, tissue.t2)
    d1 = (run(tissue.t1 * math.exp(h), tissue.t2)
          - run(tissue.t1 * math.exp(-h), tissue.t2)) / (2.0 * h)
    d2 = (run(tissue.t1, tissue.t2 * math.exp(h))
          - run(tissue.t1, tissue.t2 * math.exp(-h))) / (2.0 * h)
    return SignalWithGrad(s0, d1, d2)
