"""CRLB-based flip-angle train design with a bounded differential-evolution search.

The Fisher information of a Gaussian-noise signal model is assembled from the
per-TR derivatives of each target tissue's signal; the design objective is the
weighted trace of its inverse, by default the relative T1/T2 variances with
the proton-density scale as a nuisance parameter.  Candidate trains are
smooth 11-control-point splines evaluated amplitude-bounded; the optimizer is
DE/rand/1/bin with clipping, batch per-generation evaluation and the relative
population-spread stopping rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import SignalWithGrad
from .dual import Dual2
from .epgbloch import EpgBlochConfig, _epgbloch_core, _slice_positions
from .sequence import (FlipTrainSpec, RfPulse, SequenceParams, SliceGrid,
                       generate_flip_train, make_gaussian_pulse)

SINGULAR_OBJECTIVE = float("inf")
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FisherInfo:
    """Symmetric PSD information matrix (block per tissue) and noise level."""

    matrix: np.ndarray
    noise_sigma: float

    def crlb_diagonal(self) -> np.ndarray:
        """Diagonal of the inverse; inf when the information is singular."""
        try:
            cov = np.linalg.inv(self.matrix)
        except np.linalg.LinAlgError:
            return np.full(self.matrix.shape[0], np.inf)
        d = np.diag(cov)
        if not np.all(np.isfinite(d)) or np.any(d < 0) \
                or np.linalg.cond(self.matrix) > _COND_LIMIT:
            return np.full(self.matrix.shape[0], np.inf)
        return d


def fisher_from_jacobian(jacobian, noise_sigma: float) -> FisherInfo:
    """Gaussian-noise information Re(J^H J) / sigma^2 for one complex Jacobian."""
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    J = np.asarray(jacobian, dtype=complex)
    mat = np.real(np.conj(J.T) @ J) / noise_sigma**2
    return FisherInfo(mat, noise_sigma)


def _tissue_jacobian(grad: SignalWithGrad, scales):
    # columns: T1, T2, proton-density scale (s itself at unit scale)
    return np.stack([grad.ds_dlogt1 * scales[0], grad.ds_dlogt2 * scales[1],
                     grad.s * scales[2]], axis=1)


def fisher_matrix(grads, param_scales, noise_sigma: float) -> FisherInfo:
    """Block-diagonal information over tissues.

    ``grads`` holds one SignalWithGrad per tissue; ``param_scales`` one
    (T1-scale, T2-scale, PD-scale) triple per tissue converting the
    log-parameter tangents, e.g. (1/T1, 1/T2, 1) for raw-parameter variances.
    """
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    blocks = [fisher_from_jacobian(_tissue_jacobian(g, s), noise_sigma).matrix
              for g, s in zip(grads, param_scales)]
    p = 3 * len(blocks)
    mat = np.zeros((p, p))
    for i, blk in enumerate(blocks):
        mat[3 * i:3 * i + 3, 3 * i:3 * i + 3] = blk
    return FisherInfo(mat, noise_sigma)


def _default_weights(tissues):
    return np.concatenate([[1.0 / t.t1**2, 1.0 / t.t2**2, 0.0] for t in tissues])


@dataclass
class CrlbObjective:
    """Weighted-trace CRLB objective over spline-parameterized flip trains.

    Timing, inversion and simulation fidelity are fixed; only the 11 spline
    control amplitudes vary, bounded by [0, max_flip_deg].  Default weights
    give the relative T1/T2 variances of each target tissue with the
    proton-density scale as nuisance.
    """

    target_tissues: list
    te_ms: float
    tr_ms: float
    n_tr: int
    inversion: bool = True
    ti_ms: float = 0.0
    max_flip_deg: float = 90.0
    noise_sigma: float = 1.0
    weights: np.ndarray | None = None
    rf: RfPulse | None = None
    slice_grid: SliceGrid | None = None
    cfg: EpgBlochConfig = field(default_factory=EpgBlochConfig)
    n_control: int = 11

    def __post_init__(self):
        if self.weights is None:
            self.weights = _default_weights(self.target_tissues)
        self.weights = np.asarray(self.weights, dtype=float).reshape(
            3 * len(self.target_tissues))
        if np.any(self.weights < 0):
            raise ValueError("weights must be >= 0")
        if self.rf is None:
            self.rf = make_gaussian_pulse(1.0, n_rf=8, slice_thickness_mm=3.0)
        if self.slice_grid is None:
            self.slice_grid = SliceGrid(slice_thickness_mm=3.0, n_z=8)

    @property
    def bounds(self):
        return [(0.0, self.max_flip_deg)] * self.n_control

    def sequence_for(self, control_deg) -> SequenceParams:
        control = np.asarray(control_deg, dtype=float)
        if control.shape != (self.n_control,):
            raise ValueError(f"expected {self.n_control} control amplitudes")
        if np.any(control < 0.0) or np.any(control > self.max_flip_deg):
            raise ValueError("control amplitudes out of bounds")
        kind = "spline11" if self.n_control == 11 else "spline5"
        flip = generate_flip_train(FlipTrainSpec(kind, self.n_tr, control))
        flip = np.clip(flip, 0.0, self.max_flip_deg)
        return SequenceParams(n_tr=self.n_tr, flip_deg=flip,
                              tr_ms=self.tr_ms, te_ms=self.te_ms,
                              rf=self.rf, slice=self.slice_grid,
                              inversion=self.inversion, ti_ms=self.ti_ms)

    def param_scales(self):
        return [(1.0 / t.t1, 1.0 / t.t2, 1.0) for t in self.target_tissues]


def _objective_from_grads(obj: CrlbObjective, grads) -> float:
    info = fisher_matrix(grads, obj.param_scales(), obj.noise_sigma)
    diag = info.crlb_diagonal()
    if not np.all(np.isfinite(diag)):
        return SINGULAR_OBJECTIVE
    return float(np.dot(obj.weights, diag))


def crlb_trace(obj: CrlbObjective, control_deg, engine: str = "epgbloch",
               net=None) -> float:
    """Objective value for one control vector (inf for degenerate trains)."""
    return crlb_trace_batch(obj, np.asarray(control_deg, dtype=float)[None, :],
                            engine, net)[0]


def crlb_trace_batch(obj: CrlbObjective, controls, engine: str = "epgbloch",
                     net=None) -> np.ndarray:
    """Vectorized objective over a (population, n_control) matrix."""
    controls = np.asarray(controls, dtype=float)
    pop = controls.shape[0]
    kind = "spline11" if obj.n_control == 11 else "spline5"
    flips = np.stack([
        np.clip(generate_flip_train(FlipTrainSpec(kind, obj.n_tr, c)),
                0.0, obj.max_flip_deg)
        for c in controls])

    grads_per_candidate = [[] for _ in range(pop)]
    seq = obj.sequence_for(controls[0])
    if engine == "epgbloch":
        # one fused batch over (tissue, candidate) pairs
        n_t = len(obj.target_tissues)
        b = n_t * pop
        z_mm = _slice_positions(seq, obj.cfg)
        half = obj.rf.duration_ms / 2.0
        pre = np.full((b, obj.n_tr), obj.te_ms - half)
        post = np.full((b, obj.n_tr), obj.tr_ms - obj.te_ms - half)
        t1s = np.repeat([t.t1 for t in obj.target_tissues], pop)[:, None, None]
        t2s = np.repeat([t.t2 for t in obj.target_tissues], pop)[:, None, None]
        b1s = np.repeat([t.b1_plus for t in obj.target_tissues], pop)
        t1d = Dual2(t1s, d1=t1s)
        t2d = Dual2(t2s, d2=t2s)
        out = _epgbloch_core(t1d, t2d, b1s, np.ones(b),
                             np.full(b, obj.inversion), obj.ti_ms,
                             np.tile(np.deg2rad(flips), (n_t, 1)),
                             pre, post, obj.rf, z_mm, obj.cfg.n_k)
        for ti in range(n_t):
            for i in range(pop):
                j = ti * pop + i
                grads_per_candidate[i].append(
                    SignalWithGrad(out.val[j], out.d1[j], out.d2[j]))
    elif engine == "gru":
        if net is None:
            raise ValueError("engine='gru' requires loaded surrogate weights")
        from .surrogate import predict_sequence_batch
        for t in obj.target_tissues:
            swg = predict_sequence_batch(net, np.full(pop, t.t1), np.full(pop, t.t2),
                                         seq, b1=t.b1_plus, flip_deg=flips)
            for i in range(pop):
                grads_per_candidate[i].append(
                    SignalWithGrad(swg.s[i], swg.ds_dlogt1[i], swg.ds_dlogt2[i]))
    else:
        raise ValueError(f"unknown engine {engine!r}")

    return np.array([_objective_from_grads(obj, g) for g in grads_per_candidate])


@dataclass(frozen=True)
class DeConfig:
    """DE/rand/1/bin knobs; rel_tol is the population std/|mean| stopping rule."""

    population: int = 10
    max_generations: int = 1000
    rel_tol: float = 0.002
    mutation: float = 0.8
    crossover: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("DE/rand/1 needs a population of at least 4")
        if not 0 < self.crossover <= 1 or self.mutation <= 0:
            raise ValueError("invalid mutation/crossover constants")


def differential_evolution(fn, bounds, cfg: DeConfig, vector_fn=None):
    """Minimize ``fn`` within box bounds.

    ``vector_fn`` evaluates a (population, dim) matrix per generation when
    supplied.  Returns (best_x, best_f, history) where history holds the
    best-so-far objective per generation.
    """
    rng = np.random.default_rng(cfg.seed)
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    dim = len(bounds)
    np_ = cfg.population

    evaluate = vector_fn if vector_fn is not None else \
        (lambda xs: np.array([fn(x) for x in xs]))

    pop = lo + rng.uniform(size=(np_, dim)) * (hi - lo)
    objs = np.asarray(evaluate(pop), dtype=float)
    history = []

    for _ in range(cfg.max_generations):
        trials = np.empty_like(pop)
        for i in range(np_):
            choices = [j for j in range(np_) if j != i]
            r1, r2, r3 = rng.choice(choices, 3, replace=False)
            mutant = pop[r1] + cfg.mutation * (pop[r2] - pop[r3])
            cross = rng.random(dim) < cfg.crossover
            cross[rng.integers(dim)] = True
            trials[i] = np.clip(np.where(cross, mutant, pop[i]), lo, hi)
        trial_objs = np.asarray(evaluate(trials), dtype=float)
        better = trial_objs <= objs
        pop[better] = trials[better]
        objs[better] = trial_objs[better]
        history.append(float(np.min(objs)))
        if np.all(np.isfinite(objs)):
            mean = np.mean(objs)
            if mean != 0.0 and np.std(objs) / abs(mean) < cfg.rel_tol:
                break
    best = int(np.argmin(objs))
    return pop[best].copy(), float(objs[best]), history


def optimize_de(obj: CrlbObjective, de_cfg: DeConfig, engine: str = "epgbloch",
                net=None):
    """Search the bounded spline control space for the lowest CRLB objective."""
    return differential_evolution(
        lambda x: crlb_trace(obj, x, engine, net), obj.bounds, de_cfg,
        vector_fn=lambda xs: crlb_trace_batch(obj, xs, engine, net))
