"""GRU surrogate inference, the shared weight/dataset file formats, accuracy metrics.

The network is three stacked single-bias GRU cells (hidden size 32) between an
initial linear map that turns the starting magnetization into the three hidden
states and an output linear map that reads the per-TR signal and its
log-parameter derivatives off the last hidden state.  The cell convention is

    z = sigmoid(Wz x + Uz h + bz)
    r = sigmoid(Wr x + Ur h + br)
    hc = tanh(Wh x + Uh (r * h) + bh)
    h' = (1 - z) * h + z * hc

and is recorded as a byte in the weight file so the trainer and this loader
cannot diverge silently.  Inputs per TR are (log T1, log T2, TR, TE, flip)
after the affine scaling stored in the weight-file header; weights are
float32 end to end so file round trips are bit exact.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import SignalWithGrad
from .dual import Dual2
from .epgbloch import EpgBlochConfig, _epgbloch_core, _slice_positions
from .sequence import (KIND_CODES, _N_CONTROL, FlipTrainSpec, SequenceParams,
                       SliceGrid, generate_flip_train, make_gaussian_pulse,
                       training_kind_of)

WEIGHTS_MAGIC = b"GRUW"
WEIGHTS_VERSION = 1
GRU_CONVENTION = 1  # the single-bias update/reset cell documented above
DATASET_MAGIC = b"EPGT"
DATASET_VERSION = 1

# Published total for the reference architecture; our 6-channel output head
# gives 16710 (the source does not pin the head size, delta is reported).
REFERENCE_PARAM_COUNT = 16643

DEFAULT_IN_SCALE = np.array([1.0, 1.0, 100.0, 100.0, 1.0], dtype="<f8")
DEFAULT_IN_OFFSET = np.zeros(5, dtype="<f8")


def _f32(x, shape=None):
    a = np.asarray(x, dtype=np.float32)
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    return a


@dataclass
class GruLayerWeights:
    """One cell's gate weights: W* act on the input, U* on the hidden state."""

    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        hidden, n_in = np.shape(self.w_z)
        for name in ("w_z", "w_r", "w_h"):
            setattr(self, name, _f32(getattr(self, name), (hidden, n_in)))
        for name in ("u_z", "u_r", "u_h"):
            setattr(self, name, _f32(getattr(self, name), (hidden, hidden)))
        for name in ("b_z", "b_r", "b_h"):
            setattr(self, name, _f32(getattr(self, name), (hidden,)))

    @property
    def hidden(self) -> int:
        return self.w_z.shape[0]

    @property
    def n_in(self) -> int:
        return self.w_z.shape[1]

    def tensors(self):
        return (self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h,
                self.b_z, self.b_r, self.b_h)


@dataclass
class GruNetwork:
    """Stacked GRU surrogate with initial/output linear maps and input scaling."""

    layers: list
    init_w: np.ndarray           # (n_layers*hidden, 3), from M0
    init_b: np.ndarray
    out_w: np.ndarray            # (n_out, hidden)
    out_b: np.ndarray
    in_scale: np.ndarray = field(default_factory=lambda: DEFAULT_IN_SCALE.copy())
    in_offset: np.ndarray = field(default_factory=lambda: DEFAULT_IN_OFFSET.copy())
    deriv_scale: np.ndarray = field(default_factory=lambda: np.ones(2))
    convention: int = GRU_CONVENTION

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("need at least one GRU layer")
        hidden = self.layers[0].hidden
        n_in = self.layers[0].n_in
        for i, layer in enumerate(self.layers[1:], 1):
            if layer.hidden != hidden or layer.n_in != hidden:
                raise ValueError(f"layer {i} shape mismatch")
        self.init_w = _f32(self.init_w, (len(self.layers) * hidden, 3))
        self.init_b = _f32(self.init_b, (len(self.layers) * hidden,))
        self.out_w = _f32(self.out_w)
        if self.out_w.shape[1] != hidden:
            raise ValueError("output weight width must equal hidden size")
        self.out_b = _f32(self.out_b, (self.out_w.shape[0],))
        self.in_scale = np.asarray(self.in_scale, dtype=float).reshape(n_in)
        self.in_offset = np.asarray(self.in_offset, dtype=float).reshape(n_in)
        self.deriv_scale = np.asarray(self.deriv_scale, dtype=float).reshape(2)
        if self.convention != GRU_CONVENTION:
            raise ValueError(f"unsupported GRU convention byte {self.convention}")

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.out_w.shape[0]


@dataclass
class SurrogateInput:
    """One query: log-scale tissue pair, per-TR (tr_ms, te_ms, flip_deg), M0."""

    theta: np.ndarray            # (log t1_s, log t2_s)
    beta_seq: np.ndarray         # (n_tr, 3)
    m0: np.ndarray               # initial magnetization 3-vector

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(2)
        self.beta_seq = np.asarray(self.beta_seq, dtype=float).reshape(-1, 3)
        self.m0 = np.asarray(self.m0, dtype=float).reshape(3)


# ranges the reference training recipe draws from; leaving them is allowed
# (mild extrapolation, e.g. B1-scaled flips) but worth one warning
TRAINING_RANGES = {"t1_s": (0.1, 5.0), "t2_s": (0.01, 2.0),
                   "tr_ms": (5.0, 20.0), "te_frac": (0.3, 0.7),
                   "flip_deg": (0.0, 120.0)}


def flag_out_of_range(theta, beta_seq) -> list:
    """Names of inputs outside the training distribution (empty when inside)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    beta = np.asarray(beta_seq, dtype=float).reshape(-1, 3)
    out = []
    lo, hi = TRAINING_RANGES["t1_s"]
    if np.any(np.exp(theta[:, 0]) < lo * 0.999) or np.any(np.exp(theta[:, 0]) > hi * 1.001):
        out.append("t1_s")
    lo, hi = TRAINING_RANGES["t2_s"]
    if np.any(np.exp(theta[:, 1]) < lo * 0.999) or np.any(np.exp(theta[:, 1]) > hi * 1.001):
        out.append("t2_s")
    lo, hi = TRAINING_RANGES["tr_ms"]
    if np.any(beta[:, 0] < lo) or np.any(beta[:, 0] > hi):
        out.append("tr_ms")
    frac = beta[:, 1] / beta[:, 0]
    lo, hi = TRAINING_RANGES["te_frac"]
    if np.any(frac < lo - 1e-9) or np.any(frac > hi + 1e-9):
        out.append("te_ms")
    lo, hi = TRAINING_RANGES["flip_deg"]
    if np.any(beta[:, 2] < lo) or np.any(beta[:, 2] > hi):
        out.append("flip_deg")
    return out


def _warn_if_extrapolating(theta, beta_seq):
    fields = flag_out_of_range(theta, beta_seq)
    if fields:
        warnings.warn(f"surrogate inputs outside the training ranges: "
                      f"{', '.join(fields)} (extrapolating)", stacklevel=3)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell(x, h, w: GruLayerWeights):
    """One cell update; ``x``/``h`` may carry leading batch dimensions."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.shape[-1] != w.n_in or h.shape[-1] != w.hidden:
        raise ValueError(f"gru_cell shapes: x{x.shape} h{h.shape} vs "
                         f"weights ({w.hidden}, {w.n_in})")
    z = _sigmoid(x @ w.w_z.T + h @ w.u_z.T + w.b_z)
    r = _sigmoid(x @ w.w_r.T + h @ w.u_r.T + w.b_r)
    hc = np.tanh(x @ w.w_h.T + (r * h) @ w.u_h.T + w.b_h)
    return (1.0 - z) * h + z * hc


def _initial_hidden(net: GruNetwork, m0):
    h0 = np.asarray(m0, dtype=float) @ net.init_w.T.astype(float) + net.init_b
    return np.split(h0, len(net.layers), axis=-1)


def _decode_outputs(net: GruNetwork, out):
    """Map raw per-TR output channels to (signal, d/dlogT1, d/dlogT2)."""
    if net.n_out == 6:
        sig = out[..., 0] + 1j * out[..., 1]
        d1 = (out[..., 2] + 1j * out[..., 3]) * net.deriv_scale[0]
        d2 = (out[..., 4] + 1j * out[..., 5]) * net.deriv_scale[1]
    elif net.n_out == 3:
        sig = out[..., 0] + 0j
        d1 = out[..., 1] * net.deriv_scale[0] + 0j
        d2 = out[..., 2] * net.deriv_scale[1] + 0j
    else:
        raise ValueError(f"cannot decode n_out={net.n_out} (expected 3 or 6)")
    return sig, d1, d2


def gru_forward_batch(net: GruNetwork, theta, beta_seq, m0):
    """Batched recurrence: theta (B, 2), beta_seq (B, n_tr, 3), m0 (B, 3).

    Returns (signal, dlogT1, dlogT2) complex arrays of shape (B, n_tr).
    """
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta_seq, dtype=float)
    m0 = np.asarray(m0, dtype=float)
    b, n_tr, _ = beta.shape
    # raw inputs: (log t1, log t2, tr_s, te_s, flip_rad) then affine scaling
    x_all = np.empty((b, n_tr, 5))
    x_all[:, :, 0] = theta[:, 0:1]
    x_all[:, :, 1] = theta[:, 1:2]
    x_all[:, :, 2] = beta[:, :, 0] * 1e-3
    x_all[:, :, 3] = beta[:, :, 1] * 1e-3
    x_all[:, :, 4] = np.deg2rad(beta[:, :, 2])
    x_all = x_all * net.in_scale + net.in_offset

    hs = _initial_hidden(net, m0)
    out = np.empty((b, n_tr, net.n_out))
    out_wt = net.out_w.T.astype(float)
    for n in range(n_tr):
        inp = x_all[:, n, :]
        for li, layer in enumerate(net.layers):
            hs[li] = gru_cell(inp, hs[li], layer)
            inp = hs[li]
        out[:, n, :] = inp @ out_wt + net.out_b
    return _decode_outputs(net, out)


def gru_forward(net: GruNetwork, inp: SurrogateInput) -> SignalWithGrad:
    """Signal and log-parameter derivatives for one query."""
    _warn_if_extrapolating(inp.theta[None], inp.beta_seq)
    sig, d1, d2 = gru_forward_batch(net, inp.theta[None], inp.beta_seq[None],
                                    inp.m0[None])
    return SignalWithGrad(sig[0], d1[0], d2[0])


def predict_sequence_batch(net: GruNetwork, t1_s, t2_s, seq: SequenceParams,
                           b1=1.0, flip_deg=None) -> SignalWithGrad:
    """Evaluate the surrogate for many tissues on one sequence.

    B1 scales the flip-angle input (the transmit field multiplies the
    effective excitation); the inversion flag selects M0 = -z, assuming the
    training convention of zero inversion delay.
    """
    t1_s, t2_s, b1 = np.broadcast_arrays(np.atleast_1d(np.asarray(t1_s, dtype=float)),
                                         np.asarray(t2_s, dtype=float),
                                         np.asarray(b1, dtype=float))
    b = t1_s.shape[0]
    theta = np.stack([np.log(t1_s), np.log(t2_s)], axis=1)
    flip = seq.flip_deg if flip_deg is None else np.asarray(flip_deg, dtype=float)
    flip = np.broadcast_to(flip, (b, seq.n_tr)) * b1[:, None]
    beta = np.empty((b, seq.n_tr, 3))
    beta[:, :, 0] = seq.tr_ms
    beta[:, :, 1] = seq.te_ms
    beta[:, :, 2] = flip
    m0z = -1.0 if seq.inversion else 1.0
    m0 = np.broadcast_to(np.array([0.0, 0.0, m0z]), (b, 3))
    sig, d1, d2 = gru_forward_batch(net, theta, beta, m0)
    return SignalWithGrad(sig, d1, d2)


def count_parameters(net: GruNetwork) -> int:
    """Total trainable scalar count (gates, recurrences, biases, linear maps)."""
    total = sum(t.size for layer in net.layers for t in layer.tensors())
    total += net.init_w.size + net.init_b.size + net.out_w.size + net.out_b.size
    return int(total)


def random_network(seed: int = 0, hidden: int = 32, n_in: int = 5, n_out: int = 6,
                   n_layers: int = 3, scale: float = 0.3) -> GruNetwork:
    """Synthetic weights (for tests and benchmarks, not a trained model)."""
    rng = np.random.default_rng(seed)

    def mat(rows, cols):
        return rng.normal(0.0, scale / np.sqrt(cols), (rows, cols)).astype(np.float32)

    layers = []
    for li in range(n_layers):
        n = n_in if li == 0 else hidden
        layers.append(GruLayerWeights(mat(hidden, n), mat(hidden, n), mat(hidden, n),
                                      mat(hidden, hidden), mat(hidden, hidden),
                                      mat(hidden, hidden),
                                      np.zeros(hidden, np.float32),
                                      np.zeros(hidden, np.float32),
                                      np.zeros(hidden, np.float32)))
    return GruNetwork(layers, mat(n_layers * hidden, 3),
                      np.zeros(n_layers * hidden, np.float32),
                      mat(n_out, hidden), np.zeros(n_out, np.float32))


# ---------------------------------------------------------------------------
# Weight file ("GRUW")


class WeightsFormatError(ValueError):
    pass


def save_weights(net: GruNetwork, path) -> None:
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<IBIIII", WEIGHTS_VERSION, net.convention,
                             len(net.layers), net.hidden, net.n_in, net.n_out))
        affine = np.concatenate([net.in_scale, net.in_offset, net.deriv_scale])
        fh.write(affine.astype("<f8").tobytes())
        for layer in net.layers:
            for t in layer.tensors():
                fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
        for t in (net.init_w, net.init_b, net.out_w, net.out_b):
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(path) -> GruNetwork:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {data[:4]!r}")
    off = 4
    try:
        version, convention, n_layers, hidden, n_in, n_out = \
            struct.unpack_from("<IBIIII", data, off)
    except struct.error as exc:
        raise WeightsFormatError(f"{path}: truncated header") from exc
    off += struct.calcsize("<IBIIII")
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")
    if convention != GRU_CONVENTION:
        raise WeightsFormatError(f"{path}: unknown GRU convention byte {convention}")

    def take(count, dtype):
        nonlocal off
        itemsize = np.dtype(dtype).itemsize
        if off + count * itemsize > len(data):
            raise WeightsFormatError(f"{path}: truncated tensor block")
        out = np.frombuffer(data, dtype, count, off).copy()
        off += count * itemsize
        return out

    affine = take(12, "<f8")
    layers = []
    for li in range(n_layers):
        inw = n_in if li == 0 else hidden
        w = [take(hidden * inw, "<f4").reshape(hidden, inw) for _ in range(3)]
        u = [take(hidden * hidden, "<f4").reshape(hidden, hidden) for _ in range(3)]
        bias = [take(hidden, "<f4") for _ in range(3)]
        layers.append(GruLayerWeights(*w, *u, *bias))
    init_w = take(n_layers * hidden * 3, "<f4").reshape(n_layers * hidden, 3)
    init_b = take(n_layers * hidden, "<f4")
    out_w = take(n_out * hidden, "<f4").reshape(n_out, hidden)
    out_b = take(n_out, "<f4")
    if off != len(data):
        raise WeightsFormatError(f"{path}: {len(data) - off} unexpected trailing bytes")
    return GruNetwork(layers, init_w, init_b, out_w, out_b,
                      in_scale=affine[0:5], in_offset=affine[5:10],
                      deriv_scale=affine[10:12], convention=convention)


# ---------------------------------------------------------------------------
# Dataset file ("EPGT")


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """In-memory view of a training/evaluation dataset."""

    kind: np.ndarray         # (n,) uint8 flip-train kind codes
    inversion: np.ndarray    # (n,) bool
    t1: np.ndarray           # seconds
    t2: np.ndarray
    tr_ms: np.ndarray        # (n, n_tr)
    te_ms: np.ndarray
    flip_deg: np.ndarray
    signal: np.ndarray       # (n, n_tr) complex
    ds_dlogt1: np.ndarray
    ds_dlogt2: np.ndarray

    @property
    def n_records(self) -> int:
        return len(self.t1)

    @property
    def n_tr(self) -> int:
        return self.tr_ms.shape[1]

    def theta(self) -> np.ndarray:
        return np.stack([np.log(self.t1), np.log(self.t2)], axis=1)

    def beta(self) -> np.ndarray:
        return np.stack([self.tr_ms, self.te_ms, self.flip_deg], axis=2)

    def m0(self) -> np.ndarray:
        m = np.zeros((self.n_records, 3))
        m[:, 2] = np.where(self.inversion, -1.0, 1.0)
        return m


def _record_dtype(n_tr):
    return np.dtype([("kind", "u1"), ("inversion", "u1"), ("t1", "<f8"), ("t2", "<f8"),
                     ("tr", "<f4", (n_tr,)), ("te", "<f4", (n_tr,)),
                     ("flip", "<f4", (n_tr,)), ("sig", "<f4", (n_tr, 2)),
                     ("d1", "<f4", (n_tr, 2)), ("d2", "<f4", (n_tr, 2))])


def save_dataset(ds: Dataset, path) -> None:
    n, n_tr = ds.n_records, ds.n_tr
    rec = np.empty(n, dtype=_record_dtype(n_tr))
    rec["kind"] = ds.kind
    rec["inversion"] = ds.inversion.astype("u1")
    rec["t1"] = ds.t1
    rec["t2"] = ds.t2
    rec["tr"] = ds.tr_ms
    rec["te"] = ds.te_ms
    rec["flip"] = ds.flip_deg
    for name, arr in (("sig", ds.signal), ("d1", ds.ds_dlogt1), ("d2", ds.ds_dlogt2)):
        rec[name][:, :, 0] = arr.real
        rec[name][:, :, 1] = arr.imag
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQI", DATASET_VERSION, n, n_tr))
        fh.write(rec.tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {data[:4]!r}")
    off = 4
    version, n, n_tr = struct.unpack_from("<IQI", data, off)
    off += struct.calcsize("<IQI")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if n == 0:
        raise DatasetFormatError(f"{path}: empty dataset")
    dt = _record_dtype(n_tr)
    if len(data) - off != n * dt.itemsize:
        raise DatasetFormatError(f"{path}: truncated or oversized record block")
    rec = np.frombuffer(data, dt, n, off)

    def cplx(name):
        return (rec[name][:, :, 0] + 1j * rec[name][:, :, 1]).astype(complex)

    return Dataset(kind=rec["kind"].copy(), inversion=rec["inversion"].astype(bool),
                   t1=rec["t1"].astype(float), t2=rec["t2"].astype(float),
                   tr_ms=rec["tr"].astype(float), te_ms=rec["te"].astype(float),
                   flip_deg=rec["flip"].astype(float),
                   signal=cplx("sig"), ds_dlogt1=cplx("d1"), ds_dlogt2=cplx("d2"))


def _sample_record(rng, index, n_tr):
    """Tissue, timing and flip train for one training record."""
    kind = training_kind_of(index)
    while True:
        t1 = float(np.exp(rng.uniform(np.log(0.1), np.log(5.0))))
        t2 = float(np.exp(rng.uniform(np.log(0.01), np.log(2.0))))
        if t1 >= t2:
            break
    ctrl = rng.uniform(0.0, 120.0, _N_CONTROL[kind])
    flip = generate_flip_train(FlipTrainSpec(kind, n_tr, ctrl,
                                             seed=int(rng.integers(2**31))))
    if rng.integers(2):  # constant timing
        tr = np.full(n_tr, rng.uniform(5.0, 20.0))
        te = tr * rng.uniform(0.3, 0.7)
    else:
        tr = rng.uniform(5.0, 20.0, n_tr)
        te = tr * rng.uniform(0.3, 0.7, n_tr)
    inversion = bool(rng.integers(2))
    return kind, t1, t2, tr, te, flip, inversion


def export_training_set(n_signals: int, seed: int, out_path, n_tr: int = 1120,
                        rf=None, slice_grid=None,
                        cfg: EpgBlochConfig | None = None,
                        chunk: int = 64) -> Dataset:
    """Simulate a training dataset with the sub-stepped model and write it out.

    Tissues are log-uniform over T1 in [0.1, 5] s and T2 in [0.01, 2] s with
    T1 >= T2; flip-train kinds cycle deterministically so counts per kind are
    exact; inversion records start at M0 = -z with no inversion delay.
    """
    if n_signals < 1:
        raise ValueError("n_signals must be >= 1")
    cfg = cfg or EpgBlochConfig()
    if rf is None:
        rf = make_gaussian_pulse(1.0, n_rf=16, slice_thickness_mm=3.0)
    if slice_grid is None:
        slice_grid = SliceGrid(slice_thickness_mm=3.0, n_z=32)
    rng = np.random.default_rng(seed)

    recs = [_sample_record(rng, i, n_tr) for i in range(n_signals)]
    kind = np.array([KIND_CODES[r[0]] for r in recs], dtype=np.uint8)
    t1 = np.array([r[1] for r in recs])
    t2 = np.array([r[2] for r in recs])
    tr = np.stack([r[3] for r in recs])
    te = np.stack([r[4] for r in recs])
    flip = np.stack([r[5] for r in recs])
    inv = np.array([r[6] for r in recs])

    z_mm = _slice_positions(_proto_seq(rf, slice_grid, n_tr), cfg)
    half = rf.duration_ms / 2.0
    sig = np.empty((n_signals, n_tr), dtype=complex)
    d1 = np.empty_like(sig)
    d2 = np.empty_like(sig)
    for lo in range(0, n_signals, chunk):
        hi = min(lo + chunk, n_signals)
        sl = slice(lo, hi)
        t1d = Dual2(t1[sl, None, None], t1[sl, None, None], 0.0)
        t2d = Dual2(t2[sl, None, None], 0.0, t2[sl, None, None])
        out = _epgbloch_core(t1d, t2d, np.ones(hi - lo), np.ones(hi - lo),
                             inv[sl], 0.0, np.deg2rad(flip[sl]),
                             te[sl] - half, tr[sl] - te[sl] - half,
                             rf, z_mm, cfg.n_k)
        sig[sl] = out.val
        d1[sl] = out.d1
        d2[sl] = out.d2

    ds = Dataset(kind=kind, inversion=inv, t1=t1, t2=t2, tr_ms=tr, te_ms=te,
                 flip_deg=flip, signal=sig, ds_dlogt1=d1, ds_dlogt2=d2)
    save_dataset(ds, out_path)
    return ds


def _proto_seq(rf, grid, n_tr):
    return SequenceParams(n_tr=n_tr, flip_deg=np.zeros(n_tr),
                          tr_ms=np.full(n_tr, 20.0), te_ms=np.full(n_tr, 10.0),
                          rf=rf, slice=grid)


# ---------------------------------------------------------------------------
# Accuracy metrics


def _rms(x):
    return float(np.sqrt(np.mean(np.abs(x) ** 2)))


def nrmse(pred, ref) -> float:
    """Root-mean-square error normalized by the RMS of the reference."""
    return _rms(np.asarray(pred) - np.asarray(ref)) / _rms(ref)


def nrmse_table(pred_sig, pred_d1, pred_d2, ds: Dataset) -> dict:
    """Per-kind signal/derivative NRMSE of predictions against a dataset."""
    out = {}
    for name, code in KIND_CODES.items():
        sel = ds.kind == code
        if not np.any(sel):
            continue
        derr = np.concatenate([(pred_d1 - ds.ds_dlogt1)[sel].ravel(),
                               (pred_d2 - ds.ds_dlogt2)[sel].ravel()])
        dref = np.concatenate([ds.ds_dlogt1[sel].ravel(), ds.ds_dlogt2[sel].ravel()])
        out[name] = {"signal": nrmse(pred_sig[sel], ds.signal[sel]),
                     "derivative": _rms(derr) / _rms(dref)}
    return out


def evaluate_nrmse(net: GruNetwork, dataset, chunk: int = 512) -> dict:
    """Run the surrogate over a dataset (path or Dataset) and tabulate NRMSE."""
    ds = read_dataset(dataset) if not isinstance(dataset, Dataset) else dataset
    if ds.n_records == 0:
        raise DatasetFormatError("empty dataset")
    pred_sig = np.empty((ds.n_records, ds.n_tr), dtype=complex)
    pred_d1 = np.empty_like(pred_sig)
    pred_d2 = np.empty_like(pred_sig)
    theta, beta, m0 = ds.theta(), ds.beta(), ds.m0()
    for lo in range(0, ds.n_records, chunk):
        sl = slice(lo, min(lo + chunk, ds.n_records))
        s, d1, d2 = gru_forward_batch(net, theta[sl], beta[sl], m0[sl])
        pred_sig[sl], pred_d1[sl], pred_d2[sl] = s, d1, d2
    return nrmse_table(pred_sig, pred_d1, pred_d2, ds)
