"""Parameter dictionaries: grid construction, atom generation, matching, persistence.

A dictionary holds one L2-normalized complex signal per feasible
(T1, T2, B1+) tuple; matching picks the atom with the largest absolute inner
product against a query signal and recovers a complex proton-density scale.
Files use a little-endian binary layout with atoms quantized to float32
pairs (grids and pre-normalization norms stay float64).
"""

from __future__ import annotations

import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .epgbloch import EpgBlochConfig, simulate_epg_bloch_batch
from .sequence import SequenceParams

MAGIC = b"EPGD"
VERSION = 1
ENGINES = ("epg", "epgbloch", "gru")


@dataclass(frozen=True)
class ParamGrid:
    """Log-spaced T1/T2 and linear B1 axes plus the feasible index tuples.

    ``feasible`` is lexicographically ordered over (i_t1, i_t2, i_b1) and
    excludes every combination with T2 > T1.
    """

    t1_values: np.ndarray
    t2_values: np.ndarray
    b1_values: np.ndarray
    feasible: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("t1_values", "t2_values", "b1_values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.size > 1 and np.any(np.diff(arr) <= 0.0):
                raise ValueError(f"{name} must be strictly increasing")
        if self.feasible is None:
            object.__setattr__(self, "feasible", _feasible_tuples(
                self.t1_values, self.t2_values, self.b1_values))
        if len(self.feasible) == 0:
            raise ValueError("parameter grid has no feasible (T2 <= T1) points")

    @property
    def n_atoms(self) -> int:
        return len(self.feasible)

    def params_of(self, atom_index: int):
        i, j, k = self.feasible[atom_index]
        return self.t1_values[i], self.t2_values[j], self.b1_values[k]


def _feasible_tuples(t1v, t2v, b1v):
    out = [(i, j, k)
           for i in range(len(t1v))
           for j in range(len(t2v)) if t2v[j] <= t1v[i]
           for k in range(len(b1v))]
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def build_grid(t1_range, n_t1, t2_range, n_t2, b1_range=(1.0, 1.0), n_b1=1) -> ParamGrid:
    """Geometric T1/T2 axes over the given (lo, hi) ranges, linear B1 axis."""
    if min(n_t1, n_t2, n_b1) < 1:
        raise ValueError("axis counts must be >= 1")
    t1v = np.geomspace(t1_range[0], t1_range[1], n_t1)
    t2v = np.geomspace(t2_range[0], t2_range[1], n_t2)
    b1v = np.linspace(b1_range[0], b1_range[1], n_b1)
    return ParamGrid(t1v, t2v, b1v)


@dataclass
class Dictionary:
    grid: ParamGrid
    atoms: np.ndarray            # (n_atoms, n_tr) complex, unit L2 rows
    norms: np.ndarray            # pre-normalization L2 norms
    seq_fingerprint: int

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_tr(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class MatchResult:
    t1: float
    t2: float
    b1: float
    pd: complex
    correlation: float
    atom_index: int


def _simulate_atoms(engine, grid, seq, cfg, net, sel=slice(None)):
    feas = grid.feasible[sel]
    t1 = grid.t1_values[feas[:, 0]]
    t2 = grid.t2_values[feas[:, 1]]
    b1 = grid.b1_values[feas[:, 2]]
    if engine == "epgbloch":
        return simulate_epg_bloch_batch(t1, t2, b1, seq, cfg)
    if engine == "epg":
        from .epg import _simulate_conventional_batch
        return _simulate_conventional_batch(t1, t2, b1, seq, cfg.n_k)
    if engine == "gru":
        if net is None:
            raise ValueError("engine='gru' requires loaded surrogate weights")
        from .surrogate import predict_sequence_batch
        return predict_sequence_batch(net, t1, t2, seq, b1=b1).s
    raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")


def _atom_chunk(args):
    engine, grid, seq, cfg, net, lo, hi = args
    return _simulate_atoms(engine, grid, seq, cfg, net, slice(lo, hi))


def generate_dictionary(grid: ParamGrid, seq: SequenceParams,
                        cfg: EpgBlochConfig | None = None,
                        engine: str = "epgbloch", net=None,
                        threads: int = 1, chunk: int = 256) -> Dictionary:
    """Simulate one atom per feasible tuple and L2-normalize the rows.

    Atom order is the grid's lexicographic feasible order; generation is
    deterministic for fixed inputs regardless of ``threads``.
    """
    cfg = cfg or EpgBlochConfig()
    n = grid.n_atoms
    edges = list(range(0, n, chunk)) + [n]
    jobs = [(engine, grid, seq, cfg, net, lo, hi)
            for lo, hi in zip(edges[:-1], edges[1:])]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_atom_chunk, jobs))
    else:
        parts = [_atom_chunk(j) for j in jobs]
    atoms = np.concatenate(parts, axis=0)
    norms = np.linalg.norm(atoms, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-signal atom; sequence excites nothing")
    atoms = atoms / norms[:, None]
    return Dictionary(grid, atoms, norms, seq.fingerprint())


def match_signal(signal, dictionary: Dictionary) -> MatchResult:
    """Best-correlated atom; complex scale so pd * (unnormalized atom) fits signal.

    Ties break to the lowest atom index.
    """
    s = np.asarray(signal, dtype=complex).ravel()
    if s.size != dictionary.n_tr:
        raise ValueError(f"signal length {s.size} != dictionary n_tr {dictionary.n_tr}")
    nrm = np.linalg.norm(s)
    if nrm == 0.0:
        raise ValueError("cannot match an all-zero signal")
    inner = np.conj(dictionary.atoms) @ s
    idx = int(np.argmax(np.abs(inner)))
    t1, t2, b1 = dictionary.grid.params_of(idx)
    return MatchResult(t1=float(t1), t2=float(t2), b1=float(b1),
                       pd=complex(inner[idx] / dictionary.norms[idx]),
                       correlation=float(np.abs(inner[idx]) / nrm),
                       atom_index=idx)


# ---------------------------------------------------------------------------
# Binary persistence


def _atom_dtype(n_tr):
    return np.dtype([("idx", "<u4", (3,)), ("norm", "<f8"), ("atom", "<f4", (n_tr, 2))])


def save_dictionary(dictionary: Dictionary, path) -> None:
    g = dictionary.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQIIII", VERSION, dictionary.n_atoms, dictionary.n_tr,
                             len(g.t1_values), len(g.t2_values), len(g.b1_values)))
        for arr in (g.t1_values, g.t2_values, g.b1_values):
            fh.write(np.asarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", dictionary.seq_fingerprint))
        rec = np.empty(dictionary.n_atoms, dtype=_atom_dtype(dictionary.n_tr))
        rec["idx"] = g.feasible.astype("<u4")
        rec["norm"] = dictionary.norms
        rec["atom"][:, :, 0] = dictionary.atoms.real
        rec["atom"][:, :, 1] = dictionary.atoms.imag
        fh.write(rec.tobytes())


class DictionaryFormatError(ValueError):
    pass


def load_dictionary(path, expected_fingerprint: int | None = None) -> Dictionary:
    """Read a dictionary file; atoms come back as the stored float32 values."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DictionaryFormatError(f"{path}: bad magic {data[:4]!r}")
    off = 4
    version, n_atoms, n_tr, n_t1, n_t2, n_b1 = struct.unpack_from("<IQIIII", data, off)
    off += struct.calcsize("<IQIIII")
    if version != VERSION:
        raise DictionaryFormatError(f"{path}: unsupported version {version}")
    if n_atoms == 0:
        raise DictionaryFormatError(f"{path}: empty dictionary (0 atoms)")
    axes = []
    for count in (n_t1, n_t2, n_b1):
        axes.append(np.frombuffer(data, "<f8", count, off).copy())
        off += 8 * count
    fingerprint, = struct.unpack_from("<Q", data, off)
    off += 8
    dt = _atom_dtype(n_tr)
    if len(data) - off != n_atoms * dt.itemsize:
        raise DictionaryFormatError(f"{path}: truncated or oversized atom block")
    rec = np.frombuffer(data, dt, n_atoms, off)
    feasible = rec["idx"].astype(np.int64)
    grid = ParamGrid(axes[0], axes[1], axes[2], feasible=feasible)
    atoms = (rec["atom"][:, :, 0] + 1j * rec["atom"][:, :, 1]).astype(complex)
    d = Dictionary(grid, atoms, rec["norm"].astype(float), int(fingerprint))
    if expected_fingerprint is not None and expected_fingerprint != d.seq_fingerprint:
        warnings.warn("dictionary fingerprint does not match the provided sequence",
                      stacklevel=2)
    return d
