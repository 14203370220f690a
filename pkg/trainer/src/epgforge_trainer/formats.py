"""Standalone readers/writers for the shared binary formats.

This module re-implements the "EPGT" dataset and "GRUW" weight layouts from
their documented byte structure, deliberately without importing the simulation
package, so the two sides of the file contract stay independent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"EPGT"
DATASET_VERSION = 1
WEIGHTS_MAGIC = b"GRUW"
WEIGHTS_VERSION = 1
GRU_CONVENTION = 1

KIND_NAMES = ("spline5", "spline11", "sinsquared5", "splinenoise11",
              "piececonstant5")


class FormatError(ValueError):
    pass


@dataclass
class DatasetView:
    kind: np.ndarray
    inversion: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    tr_ms: np.ndarray
    te_ms: np.ndarray
    flip_deg: np.ndarray
    signal: np.ndarray
    ds_dlogt1: np.ndarray
    ds_dlogt2: np.ndarray

    @property
    def n_records(self) -> int:
        return len(self.t1)

    @property
    def n_tr(self) -> int:
        return self.tr_ms.shape[1]

    def subset(self, idx) -> "DatasetView":
        return DatasetView(*(getattr(self, f)[idx] for f in (
            "kind", "inversion", "t1", "t2", "tr_ms", "te_ms", "flip_deg",
            "signal", "ds_dlogt1", "ds_dlogt2")))


def _record_dtype(n_tr):
    return np.dtype([("kind", "u1"), ("inversion", "u1"), ("t1", "<f8"), ("t2", "<f8"),
                     ("tr", "<f4", (n_tr,)), ("te", "<f4", (n_tr,)),
                     ("flip", "<f4", (n_tr,)), ("sig", "<f4", (n_tr, 2)),
                     ("d1", "<f4", (n_tr, 2)), ("d2", "<f4", (n_tr, 2))])


def read_dataset(path) -> DatasetView:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DATASET_MAGIC:
        raise FormatError(f"{path}: not a dataset file (magic {data[:4]!r})")
    version, n, n_tr = struct.unpack_from("<IQI", data, 4)
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    off = 4 + struct.calcsize("<IQI")
    dt = _record_dtype(n_tr)
    if len(data) - off != n * dt.itemsize:
        raise FormatError(f"{path}: truncated or oversized record block")
    rec = np.frombuffer(data, dt, n, off)

    def cplx(name):
        return (rec[name][:, :, 0] + 1j * rec[name][:, :, 1]).astype(complex)

    return DatasetView(kind=rec["kind"].copy(),
                       inversion=rec["inversion"].astype(bool),
                       t1=rec["t1"].astype(float), t2=rec["t2"].astype(float),
                       tr_ms=rec["tr"].astype(float), te_ms=rec["te"].astype(float),
                       flip_deg=rec["flip"].astype(float),
                       signal=cplx("sig"), ds_dlogt1=cplx("d1"),
                       ds_dlogt2=cplx("d2"))


def write_dataset(ds: DatasetView, path) -> None:
    rec = np.empty(ds.n_records, dtype=_record_dtype(ds.n_tr))
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
        fh.write(struct.pack("<IQI", DATASET_VERSION, ds.n_records, ds.n_tr))
        fh.write(rec.tobytes())


@dataclass
class WeightBundle:
    """Flat tensor view of one weight file (all float32, row-major)."""

    layers: list       # per layer: dict with w_z..b_h
    init_w: np.ndarray
    init_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray
    in_scale: np.ndarray
    in_offset: np.ndarray
    deriv_scale: np.ndarray
    convention: int = GRU_CONVENTION

    @property
    def hidden(self) -> int:
        return self.layers[0]["w_z"].shape[0]

    @property
    def n_in(self) -> int:
        return self.layers[0]["w_z"].shape[1]

    @property
    def n_out(self) -> int:
        return self.out_w.shape[0]


LAYER_TENSORS = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")


def write_weights(bundle: WeightBundle, path) -> None:
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<IBIIII", WEIGHTS_VERSION, bundle.convention,
                             len(bundle.layers), bundle.hidden, bundle.n_in,
                             bundle.n_out))
        affine = np.concatenate([bundle.in_scale, bundle.in_offset,
                                 bundle.deriv_scale])
        if affine.size != 12:
            raise FormatError("affine block must hold 12 constants")
        fh.write(affine.astype("<f8").tobytes())
        for layer in bundle.layers:
            for name in LAYER_TENSORS:
                fh.write(np.ascontiguousarray(layer[name], dtype="<f4").tobytes())
        for t in (bundle.init_w, bundle.init_b, bundle.out_w, bundle.out_b):
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_weights(path) -> WeightBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a weights file (magic {data[:4]!r})")
    off = 4
    version, convention, n_layers, hidden, n_in, n_out = \
        struct.unpack_from("<IBIIII", data, off)
    off += struct.calcsize("<IBIIII")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported weights version {version}")
    if convention != GRU_CONVENTION:
        raise FormatError(f"{path}: unknown GRU convention byte {convention}")

    def take(count, dtype):
        nonlocal off
        size = np.dtype(dtype).itemsize * count
        if off + size > len(data):
            raise FormatError(f"{path}: truncated tensor block")
        out = np.frombuffer(data, dtype, count, off).copy()
        off += size
        return out

    affine = take(12, "<f8")
    layers = []
    for li in range(n_layers):
        inw = n_in if li == 0 else hidden
        layer = {}
        for name in ("w_z", "w_r", "w_h"):
            layer[name] = take(hidden * inw, "<f4").reshape(hidden, inw)
        for name in ("u_z", "u_r", "u_h"):
            layer[name] = take(hidden * hidden, "<f4").reshape(hidden, hidden)
        for name in ("b_z", "b_r", "b_h"):
            layer[name] = take(hidden, "<f4")
        layers.append(layer)
    init_w = take(n_layers * hidden * 3, "<f4").reshape(n_layers * hidden, 3)
    init_b = take(n_layers * hidden, "<f4")
    out_w = take(n_out * hidden, "<f4").reshape(n_out, hidden)
    out_b = take(n_out, "<f4")
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return WeightBundle(layers, init_w, init_b, out_w, out_b,
                        in_scale=affine[0:5], in_offset=affine[5:10],
                        deriv_scale=affine[10:12], convention=convention)
