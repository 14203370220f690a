"""Cross-implementation round-trip check of the weight-file contract.

Runs this package's own forward pass on a dataset and compares it against the
inference side's predictions for the same records (obtained through the
``epgforge eval-surrogate --dump-pred`` command line, or from a prediction
dump supplied directly).  Any deviation beyond tolerance means the two
implementations disagree about the file contract.
"""

from __future__ import annotations

import subprocess
import tempfile
from pathlib import Path

import numpy as np

from .formats import read_dataset, read_weights
from .model import GruSurrogate, predict_dataset

TOLERANCE = 1e-4


class ContractViolation(RuntimeError):
    pass


def _dump_reference(weights_path, dataset_path, out_path, cli="epgforge"):
    cmd = [cli, "eval-surrogate", "--weights", str(weights_path),
           "--data", str(dataset_path), "--dump-pred", str(out_path)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} failed ({proc.returncode}): "
                           f"{proc.stderr.strip()}")


def verify_roundtrip(weights_path, dataset_path, reference_pred_path=None,
                     cli="epgforge", tolerance: float = TOLERANCE) -> float:
    """Max absolute deviation between the two forward implementations."""
    bundle = read_weights(weights_path)
    net = GruSurrogate.from_bundle(bundle)
    ds = read_dataset(dataset_path)
    sig, d1, d2 = predict_dataset(net, ds, deriv_scale=bundle.deriv_scale)

    if reference_pred_path is None:
        with tempfile.TemporaryDirectory() as tmp:
            pred_path = Path(tmp) / "pred.epgt"
            _dump_reference(weights_path, dataset_path, pred_path, cli=cli)
            ref = read_dataset(pred_path)
    else:
        ref = read_dataset(reference_pred_path)

    # the reference dump is float32; compare at that precision
    dev = max(np.abs(sig.astype(np.complex64) - ref.signal.astype(np.complex64)).max(),
              np.abs(d1.astype(np.complex64) - ref.ds_dlogt1.astype(np.complex64)).max(),
              np.abs(d2.astype(np.complex64) - ref.ds_dlogt2.astype(np.complex64)).max())
    dev = float(dev)
    if dev > tolerance:
        raise ContractViolation(
            f"forward passes deviate by {dev:.3e} (tolerance {tolerance:.1e})")
    return dev
