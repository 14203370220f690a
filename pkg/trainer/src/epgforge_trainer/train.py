"""Training loop for the GRU surrogate.

Targets are the six real channels (Re/Im of the signal and of the two
log-parameter derivatives), each complex channel pre-scaled by its
training-split RMS so the equal-weighted mean absolute error treats signal
and derivatives on the same footing.  After training the channel scales are
folded into the linear output head, so the exported weights emit physical
units and the file's derivative-scale slots stay at 1.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .formats import DatasetView, read_dataset, write_dataset, write_weights
from .model import GruSurrogate


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 200
    lr: float = 3e-3
    train_count: int | None = None   # records used for training; rest held out
    seed: int = 0
    schedule: str = "cosine"         # "cosine" (with warmup) or "plateau"
    warmup_epochs: int = 5
    lr_patience: int = 15
    lr_factor: float = 0.5
    min_lr: float = 1e-5
    log_every: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.schedule not in ("cosine", "plateau"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def build_targets(ds: DatasetView) -> np.ndarray:
    """(n, n_tr, 6) float32 raw target channels."""
    t = np.empty((ds.n_records, ds.n_tr, 6), dtype=np.float32)
    t[:, :, 0] = ds.signal.real
    t[:, :, 1] = ds.signal.imag
    t[:, :, 2] = ds.ds_dlogt1.real
    t[:, :, 3] = ds.ds_dlogt1.imag
    t[:, :, 4] = ds.ds_dlogt2.real
    t[:, :, 5] = ds.ds_dlogt2.imag
    return t


def channel_scales(targets: np.ndarray) -> np.ndarray:
    """One RMS per complex channel, expanded to the six real rows."""
    out = np.empty(6)
    for c in range(3):
        pair = targets[:, :, 2 * c:2 * c + 2]
        rms = float(np.sqrt(np.mean(pair.astype(np.float64) ** 2)))
        out[2 * c] = out[2 * c + 1] = max(rms, 1e-12)
    return out


def _inputs_for(net: GruSurrogate, ds: DatasetView):
    theta = torch.tensor(np.stack([np.log(ds.t1), np.log(ds.t2)], axis=1),
                         dtype=torch.float32)
    x = net.scale_inputs(theta,
                         torch.tensor(ds.tr_ms, dtype=torch.float32),
                         torch.tensor(ds.te_ms, dtype=torch.float32),
                         torch.tensor(ds.flip_deg, dtype=torch.float32))
    m0 = torch.zeros(ds.n_records, 3)
    m0[:, 2] = torch.tensor(np.where(ds.inversion, -1.0, 1.0), dtype=torch.float32)
    return x, m0


def train(dataset_path, config: TrainConfig, out_path, test_out_path=None,
          log=print):
    """Fit the surrogate and write weights; returns (net, history, test split)."""
    torch.manual_seed(config.seed)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    ds = read_dataset(dataset_path)

    n_train = config.train_count or (2 * ds.n_records) // 3
    if not 0 < n_train <= ds.n_records:
        raise ValueError(f"train_count {n_train} out of range for "
                         f"{ds.n_records} records")
    if config.batch_size > n_train:
        raise ValueError("batch_size exceeds the training split")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(ds.n_records)
    train_ds = ds.subset(order[:n_train])
    test_ds = ds.subset(order[n_train:]) if n_train < ds.n_records else None

    scales = channel_scales(build_targets(train_ds))
    net = GruSurrogate()
    x_train, m0_train = _inputs_for(net, train_ds)
    y_train = torch.tensor(build_targets(train_ds) / scales.astype(np.float32))
    if test_ds is not None and test_ds.n_records:
        x_val, m0_val = _inputs_for(net, test_ds)
        y_val = torch.tensor(build_targets(test_ds) / scales.astype(np.float32))
    else:
        x_val = None

    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    if config.schedule == "plateau":
        sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
            opt, factor=config.lr_factor, patience=config.lr_patience,
            min_lr=config.min_lr)
    else:
        sched = None  # cosine handled per epoch below
    gen = torch.Generator().manual_seed(config.seed)
    history = []
    t0 = time.time()

    for epoch in range(config.epochs):
        if sched is None:
            opt.param_groups[0]["lr"] = _cosine_lr(epoch, config)
        net.train()
        perm = torch.randperm(n_train, generator=gen)
        total = 0.0
        for lo in range(0, n_train - config.batch_size + 1, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            pred = net(x_train[idx], m0_train[idx])
            loss = (pred - y_train[idx]).abs().mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, lr "
                    f"{opt.param_groups[0]['lr']:.2e}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train_mae = total / (n_train - n_train % config.batch_size)

        if x_val is not None:
            net.eval()
            with torch.no_grad():
                val_mae = float((net(x_val, m0_val) - y_val).abs().mean())
        else:
            val_mae = train_mae
        if sched is not None:
            sched.step(val_mae)
        history.append((epoch, train_mae, val_mae))
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            log(f"epoch {epoch:4d}  train MAE {train_mae:.5f}  "
                f"val MAE {val_mae:.5f}  lr {opt.param_groups[0]['lr']:.1e}  "
                f"({time.time() - t0:.0f}s)")

    _fold_output_scales(net, scales)
    write_weights(net.to_bundle(deriv_scale=(1.0, 1.0)), out_path)
    if test_out_path is not None and test_ds is not None:
        write_dataset(test_ds, test_out_path)
    return net, history, test_ds


def _cosine_lr(epoch: int, config: TrainConfig) -> float:
    """Linear warmup into a half-cosine decay down to min_lr."""
    if epoch < config.warmup_epochs:
        return config.lr * (epoch + 1) / config.warmup_epochs
    span = max(1, config.epochs - config.warmup_epochs)
    t = (epoch - config.warmup_epochs) / span
    return config.min_lr + 0.5 * (config.lr - config.min_lr) * (1 + math.cos(math.pi * t))


def _fold_output_scales(net: GruSurrogate, scales: np.ndarray) -> None:
    """Bake target normalization into the output head (physical-unit outputs)."""
    with torch.no_grad():
        s = torch.tensor(scales, dtype=torch.float32)
        net.out_linear.weight.mul_(s[:, None])
        net.out_linear.bias.mul_(s)


def main(argv=None):
    p = argparse.ArgumentParser(prog="epgforge-train", description=__doc__)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=3000)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--split", type=int, default=None,
                   help="training record count (rest held out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--schedule", default="cosine", choices=["cosine", "plateau"])
    p.add_argument("--out", required=True)
    p.add_argument("--test-out", default=None,
                   help="write the held-out split as a dataset file")
    args = p.parse_args(argv)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      train_count=args.split, seed=args.seed, lr=args.lr,
                      schedule=args.schedule)
    try:
        train(args.data, cfg, args.out, test_out_path=args.test_out)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
