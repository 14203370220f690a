"""Run the GRU surrogate from a weight file and time it against the simulator.

Uses the trained desk-scale weights when present (produced by the trainer
package), otherwise random weights, which still demonstrate the interface and
the throughput gap.
"""

import time
from pathlib import Path

import numpy as np

from epgforge import sequence as sq
from epgforge.epgbloch import EpgBlochConfig, simulate_epg_bloch_batch
from epgforge.surrogate import (load_weights, predict_sequence_batch,
                                random_network, save_weights)

weights_path = Path(__file__).resolve().parent.parent / "trainer" / ".cache" / "desk.gruw"
if weights_path.exists():
    net = load_weights(weights_path)
    print(f"loaded trained weights from {weights_path}")
else:
    net = random_network(seed=0)
    print("trained weights not found, using random weights")

flip = sq.generate_flip_train(sq.FlipTrainSpec("spline5", 300, [30, 65, 45, 80, 25]))
seq = sq.SequenceParams(n_tr=300, flip_deg=flip, tr_ms=10.0, te_ms=4.5,
                        rf=sq.make_gaussian_pulse(1.0, 8, slice_thickness_mm=3.0),
                        slice=sq.SliceGrid(3.0, 8), inversion=True, ti_ms=0.0)

rng = np.random.default_rng(1)
n = 200
t1 = np.exp(rng.uniform(np.log(0.1), np.log(5.0), n))
t2 = np.minimum(t1, np.exp(rng.uniform(np.log(0.01), np.log(2.0), n)))

t0 = time.time()
surro = predict_sequence_batch(net, t1, t2, seq)
t_net = time.time() - t0
t0 = time.time()
exact = simulate_epg_bloch_batch(t1, t2, 1.0, seq, EpgBlochConfig(n_k=10))
t_sim = time.time() - t0

print(f"{n} signals x {seq.n_tr} TRs: surrogate {t_net:.2f}s, "
      f"simulator {t_sim:.2f}s ({t_sim / t_net:.0f}x)")
if weights_path.exists():
    err = np.sqrt(np.mean(np.abs(surro.s - exact) ** 2)) \
        / np.sqrt(np.mean(np.abs(exact) ** 2))
    print(f"surrogate NRMSE vs simulator: {err:.3%}")
