"""Draw one train from each of the five flip-angle families."""

import numpy as np

from epgforge.sequence import FlipTrainSpec, generate_flip_train, write_flip_csv

N_TR = 480
rng = np.random.default_rng(3)
specs = {
    "spline5": FlipTrainSpec("spline5", N_TR, rng.uniform(0, 120, 5)),
    "spline11": FlipTrainSpec("spline11", N_TR, rng.uniform(0, 120, 11)),
    "sinsquared5": FlipTrainSpec("sinsquared5", N_TR, rng.uniform(0, 120, 5)),
    "splinenoise11": FlipTrainSpec("splinenoise11", N_TR, rng.uniform(0, 120, 11),
                                   seed=11),
    "piececonstant5": FlipTrainSpec("piececonstant5", N_TR, rng.uniform(0, 120, 5),
                                    seed=5),
}

trains = {}
for name, spec in specs.items():
    trains[name] = generate_flip_train(spec)
    print(f"{name:15s} min {trains[name].min():6.2f}  max {trains[name].max():6.2f}")
    write_flip_csv(f"demos_train_{name}.csv", trains[name])

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(5, 1, figsize=(8, 10), sharex=True)
    for ax, (name, train) in zip(axes, trains.items()):
        ax.plot(train)
        ax.set_ylabel(name, fontsize=8)
        ax.set_ylim(0, 125)
    axes[-1].set_xlabel("TR index")
    fig.tight_layout()
    fig.savefig("demos_flip_trains.png", dpi=120)
    print("wrote demos_flip_trains.png")
except ImportError:
    pass
