"""Learn a surrogate of a dish, search it for an AND gate, then try it on the dish.

The crafted "and" dish hides an AND gate between input pins 1, 2 and output
pin 4. Instead of probing the dish with new stimuli, fit a neural network to
the exhaustive sweep and run gradient descent on the network's inputs to find
drives for the six configuration pins.

    python demos/02_surrogate_to_gate.py        (about half a minute)
"""

import time

import numpy as np

from materio import (Allocation, GateTask, Mlp, TrainConfig, build_dataset, classify_output,
                     corner_stimuli, crafted_substrate, enumerate_configs, multistart_search,
                     run_sweep, simulate, train)
from materio.sweep import DEFAULT_FREQUENCIES

dish = crafted_substrate("and", 9)
log = run_sweep(dish, enumerate_configs(9, DEFAULT_FREQUENCIES, seed=1), seed=1)
data = build_dataset(log, "Ratio")
print(f"sweep: {len(log)} records; Ratio target variance {data.target.var():.4f}")

t0 = time.time()
net = Mlp.create(9, (100, 100, 100), 9, "tanh", seed=3)
fit = train(net, data, TrainConfig(0.1, seed=3))
print(f"surrogate: best epoch {fit.best_epoch}, validation MSE {fit.best_val_mse:.5f} "
      f"({time.time() - t0:.0f} s)")

alloc = Allocation(1, 2, 4)
res = multistart_search(fit.model, alloc, GateTask("AND"), n_starts=1000, probe_iters=10,
                        refine_iters=500, seed=5)
print(f"search: theta {res.theta_continuous.round(2)} -> {res.theta_discrete}")
print(f"        surrogate error {res.error_discrete:.4f}, "
      f"corner outputs {np.round(res.truth_outputs, 3)} (targets 0 0 0 0.5)")

# Replay the four corners on the simulated dish and read the output like the miner does.
f_false, f_true = log.frequency_set[0], log.frequency_set[-1]
for cfg, corner in zip(corner_stimuli(alloc, res.theta_discrete, log.frequency_set),
                       ("FF", "FT", "TF", "TT")):
    buf = simulate(dish, cfg, 0.032, 2 * cfg.max_frequency)
    print(f"  dish {corner}: {'T' if classify_output(buf, f_false, f_true) else 'F'}")
