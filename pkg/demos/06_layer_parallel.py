"""Layer-parallel training.

Each worker owns a block of layers and reads private copies of its
neighbours only, so the whole step is two barrier-separated phases.  All
sums run in a fixed order, which makes the result bitwise identical to
the sequential optimizer for any worker count.
"""
import numpy as np

from localprop import NetworkSpec, RegConfig, TrainConfig, build_graph, parallel_train, train
from localprop.data import gen_two_moons
from localprop.parallel import speedup_probe

spec = NetworkSpec("mlp", (2, 8, 8, 8, 8), 1)
graph = build_graph(spec)
data = gen_two_moons(24, 0.1, seed=0)
config = TrainConfig(eta_w=0.02, eta_x=0.05, eta_lambda=0.05, max_iters=300, log_every=50,
                     reg=RegConfig(rho=1.0))

ref = train(graph, data, config)
for workers in (2, 3, 5):
    run = parallel_train(graph, data, config, workers)
    same = run.history == ref.history and all(
        np.array_equal(run.weights.w[l], ref.weights.w[l]) for l in ref.weights.w)
    print(f"{workers} workers: identical to sequential run: {same}")

print("\nwall-clock per iteration (threads share the interpreter lock; report only):")
for row in speedup_probe(NetworkSpec("mlp", (16,) * 9, 1), n_examples=32, workers=4, iters=10):
    print(f"  workers {row['workers']}  {row['sec_per_iter'] * 1e3:7.2f} ms  "
          f"speedup {row['speedup']:.2f} {row['note']}")
