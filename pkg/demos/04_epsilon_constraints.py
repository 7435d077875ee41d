"""Epsilon-insensitive constraints: small violations cost nothing.

With eps_abs the residual is max(|a| - eps, 0) >= 0, so ascent can only
push the multipliers up.  The states settle somewhere inside the tube
rather than on the exact pre-image.  Every layer may be off by up to eps,
so the forward pass (which is what accuracy measures) can disagree with
the outputs read off the states even when the loss term is zero.
"""
import numpy as np

from localprop import NetworkSpec, RegConfig, TrainConfig, build_graph, core
from localprop.constraints import ConstraintKind
from localprop.data import gen_two_moons
from localprop.optimizer import init_run, step

graph = build_graph(NetworkSpec("mlp", (2, 6, 6), 1))
data = gen_two_moons(32, noise=0.1, seed=3)
config = TrainConfig(eta_w=0.02, eta_x=0.05, eta_lambda=0.05, seed=3,
                     reg=RegConfig(rho=0.5), constraint=ConstraintKind("eps_abs", 0.05))
states, weights = init_run(graph, data, config)

lowest = np.inf
for it in range(3000):
    before = {k: v.copy() for k, v in states.lam.items()}
    m = step(graph, states, weights, data, config, it, with_accuracy=it % 500 == 0)
    lowest = min(lowest, min(float(np.min(states.lam[k] - before[k])) for k in before))
    if it % 500 == 0:
        print(f"iter {it:4d}  loss {m.loss_term:.4f}  max|G| {m.max_abs_residual:.4f}  "
              f"sum lambda {m.lambda_l1:.3f}  accuracy {m.train_accuracy:.2f}")
print("smallest change of any multiplier in one step:", lowest)

arg = np.concatenate([core.node_terms(graph, n, states, weights, config.constraint,
                                      config.reg).arg.ravel() for n in graph.nodes])
print(f"fraction of raw violations inside the tube: {np.mean(np.abs(arg) <= 0.05):.2f}")
