"""At a feasible stationary point the Lagrangian weight gradient is the
backprop gradient.

Put the states on the forward pass, solve the multipliers from dL/dx = 0
(a backward sweep), and compare dL/dW with plain backpropagation.
"""
import numpy as np

from localprop import core, oracles
from localprop.architectures import NetworkSpec, build_graph

spec = NetworkSpec("mlp", (3, 4, 4), out_width=2)
graph = build_graph(spec)
_, _, weights, data = oracles.random_instance(spec, n=5, seed=2)

states = core.forward_states(graph, weights, data)
states.lam.update(oracles.stationary_multipliers(graph, states, weights, data))

lp = core.grad_w(graph, states, weights, data, 0)
bp = oracles.backprop_grad(weights, spec, data)[0]
print("dL/dW_0 from the Lagrangian:\n", np.round(lp, 6))
print("backprop dV/dW_0:\n", np.round(bp, 6))
print("max relative discrepancy over all layers:",
      oracles.recover_backprop_check(weights, spec, data))

# the multiplier of the top layer is minus the loss gradient seen from there
print("lambda_H == -W_H^T V':", np.allclose(states.lam[(2, 0)],
                                           -core.readout_terms(graph, graph.readouts[0], states,
                                                               weights, data).back))
