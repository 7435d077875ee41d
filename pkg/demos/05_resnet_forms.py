"""Two ways to write a residual network as constraints.

Direct form: x_l = x_{l-1} + sigma(W x_{l-1}).  Tilde form: the variables
are the increments xt_l = x_l - x_{l-1} and x_l is their running sum.
The Lagrangians agree, and the gradients are related by the prefix-sum
matrix T: grad_xt = T^T grad_x.
"""
import numpy as np

from localprop import core, oracles
from localprop.architectures import (NetworkSpec, build_graph, prefix_matrix, tilde_spec,
                                     tilde_states)

spec = NetworkSpec("resnet", (3, 3, 3, 3), 2)
direct, states, weights, data = oracles.random_instance(spec, n=4, seed=0)
tilde = build_graph(tilde_spec(spec))
tstates = tilde_states(direct, states)

print("L direct:", core.lagrangian_value(direct, states, weights, data))
print("L tilde: ", core.lagrangian_value(tilde, tstates, weights, data))

gx = core.gradients(direct, states, weights, data).x
gt = core.gradients(tilde, tstates, weights, data).x
H = spec.H
T = prefix_matrix(H)
expect = np.einsum("lj,lnd->jnd", T, np.stack([gx[(l, 0)] for l in range(1, H + 1)]))
got = np.stack([gt[(l, 0)] for l in range(1, H + 1)])
print("T =\n", T)
print("max |grad_xt - T^T grad_x| =", np.max(np.abs(got - expect)))
print("node 3 of the tilde graph reads", tilde.node((3, 0)).inputs)
