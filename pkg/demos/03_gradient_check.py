"""Finite-difference check of every partial derivative of the Lagrangian.

Covers weights, recurrent weights, states and multipliers for each
architecture.  Coordinates whose perturbation would cross a kink of the
epsilon-insensitive constraint (or of ReLU, or of |x|) are skipped.
"""
from localprop import oracles
from localprop.architectures import NetworkSpec
from localprop.constraints import ConstraintKind
from localprop.core import RegConfig

cases = [
    NetworkSpec("mlp", (3, 4, 2), 2, activation="sigmoid"),
    NetworkSpec("rnn", (2, 3), 1, seq_len=3, supervision="all"),
    NetworkSpec("resnet", (3, 3, 3), 2, activation="relu"),
    NetworkSpec("resnet_tilde", (2, 2, 2), 3, loss="softmax_cross_entropy"),
]
for spec in cases:
    for g in (ConstraintKind("identity"), ConstraintKind("eps_abs", 0.2),
              ConstraintKind("eps_lin", 0.2)):
        graph, states, weights, data = oracles.random_instance(spec, n=2, seed=1)
        rep = oracles.check_gradients(graph, states, weights, data, g, RegConfig(0.1, 0.01))
        print(f"{spec.arch:13s} {g.kind:9s} checked {rep.n_checked:4d} excluded {rep.n_excluded:2d} "
              f"max rel err {rep.max_rel_error:.1e}  {'ok' if rep.ok else 'MISMATCH'}")

# a harness that cannot fail proves nothing
graph, states, weights, data = oracles.random_instance(cases[0], n=2, seed=1)
bad = oracles.check_gradients(graph, states, weights, data, corrupt=1e-3)
print("with one corrupted partial:", "caught" if not bad.ok else "missed")
