"""Training networks as constrained optimisation by local propagation.

Each layer output is a free variable tied to its pre-image by a constraint
``G(x - sigma(W z)) = 0``; training looks for a saddle point of the
Lagrangian by gradient descent on weights and states and ascent on the
multipliers.
"""
from .architectures import NetworkSpec, build_graph
from .constraints import ConstraintKind
from .core import RegConfig, StateStore, WeightStore, init_weights
from .data import Dataset
from .optimizer import DivergenceError, TrainConfig, infer, step, train
from .parallel import parallel_step, parallel_train

__version__ = "0.1.0"

__all__ = [
    "NetworkSpec", "build_graph", "ConstraintKind", "RegConfig", "StateStore", "WeightStore",
    "init_weights", "Dataset", "DivergenceError", "TrainConfig", "infer", "step", "train",
    "parallel_step", "parallel_train",
]
