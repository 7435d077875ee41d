"""Compile a :class:`NetworkSpec` into a :class:`~localprop.core.ConstraintGraph`.

Supported architectures (config names in brackets):

* ``mlp``           x_l = sigma(W_{l-1} x_{l-1})
* ``rnn``           x^t_l = sigma(W_{l-1} x^t_{l-1} + U_{l-1} x^{t-1}_l), unrolled over T steps
* ``resnet``        x_l = x_{l-1} + sigma(W_{l-1} x_{l-1})
* ``resnet_tilde``  the same network written in increments
                    xt_l = x_l - x_{l-1}, so that xt_l = sigma(W_{l-1} sum_{j<l} xt_j)

Input variables (layer 0) and the zero initial recurrent state are graph
constants, not optimisation variables.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .core import (ACTIVATIONS, FEEDFORWARD, LOSSES, RECURRENT, RESIDUAL_DIRECT,
                   RESIDUAL_TILDE, ConstraintGraph, ConstraintNode, Readout, StateStore)

ARCHS = ("mlp", "rnn", "resnet", "resnet_tilde")


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths ``(d_0, ..., d_H)`` plus the output width.

    ``supervision`` only matters for RNNs: ``"final"`` attaches the loss to
    the last time step, ``"all"`` to every step (targets then carry a time
    axis).
    """
    arch: str
    widths: Tuple[int, ...]
    out_width: int
    activation: str = "tanh"
    loss: str = "squared_error"
    seq_len: int = 1
    bias: bool = True
    supervision: str = "final"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}; expected one of {ARCHS}")
        if len(self.widths) < 2:
            raise ValueError("need at least an input width and one hidden width (H >= 1)")
        if any(w < 1 for w in self.widths) or self.out_width < 1:
            raise ValueError(f"all widths must be positive: {self.widths}, out={self.out_width}")
        if self.arch in ("resnet", "resnet_tilde") and len(set(self.widths)) != 1:
            raise ValueError(f"identity skips need equal widths at every layer, got {self.widths}")
        if self.arch == "rnn" and self.seq_len < 1:
            raise ValueError(f"RNN sequence length must be >= 1, got {self.seq_len}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.supervision not in ("final", "all"):
            raise ValueError(f"supervision must be 'final' or 'all', got {self.supervision!r}")

    @property
    def H(self) -> int:
        return len(self.widths) - 1

    @property
    def recurrent(self) -> bool:
        return self.arch == "rnn"


def build_graph(spec: NetworkSpec) -> ConstraintGraph:
    H = spec.H
    if spec.arch == "rnn":
        return _build_rnn(spec)

    widths: Dict = {(l, 0): spec.widths[l] for l in range(H + 1)}
    constants = {(0, 0): ("input", None)}
    nodes = []
    for l in range(1, H + 1):
        if spec.arch == "mlp":
            nodes.append(ConstraintNode((l, 0), ((l - 1, 0),), l - 1, FEEDFORWARD))
        elif spec.arch == "resnet":
            nodes.append(ConstraintNode((l, 0), ((l - 1, 0),), l - 1, RESIDUAL_DIRECT))
        else:
            below = tuple((j, 0) for j in range(l))
            nodes.append(ConstraintNode((l, 0), below, l - 1, RESIDUAL_TILDE))
    if spec.arch == "resnet_tilde":
        readouts = (Readout(tuple((j, 0) for j in range(H + 1))),)
    else:
        readouts = (Readout(((H, 0),)),)
    return ConstraintGraph(spec.arch, tuple(nodes), readouts, widths, constants, H,
                           spec.out_width, spec.activation, spec.loss, spec.bias, 1, spec)


def _build_rnn(spec: NetworkSpec) -> ConstraintGraph:
    H, T = spec.H, spec.seq_len
    widths: Dict = {}
    constants: Dict = {}
    for t in range(1, T + 1):
        widths[(0, t)] = spec.widths[0]
        constants[(0, t)] = ("input", t - 1)
    for l in range(1, H + 1):
        widths[(l, 0)] = spec.widths[l]
        constants[(l, 0)] = ("zero", None)
        for t in range(1, T + 1):
            widths[(l, t)] = spec.widths[l]
    # time-major order keeps the node list topological for the forward sweep
    nodes = tuple(
        ConstraintNode((l, t), ((l - 1, t),), l - 1, RECURRENT, prev=(l, t - 1))
        for t in range(1, T + 1) for l in range(1, H + 1))
    if spec.supervision == "all":
        readouts = tuple(Readout(((H, t),), step=t - 1) for t in range(1, T + 1))
    else:
        readouts = (Readout(((H, T),)),)
    return ConstraintGraph("rnn", nodes, readouts, widths, constants, H, spec.out_width,
                           spec.activation, spec.loss, spec.bias, T, spec)


def tilde_spec(spec: NetworkSpec) -> NetworkSpec:
    """The ``resnet_tilde`` twin of a ``resnet`` spec (or vice versa)."""
    swap = {"resnet": "resnet_tilde", "resnet_tilde": "resnet"}
    if spec.arch not in swap:
        raise ValueError(f"no tilde twin for architecture {spec.arch!r}")
    return NetworkSpec(swap[spec.arch], spec.widths, spec.out_width, spec.activation,
                       spec.loss, spec.seq_len, spec.bias, spec.supervision)


def tilde_map(xs: Sequence[np.ndarray]) -> list:
    """``(x_0, ..., x_H) -> (xt_0, ..., xt_H)`` with ``xt_0 = x_0`` and ``xt_l = x_l - x_{l-1}``."""
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    _check_widths(xs)
    return [xs[0].copy()] + [xs[l] - xs[l - 1] for l in range(1, len(xs))]


def tilde_unmap(xts: Sequence[np.ndarray]) -> list:
    """Inverse of :func:`tilde_map`: prefix sums, accumulated left to right."""
    xts = [np.asarray(x, dtype=np.float64) for x in xts]
    _check_widths(xts)
    out = [xts[0].copy()]
    for xt in xts[1:]:
        out.append(out[-1] + xt)
    return out


def _check_widths(xs):
    shapes = {x.shape for x in xs}
    if len(shapes) > 1:
        raise ValueError(f"tilde map needs equal widths across layers, got {sorted(shapes)}")


def tilde_states(direct: ConstraintGraph, states: StateStore) -> StateStore:
    """Map a ``resnet`` state store onto the ``resnet_tilde`` parameterisation.

    Multipliers are copied unchanged (node l keeps the same multiplier).
    """
    H = direct.n_layers
    xs = [states.read_x((l, 0)) for l in range(H + 1)]
    xts = tilde_map(xs)
    return StateStore({(l, 0): xts[l] for l in range(1, H + 1)},
                      {k: v.copy() for k, v in states.lam.items()},
                      states.const)


def prefix_matrix(H: int) -> np.ndarray:
    """Lower-triangular ones ``T`` with ``x_{1..H} = T xt_{1..H} + x_0``."""
    return np.tril(np.ones((H, H)))
