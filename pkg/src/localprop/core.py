"""Lagrangian of a constraint-based network and its exact partial derivatives.

A network is a :class:`ConstraintGraph`: one :class:`ConstraintNode` per
state variable, each asserting ``G(x_out - pre_image(inputs)) = 0``, plus one
or more :class:`Readout` terms feeding the supervised loss.  The Lagrangian is

    L = sum_i V(W_H z_i, y_i)
        + sum_{node,i} [ lam . G(a) + rho * ||G(a)||^2 ]
        + alpha * sum_{var,i} ||x||_1

with ``a = x_out - pre_image``.  All sums run over examples as plain sums
(no 1/N averaging).

Variables are identified by ``(layer, t)`` tuples; ``t`` is 0 for every
non-recurrent graph.  A node's id is the id of the variable it defines, so
multipliers are keyed the same way.  Every array stored here is stacked over
examples, i.e. has shape ``(N, width)``.

Gradient code reads states and weights only through ``read_x`` / ``read_lam``
/ ``read_w`` / ``read_u`` so that access tracing can verify locality.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import linalg as la
from .constraints import ConstraintKind, IDENTITY

VarId = Tuple[int, int]

FEEDFORWARD = "feedforward"
RECURRENT = "recurrent"
RESIDUAL_DIRECT = "residual_direct"
RESIDUAL_TILDE = "residual_tilde"
FORMS = (FEEDFORWARD, RECURRENT, RESIDUAL_DIRECT, RESIDUAL_TILDE)


# ---------------------------------------------------------------------------
# activations and losses
# ---------------------------------------------------------------------------

def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _dtanh(s):
    t = np.tanh(s)
    return 1.0 - t * t


def _dsigmoid(s):
    p = _sigmoid(s)
    return p * (1.0 - p)


ACTIVATIONS = {
    "tanh": (np.tanh, _dtanh),
    "sigmoid": (_sigmoid, _dsigmoid),
    # derivative at exactly 0 is 0
    "relu": (lambda s: np.maximum(s, 0.0), lambda s: (s > 0.0).astype(np.float64)),
}

LOSSES = ("squared_error", "softmax_cross_entropy")


def activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {tuple(ACTIVATIONS)}")


def _log_softmax(o):
    m = np.max(o, axis=-1, keepdims=True)
    shifted = o - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def loss_value(kind: str, o, y) -> float:
    """Supervised loss summed over all rows of ``o``/``y``."""
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ValueError(f"loss: output shape {o.shape} != target shape {y.shape}")
    if kind == "squared_error":
        return 0.5 * la.l2_norm_sq(o - y)
    if kind == "softmax_cross_entropy":
        return -la.dot(y, _log_softmax(o))
    raise ValueError(f"unknown loss {kind!r}")


def loss_grad(kind: str, o, y) -> np.ndarray:
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ValueError(f"loss: output shape {o.shape} != target shape {y.shape}")
    if kind == "squared_error":
        return o - y
    if kind == "softmax_cross_entropy":
        return np.exp(_log_softmax(o)) * np.sum(y, axis=-1, keepdims=True) - y
    raise ValueError(f"unknown loss {kind!r}")


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintNode:
    """Constraint defining ``out``.

    ``inputs`` feed the pre-activation (summed first for the tilde form);
    ``weight`` indexes W (and U for recurrent nodes); ``prev`` is the previous
    time-step state of a recurrent node.
    """
    out: VarId
    inputs: Tuple[VarId, ...]
    weight: int
    form: str = FEEDFORWARD
    prev: Optional[VarId] = None

    @property
    def id(self) -> VarId:
        return self.out


@dataclass(frozen=True)
class Readout:
    """Loss term ``V(W_H * sum(inputs), y)``; ``step`` selects a target time step."""
    inputs: Tuple[VarId, ...]
    step: Optional[int] = None


@dataclass
class ConstraintGraph:
    arch: str
    nodes: Tuple[ConstraintNode, ...]
    readouts: Tuple[Readout, ...]
    widths: Dict[VarId, int]
    constants: Dict[VarId, Tuple[str, Optional[int]]]
    n_layers: int
    out_width: int
    activation: str = "tanh"
    loss: str = "squared_error"
    bias: bool = True
    seq_len: int = 1
    spec: object = None

    def __post_init__(self):
        seen = set()
        for n in self.nodes:
            if n.form not in FORMS:
                raise ValueError(f"unknown node form {n.form!r}")
            if n.out in seen:
                raise ValueError(f"variable {n.out} is defined by more than one node")
            if n.out in self.constants:
                raise ValueError(f"constant {n.out} cannot be a node output")
            seen.add(n.out)
        self.variables: Tuple[VarId, ...] = tuple(n.out for n in self.nodes)
        self._node_index = {n.out: k for k, n in enumerate(self.nodes)}
        consumers: Dict[VarId, List[int]] = {}
        for k, n in enumerate(self.nodes):
            for v in n.inputs + ((n.prev,) if n.prev is not None else ()):
                if v not in self.widths:
                    raise ValueError(f"node {n.out} reads unknown variable {v}")
                consumers.setdefault(v, []).append(k)
        self._consumers = {v: tuple(ks) for v, ks in consumers.items()}
        rc: Dict[VarId, List[int]] = {}
        for k, r in enumerate(self.readouts):
            for v in r.inputs:
                rc.setdefault(v, []).append(k)
        self._readout_consumers = {v: tuple(ks) for v, ks in rc.items()}
        activation(self.activation)
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    def node(self, node_id: VarId) -> ConstraintNode:
        try:
            return self.nodes[self._node_index[node_id]]
        except KeyError:
            raise KeyError(f"no constraint node {node_id}")

    def consumers(self, var: VarId) -> Tuple[ConstraintNode, ...]:
        return tuple(self.nodes[k] for k in self._consumers.get(var, ()))

    def readout_consumers(self, var: VarId) -> Tuple[int, ...]:
        return self._readout_consumers.get(var, ())

    def weight_nodes(self, layer: int) -> Tuple[ConstraintNode, ...]:
        return tuple(n for n in self.nodes if n.weight == layer)

    @property
    def readout_layer(self) -> int:
        return self.n_layers

    def weight_shapes(self) -> Dict[str, Dict[int, Tuple[int, int]]]:
        """Expected ``{"w": {l: shape}, "u": {l: shape}}`` for this graph."""
        extra = 1 if self.bias else 0
        w: Dict[int, Tuple[int, int]] = {}
        u: Dict[int, Tuple[int, int]] = {}
        for n in self.nodes:
            shape = (self.widths[n.out], self.widths[n.inputs[0]] + extra)
            if w.setdefault(n.weight, shape) != shape:
                raise ValueError(f"inconsistent shapes for W_{n.weight}")
            if n.form == RECURRENT:
                u[n.weight] = (self.widths[n.out], self.widths[n.prev])
        top = self.readouts[0].inputs[0]
        w[self.readout_layer] = (self.out_width, self.widths[top] + extra)
        return {"w": w, "u": u}


# ---------------------------------------------------------------------------
# stores
# ---------------------------------------------------------------------------

class StateStore:
    """Per-example states ``x`` and multipliers ``lam`` (plus constant inputs)."""

    def __init__(self, x: Dict[VarId, np.ndarray], lam: Dict[VarId, np.ndarray],
                 const: Dict[VarId, np.ndarray]):
        self.x = x
        self.lam = lam
        self.const = const

    @classmethod
    def zeros(cls, graph: ConstraintGraph, data) -> "StateStore":
        n = len(data.inputs)
        x = {v: np.zeros((n, graph.widths[v])) for v in graph.variables}
        lam = {v: np.zeros((n, graph.widths[v])) for v in graph.variables}
        return cls(x, lam, constants_for(graph, data))

    @property
    def n_examples(self) -> int:
        for arr in self.const.values():
            return arr.shape[0]
        return 0

    def read_x(self, var: VarId) -> np.ndarray:
        if var in self.x:
            return self.x[var]
        if var in self.const:
            return self.const[var]
        raise KeyError(f"missing state variable {var}")

    def read_lam(self, node_id: VarId) -> np.ndarray:
        try:
            return self.lam[node_id]
        except KeyError:
            raise KeyError(f"missing multiplier for node {node_id}")

    def copy(self) -> "StateStore":
        return StateStore({k: v.copy() for k, v in self.x.items()},
                          {k: v.copy() for k, v in self.lam.items()},
                          self.const)

    def subset(self, rows) -> "StateStore":
        return StateStore({k: v[rows] for k, v in self.x.items()},
                          {k: v[rows] for k, v in self.lam.items()},
                          {k: v[rows] for k, v in self.const.items()})


def constants_for(graph: ConstraintGraph, data) -> Dict[VarId, np.ndarray]:
    inputs = np.asarray(data.inputs, dtype=np.float64)
    n = inputs.shape[0]
    const = {}
    for var, (kind, step) in graph.constants.items():
        if kind == "zero":
            const[var] = np.zeros((n, graph.widths[var]))
        elif kind == "input":
            arr = inputs if step is None else inputs[:, step, :]
            if arr.shape[1:] != (graph.widths[var],):
                raise ValueError(
                    f"input width {arr.shape[1:]} does not match network input width "
                    f"{graph.widths[var]}")
            const[var] = arr
        else:
            raise ValueError(f"unknown constant kind {kind!r}")
    return const


@dataclass
class WeightStore:
    w: Dict[int, np.ndarray]
    u: Dict[int, np.ndarray] = field(default_factory=dict)

    def read_w(self, layer: int) -> np.ndarray:
        try:
            return self.w[layer]
        except KeyError:
            raise KeyError(f"missing weight matrix W_{layer}")

    def read_u(self, layer: int) -> np.ndarray:
        try:
            return self.u[layer]
        except KeyError:
            raise KeyError(f"missing recurrent matrix U_{layer}")

    def copy(self) -> "WeightStore":
        return WeightStore({k: v.copy() for k, v in self.w.items()},
                           {k: v.copy() for k, v in self.u.items()})

    def size(self) -> int:
        return sum(m.size for m in self.w.values()) + sum(m.size for m in self.u.values())


def init_weights(graph: ConstraintGraph, seed: int) -> WeightStore:
    """Uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)) from a seeded generator.

    Matrices are drawn in declaration order (all W by layer, then all U).
    """
    rng = np.random.default_rng(seed)
    shapes = graph.weight_shapes()
    out = WeightStore({}, {})
    for key in ("w", "u"):
        for layer in sorted(shapes[key]):
            rows, cols = shapes[key][layer]
            bound = 1.0 / np.sqrt(cols)
            getattr(out, key)[layer] = rng.uniform(-bound, bound, size=(rows, cols))
    return out


@dataclass(frozen=True)
class RegConfig:
    rho: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.rho >= 0.0 and self.alpha >= 0.0):
            raise ValueError(f"rho and alpha must be non-negative (rho={self.rho}, alpha={self.alpha})")


# ---------------------------------------------------------------------------
# per-node algebra
# ---------------------------------------------------------------------------

def _with_one(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v, np.ones(v.shape[:-1] + (1,))], axis=-1)


def affine(w: np.ndarray, v: np.ndarray, bias: bool) -> np.ndarray:
    """``W v`` or ``W [v; 1]`` when biases are folded into the last column."""
    return la.matvec(w, _with_one(v) if bias else v)


def _input_sum(graph, node, states):
    z = states.read_x(node.inputs[0])
    for v in node.inputs[1:]:
        z = z + states.read_x(v)
    return z


@dataclass
class NodeTerms:
    """Intermediate quantities of one constraint, all stacked over examples."""
    node: ConstraintNode
    z: np.ndarray          # pre-activation input (summed for the tilde form)
    s: np.ndarray          # W z (+ U prev)
    arg: np.ndarray        # argument of G: x_out - pre_image
    g: np.ndarray          # G(arg), the residual
    coef: np.ndarray       # (lam + 2 rho G) * G'(arg) = dL/d arg
    delta: np.ndarray      # coef * sigma'(s)
    prev: Optional[np.ndarray] = None


def pre_image(graph: ConstraintGraph, node: ConstraintNode, states, weights):
    """Return ``(pre_image, z, s, prev)`` of a node given current states."""
    sigma, _ = activation(graph.activation)
    z = _input_sum(graph, node, states)
    s = affine(weights.read_w(node.weight), z, graph.bias)
    prev = None
    if node.form == RECURRENT:
        prev = states.read_x(node.prev)
        s = s + la.matvec(weights.read_u(node.weight), prev)
    h = sigma(s)
    if node.form == RESIDUAL_DIRECT:
        h = z + h
    return h, z, s, prev


def node_terms(graph: ConstraintGraph, node: ConstraintNode, states, weights,
               g: ConstraintKind, reg: RegConfig) -> NodeTerms:
    _, dsigma = activation(graph.activation)
    h, z, s, prev = pre_image(graph, node, states, weights)
    x_out = states.read_x(node.out)
    if x_out.shape != h.shape:
        raise ValueError(f"node {node.out}: state shape {x_out.shape} != pre-image {h.shape}")
    arg = x_out - h
    gv = g.value(arg)
    lam = states.read_lam(node.id)
    # augmented term handled as a shift of the multiplier
    lam_eff = lam + (2.0 * reg.rho) * gv if reg.rho > 0.0 else lam
    coef = lam_eff * g.derivative(arg)
    return NodeTerms(node, z, s, arg, gv, coef, coef * dsigma(s), prev)


def residual(graph, node, states, weights, g: ConstraintKind = IDENTITY) -> np.ndarray:
    """Elementwise constraint residual ``G(x_out - pre_image)``."""
    h, *_ = pre_image(graph, node, states, weights)
    return g.value(states.read_x(node.out) - h)


@dataclass
class ReadoutTerms:
    readout: Readout
    z: np.ndarray
    out: np.ndarray
    vgrad: np.ndarray      # V'(o, y)
    back: np.ndarray       # W_H^T V', restricted to z's width
    value: float


def readout_targets(readout: Readout, data) -> np.ndarray:
    y = np.asarray(data.targets, dtype=np.float64)
    return y if readout.step is None else y[:, readout.step, :]


def readout_terms(graph, readout: Readout, states, weights, data) -> ReadoutTerms:
    z = states.read_x(readout.inputs[0])
    for v in readout.inputs[1:]:
        z = z + states.read_x(v)
    w = weights.read_w(graph.readout_layer)
    o = affine(w, z, graph.bias)
    y = readout_targets(readout, data)
    vg = loss_grad(graph.loss, o, y)
    back = la.matvec_transposed(w, vg)[..., : z.shape[-1]]
    return ReadoutTerms(readout, z, o, vg, back, loss_value(graph.loss, o, y))


class TermCache:
    """Lazily computed node/readout terms for one frozen snapshot."""

    def __init__(self, graph, states, weights, data, g: ConstraintKind, reg: RegConfig):
        self.graph, self.states, self.weights, self.data = graph, states, weights, data
        self.g, self.reg = g, reg
        self._nodes: Dict[VarId, NodeTerms] = {}
        self._readouts: Dict[int, ReadoutTerms] = {}

    def node(self, node: ConstraintNode) -> NodeTerms:
        t = self._nodes.get(node.id)
        if t is None:
            t = node_terms(self.graph, node, self.states, self.weights, self.g, self.reg)
            self._nodes[node.id] = t
        return t

    def readout(self, k: int) -> ReadoutTerms:
        t = self._readouts.get(k)
        if t is None:
            t = readout_terms(self.graph, self.graph.readouts[k], self.states,
                              self.weights, self.data)
            self._readouts[k] = t
        return t


# ---------------------------------------------------------------------------
# value
# ---------------------------------------------------------------------------

@dataclass
class LagrangianParts:
    loss: float
    multiplier: float
    augmented: float
    l1: float

    @property
    def total(self) -> float:
        return self.loss + self.multiplier + self.augmented + self.l1


def lagrangian_parts(graph, states, weights, data, g: ConstraintKind = IDENTITY,
                     reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None
                     ) -> LagrangianParts:
    cache = cache or TermCache(graph, states, weights, data, g, reg)
    bad = []

    def watch(value, label):
        if not bad and not np.isfinite(value):
            bad.append(label)
        return value

    loss = 0.0
    for k in range(len(graph.readouts)):
        loss += watch(cache.readout(k).value, f"readout {k}")
    mult = aug = 0.0
    for node in graph.nodes:
        t = cache.node(node)
        mult += watch(la.dot(states.read_lam(node.id), t.g), f"constraint {node.id}")
        if reg.rho > 0.0:
            aug += watch(reg.rho * la.l2_norm_sq(t.g), f"constraint {node.id}")
    l1 = 0.0
    if reg.alpha > 0.0:
        for v in graph.variables:
            l1 += watch(reg.alpha * la.l1_norm(states.read_x(v)), f"x{v}")
    parts = LagrangianParts(loss, mult, aug, l1)
    if not np.isfinite(parts.total):
        where = bad[0] if bad else "the total"
        raise la.NonFiniteError(f"Lagrangian value is not finite for {where}")
    return parts


def lagrangian_value(graph, states, weights, data, g: ConstraintKind = IDENTITY,
                     reg: RegConfig = RegConfig()) -> float:
    return lagrangian_parts(graph, states, weights, data, g, reg).total


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _cache(cache, graph, states, weights, data, g, reg):
    return cache if cache is not None else TermCache(graph, states, weights, data, g, reg)


def grad_w(graph, states, weights, data, layer: int, g: ConstraintKind = IDENTITY,
           reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None) -> np.ndarray:
    """dL/dW_layer summed over examples (and over time for recurrent graphs)."""
    if layer not in weights.w:
        raise IndexError(f"no weight matrix W_{layer}")
    cache = _cache(cache, graph, states, weights, data, g, reg)
    out = np.zeros_like(weights.read_w(layer))
    if layer == graph.readout_layer:
        for k in range(len(graph.readouts)):
            t = cache.readout(k)
            out = out + la.outer_sum(t.vgrad, _with_one(t.z) if graph.bias else t.z)
        return out
    for node in graph.weight_nodes(layer):
        t = cache.node(node)
        out = out - la.outer_sum(t.delta, _with_one(t.z) if graph.bias else t.z)
    return out


def grad_u(graph, states, weights, data, layer: int, g: ConstraintKind = IDENTITY,
           reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None) -> np.ndarray:
    if layer not in weights.u:
        raise IndexError(f"no recurrent matrix U_{layer}")
    cache = _cache(cache, graph, states, weights, data, g, reg)
    out = np.zeros_like(weights.read_u(layer))
    for node in graph.weight_nodes(layer):
        t = cache.node(node)
        out = out - la.outer_sum(t.delta, t.prev)
    return out


def grad_x_terms(graph, states, weights, data, var: VarId, g: ConstraintKind = IDENTITY,
                 reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None
                 ) -> List[Tuple[str, np.ndarray]]:
    """Labelled contributions to dL/dx_var, in the order they are summed."""
    if var not in graph.widths or var in graph.constants:
        raise KeyError(f"unknown state variable {var}")
    cache = _cache(cache, graph, states, weights, data, g, reg)
    width = graph.widths[var]
    parts: List[Tuple[str, np.ndarray]] = []
    if var in graph._node_index:
        parts.append(("own", cache.node(graph.node(var)).coef))
    for node in graph.consumers(var):
        t = cache.node(node)
        if node.form == RECURRENT and var == node.prev:
            parts.append(("next_time", -la.matvec_transposed(weights.read_u(node.weight), t.delta)))
            continue
        back = la.matvec_transposed(weights.read_w(node.weight), t.delta)[..., :width]
        if node.form == RESIDUAL_DIRECT:
            parts.append(("above", -(t.coef + back)))
        else:
            parts.append(("above", -back))
    for k in graph.readout_consumers(var):
        parts.append(("readout", cache.readout(k).back))
    if reg.alpha > 0.0:
        # subgradient with sign(0) = 0
        parts.append(("l1", reg.alpha * np.sign(states.read_x(var))))
    return parts


def grad_x(graph, states, weights, data, var: VarId, g: ConstraintKind = IDENTITY,
           reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None) -> np.ndarray:
    """dL/dx_var for every example (shape ``(N, width)``)."""
    parts = grad_x_terms(graph, states, weights, data, var, g, reg, cache)
    if not parts:
        return np.zeros((states.n_examples, graph.widths[var]))
    out = parts[0][1]
    for _, p in parts[1:]:
        out = out + p
    return out


def grad_lambda(graph, states, weights, data, node_id: VarId, g: ConstraintKind = IDENTITY,
                reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None) -> np.ndarray:
    """dL/dlam: exactly the node's residual."""
    cache = _cache(cache, graph, states, weights, data, g, reg)
    return cache.node(graph.node(node_id)).g


@dataclass
class Gradients:
    w: Dict[int, np.ndarray]
    u: Dict[int, np.ndarray]
    x: Dict[VarId, np.ndarray]
    lam: Dict[VarId, np.ndarray]

    def check_finite(self) -> None:
        for label, group in (("W", self.w), ("U", self.u), ("x", self.x), ("lambda", self.lam)):
            for key, arr in group.items():
                if not np.all(np.isfinite(arr)):
                    raise la.NonFiniteError(f"non-finite gradient for {label}{key}")


def gradients(graph, states, weights, data, g: ConstraintKind = IDENTITY,
              reg: RegConfig = RegConfig(), cache: Optional[TermCache] = None) -> Gradients:
    cache = _cache(cache, graph, states, weights, data, g, reg)
    args = (graph, states, weights, data)
    return Gradients(
        w={l: grad_w(*args, l, g, reg, cache) for l in sorted(weights.w)},
        u={l: grad_u(*args, l, g, reg, cache) for l in sorted(weights.u)},
        x={v: grad_x(*args, v, g, reg, cache) for v in graph.variables},
        lam={v: grad_lambda(*args, v, g, reg, cache) for v in graph.variables},
    )


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def forward_states(graph, weights, data) -> StateStore:
    """States on the feasible set: every node's output set to its pre-image.

    Nodes are stored in topological order by the builders, so one sweep
    suffices.  Multipliers are zero.
    """
    states = StateStore.zeros(graph, data)
    for node in graph.nodes:
        h, *_ = pre_image(graph, node, states, weights)
        states.x[node.out] = h
    return states


def readout_outputs(graph, states, weights) -> List[np.ndarray]:
    outs = []
    w = weights.read_w(graph.readout_layer)
    for r in graph.readouts:
        z = states.read_x(r.inputs[0])
        for v in r.inputs[1:]:
            z = z + states.read_x(v)
        outs.append(affine(w, z, graph.bias))
    return outs
