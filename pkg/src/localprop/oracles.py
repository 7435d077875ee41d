"""Independent correctness oracles.

* :func:`finite_diff` - central differences on a flat parameter vector.
* :func:`backprop_grad` - textbook forward/backward pass for MLPs.  It is
  written directly against numpy and shares no code with the Lagrangian
  gradient routines in :mod:`localprop.core`.
* :func:`recover_backprop_check` - places the states on the feasible set,
  solves the multipliers from dL/dx = 0, and compares the Lagrangian weight
  gradient with backprop.  With the identity constraint the two must agree
  to rounding error; under this convention ``lam_l = -dV/dx_l``.
* :func:`check_gradients` - compares every analytic partial of the
  Lagrangian with finite differences, skipping coordinates whose
  perturbation approaches a kink (epsilon dead zone edge, ReLU at 0, |x| at 0).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import core
from . import linalg as la
from .architectures import NetworkSpec, build_graph
from .constraints import IDENTITY, ConstraintKind, kink_distance

DEFAULT_H = 1e-5
CONFIRM_H = 1e-6


def finite_diff(f: Callable[[np.ndarray], float], theta, h: float = DEFAULT_H) -> np.ndarray:
    theta = np.array(theta, dtype=np.float64, copy=True)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(theta)
        flat[k] = orig - h
        fm = f(theta)
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise la.NonFiniteError(f"non-finite function value at coordinate {k}")
        gflat[k] = (fp - fm) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# plain backpropagation (MLP only)
# ---------------------------------------------------------------------------

_BP_ACT = {
    "tanh": (np.tanh, lambda s: 1.0 - np.tanh(s) ** 2),
    "sigmoid": (lambda s: 1.0 / (1.0 + np.exp(-s)),
                lambda s: np.exp(-s) / (1.0 + np.exp(-s)) ** 2),
    "relu": (lambda s: np.where(s > 0, s, 0.0), lambda s: np.where(s > 0, 1.0, 0.0)),
}


def _bp_loss_grad(kind, o, y):
    if kind == "squared_error":
        return o - y
    e = np.exp(o - o.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return p * y.sum(axis=1, keepdims=True) - y


def _bp_loss(kind, o, y):
    if kind == "squared_error":
        return 0.5 * float(np.sum((o - y) ** 2))
    m = o.max(axis=1, keepdims=True)
    logp = o - m - np.log(np.exp(o - m).sum(axis=1, keepdims=True))
    return -float(np.sum(y * logp))


def _bp_forward(w: Dict[int, np.ndarray], spec: NetworkSpec, X):
    f, _ = _BP_ACT[spec.activation]
    acts, pres = [np.asarray(X, dtype=np.float64)], []
    for l in range(spec.H):
        a = acts[-1]
        inp = np.hstack([a, np.ones((a.shape[0], 1))]) if spec.bias else a
        s = inp @ w[l].T
        pres.append(s)
        acts.append(f(s))
    top = acts[-1]
    inp = np.hstack([top, np.ones((top.shape[0], 1))]) if spec.bias else top
    return acts, pres, inp @ w[spec.H].T


def network_loss(weights, spec: NetworkSpec, data) -> float:
    *_, out = _bp_forward(weights.w, spec, data.inputs)
    return _bp_loss(spec.loss, out, np.asarray(data.targets, dtype=np.float64))


def backprop_grad(weights, spec: NetworkSpec, data) -> Dict[int, np.ndarray]:
    """Gradient of the summed loss w.r.t. every W, via the delta recursion."""
    if spec.arch != "mlp":
        raise ValueError("the backprop oracle only covers MLPs")
    w = weights.w
    for l in range(spec.H + 1):
        if l not in w:
            raise ValueError(f"missing W_{l}")
    _, fprime = _BP_ACT[spec.activation]
    acts, pres, out = _bp_forward(w, spec, data.inputs)
    y = np.asarray(data.targets, dtype=np.float64)
    if out.shape != y.shape:
        raise ValueError(f"output shape {out.shape} != target shape {y.shape}")

    def aug(a):
        return np.hstack([a, np.ones((a.shape[0], 1))]) if spec.bias else a

    grads = {}
    top_delta = _bp_loss_grad(spec.loss, out, y)
    grads[spec.H] = top_delta.T @ aug(acts[spec.H])
    back = top_delta @ w[spec.H]
    for l in range(spec.H - 1, -1, -1):
        width = acts[l + 1].shape[1]
        delta = fprime(pres[l]) * back[:, :width]
        grads[l] = delta.T @ aug(acts[l])
        back = delta @ w[l]
    return grads


# ---------------------------------------------------------------------------
# recovering backprop from stationarity
# ---------------------------------------------------------------------------

def stationary_multipliers(graph, states, weights, data) -> Dict:
    """Multipliers solving dL/dx = 0 for an identity-G MLP at feasible states."""
    _, dsigma = core.activation(graph.activation)
    H = graph.n_layers
    lam = {}
    rt = core.readout_terms(graph, graph.readouts[0], states, weights, data)
    lam[(H, 0)] = -rt.back
    for l in range(H - 1, 0, -1):
        node = graph.node((l + 1, 0))
        _, z, s, _ = core.pre_image(graph, node, states, weights)
        d = la.hadamard(lam[(l + 1, 0)], dsigma(s))
        lam[(l, 0)] = la.matvec_transposed(weights.read_w(node.weight), d)[..., : graph.widths[(l, 0)]]
    return lam


def _max_rel(a: Dict[int, np.ndarray], b: Dict[int, np.ndarray]) -> float:
    diff = max(float(np.max(np.abs(a[k] - b[k]))) for k in b)
    scale = max(float(np.max(np.abs(b[k]))) for k in b)
    if diff == 0.0:
        return 0.0
    return diff / scale if scale > 0.0 else float("inf")


def recover_backprop_check(weights, spec: NetworkSpec, data) -> float:
    """Max relative discrepancy between the LP weight gradient at the
    stationary point (feasible x, solved lambda) and plain backprop."""
    if spec.arch != "mlp":
        raise ValueError("backprop recovery is defined for MLPs")
    graph = build_graph(spec)
    states = core.forward_states(graph, weights, data)
    states.lam.update(stationary_multipliers(graph, states, weights, data))
    lp = {l: core.grad_w(graph, states, weights, data, l, IDENTITY) for l in sorted(weights.w)}
    return _max_rel(lp, backprop_grad(weights, spec, data))


# ---------------------------------------------------------------------------
# finite-difference check of every Lagrangian partial
# ---------------------------------------------------------------------------

class ParamView:
    """Flat view over W, U, x and lambda of a (graph, states, weights) triple."""

    def __init__(self, graph, states, weights):
        self.graph, self.states, self.weights = graph, states, weights
        self.slots = []
        for l in sorted(weights.w):
            self.slots.append((("W", l), weights.w, l))
        for l in sorted(weights.u):
            self.slots.append((("U", l), weights.u, l))
        for v in graph.variables:
            self.slots.append((("x", v), states.x, v))
        for v in graph.variables:
            self.slots.append((("lambda", v), states.lam, v))
        self.sizes = [store[key].size for _, store, key in self.slots]
        self.size = int(sum(self.sizes))

    def get(self) -> np.ndarray:
        return np.concatenate([store[key].ravel() for _, store, key in self.slots])

    def set(self, theta: np.ndarray) -> None:
        off = 0
        for (_, store, key), n in zip(self.slots, self.sizes):
            store[key] = theta[off: off + n].reshape(store[key].shape).copy()
            off += n

    def labels(self) -> List:
        out = []
        for (label, _, _), n in zip(self.slots, self.sizes):
            out.extend((label, j) for j in range(n))
        return out

    def flatten_grads(self, grads: core.Gradients) -> np.ndarray:
        groups = {"W": grads.w, "U": grads.u, "x": grads.x, "lambda": grads.lam}
        return np.concatenate([groups[label[0]][label[1]].ravel() for label, _, _ in self.slots])


def kink_quantities(graph, states, weights, data, g, reg) -> np.ndarray:
    """Distances of every non-smooth argument from its kink, concatenated."""
    parts = []
    for node in graph.nodes:
        t = core.node_terms(graph, node, states, weights, g, reg)
        parts.append(kink_distance(g, t.arg).ravel())
        if graph.activation == "relu":
            parts.append(np.abs(t.s).ravel())
    if reg.alpha > 0.0:
        for v in graph.variables:
            parts.append(np.abs(states.read_x(v)).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class GradCheckReport:
    n_checked: int = 0
    n_excluded: int = 0
    max_rel_error: float = 0.0
    max_abs_error_small: float = 0.0
    failures: List = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _coord_ok(analytic, numeric, rtol, atol, small):
    err = abs(analytic - numeric)
    if abs(numeric) < small:
        return err < atol, err, True
    return err / abs(numeric) < rtol, err / abs(numeric), False


def check_gradients(graph, states, weights, data, g: ConstraintKind = IDENTITY,
                    reg: core.RegConfig = core.RegConfig(), rtol: float = 1e-6,
                    atol: float = 1e-9, small: float = 1e-3, margin: float = 1e-4,
                    h: float = DEFAULT_H, corrupt: float = 0.0) -> GradCheckReport:
    """Finite-difference every coordinate of (W, U, x, lambda).

    ``corrupt`` is added to one analytic coordinate; the harness uses it to
    prove that it can fail.
    """
    view = ParamView(graph, states, weights)
    theta0 = view.get()
    analytic = view.flatten_grads(core.gradients(graph, states, weights, data, g, reg))
    if corrupt:
        analytic = analytic.copy()
        analytic[0] += corrupt
    labels = view.labels()

    def f(theta):
        view.set(theta)
        return core.lagrangian_value(graph, states, weights, data, g, reg)

    def kinks(theta):
        view.set(theta)
        return kink_quantities(graph, states, weights, data, g, reg)

    report = GradCheckReport()
    q0 = kinks(theta0)
    theta = theta0.copy()
    try:
        for k in range(theta.size):
            orig = theta[k]
            theta[k] = orig + h
            fp, qp = f(theta), kinks(theta)
            theta[k] = orig - h
            fm, qm = f(theta), kinks(theta)
            theta[k] = orig
            moved = (qp != q0) | (qm != q0)
            if moved.any() and np.min(q0[moved]) < margin:
                report.n_excluded += 1
                continue
            numeric = (fp - fm) / (2.0 * h)
            ok, err, is_small = _coord_ok(analytic[k], numeric, rtol, atol, small)
            if not ok:
                # confirmation pass with a smaller step
                hc = CONFIRM_H
                theta[k] = orig + hc
                fpc = f(theta)
                theta[k] = orig - hc
                fmc = f(theta)
                theta[k] = orig
                ok, err2, is_small = _coord_ok(analytic[k], (fpc - fmc) / (2.0 * hc),
                                               rtol, atol, small)
                err = min(err, err2) if ok else err
            report.n_checked += 1
            if is_small:
                report.max_abs_error_small = max(report.max_abs_error_small, err)
            else:
                report.max_rel_error = max(report.max_rel_error, err)
            if not ok:
                report.failures.append((labels[k], float(analytic[k]), float(numeric)))
    finally:
        view.set(theta0)
    return report


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

@dataclass
class _Data:
    inputs: np.ndarray
    targets: np.ndarray


def random_data(spec: NetworkSpec, n: int, rng: np.random.Generator):
    if spec.recurrent:
        X = rng.normal(size=(n, spec.seq_len, spec.widths[0]))
    else:
        X = rng.normal(size=(n, spec.widths[0]))
    shape = (n, spec.seq_len, spec.out_width) if (spec.recurrent and spec.supervision == "all") \
        else (n, spec.out_width)
    if spec.loss == "softmax_cross_entropy":
        labels = rng.integers(0, spec.out_width, size=shape[:-1])
        Y = np.eye(spec.out_width)[labels]
    else:
        Y = rng.normal(size=shape)
    return _Data(X, Y)


def random_instance(spec: NetworkSpec, n: int = 2, seed: int = 0, state_scale: float = 1.0,
                    lam_scale: float = 1.0, data=None):
    """Graph, random states/multipliers, random weights and data for checks."""
    rng = np.random.default_rng(seed)
    graph = build_graph(spec)
    data = data if data is not None else random_data(spec, n, rng)
    weights = core.init_weights(graph, int(rng.integers(2**31)))
    for store in (weights.w, weights.u):
        for k in store:
            store[k] = store[k] * 2.0
    states = core.StateStore.zeros(graph, data)
    for v in graph.variables:
        states.x[v] = state_scale * rng.normal(size=states.x[v].shape)
        states.lam[v] = lam_scale * rng.normal(size=states.lam[v].shape)
    return graph, states, weights, data
