"""Saddle-point training: descend on (W, x), ascend on lambda.

Every step is a Jacobi update: all gradients are taken from the same frozen
snapshot and only then applied.  Metrics returned by :func:`step` describe
that pre-step snapshot.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

from . import core
from . import linalg as la
from .architectures import NetworkSpec, build_graph
from .constraints import IDENTITY, ConstraintKind
from .data import Dataset

log = logging.getLogger(__name__)


class DivergenceError(la.NonFiniteError):
    """Training produced a non-finite value; ``where`` names the offender."""

    def __init__(self, message: str, iteration: int = -1, where: str = ""):
        super().__init__(message)
        self.iteration = iteration
        self.where = where


@dataclass
class TrainConfig:
    eta_w: float = 0.01
    eta_x: float = 0.01
    eta_lambda: float = 0.1
    max_iters: int = 10000
    target_residual: float = 1e-3
    seed: int = 0
    reg: core.RegConfig = field(default_factory=core.RegConfig)
    constraint: ConstraintKind = IDENTITY
    log_every: int = 100
    plateau_window: int = 100
    plateau_rtol: float = 1e-6
    batch_size: Optional[int] = None   # experimental mini-batch mode

    def __post_init__(self):
        for name in ("eta_w", "eta_x", "eta_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class IterMetrics:
    iter: int
    lagrangian: float
    loss_term: float
    max_abs_residual: float
    mean_abs_residual: float
    lambda_l1: float
    train_accuracy: Optional[float] = None

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["accuracy"] = rec.pop("train_accuracy")
        return rec


@dataclass
class TrainRun:
    graph: core.ConstraintGraph
    states: core.StateStore
    weights: core.WeightStore
    history: List[IterMetrics]
    final: IterMetrics
    iterations: int
    stop_reason: str

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"


# ---------------------------------------------------------------------------

def accuracy(outputs: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of rows classified correctly.

    Single-column outputs are thresholded at 0.5 against 0/1 targets;
    wider ones are compared by argmax.
    """
    outputs = np.asarray(outputs)
    targets = np.asarray(targets)
    if outputs.shape[0] == 0:
        return 1.0
    if outputs.shape[-1] == 1:
        hit = (outputs[..., 0] > 0.5) == (targets[..., 0] > 0.5)
    else:
        hit = np.argmax(outputs, axis=-1) == np.argmax(targets, axis=-1)
    return float(np.mean(hit))


def snapshot_metrics(cache: core.TermCache, it: int, with_accuracy: bool = False) -> IterMetrics:
    graph, states, weights, data = cache.graph, cache.states, cache.weights, cache.data
    parts = core.lagrangian_parts(graph, states, weights, data, cache.g, cache.reg, cache)
    mx = 0.0
    abs_total = 0.0
    count = 0
    lam_l1 = 0.0
    for node in graph.nodes:
        r = cache.node(node).g
        if r.size:
            mx = max(mx, float(np.max(np.abs(r))))
        abs_total += la.l1_norm(r)
        count += r.size
        lam_l1 += la.l1_norm(states.read_lam(node.id))
    acc = None
    if with_accuracy:
        acc = accuracy(forward_outputs(graph, weights, data), data.targets)
    return IterMetrics(it, parts.total, parts.loss, mx, abs_total / max(count, 1), lam_l1, acc)


def apply_updates(graph, states, weights, grads: core.Gradients, config: TrainConfig,
                  rows=None, w_layers=None, variables=None) -> None:
    """W -= eta_w dW, x -= eta_x dx, lam += eta_lambda dlam.

    ``rows`` restricts state updates to some examples (mini-batch mode);
    ``w_layers`` / ``variables`` restrict to a partition (parallel mode).
    """
    for l in (grads.w if w_layers is None else w_layers):
        weights.w[l] = la.axpy(weights.w[l], -config.eta_w, grads.w[l])
        if l in grads.u:
            weights.u[l] = la.axpy(weights.u[l], -config.eta_w, grads.u[l])
    for v in (graph.variables if variables is None else variables):
        if rows is None:
            states.x[v] = la.axpy(states.x[v], -config.eta_x, grads.x[v])
            states.lam[v] = la.axpy(states.lam[v], config.eta_lambda, grads.lam[v])
        else:
            x = states.x[v].copy()
            lam = states.lam[v].copy()
            x[rows] = la.axpy(x[rows], -config.eta_x, grads.x[v])
            lam[rows] = la.axpy(lam[rows], config.eta_lambda, grads.lam[v])
            states.x[v], states.lam[v] = x, lam


def _first_non_finite(states, weights) -> str:
    for label, group in (("W", weights.w), ("U", weights.u), ("x", states.x),
                         ("lambda", states.lam)):
        for key in sorted(group):
            if not np.all(np.isfinite(group[key])):
                return f"{label}{key}"
    return ""


def _raise_divergence(err: Exception, it: int, states=None, weights=None):
    msg = str(err)
    where = msg.rsplit(" for ", 1)[-1] if " for " in msg else ""
    if not where and states is not None:
        where = _first_non_finite(states, weights)
    raise DivergenceError(f"diverged at iteration {it}: {msg}", it, where) from err


def step(graph, states, weights, data, config: TrainConfig, it: int = 0,
         with_accuracy: bool = False, rng: Optional[np.random.Generator] = None) -> IterMetrics:
    """One simultaneous descent/ascent step; mutates ``states`` and ``weights``."""
    g, reg = config.constraint, config.reg
    cache = core.TermCache(graph, states, weights, data, g, reg)
    with np.errstate(over="ignore", invalid="ignore"):
        return _step(graph, states, weights, data, config, cache, it, with_accuracy, rng)


def _step(graph, states, weights, data, config, cache, it, with_accuracy, rng):
    g, reg = config.constraint, config.reg
    try:
        metrics = snapshot_metrics(cache, it, with_accuracy)
        rows = None
        if config.batch_size is not None and config.batch_size < len(data.inputs):
            rng = rng if rng is not None else np.random.default_rng(config.seed + it)
            rows = np.sort(rng.choice(len(data.inputs), config.batch_size, replace=False))
            sub = states.subset(rows)
            grads = core.gradients(graph, sub, weights, data.subset(rows), g, reg)
        else:
            grads = core.gradients(graph, states, weights, data, g, reg, cache)
        grads.check_finite()
    except la.NonFiniteError as err:
        _raise_divergence(err, it, states, weights)
    apply_updates(graph, states, weights, grads, config, rows)
    return metrics


def init_run(graph, data, config: TrainConfig):
    """Zero states and multipliers, seeded random weights."""
    return core.StateStore.zeros(graph, data), core.init_weights(graph, config.seed)


def _plateaued(losses: List[float], window: int, rtol: float) -> bool:
    if len(losses) <= window:
        return False
    old, new = losses[-window - 1], losses[-1]
    return abs(new - old) <= rtol * max(abs(old), 1e-300)


def train(graph, data, config: TrainConfig, states=None, weights=None,
          step_fn=None, callback=None) -> TrainRun:
    """Run :func:`step` until ``max_iters`` or convergence.

    Convergence needs both max |residual| <= ``target_residual`` and a
    plateau of the loss term (relative change below ``plateau_rtol`` over
    ``plateau_window`` iterations).  ``step_fn`` lets the parallel executor
    drive the same loop.  ``callback`` sees every logged snapshot; a truthy
    return value stops the run with reason ``"callback"``.  Divergence
    propagates as :class:`DivergenceError`.
    """
    if states is None or weights is None:
        s0, w0 = init_run(graph, data, config)
        states = states if states is not None else s0
        weights = weights if weights is not None else w0
    step_fn = step_fn or step
    rng = np.random.default_rng(config.seed) if config.batch_size else None
    history: List[IterMetrics] = []
    losses: List[float] = []
    reason = "max_iters"
    it = 0
    while it < config.max_iters:
        logged = it % config.log_every == 0
        m = step_fn(graph, states, weights, data, config, it=it, with_accuracy=logged, rng=rng)
        losses.append(m.loss_term)
        if len(losses) > config.plateau_window + 1:
            losses.pop(0)
        if logged:
            history.append(m)
            if callback is not None and callback(m):
                reason = "callback"
                it += 1
                break
            log.debug("iter %d L=%.6g loss=%.6g max|G|=%.3g", it, m.lagrangian, m.loss_term,
                      m.max_abs_residual)
        it += 1
        if (m.max_abs_residual <= config.target_residual
                and _plateaued(losses, config.plateau_window, config.plateau_rtol)):
            reason = "converged"
            break
    cache = core.TermCache(graph, states, weights, data, config.constraint, config.reg)
    try:
        final = snapshot_metrics(cache, it, with_accuracy=True)
    except la.NonFiniteError as err:
        _raise_divergence(err, it, states, weights)
    return TrainRun(graph, states, weights, history, final, it, reason)


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def forward_outputs(graph, weights, data) -> np.ndarray:
    """Classic forward pass; ``(N, k)`` or ``(N, T, k)`` for per-step readouts."""
    states = core.forward_states(graph, weights, data)
    outs = core.readout_outputs(graph, states, weights)
    if len(outs) == 1 and graph.readouts[0].step is None:
        return outs[0]
    return np.stack(outs, axis=1)


def infer(weights: core.WeightStore, spec: NetworkSpec, inputs) -> np.ndarray:
    """Forward computation x_l = sigma(W x_{l-1}) (or its recurrent/residual
    analogue) followed by the linear readout.  G plays no role here."""
    graph = build_graph(spec)
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == (2 if spec.recurrent else 1)
    if single:
        inputs = inputs[None]
    expected = graph.weight_shapes()
    for key in ("w", "u"):
        have = {l: m.shape for l, m in getattr(weights, key).items()}
        if have != expected[key]:
            raise ValueError(f"weight shapes {have} do not match network {expected[key]}")
    n = inputs.shape[0]
    tshape = (n, spec.seq_len, spec.out_width) if spec.recurrent and spec.supervision == "all" \
        else (n, spec.out_width)
    out = forward_outputs(graph, weights, Dataset(inputs, np.zeros(tshape)))
    return out[0] if single else out


def is_finite_metrics(m: IterMetrics) -> bool:
    return all(math.isfinite(v) for v in (m.lagrangian, m.loss_term, m.max_abs_residual))
