"""Layer-parallel execution of the training step.

The network is cut into *units*: unit l owns W_l and, for l >= 1, the
states x_l and multipliers lam_l of every example.  Units are dealt out to
workers in contiguous blocks.  A step runs in two barrier-separated phases:

1. each worker copies the states of layers lo-1 .. hi+1 (and W_{lo-1} .. W_hi)
   out of the frozen snapshot and computes the gradients of its own units
   from those copies only;
2. each worker writes the updates of its own units.

Because every reduction goes through :mod:`localprop.linalg`, the result is
bitwise identical to :func:`localprop.optimizer.step`.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional

import numpy as np

from . import core
from . import linalg as la
from .architectures import NetworkSpec, build_graph
from .data import Dataset
from .optimizer import (TrainConfig, TrainRun, _raise_divergence, apply_updates,
                        snapshot_metrics, train)
from .tracing import NeighbourStates, NeighbourWeights

PARALLEL_ARCHS = ("mlp", "resnet")


@dataclass(frozen=True)
class LayerPartition:
    """``blocks[k]`` is the (lo, hi) range of units handled by worker k."""
    blocks: tuple
    n_units: int

    @classmethod
    def even(cls, n_units: int, workers: int) -> "LayerPartition":
        if workers < 1:
            raise ValueError("need at least one worker")
        workers = min(workers, n_units)
        base, extra = divmod(n_units, workers)
        blocks, lo = [], 0
        for k in range(workers):
            size = base + (1 if k < extra else 0)
            blocks.append((lo, lo + size - 1))
            lo += size
        return cls(tuple(blocks), n_units)

    @property
    def workers(self) -> int:
        return len(self.blocks)

    def state_layers(self, k: int) -> range:
        lo, hi = self.blocks[k]
        return range(lo - 1, hi + 2)

    def weight_layers(self, k: int) -> range:
        lo, hi = self.blocks[k]
        return range(lo - 1, hi + 1)


def _check_graph(graph):
    if graph.arch not in PARALLEL_ARCHS:
        raise ValueError(
            f"parallel mode needs nearest-neighbour dependencies (mlp or resnet); "
            f"{graph.arch!r} graphs are not supported")


def _worker_phase1(graph, states, weights, data, config, partition, k):
    lo, hi = partition.blocks[k]
    local_s = NeighbourStates(states, partition.state_layers(k))
    local_w = NeighbourWeights(weights, partition.weight_layers(k))
    cache = core.TermCache(graph, local_s, local_w, data, config.constraint, config.reg)
    args = (graph, local_s, local_w, data)
    g, reg = config.constraint, config.reg
    out = {"w": {}, "x": {}, "lam": {}, "nodes": {}, "readout": None}
    try:
        for l in range(lo, hi + 1):
            out["w"][l] = core.grad_w(*args, l, g, reg, cache)
            if l >= 1:
                v = (l, 0)
                out["x"][v] = core.grad_x(*args, v, g, reg, cache)
                out["lam"][v] = core.grad_lambda(*args, v, g, reg, cache)
                out["nodes"][v] = cache.node(graph.node(v))
            if l == graph.readout_layer:
                out["readout"] = cache.readout(0)
    except la.NonFiniteError as err:
        out["error"] = err
    return out


def parallel_step(graph, states, weights, data, config: TrainConfig, workers: int = 1,
                  it: int = 0, with_accuracy: bool = False, rng=None,
                  executor: Optional[ThreadPoolExecutor] = None):
    """Barrier-synchronised Jacobi step; returns pre-step :class:`IterMetrics`."""
    _check_graph(graph)
    if config.batch_size is not None:
        raise ValueError("mini-batch mode is not supported by the parallel executor")
    partition = LayerPartition.even(graph.n_layers + 1, workers)
    own = executor is None
    pool = executor or ThreadPoolExecutor(max_workers=partition.workers)
    with np.errstate(over="ignore", invalid="ignore"):
        return _parallel_step(graph, states, weights, data, config, partition, pool, own,
                              it, with_accuracy)


def _parallel_step(graph, states, weights, data, config, partition, pool, own, it,
                   with_accuracy):
    try:
        # phase 1: gradients from the frozen snapshot
        futures = [pool.submit(_worker_phase1, graph, states, weights, data, config,
                               partition, k) for k in range(partition.workers)]
        results = [f.result() for f in futures]            # barrier
        grads = core.Gradients({}, {}, {}, {})
        cache = core.TermCache(graph, states, weights, data, config.constraint, config.reg)
        for res in results:
            grads.w.update(res["w"])
            grads.x.update(res["x"])
            grads.lam.update(res["lam"])
            cache._nodes.update(res["nodes"])
            if res["readout"] is not None:
                cache._readouts[0] = res["readout"]
        try:
            for res in results:
                if "error" in res:
                    raise res["error"]
            metrics = snapshot_metrics(cache, it, with_accuracy)
            grads.check_finite()
        except la.NonFiniteError as err:
            _raise_divergence(err, it, states, weights)
        # phase 2: disjoint writes
        futures = []
        for k in range(partition.workers):
            lo, hi = partition.blocks[k]
            futures.append(pool.submit(
                apply_updates, graph, states, weights, grads, config, None,
                list(range(lo, hi + 1)), [(l, 0) for l in range(max(lo, 1), hi + 1)]))
        for f in futures:
            f.result()                                      # barrier
    finally:
        if own:
            pool.shutdown()
    return metrics


def parallel_train(graph, data, config: TrainConfig, workers: int, states=None,
                   weights=None, callback=None) -> TrainRun:
    _check_graph(graph)
    n = min(workers, graph.n_layers + 1)
    with ThreadPoolExecutor(max_workers=n) as pool:
        fn = partial(parallel_step, workers=workers, executor=pool)
        return train(graph, data, config, states, weights, step_fn=fn, callback=callback)


def speedup_probe(spec: NetworkSpec, n_examples: int = 32, workers: int = 4, iters: int = 20,
                  seed: int = 0) -> List[Dict]:
    """Seconds per training iteration for 1..workers workers.

    Measurement only: Python threads share the interpreter lock, so the
    numbers document the overhead/benefit on the current machine and carry
    no pass/fail meaning.  Worker counts beyond the number of units are
    clamped.
    """
    graph = build_graph(spec)
    rng = np.random.default_rng(seed)
    data = Dataset(rng.normal(size=(n_examples, spec.widths[0])),
                   rng.normal(size=(n_examples, spec.out_width)))
    config = TrainConfig(max_iters=iters, seed=seed, target_residual=-1.0,
                         log_every=max(iters, 1))
    units = graph.n_layers + 1
    rows = []
    for k in range(1, workers + 1):
        eff = min(k, units)
        states, weights = core.StateStore.zeros(graph, data), core.init_weights(graph, seed)
        t0 = time.perf_counter()
        parallel_train(graph, data, config, eff, states, weights)
        dt = (time.perf_counter() - t0) / max(iters, 1)
        rows.append({"workers": k, "effective_workers": eff, "sec_per_iter": dt,
                     "note": "clamped to unit count" if eff < k else ""})
    base = rows[0]["sec_per_iter"]
    for r in rows:
        r["speedup"] = base / r["sec_per_iter"] if r["sec_per_iter"] > 0 else float("nan")
    return rows
