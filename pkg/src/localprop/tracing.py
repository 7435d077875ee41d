"""Store wrappers that log or restrict memory accesses.

Used to verify that gradient computations only touch neighbouring layers
(and neighbouring time steps), and that a training step never reads a
value it has already overwritten.
"""
from __future__ import annotations

from typing import Iterable, List, Optional, Set, Tuple

from .core import StateStore, VarId, WeightStore


class LocalityError(RuntimeError):
    pass


class _LoggingDict(dict):
    def __init__(self, data, log, kind):
        super().__init__(data)
        self._log = log
        self._kind = kind

    def __setitem__(self, key, value):
        self._log.append(("write", self._kind, key))
        super().__setitem__(key, value)


class TracingStates(StateStore):
    """A state store that records every read (and write through ``x``/``lam``)."""

    def __init__(self, inner: StateStore, log: Optional[list] = None):
        self.log: List[Tuple[str, str, VarId]] = log if log is not None else []
        super().__init__(_LoggingDict(inner.x, self.log, "x"),
                         _LoggingDict(inner.lam, self.log, "lam"), inner.const)

    def read_x(self, var):
        self.log.append(("read", "x", var))
        return super().read_x(var)

    def read_lam(self, node_id):
        self.log.append(("read", "lam", node_id))
        return super().read_lam(node_id)

    def reads(self) -> Set[Tuple[str, VarId]]:
        return {(kind, key) for op, kind, key in self.log if op == "read"}

    def clear(self):
        self.log.clear()


class TracingWeights(WeightStore):
    def __init__(self, inner: WeightStore, log: Optional[list] = None):
        super().__init__(inner.w, inner.u)
        self.log: List[Tuple[str, str, int]] = log if log is not None else []

    def read_w(self, layer):
        self.log.append(("read", "W", layer))
        return super().read_w(layer)

    def read_u(self, layer):
        self.log.append(("read", "U", layer))
        return super().read_u(layer)

    def reads(self) -> Set[Tuple[str, int]]:
        return {(kind, key) for op, kind, key in self.log if op == "read"}


class NeighbourStates(StateStore):
    """Private copies of the states of a set of layers; anything else raises."""

    def __init__(self, full: StateStore, layers: Iterable[int]):
        self.layers = frozenset(layers)
        keep = lambda d: {k: v.copy() for k, v in d.items() if k[0] in self.layers}
        super().__init__(keep(full.x), keep(full.lam),
                         {k: v for k, v in full.const.items() if k[0] in self.layers})
        self._n = full.n_examples

    @property
    def n_examples(self):
        return self._n

    def read_x(self, var):
        if var[0] not in self.layers:
            raise LocalityError(f"read of x{var} outside layers {sorted(self.layers)}")
        return super().read_x(var)

    def read_lam(self, node_id):
        if node_id[0] not in self.layers:
            raise LocalityError(f"read of lambda{node_id} outside layers {sorted(self.layers)}")
        return super().read_lam(node_id)


class NeighbourWeights(WeightStore):
    def __init__(self, full: WeightStore, layers: Iterable[int]):
        layers = frozenset(layers)
        super().__init__({k: v.copy() for k, v in full.w.items() if k in layers},
                         {k: v.copy() for k, v in full.u.items() if k in layers})
        self.layers = layers

    def read_w(self, layer):
        if layer not in self.layers:
            raise LocalityError(f"read of W_{layer} outside {sorted(self.layers)}")
        return super().read_w(layer)

    def read_u(self, layer):
        if layer not in self.layers:
            raise LocalityError(f"read of U_{layer} outside {sorted(self.layers)}")
        return super().read_u(layer)
