"""Elementwise constraint functions G and their derivatives.

``identity`` enforces hard equality; the two epsilon-insensitive variants
are exactly zero on ``[-eps, eps]`` and slope-one outside it:

* ``eps_abs``:  ``max(|a| - eps, 0)``  (never negative)
* ``eps_lin``:  ``max(a, eps) - max(-a, eps)``  (keeps the sign of ``a``)

At the kinks ``|a| == eps`` the derivative is taken to be 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "eps_abs", "eps_lin")


@dataclass(frozen=True)
class ConstraintKind:
    kind: str = "identity"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}; expected one of {KINDS}")
        if not (self.epsilon >= 0.0):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    @property
    def has_dead_zone(self) -> bool:
        return self.kind != "identity"

    def value(self, a):
        return g_value(self, a)

    def derivative(self, a):
        return g_derivative(self, a)


IDENTITY = ConstraintKind("identity")


def g_value(k: ConstraintKind, a):
    a = np.asarray(a, dtype=np.float64)
    if k.kind == "identity":
        return a.copy()
    eps = k.epsilon
    if k.kind == "eps_abs":
        return np.maximum(np.abs(a) - eps, 0.0)
    return np.maximum(a, eps) - np.maximum(-a, eps)


def g_derivative(k: ConstraintKind, a):
    a = np.asarray(a, dtype=np.float64)
    if k.kind == "identity":
        return np.ones_like(a)
    outside = np.abs(a) > k.epsilon
    if k.kind == "eps_abs":
        return np.where(outside, np.sign(a), 0.0)
    return np.where(outside, 1.0, 0.0)


def kink_distance(k: ConstraintKind, a):
    """Distance of each argument from the nearest non-differentiable point.

    Infinite for the identity kind, which is smooth everywhere.
    """
    a = np.asarray(a, dtype=np.float64)
    if k.kind == "identity":
        return np.full_like(a, np.inf)
    return np.abs(np.abs(a) - k.epsilon)
