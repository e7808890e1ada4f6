"""Cheap analytic objectives with the same interface as ControlObjective.

Used to exercise the optimizers without propagating a condensate. The
frequency-shift part of the genome is ignored unless stated otherwise.
"""
from __future__ import annotations

import numpy as np

from .gradient import CostBreakdown


class QuadraticSurrogate:
    """J(c) = 1/2 (c - c*)^T A (c - c*)."""

    def __init__(self, A, c_star, c_max: float = 5.0):
        self.A = np.asarray(A, dtype=float)
        self.c_star = np.asarray(c_star, dtype=float)
        self.c_max = float(c_max)

    @classmethod
    def random(cls, M: int, seed: int = 0, condition: float = 10.0, c_max: float = 5.0):
        rng = np.random.default_rng(seed)
        Q, _ = np.linalg.qr(rng.normal(size=(M, M)))
        A = Q @ np.diag(np.geomspace(1.0, condition, M)) @ Q.T
        return cls(0.5 * (A + A.T), rng.uniform(-1, 1, M), c_max)

    def evaluate(self, c, r=None) -> CostBreakdown:
        e = np.asarray(c, dtype=float) - self.c_star
        return CostBreakdown(0.5 * float(e @ self.A @ e))

    def evaluate_with_gradient(self, c, r=None):
        e = np.asarray(c, dtype=float) - self.c_star
        g = self.A @ e
        return CostBreakdown(0.5 * float(e @ g)), g


class RastriginSurrogate:
    """Multimodal test landscape: sum (c^2 - A cos(2 pi c)) + A M, minimum 0 at c = shift."""

    def __init__(self, M: int, amplitude: float = 1.0, shift=None, c_max: float = 5.0):
        self.M = M
        self.amplitude = amplitude
        self.shift = np.zeros(M) if shift is None else np.asarray(shift, dtype=float)
        self.c_max = float(c_max)

    def evaluate(self, c, r=None) -> CostBreakdown:
        e = np.asarray(c, dtype=float) - self.shift
        a = self.amplitude
        return CostBreakdown(float(np.sum(e * e - a * np.cos(2 * np.pi * e)) + a * self.M))

    def evaluate_with_gradient(self, c, r=None):
        e = np.asarray(c, dtype=float) - self.shift
        a = self.amplitude
        g = 2 * e + 2 * np.pi * a * np.sin(2 * np.pi * e)
        return self.evaluate(c), g


class SphereGenome:
    """Sphere function over the whole genome (c, r); used for pure DE checks."""

    def __init__(self, c_max: float = 5.0):
        self.c_max = float(c_max)

    def evaluate(self, c, r) -> CostBreakdown:
        return CostBreakdown(float(np.sum(np.square(c)) + np.sum(np.square(r))))
