"""The abstract per-time-step nonlinear system A u + F(u) = f."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .hysteresis import ScalarPiecewiseC2
from .nodewise import NodewiseNonlinearity, ScalarSeqNodewise


@dataclass
class ModelProblem:
    """Find u with A u + F(u) = f; A SPD, F diagonal and nondecreasing.

    The residual map is strongly monotone with modulus lambda_min(A), so the
    solution exists and is unique.  ``phi`` exposes the per-node scalar
    nonlinearities; solvers use the stacked ``F`` directly.
    """

    A: sp.csr_matrix
    f: np.ndarray
    F: NodewiseNonlinearity

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.f = np.asarray(self.f, dtype=float)
        if self.A.shape != (self.n, self.n):
            raise ValueError("A must be square and match f")
        if self.F.n != self.n:
            raise ValueError("nonlinearity size must match f")

    @property
    def n(self) -> int:
        return self.f.size

    @property
    def phi(self) -> list[ScalarPiecewiseC2]:
        return self.F.scalars()

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.F.value(x) - self.f


def model_from_scalars(A, f, phis: Sequence[ScalarPiecewiseC2]) -> ModelProblem:
    """Convenience constructor from explicit scalar nonlinearities."""
    return ModelProblem(A, f, ScalarSeqNodewise(phis))
