"""Random signs by exhaustive enumeration (Kahane-Khinchine at desk scale)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lattice import CapacityError

MAX_SIGNS = 24


def sign_patterns(N: int) -> np.ndarray:
    """All 2^N patterns in {-1,+1}^N, one per row."""
    if N > MAX_SIGNS:
        raise CapacityError(f"2^{N} sign patterns exceeds the enumeration bound 2^{MAX_SIGNS}")
    return _kernels._sign_matrix(N)


@dataclass(frozen=True)
class KhintchineMoments:
    first: float  # E|S|
    second: float  # (E S^2)^{1/2}

    @property
    def ratio(self) -> float:
        """(E S^2)^{1/2} / E|S|, which lies in [1, sqrt(2)]."""
        return self.second / self.first if self.first > 0 else 1.0


def khintchine_moments(x) -> KhintchineMoments:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size > MAX_SIGNS:
        raise CapacityError(f"{x.size} coefficients exceeds the enumeration bound {MAX_SIGNS}")
    e1, e2 = _kernels.rademacher_moments(x)
    return KhintchineMoments(e1, float(np.sqrt(e2)))
