"""Phase-space arithmetic on the d-torus: shift orbits and Diophantine checking.

The shift dynamics is x -> x + omega (mod 1) componentwise.  Orbits are always
recomputed as x0 + n*omega in a single multiply-add before reduction, so a
million-step orbit carries one rounding, not a million.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Phase", "Frequency", "shift_orbit", "diophantine_margin"]


def _reduce(coords) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coords, dtype=float))
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("torus point needs a 1-d coordinate vector with d >= 1")
    return np.mod(arr, 1.0)


@dataclass(frozen=True)
class Phase:
    """A point of the d-torus, coordinates reduced into [0, 1)."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _reduce(self.coords))

    @property
    def d(self) -> int:
        return self.coords.size

    def shifted(self, omega: "Frequency", n: int = 1) -> "Phase":
        return Phase(self.coords + n * omega.coords)


@dataclass(frozen=True)
class Frequency:
    """Frequency vector with the parameters (p, q) of its Diophantine condition.

    The condition reads ||k . omega|| >= p / |k|^q for all nonzero integer
    vectors k, where |k| = |k_1| + ... + |k_d| and ||.|| is the distance to the
    nearest integer.  Only finite ranges of k are ever checked here.
    """

    coords: np.ndarray
    dioph_p: float = 1e-3
    dioph_q: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "coords", _reduce(self.coords))
        if self.dioph_q == 0.0:
            object.__setattr__(self, "dioph_q", self.d + 1.0)
        if self.dioph_p <= 0:
            raise ValueError("dioph_p must be positive")
        if self.dioph_q <= self.d:
            raise ValueError(f"dioph_q must exceed the dimension d={self.d}")

    @property
    def d(self) -> int:
        return self.coords.size


def shift_orbit(x0: Phase, omega: Frequency, n_from: int, n_to: int) -> np.ndarray:
    """Orbit segment x0 + n*omega (mod 1) for n = n_from..n_to, shape (count, d).

    Each row is computed directly from x0, so there is no accumulated drift
    along long orbits.
    """
    if n_from > n_to:
        raise ValueError("n_from must not exceed n_to")
    n = np.arange(n_from, n_to + 1, dtype=float)
    return np.mod(x0.coords[None, :] + n[:, None] * omega.coords[None, :], 1.0)


def _dist_to_int(t: np.ndarray) -> np.ndarray:
    frac = np.mod(t, 1.0)
    return np.minimum(frac, 1.0 - frac)


def diophantine_margin(omega: Frequency, k_max: int):
    """Scan all 0 < |k| <= k_max and return (margin, worst_k).

    margin = min |k|^q * ||k . omega||.  The finite-range Diophantine condition
    holds iff margin >= omega.dioph_p.  By symmetry k -> -k only vectors whose
    first nonzero entry is positive are scanned.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    d = omega.d
    q = omega.dioph_q
    best = np.inf
    worst_k = None
    rng = range(-k_max, k_max + 1)
    for k in itertools.product(rng, repeat=d):
        norm1 = sum(abs(ki) for ki in k)
        if norm1 == 0 or norm1 > k_max:
            continue
        # symmetry: skip the mirror image
        lead = next(ki for ki in k if ki != 0)
        if lead < 0:
            continue
        val = norm1**q * float(_dist_to_int(np.dot(k, omega.coords)))
        if val < best:
            best = val
            worst_k = np.array(k, dtype=int)
    return float(best), worst_k
