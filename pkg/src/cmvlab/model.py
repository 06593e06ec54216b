"""Analytic sampling functions built from finite trigonometric polynomials.

A model is either a disk-valued Verblunsky generator alpha: T^d -> D or an
SU(2)-valued coin field for quantum walks.  Both are certified at construction
time: |alpha| is bounded away from 1 on a grid plus a Lipschitz margin, coins
must have unit determinant and nonvanishing diagonal entries on the grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelViolation
from .torus import Frequency, Phase, shift_orbit

__all__ = [
    "TrigPoly",
    "SamplingFunction",
    "CoinField",
    "eval_alpha_rho",
    "verblunsky_sequence",
    "log_integrability",
    "coin_field_eval",
    "constant_alpha",
    "single_harmonic",
    "real_trig",
    "two_harmonic",
    "constant_coin",
    "hadamard_coin",
    "identity_coin",
    "phase_coin",
    "reflection_coin",
    "builtin_model",
    "model_from_json",
    "model_to_json",
]

DET_TOL = 1e-10
DIAG_TOL = 1e-12


@dataclass(frozen=True)
class TrigPoly:
    """Finite sum of c_k * exp(2 pi i k.x) over integer frequency vectors k.

    freqs has shape (m, d) int, coeffs shape (m,) complex.  The empty sum
    evaluates to 0.
    """

    d: int
    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=int).reshape(-1, self.d)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if f.shape[0] != c.shape[0]:
            raise ValueError("freqs and coeffs length mismatch")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, d: int) -> "TrigPoly":
        return cls(d, np.zeros((0, d), dtype=int), np.zeros(0, dtype=complex))

    @classmethod
    def constant(cls, d: int, value: complex) -> "TrigPoly":
        return cls(d, np.zeros((1, d), dtype=int), np.array([value], dtype=complex))

    @property
    def degree(self) -> int:
        if self.freqs.shape[0] == 0:
            return 0
        return int(np.abs(self.freqs).sum(axis=1).max())

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at x of shape (..., d); returns complex of shape (...)."""
        x = np.asarray(x, dtype=float)
        if self.coeffs.size == 0:
            return np.zeros(x.shape[:-1], dtype=complex)
        phases = np.tensordot(x, self.freqs.T, axes=1)  # (..., m)
        return np.exp(2j * np.pi * phases) @ self.coeffs

    def lipschitz_bound(self) -> float:
        """sup-norm Lipschitz constant: sum over terms of 2 pi |k|_1 |c_k|."""
        if self.coeffs.size == 0:
            return 0.0
        return float(2 * np.pi * (np.abs(self.freqs).sum(axis=1) * np.abs(self.coeffs)).sum())

    def conj_poly(self) -> "TrigPoly":
        return TrigPoly(self.d, -self.freqs, np.conj(self.coeffs))


def _re_im_parts(poly: TrigPoly):
    re = TrigPoly(
        poly.d,
        np.vstack([poly.freqs, -poly.freqs]),
        np.concatenate([poly.coeffs / 2, np.conj(poly.coeffs) / 2]),
    )
    im = TrigPoly(
        poly.d,
        np.vstack([poly.freqs, -poly.freqs]),
        np.concatenate([poly.coeffs / 2j, -np.conj(poly.coeffs) / 2j]),
    )
    return re, im


@dataclass(frozen=True)
class SamplingFunction:
    """Certified disk-valued Verblunsky generator alpha = re_part + i im_part.

    re_part and im_part are Hermitian-symmetrized trig polynomials (real on the
    torus).  sup_bound is the certified upper bound for sup |alpha|: grid max
    plus Lipschitz constant times grid spacing.  Construction raises
    ModelViolation when that bound is not < 1.
    """

    re_part: TrigPoly
    im_part: TrigPoly
    sup_bound: float = field(default=0.0)
    cert_grid: int = 256

    def __post_init__(self):
        if self.re_part.d != self.im_part.d:
            raise ValueError("re/im dimension mismatch")
        if self.sup_bound == 0.0:
            object.__setattr__(self, "sup_bound", self._certify())
        if not self.sup_bound < 1.0:
            raise ModelViolation(
                f"sup|alpha| certification failed: bound {self.sup_bound:.6f} >= 1"
            )

    @classmethod
    def from_poly(cls, poly: TrigPoly, cert_grid: int = 256) -> "SamplingFunction":
        re, im = _re_im_parts(poly)
        return cls(re, im, cert_grid=cert_grid)

    @property
    def d(self) -> int:
        return self.re_part.d

    def combined_terms(self) -> dict:
        """Complex coefficients of alpha itself, recombined frequency-wise."""
        combined: dict = {}
        for poly, scale in ((self.re_part, 1.0), (self.im_part, 1j)):
            for i in range(poly.coeffs.size):
                key = tuple(int(v) for v in poly.freqs[i])
                combined[key] = combined.get(key, 0.0) + scale * poly.coeffs[i]
        return {k: c for k, c in combined.items() if abs(c) > 1e-15}

    def lipschitz_bound(self) -> float:
        return float(
            2 * np.pi * sum(sum(abs(ki) for ki in k) * abs(c) for k, c in self.combined_terms().items())
        )

    def _certify(self) -> float:
        d = self.d
        g = self.cert_grid
        axes = [np.arange(g) / g] * d
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        best = 0.0
        for lo in range(0, mesh.shape[0], 1 << 20):
            best = max(best, float(np.abs(self.eval(mesh[lo : lo + (1 << 20)])).max()))
        return float(best + self.lipschitz_bound() / g)

    def eval(self, x: np.ndarray) -> np.ndarray:
        return self.re_part.eval(x).real + 1j * self.im_part.eval(x).real


@dataclass(frozen=True)
class CoinField:
    """SU(2)-valued coin field with trig-polynomial entries.

    Certification grid check: |det - 1| < 1e-10 and both diagonal entries
    nonvanishing everywhere on the grid.
    """

    c11: TrigPoly
    c12: TrigPoly
    c21: TrigPoly
    c22: TrigPoly
    cert_grid: int = 256

    def __post_init__(self):
        d = self.c11.d
        if any(p.d != d for p in (self.c12, self.c21, self.c22)):
            raise ValueError("coin entry dimension mismatch")
        g = self.cert_grid
        axes = [np.arange(g) / g] * d
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        a, b = self.c11.eval(mesh), self.c12.eval(mesh)
        c, e = self.c21.eval(mesh), self.c22.eval(mesh)
        det = a * e - b * c
        bad = np.abs(det - 1.0).max()
        if bad >= DET_TOL:
            raise ModelViolation(f"coin det deviates from 1 by {bad:.2e} on the grid")
        dmin = min(np.abs(a).min(), np.abs(e).min())
        if dmin < DIAG_TOL:
            raise ModelViolation(f"coin diagonal entry vanishes on the grid (min {dmin:.2e})")

    @property
    def d(self) -> int:
        return self.c11.d

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Coin matrices at x of shape (..., d); returns shape (..., 2, 2)."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (2, 2), dtype=complex)
        out[..., 0, 0] = self.c11.eval(x)
        out[..., 0, 1] = self.c12.eval(x)
        out[..., 1, 0] = self.c21.eval(x)
        out[..., 1, 1] = self.c22.eval(x)
        return out


def eval_alpha_rho(alpha: SamplingFunction, x: Phase):
    """(alpha(x), rho(x)) with rho = sqrt(1 - |alpha|^2); checks |alpha| < 1."""
    a = complex(alpha.eval(x.coords))
    mod = abs(a)
    if mod >= 1.0:
        raise ModelViolation(f"|alpha(x)| = {mod:.6f} >= 1 at x = {x.coords}")
    return a, float(np.sqrt(1.0 - mod * mod))


def verblunsky_sequence(
    alpha: SamplingFunction,
    x0: Phase,
    omega: Frequency,
    n_from: int,
    n_to: int,
) -> np.ndarray:
    """alpha evaluated along the shift orbit, entries for n = n_from..n_to."""
    orbit = shift_orbit(x0, omega, n_from, n_to)
    vals = alpha.eval(orbit)
    if np.abs(vals).max(initial=0.0) >= 1.0:
        raise ModelViolation("verblunsky sequence escaped the unit disk")
    return vals


def log_integrability(alpha: SamplingFunction, grid_per_dim: int) -> float:
    """Riemann-sum estimate of the integral of log(1 - |alpha(x)|) over T^d."""
    if grid_per_dim < 2:
        raise ValueError("grid_per_dim must be >= 2")
    d = alpha.d
    axes = [np.arange(grid_per_dim) / grid_per_dim] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    vals = np.abs(alpha.eval(mesh))
    return float(np.log1p(-vals).mean())


def coin_field_eval(coins: CoinField, x: Phase) -> np.ndarray:
    """Coin matrix at one phase; re-checks det and diagonal nonvanishing."""
    c = coins.eval(x.coords)
    det = c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
    if abs(det - 1.0) >= DET_TOL:
        raise ModelViolation(f"coin det = {det} deviates from 1 at x = {x.coords}")
    if min(abs(c[0, 0]), abs(c[1, 1])) < DIAG_TOL:
        raise ModelViolation(f"coin diagonal entry vanishes at x = {x.coords}")
    return c


# ---------------------------------------------------------------------------
# built-in model library
# ---------------------------------------------------------------------------

def constant_alpha(value: complex, d: int = 1) -> SamplingFunction:
    return SamplingFunction.from_poly(TrigPoly.constant(d, value))


def single_harmonic(lam: complex, k, d: int | None = None) -> SamplingFunction:
    k = np.atleast_1d(np.asarray(k, dtype=int))
    d = k.size if d is None else d
    return SamplingFunction.from_poly(TrigPoly(d, k.reshape(1, -1), [lam]))


def real_trig(lam: float) -> SamplingFunction:
    """lam * (cos 2 pi x1 + cos 2 pi x2) / 2 on T^2."""
    freqs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    coeffs = np.full(4, lam / 4, dtype=complex)
    return SamplingFunction.from_poly(TrigPoly(2, freqs, coeffs))


def two_harmonic(c1: complex, k1, c2: complex, k2, d: int = 2, cert_grid: int = 256) -> SamplingFunction:
    freqs = np.vstack([np.atleast_1d(k1), np.atleast_1d(k2)]).astype(int)
    return SamplingFunction.from_poly(TrigPoly(d, freqs, [c1, c2]), cert_grid=cert_grid)


def constant_coin(mat, d: int = 2) -> CoinField:
    m = np.asarray(mat, dtype=complex)
    return CoinField(*(TrigPoly.constant(d, m[i, j]) for i in range(2) for j in range(2)))


def identity_coin(d: int = 2) -> CoinField:
    return constant_coin(np.eye(2), d=d)


def hadamard_coin(d: int = 2) -> CoinField:
    return constant_coin(np.array([[1, 1], [-1, 1]]) / np.sqrt(2), d=d)


def phase_coin(transmission: float, k1, k2, d: int = 2) -> CoinField:
    """Constant-modulus SU(2) coin with winding phases.

    C(x) = [[c e^{2 pi i k1.x}, s e^{2 pi i k2.x}],
            [-s e^{-2 pi i k2.x}, c e^{-2 pi i k1.x}]],  c^2 + s^2 = 1.

    det = 1 pointwise and the diagonal modulus is the constant c > 0.
    """
    c = float(transmission)
    if not 0 < c < 1:
        raise ValueError("transmission must be in (0, 1)")
    s = float(np.sqrt(1.0 - c * c))
    k1 = np.atleast_1d(np.asarray(k1, dtype=int))
    k2 = np.atleast_1d(np.asarray(k2, dtype=int))
    return CoinField(
        TrigPoly(d, k1.reshape(1, -1), [c]),
        TrigPoly(d, k2.reshape(1, -1), [s]),
        TrigPoly(d, -k2.reshape(1, -1), [-s]),
        TrigPoly(d, -k1.reshape(1, -1), [c]),
    )


def reflection_coin(s: float, k_mod, k_phase, d: int = 2) -> CoinField:
    """SU(2) coin whose off-diagonal modulus varies as s |cos(2 pi k_mod.x)|.

    The diagonal entry is produced by a one-variable Fejer-Riesz factorization
    of 1 - s^2 cos^2, so |c11|^2 + |c12|^2 = 1 holds exactly pointwise and c11
    never vanishes (for 0 < s < 1).
    """
    s = float(s)
    if not 0 < s < 1:
        raise ValueError("s must be in (0, 1)")
    k_mod = np.atleast_1d(np.asarray(k_mod, dtype=int))
    k_phase = np.atleast_1d(np.asarray(k_phase, dtype=int))
    # 1 - s^2 cos^2 = |a - b e^{4 pi i k_mod.x}|^2 with a^2 + b^2 = 1 - s^2/2, 2ab = s^2/4 * 2
    big = 1.0 - s * s / 2.0
    disc = np.sqrt(big * big - s**4 / 4.0)
    a = np.sqrt((big + disc) / 2.0)
    b = np.sqrt((big - disc) / 2.0)
    c12 = TrigPoly(
        d,
        np.vstack([k_mod + k_phase, -k_mod + k_phase]),
        np.array([s / 2, s / 2], dtype=complex),
    )
    c11 = TrigPoly(
        d,
        np.vstack([np.zeros_like(k_mod), 2 * k_mod]),
        np.array([a, -b], dtype=complex),
    )
    c21 = TrigPoly(d, -c12.freqs, -np.conj(c12.coeffs))
    return CoinField(c11, c12, c21, c11.conj_poly())


_STRONG2D_C = 0.4962

_BUILTIN_CACHE: dict = {}


def builtin_model(name: str, **params):
    """Named reproducible models used by the CLI and the acceptance suite.

    Instances are cached (they are immutable); certification runs once per
    distinct (name, params) combination.
    """
    key = (name, tuple(sorted((k, repr(v)) for k, v in params.items())))
    if key in _BUILTIN_CACHE:
        return _BUILTIN_CACHE[key]
    obj = _builtin_model_uncached(name, **params)
    _BUILTIN_CACHE[key] = obj
    return obj


def _builtin_model_uncached(name: str, **params):
    if name == "zero":
        return constant_alpha(0.0, d=int(params.get("d", 1)))
    if name == "const":
        return constant_alpha(complex(params.get("value", 0.5)), d=int(params.get("d", 1)))
    if name == "harmonic":
        return single_harmonic(complex(params.get("lam", 0.5)), params.get("k", [1]))
    if name == "real-trig":
        return real_trig(float(params.get("lam", 0.9)))
    if name == "strong2d":
        # two equal harmonics at the certification limit; fast winding spreads
        # the density of states so part of the spectrum is strongly localized
        c = float(params.get("c", _STRONG2D_C))
        return two_harmonic(c, [5, 0], c, [0, 3], cert_grid=4096)
    if name == "identity-coin":
        return identity_coin(d=int(params.get("d", 2)))
    if name == "hadamard-coin":
        return hadamard_coin(d=int(params.get("d", 2)))
    if name == "phase-coin":
        return phase_coin(
            float(params.get("transmission", 0.312)),
            params.get("k1", [1, 0]),
            params.get("k2", [0, 1]),
        )
    if name == "reflection-coin":
        return reflection_coin(
            float(params.get("s", 0.9)),
            params.get("k_mod", [1, 0]),
            params.get("k_phase", [0, 1]),
        )
    raise KeyError(f"unknown builtin model {name!r}")


# ---------------------------------------------------------------------------
# JSON schema: {"d": int, "alpha": {"terms": [{"k": [...], "re": f, "im": f}]},
#               "coins": {"c11": {...}, "c12": {...}, "c21": {...}, "c22": {...}}}
# ---------------------------------------------------------------------------

def _poly_from_terms(d: int, spec: dict) -> TrigPoly:
    terms = spec.get("terms", [])
    if not terms:
        return TrigPoly.zero(d)
    freqs = np.array([t["k"] for t in terms], dtype=int)
    coeffs = np.array([complex(t.get("re", 0.0), t.get("im", 0.0)) for t in terms])
    return TrigPoly(d, freqs, coeffs)


def model_from_json(text_or_dict):
    """Load a SamplingFunction and/or CoinField from the JSON model schema."""
    spec = json.loads(text_or_dict) if isinstance(text_or_dict, str) else text_or_dict
    d = int(spec["d"])
    alpha = None
    coins = None
    if "alpha" in spec:
        alpha = SamplingFunction.from_poly(
            _poly_from_terms(d, spec["alpha"]),
            cert_grid=int(spec.get("cert_grid", 256)),
        )
    if "coins" in spec:
        cs = spec["coins"]
        coins = CoinField(*(_poly_from_terms(d, cs[k]) for k in ("c11", "c12", "c21", "c22")))
    return alpha, coins


def model_to_json(alpha: SamplingFunction | None = None, coins: CoinField | None = None) -> dict:
    def dump(poly: TrigPoly):
        return {
            "terms": [
                {"k": [int(v) for v in poly.freqs[i]], "re": float(poly.coeffs[i].real), "im": float(poly.coeffs[i].imag)}
                for i in range(poly.coeffs.size)
            ]
        }

    out: dict = {}
    if alpha is not None:
        out["d"] = alpha.d
        if alpha.cert_grid != 256:
            out["cert_grid"] = alpha.cert_grid
        out["alpha"] = {
            "terms": [
                {"k": list(k), "re": float(np.real(c)), "im": float(np.imag(c))}
                for k, c in sorted(alpha.combined_terms().items())
            ]
        }
    if coins is not None:
        out["d"] = coins.d
        out["coins"] = {
            "c11": dump(coins.c11),
            "c12": dump(coins.c12),
            "c21": dump(coins.c21),
            "c22": dump(coins.c22),
        }
    return out
