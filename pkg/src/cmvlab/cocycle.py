"""2x2 transfer-matrix layer with overflow-safe log scaling.

Products of unimodular one-step matrices grow like e^{nL}; doubles overflow
near n ~ 700/L.  A ScaledMat2 keeps the matrix normalized to max-entry
magnitude near 1 and accumulates the magnitude in a separate natural-log
factor, so norms of products stay representable for n up to 1e7 and beyond.

Step kinds:
  * the one-step map of the orthogonal-polynomial recursion ("szego"),
  * its SL(2,R) conjugate ("sl2r"),
  * the alternating two-site step of the factored eigenvalue equation
    (z L* - M) u = 0 ("gz").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConjugationError, ModelViolation
from .model import SamplingFunction
from .torus import Frequency, Phase, shift_orbit

__all__ = [
    "SpectralPoint",
    "ScaledMat2",
    "szego_step",
    "gz_step",
    "transfer_product",
    "szego_product_sequence",
    "gz_product_sequence",
    "sl2r_conjugate",
    "m0_factorization_check",
    "batched_log_norms",
]

# unitary conjugator from the unit-determinant (1,1)-signature group to SL(2,R)
_SU11_CONJUGATOR = -(1.0 / (1.0 + 1j)) * np.array([[1.0, -1j], [1.0, 1j]])


@dataclass(frozen=True)
class SpectralPoint:
    """Point z = e^{i theta} of the unit circle with a frozen sqrt branch.

    theta is reduced into [0, 2 pi); sqrt_branch = e^{i theta / 2}.  Any fixed
    branch changes transfer products only by a global phase.
    """

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(np.mod(self.theta, 2.0 * np.pi)))

    @classmethod
    def from_z(cls, z: complex) -> "SpectralPoint":
        return cls(float(np.angle(z)))

    @property
    def z(self) -> complex:
        return complex(np.exp(1j * self.theta))

    @property
    def sqrt_branch(self) -> complex:
        return complex(np.exp(0.5j * self.theta))


@dataclass(frozen=True)
class ScaledMat2:
    """Matrix e^{log_scale} * mat with max |entry| of mat kept in [1/2, 2].

    For unimodular products det(mat) = e^{-2 log_scale}; numerically this
    identity survives only while 2 log_scale stays within the ~16 decimal
    digits of doubles (beyond that the normalized matrix is rank-1 to working
    precision and the determinant is cancellation noise).  Norms and log-norms
    remain accurate for arbitrarily long products.
    """

    mat: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex).reshape(2, 2)
        s = float(self.log_scale)
        peak = float(np.abs(m).max())
        if peak == 0.0:
            raise ValueError("zero matrix cannot be log-scaled")
        if peak < 0.5 or peak > 2.0:
            m = m / peak
            s += np.log(peak)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "log_scale", s)

    @classmethod
    def identity(cls) -> "ScaledMat2":
        return cls(np.eye(2, dtype=complex), 0.0)

    def __matmul__(self, other: "ScaledMat2") -> "ScaledMat2":
        return ScaledMat2(self.mat @ other.mat, self.log_scale + other.log_scale)

    def norm2(self) -> float:
        """Operator 2-norm of the normalized part."""
        return float(np.linalg.norm(self.mat, 2))

    def log_norm(self) -> float:
        """log of the operator norm of the represented matrix."""
        return self.log_scale + float(np.log(self.norm2()))

    def det(self) -> complex:
        """Determinant of the represented matrix (may overflow for huge scales)."""
        d = self.mat[0, 0] * self.mat[1, 1] - self.mat[0, 1] * self.mat[1, 0]
        return complex(np.exp(2.0 * self.log_scale) * d)

    def represented(self) -> np.ndarray:
        return np.exp(self.log_scale) * self.mat


def _rho_of(alpha_val: complex) -> float:
    mod = abs(alpha_val)
    if mod >= 1.0:
        raise ModelViolation(f"coefficient modulus {mod:.6f} >= 1")
    return float(np.sqrt(1.0 - mod * mod))


def szego_step(alpha_val: complex, z: SpectralPoint) -> ScaledMat2:
    """One-step matrix (1/rho) [[sqrt z, -conj(a)/sqrt z], [-a sqrt z, 1/sqrt z]]."""
    rho = _rho_of(alpha_val)
    sq = z.sqrt_branch
    m = np.array(
        [[sq, -np.conj(alpha_val) / sq], [-alpha_val * sq, 1.0 / sq]],
        dtype=complex,
    )
    return ScaledMat2(m / rho)


def _gz_even(alpha_val: complex, rho: float) -> np.ndarray:
    return np.array([[-alpha_val, 1.0], [1.0, -np.conj(alpha_val)]], dtype=complex) / rho


def _gz_odd(alpha_val: complex, rho: float, z: complex) -> np.ndarray:
    return np.array(
        [[-np.conj(alpha_val), z], [1.0 / z, -alpha_val]], dtype=complex
    ) / rho


def gz_step(alpha_even: complex, alpha_odd: complex, z: SpectralPoint) -> ScaledMat2:
    """Two-site step: odd-type matrix applied after the even-type one.

    With alpha_even = 0 the even factor is the plain swap [[0,1],[1,0]] and the
    product reduces to (1/rho) [[z, -conj(a)], [-a, 1/z]].
    """
    re = _rho_of(alpha_even)
    ro = _rho_of(alpha_odd)
    return ScaledMat2(_gz_odd(alpha_odd, ro, z.z) @ _gz_even(alpha_even, re))


def m0_factorization_check(alpha_odd: complex, z: SpectralPoint):
    """Frobenius residual of gz_step(0, a) = M0 . szego_step(a), M0 = diag(sqrt z, 1/sqrt z).

    Returns (residual, norm of M0); the norm is 1 whenever |z| = 1.
    """
    g = gz_step(0.0, alpha_odd, z).represented()
    m0 = np.diag([z.sqrt_branch, 1.0 / z.sqrt_branch])
    m = m0 @ szego_step(alpha_odd, z).represented()
    residual = float(np.linalg.norm(g - m))
    return residual, float(np.linalg.norm(m0, 2))


def sl2r_conjugate(m: ScaledMat2) -> ScaledMat2:
    """Conjugate a (1,1)-signature unit-determinant matrix to a real one.

    T = Q* m Q with the fixed unitary Q; raises ConjugationError if the result
    carries imaginary residue above 1e-10 (input was not of the right type).
    Unitary conjugation preserves the operator norm and the log scale.
    """
    q = _SU11_CONJUGATOR
    t = q.conj().T @ m.mat @ q
    residue = float(np.abs(t.imag).max())
    if residue > 1e-10:
        raise ConjugationError(f"imaginary residue {residue:.2e} after conjugation")
    return ScaledMat2(t.real.astype(complex), m.log_scale)


def szego_product_sequence(alphas, z: SpectralPoint) -> ScaledMat2:
    """Ordered product of one-step matrices for an explicit coefficient sequence.

    alphas[j] is applied first for j = 0, i.e. the product reads
    M(alphas[n-1]) ... M(alphas[0]).
    """
    acc = ScaledMat2.identity()
    for a in alphas:
        acc = szego_step(a, z) @ acc
    return acc


def gz_product_sequence(pairs, z: SpectralPoint) -> ScaledMat2:
    """Ordered product of two-site steps for (alpha_even, alpha_odd) pairs."""
    acc = ScaledMat2.identity()
    for ae, ao in pairs:
        acc = gz_step(ae, ao, z) @ acc
    return acc


def _steps_for_orbit(kind: str, alpha_vals: np.ndarray, z: SpectralPoint):
    if kind == "szego":
        return [szego_step(a, z) for a in alpha_vals]
    if kind == "sl2r":
        return [sl2r_conjugate(szego_step(a, z)) for a in alpha_vals]
    if kind == "gz":
        return [gz_step(0.0, a, z) for a in alpha_vals]
    raise ValueError(f"unknown transfer kind {kind!r}")


def transfer_product(
    kind: str,
    alpha: SamplingFunction,
    x0: Phase,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
) -> ScaledMat2:
    """n-step transfer matrix: ordered product of one-step matrices at x0 + j omega.

    kind "szego" multiplies the one-step maps of the sampled coefficients;
    "sl2r" the real-conjugated ones; "gz" treats the samples as the odd
    coefficients of a sequence with vanishing even entries (one two-site step
    per phase).  n = 0 gives the identity with log_scale 0.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return ScaledMat2.identity()
    orbit = shift_orbit(x0, omega, 0, n - 1)
    vals = alpha.eval(orbit)
    if np.abs(vals).max() >= 1.0:
        raise ModelViolation("sampling function escaped the unit disk on the orbit")
    acc = ScaledMat2.identity()
    for step in _steps_for_orbit(kind, vals, z):
        acc = step @ acc
    return acc


# ---------------------------------------------------------------------------
# batched kernels (phases as the batch axis); used by the statistics modules
# ---------------------------------------------------------------------------

def _batched_szego_steps(alpha_vals: np.ndarray, z: SpectralPoint) -> np.ndarray:
    """(B,) coefficients -> (B, 2, 2) one-step matrices."""
    rho = np.sqrt(1.0 - np.abs(alpha_vals) ** 2)
    sq = z.sqrt_branch
    out = np.empty(alpha_vals.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = sq / rho
    out[..., 0, 1] = -np.conj(alpha_vals) / sq / rho
    out[..., 1, 0] = -alpha_vals * sq / rho
    out[..., 1, 1] = 1.0 / sq / rho
    return out


def _batched_norms(mats: np.ndarray) -> np.ndarray:
    """Operator 2-norms of a (B, 2, 2) stack.

    Stacked SVD rather than the closed 2x2 formula: the closed form squares
    the data and cannot see sigma_max - 1 below sqrt(eps) for near-unitary
    products, which would break the exact-zero contract of the free model.
    """
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def batched_log_norms(
    alpha: SamplingFunction,
    phases: np.ndarray,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
    rescale_every: int = 8,
) -> np.ndarray:
    """log ||M_n(x)|| for a batch of starting phases, shape (B,).

    The product is accumulated step by step across the whole batch; matrices
    are renormalized to max-entry magnitude 1 every rescale_every steps with
    the magnitude pushed into a per-phase log accumulator.
    """
    phases = np.asarray(phases, dtype=float)
    b = phases.shape[0]
    prod = np.broadcast_to(np.eye(2, dtype=complex), (b, 2, 2)).copy()
    logs = np.zeros(b)
    om = omega.coords
    for j in range(n):
        xv = np.mod(phases + j * om, 1.0)
        vals = alpha.eval(xv)
        if np.abs(vals).max() >= 1.0:
            raise ModelViolation("sampling function escaped the unit disk on the orbit")
        prod = _batched_szego_steps(vals, z) @ prod
        if j % rescale_every == rescale_every - 1:
            peak = np.abs(prod).max(axis=(1, 2))
            prod /= peak[:, None, None]
            logs += np.log(peak)
    return logs + np.log(_batched_norms(prod))
