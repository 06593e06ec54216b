"""Finite-volume five-diagonal unitary operators with modified boundaries.

A finite window [a, b] of the doubly-infinite operator is made unitary by
replacing the two cut coefficients (indices a-1 and b) with unimodular
boundary phases.  The operator factors exactly as E = L M into direct sums of
2x2 blocks; the eigenvalue equation E u = z u is equivalent to the
tridiagonal system (z L* - M) u = 0, which powers Green's-function columns
and inverse iteration.

Two independent evaluation paths exist for the characteristic determinant and
the Green's function: a dense LU oracle (small intervals) and banded O(n)
elimination; tests and the acceptance suite hold them against each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, solve_banded
from scipy.linalg.lapack import zgbtrf

from .cocycle import ScaledMat2, SpectralPoint, transfer_product
from .errors import BoundaryError, DegenerateInput, ModelViolation, NearSingular
from .model import SamplingFunction, verblunsky_sequence
from .torus import Frequency, Phase

__all__ = [
    "theta_block",
    "FiniteCMV",
    "CharDet",
    "build_finite_cmv",
    "finite_cmv_from_model",
    "char_det",
    "det_transfer_check",
    "DetTransferReport",
    "green_entry",
    "green_column",
    "poisson_residual",
    "green_decay_scan",
    "GreenDecayReport",
    "DENSE_PATH_MAX",
]

DENSE_PATH_MAX = 64
NEAR_SINGULAR_DIST = 1e-10


def theta_block(alpha_val: complex) -> np.ndarray:
    """Unitary 2x2 block [[conj(a), rho], [rho, -a]] (rho = 0 on the boundary)."""
    rho = np.sqrt(max(0.0, 1.0 - abs(alpha_val) ** 2))
    return np.array([[np.conj(alpha_val), rho], [rho, -alpha_val]], dtype=complex)


def _rho(alpha_val: complex) -> float:
    return float(np.sqrt(max(0.0, 1.0 - abs(alpha_val) ** 2)))


@dataclass(frozen=True)
class FiniteCMV:
    """Window [a, b] with coefficient sequence on [a-1, b] and boundary phases.

    beta/eta = None leaves the corresponding cut coefficient unchanged (the
    plain restriction, which is not unitary); unimodular values give the
    boundary-modified unitary operator.  alphas holds the *unmodified* input
    sequence; alphas_tilde the working sequence after boundary replacement.
    """

    a: int
    b: int
    alphas: np.ndarray            # true values, index a-1 .. b
    beta: complex | None
    eta: complex | None
    alphas_tilde: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.b < self.a:
            raise ValueError("window must satisfy b >= a")
        al = np.asarray(self.alphas, dtype=complex)
        if al.size != self.b - self.a + 2:
            raise ValueError("alphas must cover indices a-1 .. b")
        tilde = al.copy()
        if self.beta is not None:
            if abs(abs(self.beta) - 1.0) > 1e-12:
                raise BoundaryError(f"|beta| = {abs(self.beta)} is not 1")
            tilde[0] = self.beta
        if self.eta is not None:
            if abs(abs(self.eta) - 1.0) > 1e-12:
                raise BoundaryError(f"|eta| = {abs(self.eta)} is not 1")
            tilde[-1] = self.eta
        interior = tilde[1:-1]
        if interior.size and np.abs(interior).max() >= 1.0:
            raise ModelViolation("interior coefficient escaped the unit disk")
        object.__setattr__(self, "alphas", al)
        object.__setattr__(self, "alphas_tilde", tilde)

    # -- indexing helpers ---------------------------------------------------

    @property
    def dim(self) -> int:
        return self.b - self.a + 1

    @property
    def unitary_boundaries(self) -> bool:
        return self.beta is not None and self.eta is not None

    def _al(self, m: int) -> complex:
        """Working coefficient at lattice index m (defined on a-1 .. b)."""
        return complex(self.alphas_tilde[m - (self.a - 1)])

    def _rho_t(self, m: int) -> float:
        return _rho(self._al(m))

    def rho_true(self, m: int) -> float:
        """rho from the unmodified sequence (normalizations, Green prefactors)."""
        return _rho(complex(self.alphas[m - (self.a - 1)]))

    # -- matrix assembly ----------------------------------------------------

    def e_bands(self) -> dict[int, np.ndarray]:
        """Five diagonals of E; bands[off][i] = E[a+i, a+i+off]."""
        n = self.dim
        bands = {off: np.zeros(max(n - abs(off), 0), dtype=complex) for off in range(-2, 3)}
        for i_abs in range(self.a, self.b + 1):
            i = i_abs - self.a
            if i_abs % 2 == 0:
                ent = (
                    (-1, lambda: np.conj(self._al(i_abs)) * self._rho_t(i_abs - 1)),
                    (0, lambda: -np.conj(self._al(i_abs)) * self._al(i_abs - 1)),
                    (1, lambda: self._rho_t(i_abs) * np.conj(self._al(i_abs + 1))),
                    (2, lambda: self._rho_t(i_abs) * self._rho_t(i_abs + 1)),
                )
            else:
                ent = (
                    (-2, lambda: self._rho_t(i_abs - 1) * self._rho_t(i_abs - 2)),
                    (-1, lambda: -self._rho_t(i_abs - 1) * self._al(i_abs - 2)),
                    (0, lambda: -self._al(i_abs - 1) * np.conj(self._al(i_abs))),
                    (1, lambda: -self._al(i_abs - 1) * self._rho_t(i_abs)),
                )
            for off, fv in ent:
                j = i + off
                if 0 <= j <= n - 1:
                    bands[off][i if off >= 0 else j] = fv()
        return bands

    def dense_e(self) -> np.ndarray:
        n = self.dim
        out = np.zeros((n, n), dtype=complex)
        for off, arr in self.e_bands().items():
            idx = np.arange(arr.size)
            if off >= 0:
                out[idx, idx + off] = arr
            else:
                out[idx - off, idx] = arr
        return out

    def _factor_dense(self, parity: int) -> np.ndarray:
        """Dense restricted factor: direct sum of blocks at indices of one parity."""
        n = self.dim
        out = np.zeros((n, n), dtype=complex)
        m0 = self.a - 1
        while m0 % 2 != parity:
            m0 += 1
        for m in range(m0, self.b + 1, 2):
            blk = theta_block(self._al(m))
            i, j = m - self.a, m + 1 - self.a
            if i >= 0 and j <= n - 1:
                out[i : i + 2, i : i + 2] = blk
            elif i == -1:
                out[0, 0] = blk[1, 1]
            elif j == n:
                out[n - 1, n - 1] = blk[0, 0]
        return out

    def dense_l(self) -> np.ndarray:
        return self._factor_dense(0)

    def dense_m(self) -> np.ndarray:
        return self._factor_dense(1)

    def k_bands(self, z: complex) -> np.ndarray:
        """Tridiagonal z conj(L) - M in solve_banded layout ((1,1), shape (3, n)).

        Row 0 super, row 1 diagonal, row 2 sub.  The matrix is complex
        symmetric, hence sub = super.
        """
        if not self.unitary_boundaries:
            raise BoundaryError("Green/K system requires unimodular boundary phases")
        n = self.dim
        ab = np.zeros((3, n), dtype=complex)
        for i_abs in range(self.a, self.b + 1):
            i = i_abs - self.a
            if i_abs % 2 == 0:
                ab[1, i] = z * self._al(i_abs) + self._al(i_abs - 1)
            else:
                ab[1, i] = -z * np.conj(self._al(i_abs - 1)) - np.conj(self._al(i_abs))
        for i_abs in range(self.a, self.b):
            i = i_abs - self.a
            off = z * self._rho_t(i_abs) if i_abs % 2 == 0 else -self._rho_t(i_abs)
            ab[0, i + 1] = off  # A[i, i+1]
            ab[2, i] = off      # A[i+1, i]
        return ab

    def dense_k(self, z: complex) -> np.ndarray:
        return z * self.dense_l().conj().T - self.dense_m()


def build_finite_cmv(alphas, a: int, b: int, beta=1.0 + 0j, eta=1.0 + 0j) -> FiniteCMV:
    """Boundary-modified window from a coefficient sequence indexed a-1 .. b."""
    return FiniteCMV(a, b, np.asarray(alphas, dtype=complex), beta, eta)


def finite_cmv_from_model(
    alpha: SamplingFunction,
    x0: Phase,
    omega: Frequency,
    a: int,
    b: int,
    beta=1.0 + 0j,
    eta=1.0 + 0j,
) -> FiniteCMV:
    """Window whose coefficients are sampled along the shift orbit of x0."""
    seq = verblunsky_sequence(alpha, x0, omega, a - 1, b)
    return FiniteCMV(a, b, seq, beta, eta)


# ---------------------------------------------------------------------------
# characteristic determinants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharDet:
    """det(z - E) for one window, with the rho-normalized companion value.

    logabs carries log |det| computed without overflow; value may be inf for
    windows long enough that the determinant leaves double range.
    """

    a: int
    b: int
    theta: float
    value: complex
    normalized: complex
    logabs: float


def _det_banded(bands: dict[int, np.ndarray], z: complex, n: int):
    """(det, logabs) of (z I - E) by banded LU elimination along the band."""
    kl = ku = 2
    ab = np.zeros((2 * kl + ku + 1, n), dtype=complex, order="F")
    for off, arr in bands.items():
        idx = np.arange(arr.size)
        i = idx if off >= 0 else idx - off
        j = i + off
        ab[kl + ku + i - j, j] = -arr
    ab[kl + ku, :] += z
    lu, ipiv, info = zgbtrf(ab, kl, ku)
    if info < 0:
        raise ValueError(f"banded LU failed with info={info}")
    diag = lu[kl + ku, :]
    if info > 0 or np.any(diag == 0):
        return 0.0 + 0j, -np.inf
    # scipy's wrapper hands back 0-based pivot indices
    swaps = int(np.sum(ipiv != np.arange(n)))
    logabs = float(np.log(np.abs(diag)).sum())
    phase = np.prod(diag / np.abs(diag)) * (-1.0) ** swaps
    value = phase * np.exp(logabs) if logabs < 700 else complex(np.inf)
    return complex(value), logabs


def _det_dense(op: FiniteCMV, z: complex):
    amat = z * np.eye(op.dim) - op.dense_e()
    lu, piv = lu_factor(amat, check_finite=False)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return 0.0 + 0j, -np.inf
    swaps = int(np.sum(piv != np.arange(op.dim)))
    logabs = float(np.log(np.abs(diag)).sum())
    phase = np.prod(diag / np.abs(diag)) * (-1.0) ** swaps
    return complex(phase * np.exp(logabs)), logabs


def char_det(op: FiniteCMV | None, z, a: int | None = None, b: int | None = None, method: str = "auto") -> CharDet:
    """Characteristic determinant; empty windows (a > b) give exactly 1.

    method "dense" forces the LU oracle, "banded" the O(n) elimination path,
    "auto" uses dense up to DENSE_PATH_MAX and banded above.
    """
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    theta = float(np.angle(zc)) % (2 * np.pi)
    if op is None:
        if a is None or b is None:
            raise ValueError("empty-window call needs explicit a, b")
        return CharDet(a, b, theta, 1.0 + 0j, 1.0 + 0j, 0.0)
    n = op.dim
    if method == "dense" or (method == "auto" and n <= DENSE_PATH_MAX):
        value, logabs = _det_dense(op, zc)
    else:
        value, logabs = _det_banded(op.e_bands(), zc, n)
    rho_prod = 1.0
    for m in range(op.a, op.b + 1):
        rho_prod *= op.rho_true(m)
    normalized = value / rho_prod if rho_prod > 0 else complex(np.inf)
    return CharDet(op.a, op.b, theta, value, normalized, logabs)


def _char_det_logabs(op: FiniteCMV | None, zc: complex) -> float:
    if op is None:
        return 0.0
    if op.dim <= DENSE_PATH_MAX:
        return _det_dense(op, zc)[1]
    return _det_banded(op.e_bands(), zc, op.dim)[1]


# ---------------------------------------------------------------------------
# determinant <-> transfer matrix relation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetTransferReport:
    """Residual of the transfer-matrix reconstruction from two determinants.

    The reconstruction conjugates polynomials through the circle-dual at
    degree n-1; residual_deg_up / _down evaluate the neighbouring degree
    conventions, and degree_flag is set when one of them fits better.
    """

    n: int
    residual: float
    residual_deg_up: float
    residual_deg_down: float

    @property
    def degree_flag(self) -> bool:
        return min(self.residual_deg_up, self.residual_deg_down) < self.residual


def det_transfer_check(
    alpha: SamplingFunction,
    x: Phase,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
) -> DetTransferReport:
    """Rebuild M_n from the windows [1, n-1] and [0, n-1] and report the gap.

    Uses the unmodified restrictions (cut coefficients kept as sampled) and
    divides by alpha_{-1} = alpha(x - omega); DegenerateInput below 1e-8.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    seq = verblunsky_sequence(alpha, x, omega, -1, n - 1)
    alpha_m1 = complex(seq[0])
    if abs(alpha_m1) < 1e-8:
        raise DegenerateInput("alpha_{-1} vanishes; the reconstruction divides by it")
    zc = z.z
    op1 = FiniteCMV(1, n - 1, seq[1:], None, None)
    op0 = FiniteCMV(0, n - 1, seq, None, None)
    phi1 = char_det(op1, z).value
    phi0 = char_det(op0, z).value
    rho_prod = float(np.prod(np.sqrt(1.0 - np.abs(seq[1:]) ** 2)))
    pref = z.sqrt_branch ** (-n) / rho_prod
    b_num = zc * phi1 - phi0
    m_n = transfer_product("szego", alpha, x, omega, z, n).represented()

    def assemble(deg: int) -> float:
        zd = zc**deg
        rhs = pref * np.array(
            [
                [zc * phi1, b_num / alpha_m1],
                [zc * zd * np.conj(b_num) / np.conj(alpha_m1), zd * np.conj(phi1)],
            ]
        )
        return float(np.linalg.norm(rhs - m_n))

    return DetTransferReport(n, assemble(n - 1), assemble(n), assemble(n - 2))


# ---------------------------------------------------------------------------
# Green's functions
# ---------------------------------------------------------------------------

def _solve_k(op: FiniteCMV, zc: complex, rhs: np.ndarray) -> np.ndarray:
    ab = op.k_bands(zc)
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _near_singular_guard(cols: np.ndarray):
    # for a normal operator ||(z - E)^{-1}|| = 1 / dist(z, spectrum); a column
    # norm bounds the resolvent norm from below
    peak = float(np.abs(cols).max())
    if peak > 1.0 / NEAR_SINGULAR_DIST:
        raise NearSingular(f"resolvent column norm {peak:.2e} signals dist < {NEAR_SINGULAR_DIST}")


def green_column(op: FiniteCMV, k: int, z) -> np.ndarray:
    """Column k of (z L* - M)^{-1}; the matrix is symmetric so rows match columns."""
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    if not op.a <= k <= op.b:
        raise ValueError("column index outside the window")
    rhs = np.zeros(op.dim, dtype=complex)
    rhs[k - op.a] = 1.0
    col = _solve_k(op, zc, rhs)
    _near_singular_guard(col)
    return col


def green_entry(op: FiniteCMV, j: int, k: int, z):
    """(product-formula magnitude, banded-solve value) of G(j, k).

    The two paths are independent: the first multiplies rho factors against a
    ratio of three characteristic determinants evaluated in log-magnitude
    arithmetic; the second solves (z L* - M) X = e_k.
    """
    if not (op.a <= j <= k <= op.b):
        raise ValueError("need a <= j <= k <= b")
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    col = green_column(op, k, zc)
    value_dense = complex(col[j - op.a])

    idx0 = op.a - 1
    # window [a, j-1] runs over indices a-1 .. j-1; [k+1, b] over k .. b
    left = (
        FiniteCMV(op.a, j - 1, op.alphas[: j - idx0], op.beta, None)
        if j - 1 >= op.a
        else None
    )
    right = (
        FiniteCMV(k + 1, op.b, op.alphas[k - idx0 :], None, op.eta)
        if k + 1 <= op.b
        else None
    )
    log_rho = 0.0
    for m in range(j, k):
        log_rho += np.log(op.rho_true(m))
    log_mag = (
        log_rho
        + _char_det_logabs(left, zc)
        + _char_det_logabs(right, zc)
        - _char_det_logabs(op, zc)
    )
    return float(np.exp(log_mag)), value_dense


def poisson_residual(u: np.ndarray, u_start: int, op: FiniteCMV, z, m: int) -> float:
    """Reconstruction gap |u(m) - G(a,m) r_a - G(m,b) r_b| for an eigen-solution.

    u must satisfy the infinite-operator eigenvalue equation on the rows of
    [a, b] (e.g. an eigenvector of a strictly larger truncation).  The
    boundary terms r_a, r_b are the exact defects of the modified window
    against the true operator; their parity branches follow the block layout
    of L and M.
    """
    if not (op.a < m < op.b):
        raise ValueError("need a < m < b")
    if op.beta is None or op.eta is None:
        raise BoundaryError("poisson reconstruction needs boundary phases")
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    a, b = op.a, op.b

    def uval(i: int) -> complex:
        j = i - u_start
        if not 0 <= j < len(u):
            raise ValueError("window of u does not cover the operator")
        return complex(u[j])

    alpha_a = complex(op.alphas[1])          # true coefficient at index a
    alpha_bm1 = complex(op.alphas[-2])       # true coefficient at index b-1
    rho_a = _rho(alpha_a)
    rho_bm1 = _rho(alpha_bm1)
    beta, eta = complex(op.beta), complex(op.eta)

    if a % 2 == 0:
        r_a = (zc * alpha_a + beta) * uval(a) + zc * rho_a * uval(a + 1)
    else:
        r_a = -((zc * np.conj(beta) + np.conj(alpha_a)) * uval(a) + rho_a * uval(a + 1))
    if b % 2 == 0:
        r_b = (zc * eta + alpha_bm1) * uval(b) - rho_bm1 * uval(b - 1)
    else:
        r_b = -((zc * np.conj(alpha_bm1) + np.conj(eta)) * uval(b) - zc * rho_bm1 * uval(b - 1))

    col_a = green_column(op, a, zc)
    col_b = green_column(op, b, zc)
    rec = col_a[m - a] * r_a + col_b[m - a] * r_b
    return float(abs(uval(m) - rec))


@dataclass(frozen=True)
class GreenDecayReport:
    """Worst decay ratio |G(j,k)| e^{gamma |j-k| - n^{0.9}} over long hops.

    The scan runs both windows {[0, n-1], [1, n-1]}; worst_ratio is the better
    (smaller) of the two maxima and lambda_choice names the winning window.  A
    phase is called good when worst_ratio <= 1.
    """

    n: int
    gamma_ref: float
    worst_ratio: float
    lambda_choice: tuple[int, int]
    per_lambda: dict
    violating_pairs: list


def green_decay_scan(
    alpha: SamplingFunction,
    omega: Frequency,
    x: Phase,
    n: int,
    z,
    gamma_ref: float,
    beta=1.0 + 0j,
    eta=1.0 + 0j,
    decay_exponent: float = 0.9,
) -> GreenDecayReport:
    """Off-diagonal decay diagnostic on |j - k| >= n/4 for one phase."""
    if n < 8:
        raise ValueError("n must be >= 8")
    if gamma_ref <= 0:
        raise ValueError("gamma_ref must be positive")
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    slack = float(n**decay_exponent)
    per: dict = {}
    for (lo, hi) in ((0, n - 1), (1, n - 1)):
        op = finite_cmv_from_model(alpha, x, omega, lo, hi, beta, eta)
        dim = op.dim
        rhs = np.eye(dim, dtype=complex)
        g = _solve_k(op, zc, rhs)
        _near_singular_guard(g)
        jj, kk = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
        dist = np.abs(jj - kk)
        mask = dist >= n / 4
        ratios = np.abs(g) * np.exp(gamma_ref * dist - slack)
        worst = float(ratios[mask].max())
        viol = [
            (int(j + lo), int(k + lo), float(ratios[j, k]))
            for j, k in zip(*np.nonzero(mask & (ratios > 1.0)))
        ]
        per[(lo, hi)] = (worst, viol)
    best = min(per, key=lambda key: per[key][0])
    return GreenDecayReport(
        n=n,
        gamma_ref=float(gamma_ref),
        worst_ratio=per[best][0],
        lambda_choice=best,
        per_lambda={k: v[0] for k, v in per.items()},
        violating_pairs=per[best][1],
    )
