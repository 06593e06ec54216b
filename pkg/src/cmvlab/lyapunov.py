"""Finite-volume Lyapunov statistics: phase averages, single orbits, large
deviations, the avalanche-principle checker, and convergence-rate tables.

Phase sampling is counter-based (Philox keyed by (seed, stream)), so a fixed
seed reproduces the identical sample no matter how the work is scheduled;
reductions run in fixed index order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cocycle import ScaledMat2, SpectralPoint, batched_log_norms
from .errors import NotUnimodular
from .model import SamplingFunction
from .torus import Frequency, Phase

__all__ = [
    "LyapunovEstimate",
    "LDTReport",
    "APReport",
    "sample_phases",
    "finite_lyapunov",
    "birkhoff_lyapunov",
    "ldt_measure",
    "ldt_ladder",
    "ap_check",
    "rate_table",
    "constant_cocycle_exponent",
]


@dataclass(frozen=True)
class LyapunovEstimate:
    """Monte Carlo estimate of L_n at one spectral point."""

    n: int
    theta: float
    mean: float
    stderr: float
    sample_count: int
    seed: int

    def __post_init__(self):
        if self.mean < -1e-9:
            raise ValueError(f"L_n estimate {self.mean} violates nonnegativity")


@dataclass(frozen=True)
class LDTReport:
    """Fraction of phases whose log-norm deviates from n L_n by more than n^{1-tau}."""

    n: int
    tau: float
    deviation_threshold: float
    measure_estimate: float
    sample_count: int
    seed: int


@dataclass(frozen=True)
class APReport:
    """Hypotheses and residual of the avalanche-principle chain identity."""

    m: int
    mu: float
    hyp1_ok: bool
    hyp2_ok: bool
    residual: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.hyp1_ok and self.hyp2_ok and self.residual <= self.bound


def sample_phases(d: int, samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """Deterministic uniform phases, shape (samples, d), keyed by (seed, stream)."""
    bit = np.random.Philox(key=np.array([seed & (2**64 - 1), stream & (2**64 - 1)], dtype=np.uint64))
    return np.random.Generator(bit).random((samples, d))


def finite_lyapunov(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
    samples: int,
    seed: int,
    stream: int = 0,
) -> LyapunovEstimate:
    """Phase-averaged (1/n) log ||M_n||; deterministic for a fixed seed."""
    if n < 1 or samples < 1:
        raise ValueError("n and samples must be >= 1")
    phases = sample_phases(alpha.d, samples, seed, stream)
    u = batched_log_norms(alpha, phases, omega, z, n) / n
    mean = float(u.mean())
    stderr = float(u.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return LyapunovEstimate(n, z.theta, mean, stderr, samples, seed)


def _orbit_chunk_product(step_mats: np.ndarray):
    """Tree-reduce an ascending stack of (m, 2, 2) step matrices.

    Returns (matrix, log_scale) of S[m-1] @ ... @ S[0]; each round pairs
    neighbors, keeping any odd leftover (the highest index) at the end so the
    application order is preserved.
    """
    mats = step_mats
    logs = 0.0
    while mats.shape[0] > 1:
        m = mats.shape[0]
        half = m // 2
        paired = mats[1 : 2 * half : 2] @ mats[0 : 2 * half : 2]
        if m % 2:
            paired = np.concatenate([paired, mats[-1:]], axis=0)
        peak = np.abs(paired).max(axis=(1, 2))
        paired /= peak[:, None, None]
        logs += np.log(peak).sum()
        mats = paired
    return mats[0], logs


def birkhoff_lyapunov(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    x0: Phase,
    n: int,
    chunk: int = 4096,
) -> float:
    """(1/n) log ||M_n(x0)|| for a single orbit; chunked for n up to 1e7."""
    if n < 1:
        raise ValueError("n must be >= 1")
    from .cocycle import _batched_szego_steps  # local: batched kernel

    acc = ScaledMat2.identity()
    om = omega.coords
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        idx = np.arange(lo, hi, dtype=float)
        xv = np.mod(x0.coords[None, :] + idx[:, None] * om[None, :], 1.0)
        vals = alpha.eval(xv)
        if np.abs(vals).max() >= 1.0:
            raise ValueError("sampling function escaped the unit disk on the orbit")
        mat, logs = _orbit_chunk_product(_batched_szego_steps(vals, z))
        acc = ScaledMat2(mat, logs) @ acc
    return acc.log_norm() / n


def ldt_measure(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
    tau: float,
    samples: int,
    seed: int,
    l_n: float | None = None,
    stream: int = 0,
) -> LDTReport:
    """Empirical measure of {x : |log||M_n(x)|| - n L_n| > n^{1-tau}}."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    phases = sample_phases(alpha.d, samples, seed, stream)
    log_norms = batched_log_norms(alpha, phases, omega, z, n)
    if l_n is None:
        l_n = float(log_norms.mean()) / n
    threshold = float(n ** (1.0 - tau))
    violate = np.abs(log_norms - n * l_n) > threshold
    return LDTReport(n, tau, threshold, float(violate.mean()), samples, seed)


def ldt_ladder(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    n_list,
    tau: float,
    samples: int,
    seed: int,
):
    """LDT reports over an n-ladder, for decay fitting; one stream per rung."""
    return [
        ldt_measure(alpha, omega, z, int(n), tau, samples, seed, stream=i)
        for i, n in enumerate(n_list)
    ]


def _as_scaled(mat) -> ScaledMat2:
    if isinstance(mat, ScaledMat2):
        return mat
    return ScaledMat2(np.asarray(mat, dtype=complex))


def ap_check(matrices, mu: float, c_a: float = 10.0) -> APReport:
    """Evaluate the avalanche-principle hypotheses and chain residual.

    residual = |log||A_m...A_1|| + sum_{j=2}^{m-1} log||A_j||
               - sum_{j=1}^{m-1} log||A_{j+1} A_j|||,
    flagged against the bound c_a * m / mu only when both hypotheses hold.
    Raises NotUnimodular when any |det A_j| deviates from 1 beyond 1e-8.
    """
    mats = [_as_scaled(a) for a in matrices]
    m = len(mats)
    if m < 2:
        raise ValueError("need at least two matrices")
    for j, a in enumerate(mats):
        det_mat = a.mat[0, 0] * a.mat[1, 1] - a.mat[0, 1] * a.mat[1, 0]
        log_abs_det = 2.0 * a.log_scale + np.log(abs(det_mat))
        det_dev = abs(np.expm1(log_abs_det))
        if not det_dev < 1e-8:
            raise NotUnimodular(f"matrix {j} has |det| off unity by {det_dev:.2e}")
    log_norms = np.array([a.log_norm() for a in mats])
    hyp1_ok = bool(log_norms.min() >= np.log(mu) - 1e-12 and mu >= m)
    pair_logs = np.empty(m - 1)
    for j in range(m - 1):
        pair_logs[j] = (mats[j + 1] @ mats[j]).log_norm()
    defect = log_norms[1:] + log_norms[:-1] - pair_logs
    hyp2_ok = bool(defect.max() < 0.5 * np.log(mu))
    chain = mats[0]
    for a in mats[1:]:
        chain = a @ chain
    residual = float(
        abs(chain.log_norm() + log_norms[1:-1].sum() - pair_logs.sum())
    )
    return APReport(m, float(mu), hyp1_ok, hyp2_ok, residual, float(c_a * m / mu))


def rate_table(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    n_list,
    samples: int,
    seed: int,
    sigma: float = 0.3,
    l_ref: float | None = None,
):
    """Finite-size table (n, L_n, L_n - L_ref) plus a one-parameter decay fit.

    The differences are fitted through the origin against (log n)^{1/sigma}/n.
    L_ref defaults to the estimate at the largest n (excluded from the fit).
    Returns (rows, fit_coeff) with rows = list of (LyapunovEstimate, delta).
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    ests = [finite_lyapunov(alpha, omega, z, n, samples, seed) for n in n_list]
    ref_internal = l_ref is None
    if ref_internal:
        l_ref = ests[-1].mean
    rows = [(e, e.mean - l_ref) for e in ests]
    fit_rows = rows[:-1] if ref_internal else rows
    xs = np.array([np.log(e.n) ** (1.0 / sigma) / e.n for e, _ in fit_rows])
    ys = np.array([delta for _, delta in fit_rows])
    denom = float((xs * xs).sum())
    coeff = float((xs * ys).sum() / denom) if denom > 0 else 0.0
    return rows, coeff


def ldt_exceptional_indicator(
    alpha: SamplingFunction,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
    tau: float,
    l_n: float,
):
    """Vectorized indicator of the deviation set {x : |log||M_n(x)|| - n L_n| > n^{1-tau}}."""
    threshold = float(n ** (1.0 - tau))

    def indicator(phases: np.ndarray) -> np.ndarray:
        phases = np.atleast_2d(np.asarray(phases, dtype=float))
        log_norms = batched_log_norms(alpha, phases, omega, z, n)
        return np.abs(log_norms - n * l_n) > threshold

    return indicator


def constant_cocycle_exponent(alpha_val: complex, z: SpectralPoint) -> float:
    """Closed-form L for the constant coefficient: log of the top eigenvalue.

    For trace t = 2 cos(theta/2) / rho with |t| > 2 the exponent is
    log((|t| + sqrt(t^2 - 4)) / 2); inside the elliptic band it is 0.
    """
    rho = np.sqrt(1.0 - abs(alpha_val) ** 2)
    t = 2.0 * np.cos(z.theta / 2.0) / rho
    if abs(t) <= 2.0:
        return 0.0
    return float(np.log((abs(t) + np.sqrt(t * t - 4.0)) / 2.0))
