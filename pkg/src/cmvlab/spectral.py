"""Eigenphases and eigenvectors of finite unitary windows, localization
diagnostics, resonance probing, and orbit-visit counting.

The production eigensolver scans |det(e^{i theta} - E)| on a circle grid and
refines each local minimum by golden-section search.  Because the determinant
magnitude is a product of |2 sin((theta - theta_j)/2)| factors, its log is
strictly concave between roots, so every interior local minimum brackets
exactly one root; multiple roots show up through the flatness of the minimum.
A dense Hessenberg-QR path exists as a test-only oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .cocycle import SpectralPoint
from .errors import MissedEigenvalue, NoConvergence
from .model import SamplingFunction
from .cmvop import FiniteCMV, finite_cmv_from_model
from .torus import Frequency, Phase, shift_orbit

__all__ = [
    "EigenPair",
    "LocalizationFit",
    "ResonanceReport",
    "eigenphases",
    "eigenpairs",
    "eigenvector_inverse_iteration",
    "localization_fit",
    "double_resonance_gap",
    "orbit_visit_count",
    "visit_ladder",
]

RESIDUAL_TOL = 1e-8
FLOOR = 1e-14


@dataclass(frozen=True)
class EigenPair:
    """Eigenphase theta (eigenvalue e^{i theta}) with a unit eigenvector."""

    theta: float
    vector: np.ndarray
    residual: float


@dataclass(frozen=True)
class LocalizationFit:
    """Exponential-decay fit of log|v| against distance from the peak site.

    rate is in nats per site, clamped at 0; fit_quality is the coefficient of
    determination; tail_fraction is the l^2 mass on the fitted outer region
    |k - center| >= len/8.
    """

    center: int
    rate: float
    fit_quality: float
    tail_fraction: float
    n_points: int


@dataclass(frozen=True)
class ResonanceReport:
    """Minimal chordal distance from z to spectra of centered windows."""

    theta: float
    n1: int
    gap: float
    argmin_j: int
    ladder: tuple
    convention: str


# ---------------------------------------------------------------------------
# eigenphases by root scan
# ---------------------------------------------------------------------------

def _logabs_factory(op: FiniteCMV):
    from .cmvop import _det_banded  # banded production path

    bands = op.e_bands()
    n = op.dim

    def logabs(theta: float) -> float:
        return _det_banded(bands, complex(np.exp(1j * theta)), n)[1]

    return logabs


def _golden_refine(fun, lo: float, hi: float, tol: float = 1e-13) -> float:
    """Golden-section minimizer of fun on [lo, hi]."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = fun(x2)
    return 0.5 * (lo + hi)


def _multiplicity(logabs, theta: float, spacing: float) -> int:
    """Order of the root from the flatness of log|phi| near theta."""
    h = max(spacing * 1e-3, 1e-9)
    v1 = 0.5 * (logabs(theta + h) + logabs(theta - h))
    v2 = 0.5 * (logabs(theta + 2 * h) + logabs(theta - 2 * h))
    est = (v2 - v1) / np.log(2.0)
    return max(1, int(round(est)))


def eigenphases(op: FiniteCMV, grid_size: int | None = None) -> np.ndarray:
    """All eigenphases of the window, multiplicity-repeated and sorted.

    grid_size must be at least 8x the dimension (default exactly that).  The
    grid is refined up to three times if minima remain unresolved; a root is
    accepted when the determinant magnitude drops either below the absolute
    threshold 1e-9 * dim or by a factor 1e-8 against the grid median.
    Raises MissedEigenvalue when the multiplicity count cannot reach dim.
    """
    dim = op.dim
    if grid_size is None:
        grid_size = max(8 * dim, 64)
    if grid_size < 8 * dim:
        raise ValueError("grid_size must be >= 8 * dim")
    logabs = _logabs_factory(op)

    g = grid_size
    for _ in range(4):
        thetas = 2.0 * np.pi * np.arange(g) / g
        vals = np.array([logabs(t) for t in thetas])
        median = float(np.median(vals))
        is_min = (vals < np.roll(vals, 1)) & (vals <= np.roll(vals, -1))
        roots = []
        mults = []
        spacing = 2.0 * np.pi / g
        log_accept = max(np.log(1e-9 * dim), median + np.log(1e-8))
        for i in np.nonzero(is_min)[0]:
            lo = thetas[i] - spacing
            hi = thetas[i] + spacing
            t_star = _golden_refine(logabs, lo, hi)
            if logabs(t_star) < log_accept:
                roots.append(t_star % (2.0 * np.pi))
                mults.append(_multiplicity(logabs, t_star, spacing))
        total = int(np.sum(mults))
        if total == dim:
            out = np.concatenate([[r] * m for r, m in zip(roots, mults)]) if roots else np.array([])
            return np.sort(out)
        if total > dim:
            # flatness overestimated: trust simple roots
            if len(roots) == dim:
                return np.sort(np.array(roots))
        g *= 2
    raise MissedEigenvalue(
        f"found {total} of {dim} eigenphases after grid refinement"
    )


def _banded_apply(bands: dict[int, np.ndarray], v: np.ndarray) -> np.ndarray:
    n = v.size
    out = np.zeros(n, dtype=complex)
    for off, arr in bands.items():
        if off >= 0:
            idx = np.arange(arr.size)
            out[idx] += arr * v[idx + off]
        else:
            idx = np.arange(arr.size)
            out[idx - off] += arr * v[idx]
    return out


def eigenvector_inverse_iteration(
    op: FiniteCMV,
    theta: float,
    max_iter: int = 50,
    shift: float = 1e-9,
) -> EigenPair:
    """Inverse iteration on the tridiagonal system at z (1 + shift).

    theta must approximate a true eigenphase to ~1e-6.  Returns a unit vector
    with ||E v - z v|| < 1e-8 or raises NoConvergence.
    """
    z = complex(np.exp(1j * theta))
    ab = op.k_bands(z * (1.0 + shift))
    bands = op.e_bands()
    n = op.dim
    rng = np.random.Generator(np.random.Philox(key=np.array([n, int(theta * 1e9) & (2**63 - 1)], dtype=np.uint64)))
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        v = solve_banded((1, 1), ab, v, check_finite=False)
        v /= np.linalg.norm(v)
        residual = float(np.linalg.norm(_banded_apply(bands, v) - z * v))
        if residual < RESIDUAL_TOL:
            return EigenPair(float(theta % (2 * np.pi)), v, residual)
    raise NoConvergence(f"inverse iteration stalled at residual {residual:.2e}")


def eigenpairs(op: FiniteCMV, grid_size: int | None = None) -> list[EigenPair]:
    """Eigenphases plus inverse-iteration eigenvectors for every phase."""
    return [eigenvector_inverse_iteration(op, t) for t in eigenphases(op, grid_size)]


def _dense_eigenpairs(op: FiniteCMV):
    """Test-only oracle: dense Hessenberg-QR eigendecomposition."""
    w, v = np.linalg.eig(op.dense_e())
    order = np.argsort(np.angle(w) % (2 * np.pi))
    return (np.angle(w) % (2 * np.pi))[order], v[:, order]


# ---------------------------------------------------------------------------
# localization fit
# ---------------------------------------------------------------------------

def localization_fit(v) -> LocalizationFit:
    """Least-squares decay rate of log|v(k)| against |k - center|.

    Fits only the outer region |k - center| >= len/8 on sites with
    |v(k)| > 1e-14, restricted to the contiguous runs outward from the peak
    (points beyond the first crossing of the floor are double-precision noise
    and are excluded).  Degenerate data gives rate 0, quality 0.
    """
    amp = np.abs(v.vector if isinstance(v, EigenPair) else np.asarray(v))
    n = amp.size
    if n < 32:
        raise ValueError("vector length must be >= 32")
    center = int(np.argmax(amp))
    keep = np.zeros(n, dtype=bool)
    for step in (1, -1):
        i = center
        while 0 <= i < n and amp[i] > FLOOR:
            keep[i] = True
            i += step
    k = np.arange(n)
    sel = keep & (np.abs(k - center) >= n // 8)
    tail = float((amp[np.abs(k - center) >= n // 8] ** 2).sum() / (amp**2).sum())
    if sel.sum() < 3:
        return LocalizationFit(center, 0.0, 0.0, tail, int(sel.sum()))
    x = np.abs(k[sel] - center).astype(float)
    y = np.log(amp[sel])
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    pred = design @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - pred) ** 2).sum())
    quality = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return LocalizationFit(center, max(0.0, float(-coef[0])), float(quality), tail, int(sel.sum()))


# ---------------------------------------------------------------------------
# double resonances and orbit visits
# ---------------------------------------------------------------------------

def double_resonance_gap(
    alpha: SamplingFunction,
    omega: Frequency,
    x0: Phase,
    z: SpectralPoint,
    n1: int,
    beta=1.0 + 0j,
    eta=1.0 + 0j,
    geometric: bool = True,
    convention: str = "closed",
) -> ResonanceReport:
    """Minimal chordal distance from z to centered-window spectra, |j| <= n1.

    convention "closed" uses windows [-j, j]; "open" uses [-j+1, j-1].  With
    geometric subsampling the ladder is {1, 2, 4, ...} plus n1 itself.
    """
    if n1 < 1:
        raise ValueError("n1 must be >= 1")
    if geometric:
        ladder = []
        j = 1
        while j <= n1:
            ladder.append(j)
            j *= 2
        if ladder[-1] != n1:
            ladder.append(n1)
    else:
        ladder = list(range(1, n1 + 1))
    zc = z.z
    gap = np.inf
    argmin_j = ladder[0]
    rows = []
    for j in ladder:
        lo, hi = (-j, j) if convention == "closed" else (-j + 1, j - 1)
        if hi < lo:
            continue
        op = finite_cmv_from_model(alpha, x0, omega, lo, hi, beta, eta)
        thetas = eigenphases(op)
        dist = float(np.abs(zc - np.exp(1j * thetas)).min())
        rows.append((j, dist))
        if dist < gap:
            gap = dist
            argmin_j = j
    return ResonanceReport(z.theta, n1, float(gap), int(argmin_j), tuple(rows), convention)


def orbit_visit_count(indicator, x0: Phase, omega: Frequency, big_n: int):
    """Exact count of orbit points x0 + k omega, k = 1..N, landing in a set.

    indicator is called with an (N, d) array and must return a boolean array;
    a scalar-only callable is applied pointwise as a fallback.
    """
    if big_n < 1:
        raise ValueError("N must be >= 1")
    orbit = shift_orbit(x0, omega, 1, big_n)
    try:
        hits = np.asarray(indicator(orbit), dtype=bool)
        if hits.shape != (big_n,):
            raise TypeError
    except (TypeError, ValueError):
        hits = np.array([bool(indicator(orbit[i])) for i in range(big_n)])
    count = int(hits.sum())
    return count, count / big_n


def visit_ladder(indicator, x0: Phase, omega: Frequency, n_list):
    """(N, count) pairs over an N-ladder plus the fitted log-log exponent.

    The exponent is the least-squares slope of log count against log N over
    rungs with nonzero counts; sublinearity shows as exponent < 1.
    """
    rows = [(int(n), orbit_visit_count(indicator, x0, omega, int(n))[0]) for n in n_list]
    pos = [(n, c) for n, c in rows if c > 0]
    if len(pos) >= 2:
        lx = np.log([n for n, _ in pos])
        ly = np.log([c for _, c in pos])
        slope = float(np.polyfit(lx, ly, 1)[0])
    else:
        slope = 0.0
    return rows, slope
