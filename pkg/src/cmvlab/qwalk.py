"""Coined quantum walks on the line and their diagonal gauge to CMV form.

Basis convention (frozen after numerical verification): the spin-up state at
walk site n sits at lattice index 2n+1 and spin-down at 2n+2; a walk window of
sites [ws, we] therefore occupies lattice indices [2 ws + 1, 2 we + 2].

The gauge sequence lambda follows the recurrences lambda_0 = lambda_{-1} = 1,
lambda_{2n+2} = w^1_n lambda_{2n}, lambda_{2n+1} = conj(w^2_n) lambda_{2n-1}
with w^k_n the phase of the n-th coin's k-th diagonal entry.  The hatted
coefficients vanish at even indices and obey two equivalent formulas at odd
indices; their agreement is used as a self-check.  The diagonal that actually
conjugates the walk to the hatted operator is d_{2n} = lambda_{2n},
d_{2n+1} = lambda_{2n}^2 / lambda_{2n-1} (it differs from diag(lambda)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cocycle import ScaledMat2, SpectralPoint
from .errors import GaugeError, ModelViolation, WindowEscape
from .model import CoinField
from .torus import Frequency, Phase, shift_orbit

__all__ = [
    "GaugeData",
    "WalkOperator",
    "WalkState",
    "build_walk",
    "walk_to_cmv",
    "unitary_equiv_check",
    "evolve",
    "walk_lyapunov_compare",
    "WalkLyapunovComparison",
]

GAUGE_TOL = 1e-10
DIAG_FLOOR = 1e-12


def _coin_matrices(coins: CoinField, x0: Phase, omega: Frequency, lo: int, hi: int) -> np.ndarray:
    """Coins along the orbit for sites lo..hi, shape (hi-lo+1, 2, 2)."""
    orbit = shift_orbit(x0, omega, lo, hi)
    mats = coins.eval(orbit)
    det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    if np.abs(det - 1.0).max() > GAUGE_TOL:
        raise GaugeError("coin determinant deviates from 1 along the orbit")
    dmin = min(np.abs(mats[:, 0, 0]).min(), np.abs(mats[:, 1, 1]).min())
    if dmin < DIAG_FLOOR:
        raise GaugeError("coin diagonal entry vanishes along the orbit")
    return mats


@dataclass(frozen=True)
class GaugeData:
    """Gauge sequence, conjugating diagonal, and hatted coefficients.

    Arrays are indexed by lattice position minus `lattice_lo`.  alphas_hat
    covers [lattice_lo, lattice_hi]; even lattice indices hold exact zeros.
    formula_gap is the worst disagreement between the two odd-index formulas.
    """

    site_lo: int
    site_hi: int
    lattice_lo: int
    lattice_hi: int
    lambdas: np.ndarray
    lambdas_lo: int
    diag: np.ndarray
    alphas_hat: np.ndarray
    formula_gap: float

    def lam(self, m: int) -> complex:
        return complex(self.lambdas[m - self.lambdas_lo])

    def d(self, m: int) -> complex:
        return complex(self.diag[m - self.lattice_lo])

    def alpha_hat(self, m: int) -> complex:
        return complex(self.alphas_hat[m - self.lattice_lo])


def walk_to_cmv(coins: CoinField, x0: Phase, omega: Frequency, window) -> GaugeData:
    """Gauge data for walk sites [ws, we]; lattice range [2 ws, 2 we + 2].

    Raises GaugeError when a coin diagonal vanishes or the two odd-index
    formulas disagree beyond 1e-10.
    """
    ws, we = int(window[0]), int(window[1])
    if we < ws:
        raise ValueError("window must satisfy we >= ws")
    clo, chi = min(ws, 0) - 1, max(we, 0) + 1
    mats = _coin_matrices(coins, x0, omega, clo, chi)

    def coin(n: int) -> np.ndarray:
        return mats[n - clo]

    # lambda recurrences anchored at lambda_0 = lambda_{-1} = 1
    lam_lo, lam_hi = 2 * clo - 1, 2 * chi + 2
    lam = np.ones(lam_hi - lam_lo + 1, dtype=complex)

    def set_lam(m, v):
        lam[m - lam_lo] = v

    def get_lam(m):
        return lam[m - lam_lo]

    set_lam(0, 1.0)
    set_lam(-1, 1.0)
    for n in range(0, chi + 1):
        w1 = coin(n)[0, 0] / abs(coin(n)[0, 0])
        w2 = coin(n)[1, 1] / abs(coin(n)[1, 1])
        if 2 * n + 2 <= lam_hi:
            set_lam(2 * n + 2, w1 * get_lam(2 * n))
        if 2 * n + 1 <= lam_hi:
            set_lam(2 * n + 1, np.conj(w2) * get_lam(2 * n - 1))
    for n in range(-1, clo - 1, -1):
        w1 = coin(n)[0, 0] / abs(coin(n)[0, 0])
        w2 = coin(n)[1, 1] / abs(coin(n)[1, 1])
        if 2 * n >= lam_lo:
            set_lam(2 * n, np.conj(w1) * get_lam(2 * n + 2))
        if 2 * n - 1 >= lam_lo:
            set_lam(2 * n - 1, w2 * get_lam(2 * n + 1))

    lat_lo, lat_hi = 2 * ws, 2 * we + 2
    alphas_hat = np.zeros(lat_hi - lat_lo + 1, dtype=complex)
    gap = 0.0
    for n in range(ws, we + 1):
        m = 2 * n + 1
        first = (get_lam(2 * n - 1) / get_lam(2 * n)) * np.conj(coin(n)[1, 0])
        second = -(get_lam(2 * n + 1) / get_lam(2 * n + 2)) * coin(n)[0, 1]
        gap = max(gap, float(abs(first - second)))
        alphas_hat[m - lat_lo] = first
    if gap > GAUGE_TOL:
        raise GaugeError(f"odd-index coefficient formulas disagree by {gap:.2e}")

    diag = np.empty(lat_hi - lat_lo + 1, dtype=complex)
    for m in range(lat_lo, lat_hi + 1):
        if m % 2 == 0:
            diag[m - lat_lo] = get_lam(m)
        else:
            diag[m - lat_lo] = get_lam(m - 1) ** 2 / get_lam(m - 2)

    return GaugeData(
        site_lo=ws,
        site_hi=we,
        lattice_lo=lat_lo,
        lattice_hi=lat_hi,
        lambdas=lam,
        lambdas_lo=lam_lo,
        diag=diag,
        alphas_hat=alphas_hat,
        formula_gap=gap,
    )


def _update_rule_dense(mats: np.ndarray, clo: int, lat_lo: int, lat_hi: int) -> np.ndarray:
    """Walk matrix on lattice indices [lat_lo, lat_hi] from the update rule.

    Couplings whose source lies outside the window are dropped, so boundary
    rows are incomplete ("open" closure).  Lattice index 2n+1 is spin-up at
    site n, 2n+2 spin-down at site n.
    """
    dim = lat_hi - lat_lo + 1
    out = np.zeros((dim, dim), dtype=complex)

    def pos(m: int):
        return m - lat_lo if lat_lo <= m <= lat_hi else None

    for m in range(lat_lo, lat_hi + 1):
        i = m - lat_lo
        if m % 2 == 1:
            n = (m - 1) // 2        # spin-up at site n: sources at site n-1
            c = mats[n - 1 - clo]
            for src, val in ((2 * (n - 1) + 1, c[0, 0]), (2 * (n - 1) + 2, c[0, 1])):
                j = pos(src)
                if j is not None:
                    out[i, j] = val
        else:
            n = m // 2 - 1          # spin-down at site n: sources at site n+1
            c = mats[n + 1 - clo]
            for src, val in ((2 * (n + 1) + 1, c[1, 0]), (2 * (n + 1) + 2, c[1, 1])):
                j = pos(src)
                if j is not None:
                    out[i, j] = val
    return out


@dataclass(frozen=True)
class WalkOperator:
    """Finite-window walk operator with a unitary or absorbing closure.

    closure "reflective" transports the boundary-modified hatted operator back
    through the gauge diagonal (exactly unitary); "absorbing" applies the raw
    update rule with out-of-window amplitudes dropped.
    """

    site_lo: int
    site_hi: int
    closure: str
    gauge: GaugeData
    coin_mats: np.ndarray = field(repr=False)
    coin_lo: int = 0
    _cmv_bands: dict = field(default=None, repr=False)
    _dvals: np.ndarray = field(default=None, repr=False)
    _u_open: np.ndarray = field(default=None, repr=False)

    @property
    def n_sites(self) -> int:
        return self.site_hi - self.site_lo + 1

    @property
    def lattice_window(self):
        return (2 * self.site_lo + 1, 2 * self.site_hi + 2)

    def cmv_op(self):
        from .cmvop import FiniteCMV

        lat_a, lat_b = self.lattice_window
        g = self.gauge
        seq = g.alphas_hat  # covers lat_a - 1 .. lat_b
        return FiniteCMV(lat_a, lat_b, seq, 1.0 + 0j, 1.0 + 0j)

    def dense(self) -> np.ndarray:
        lat_a, lat_b = self.lattice_window
        if self.closure == "absorbing":
            return _update_rule_dense(self.coin_mats, self.coin_lo, lat_a, lat_b)
        dvals = self._diag()
        e = self.cmv_op().dense_e()
        return (dvals[:, None] * e) * np.conj(dvals)[None, :]

    def _diag(self) -> np.ndarray:
        if self._dvals is None:
            lat_a, lat_b = self.lattice_window
            vals = np.array([self.gauge.d(m) for m in range(lat_a, lat_b + 1)])
            object.__setattr__(self, "_dvals", vals)
        return self._dvals

    def apply_cmv_vector(self, v: np.ndarray) -> np.ndarray:
        """One step on a lattice-indexed amplitude vector."""
        lat_a, lat_b = self.lattice_window
        if self.closure == "absorbing":
            if self._u_open is None:
                object.__setattr__(
                    self, "_u_open", _update_rule_dense(self.coin_mats, self.coin_lo, lat_a, lat_b)
                )
            return self._u_open @ v
        from .spectral import _banded_apply

        if self._cmv_bands is None:
            object.__setattr__(self, "_cmv_bands", self.cmv_op().e_bands())
        dvals = self._diag()
        return dvals * _banded_apply(self._cmv_bands, np.conj(dvals) * v)


def build_walk(coins: CoinField, x0: Phase, omega: Frequency, window, closure: str = "reflective") -> WalkOperator:
    """Assemble the walk on sites [ws, we]; needs at least two sites."""
    ws, we = int(window[0]), int(window[1])
    if we - ws + 1 < 2:
        raise ValueError("window must span at least two sites")
    if closure not in ("reflective", "absorbing"):
        raise ValueError("closure must be 'reflective' or 'absorbing'")
    gauge = walk_to_cmv(coins, x0, omega, (ws, we))
    clo = min(ws, 0) - 1
    chi = max(we, 0) + 1
    mats = _coin_matrices(coins, x0, omega, clo, chi)
    return WalkOperator(ws, we, closure, gauge, mats, clo)


def unitary_equiv_check(coins: CoinField, x0: Phase, omega: Frequency, window, trim: int = 4) -> float:
    """max |D* U D - E_hat| over interior rows (trim rows cut at each end).

    U is built from the raw update rule, E_hat from the hatted coefficients
    through the operator module; the comparison exercises the whole gauge
    chain on two independent constructions.
    """
    walk = build_walk(coins, x0, omega, window, closure="reflective")
    lat_a, lat_b = walk.lattice_window
    dim = lat_b - lat_a + 1
    if dim <= 2 * trim:
        raise ValueError("window too small for the requested trim")
    u_open = _update_rule_dense(walk.coin_mats, walk.coin_lo, lat_a, lat_b)
    dvals = np.array([walk.gauge.d(m) for m in range(lat_a, lat_b + 1)])
    gauged = (np.conj(dvals)[:, None] * u_open) * dvals[None, :]
    e_hat = walk.cmv_op().dense_e()
    resid = np.abs(gauged - e_hat)
    return float(resid[trim:-trim, :].max())


@dataclass
class WalkState:
    """Two-component amplitudes on the walk window."""

    site_lo: int
    psi_up: np.ndarray
    psi_down: np.ndarray

    @classmethod
    def delta(cls, walk: WalkOperator, site: int, spin: str = "up") -> "WalkState":
        n = walk.n_sites
        up = np.zeros(n, dtype=complex)
        dn = np.zeros(n, dtype=complex)
        (up if spin == "up" else dn)[site - walk.site_lo] = 1.0
        return cls(walk.site_lo, up, dn)

    def norm(self) -> float:
        return float(np.sqrt((np.abs(self.psi_up) ** 2 + np.abs(self.psi_down) ** 2).sum()))

    def to_cmv_vector(self, walk: WalkOperator) -> np.ndarray:
        lat_a, lat_b = walk.lattice_window
        v = np.zeros(lat_b - lat_a + 1, dtype=complex)
        sites = np.arange(walk.site_lo, walk.site_hi + 1)
        v[2 * sites + 1 - lat_a] = self.psi_up
        v[2 * sites + 2 - lat_a] = self.psi_down
        return v

    @classmethod
    def from_cmv_vector(cls, walk: WalkOperator, v: np.ndarray) -> "WalkState":
        lat_a, _ = walk.lattice_window
        sites = np.arange(walk.site_lo, walk.site_hi + 1)
        return cls(walk.site_lo, v[2 * sites + 1 - lat_a].copy(), v[2 * sites + 2 - lat_a].copy())


def evolve(walk: WalkOperator, psi0: WalkState, steps: int, escape_threshold: float = 1e-8):
    """Repeated application with per-step summary rows.

    Returns a list of dict rows (t, norm, mean, sigma, return_prob, escaped).
    Once more than escape_threshold of probability sits on the two outermost
    sites, subsequent rows carry escaped = True.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    v = psi0.to_cmv_vector(walk)
    v0 = v.copy()
    sites = np.arange(walk.site_lo, walk.site_hi + 1, dtype=float)
    rows = []
    escaped = False

    def summary(t, vec):
        nonlocal escaped
        st = WalkState.from_cmv_vector(walk, vec)
        p = np.abs(st.psi_up) ** 2 + np.abs(st.psi_down) ** 2
        total = float(p.sum())
        mean = float((sites * p).sum() / total) if total > 0 else 0.0
        var = float((sites**2 * p).sum() / total) - mean**2 if total > 0 else 0.0
        if p[0] + p[-1] > escape_threshold:
            escaped = True
        rows.append(
            {
                "t": t,
                "norm": float(np.sqrt(total)),
                "mean": mean,
                "sigma": float(np.sqrt(max(var, 0.0))),
                "return_prob": float(abs(np.vdot(v0, vec)) ** 2),
                "escaped": escaped,
            }
        )

    summary(0, v)
    for t in range(1, steps + 1):
        v = walk.apply_cmv_vector(v)
        summary(t, v)
    return rows


@dataclass(frozen=True)
class WalkLyapunovComparison:
    """Per-site growth rates of the alternating and plain transfer products."""

    theta: float
    n: int
    l_walk: float
    stderr_walk: float
    l_hat: float
    stderr_hat: float
    sample_count: int
    seed: int


def _batched_gz_from_odd(avals: np.ndarray, z: complex) -> np.ndarray:
    rho = np.sqrt(1.0 - np.abs(avals) ** 2)
    out = np.empty(avals.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = z / rho
    out[..., 0, 1] = -np.conj(avals) / rho
    out[..., 1, 0] = -avals / rho
    out[..., 1, 1] = (1.0 / z) / rho
    return out


def _batched_szego(avals: np.ndarray, sq: complex) -> np.ndarray:
    rho = np.sqrt(1.0 - np.abs(avals) ** 2)
    out = np.empty(avals.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = sq / rho
    out[..., 0, 1] = -np.conj(avals) / sq / rho
    out[..., 1, 0] = -avals * sq / rho
    out[..., 1, 1] = (1.0 / sq) / rho
    return out


def walk_lyapunov_compare(
    coins: CoinField,
    x0: Phase,
    omega: Frequency,
    z: SpectralPoint,
    n: int,
    samples: int,
    seed: int,
) -> WalkLyapunovComparison:
    """Growth rate of the walk transfer product vs the plain product of the
    same hatted coefficients, both normalized per lattice site.

    One walk step covers two lattice sites, so the alternating product of n
    steps is compared against the 2n-step plain product over the interleaved
    sequence (0, a_0, 0, a_1, ...).  On the unit circle the two have equal
    norms exactly; the Monte Carlo machinery still estimates both sides
    independently.
    """
    if abs(abs(z.z) - 1.0) > 1e-12:
        raise ValueError("spectral point must lie on the unit circle")
    from .lyapunov import sample_phases

    phases = sample_phases(coins.d, samples, seed)
    zc = z.z
    sq = z.sqrt_branch
    m_free = np.array([[sq, 0.0], [0.0, 1.0 / sq]], dtype=complex)

    # hatted odd coefficients along each orbit: batch over samples per step
    prod_gz = np.broadcast_to(np.eye(2, dtype=complex), (samples, 2, 2)).copy()
    logs_gz = np.zeros(samples)
    prod_sz = prod_gz.copy()
    logs_sz = np.zeros(samples)
    lam_even = np.ones(samples, dtype=complex)   # lambda_{2m}
    lam_odd = np.ones(samples, dtype=complex)    # lambda_{2m-1}
    om = omega.coords
    for m in range(n):
        xv = np.mod(phases + m * om, 1.0)
        cm = coins.eval(xv)
        diag1 = cm[:, 0, 0]
        diag2 = cm[:, 1, 1]
        if min(np.abs(diag1).min(), np.abs(diag2).min()) < DIAG_FLOOR:
            raise GaugeError("coin diagonal entry vanishes along a sampled orbit")
        a_hat = (lam_odd / lam_even) * np.conj(cm[:, 1, 0])
        if np.abs(a_hat).max() >= 1.0:
            raise ModelViolation("hatted coefficient escaped the unit disk")
        # advance the gauge
        lam_even = (diag1 / np.abs(diag1)) * lam_even
        lam_odd = np.conj(diag2 / np.abs(diag2)) * lam_odd

        prod_gz = _batched_gz_from_odd(a_hat, zc) @ prod_gz
        prod_sz = (_batched_szego(a_hat, sq) @ m_free) @ prod_sz
        if m % 8 == 7:
            for prod, logs in ((prod_gz, logs_gz), (prod_sz, logs_sz)):
                peak = np.abs(prod).max(axis=(1, 2))
                prod /= peak[:, None, None]
                logs += np.log(peak)

    def finish(prod, logs):
        from .cocycle import _batched_norms

        u = (logs + np.log(_batched_norms(prod))) / (2 * n)
        se = float(u.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
        return float(u.mean()), se

    l_walk, se_walk = finish(prod_gz, logs_gz)
    l_hat, se_hat = finish(prod_sz, logs_sz)
    return WalkLyapunovComparison(z.theta, n, l_walk, se_walk, l_hat, se_hat, samples, seed)
