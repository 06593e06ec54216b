import numpy as np
import pytest

from cmvlab.cocycle import SpectralPoint
from cmvlab.errors import BoundaryError, DegenerateInput, ModelViolation, NearSingular
from cmvlab.model import builtin_model, constant_alpha, single_harmonic
from cmvlab.cmvop import (
    FiniteCMV,
    build_finite_cmv,
    char_det,
    det_transfer_check,
    finite_cmv_from_model,
    green_decay_scan,
    green_entry,
    poisson_residual,
    theta_block,
)
from cmvlab.torus import Frequency, Phase

OMEGA2 = Frequency(np.array([np.sqrt(2) - 1, np.sqrt(3) - 1]), 1e-3, 3.0)
X0 = Phase(np.array([0.3, 0.14]))


def random_disk(rng, n, radius=0.9):
    return radius * np.sqrt(rng.uniform(size=n)) * np.exp(2j * np.pi * rng.uniform(size=n))


def random_op(rng, a, b, beta=None, eta=None):
    seq = random_disk(rng, b - a + 2)
    if beta is None:
        beta = np.exp(2j * np.pi * rng.uniform())
    if eta is None:
        eta = np.exp(2j * np.pi * rng.uniform())
    return build_finite_cmv(seq, a, b, beta, eta)


# -- structure -----------------------------------------------------------------

def test_theta_block_unitary_including_boundary():
    for a in (0.0, 0.3 + 0.4j, np.exp(1j * 0.7)):
        blk = theta_block(a)
        assert np.abs(blk @ blk.conj().T - np.eye(2)).max() < 1e-12


def test_single_site_operator():
    op = build_finite_cmv([np.exp(0.3j), 0.9 * np.exp(1j)], 0, 0, np.exp(0.3j), np.exp(2.1j))
    e = op.dense_e()
    assert e.shape == (1, 1)
    assert abs(abs(e[0, 0]) - 1.0) < 1e-14


def test_free_interior_signed_permutation():
    seq = np.zeros(7, dtype=complex)
    op = build_finite_cmv(seq, 0, 5, 1.0, 1.0)
    e = op.dense_e()
    assert np.abs(e.conj().T @ e - np.eye(6)).max() < 1e-12
    mags = np.abs(e)
    assert np.all((mags < 1e-12) | (np.abs(mags - 1.0) < 1e-12))


@pytest.mark.parametrize("a,b", [(0, 9), (1, 9), (-4, 4), (-5, 6)])
def test_random_instance_structure(a, b):
    rng = np.random.default_rng(100 + a + b)
    op = random_op(rng, a, b, eta=1j)
    e, l, m = op.dense_e(), op.dense_l(), op.dense_m()
    n = op.dim
    assert np.abs(e - l @ m).max() < 1e-12
    assert np.abs(e.conj().T @ e - np.eye(n)).max() < 1e-12
    assert np.abs(l.conj().T @ l - np.eye(n)).max() < 1e-12
    assert np.abs(m.conj().T @ m - np.eye(n)).max() < 1e-12
    # bands agree with the dense assembly
    bands = op.e_bands()
    dense_from_bands = np.zeros_like(e)
    for off, arr in bands.items():
        idx = np.arange(arr.size)
        if off >= 0:
            dense_from_bands[idx, idx + off] = arr
        else:
            dense_from_bands[idx - off, idx] = arr
    assert np.abs(e - dense_from_bands).max() == 0.0


def test_boundary_and_interior_validation():
    with pytest.raises(BoundaryError):
        build_finite_cmv(np.zeros(5, dtype=complex), 0, 3, beta=0.5, eta=1.0)
    bad = np.zeros(5, dtype=complex)
    bad[2] = 1.3
    with pytest.raises(ModelViolation):
        build_finite_cmv(bad, 0, 3, 1.0, 1.0)


def test_k_system_matches_equation():
    # E u = z u iff (z conj(L) - M) u = 0, via the factorization E = L M
    rng = np.random.default_rng(7)
    op = random_op(rng, 0, 11)
    e = op.dense_e()
    w, v = np.linalg.eig(e)
    for col in range(3):
        z, u = w[col], v[:, col]
        ku = op.dense_k(z) @ u
        assert np.linalg.norm(ku) < 1e-8 * np.linalg.norm(u)
    # banded layout agrees with the dense K
    z = np.exp(0.31j)
    ab = op.k_bands(z)
    kd = op.dense_k(z)
    n = op.dim
    rebuilt = np.diag(ab[1]) + np.diag(ab[0][1:], 1) + np.diag(ab[2][: n - 1], -1)
    assert np.abs(kd - rebuilt).max() < 1e-15


# -- characteristic determinants -------------------------------------------------

def test_char_det_empty_interval():
    cd = char_det(None, SpectralPoint(0.4), a=3, b=1)
    assert cd.value == 1.0


def test_char_det_single_site():
    # single entry is -conj(eta) beta; choose phases so it equals u
    u = np.exp(1.1j)
    op = build_finite_cmv([1.0, -np.conj(u)], 0, 0, 1.0, -np.conj(u))
    assert abs(op.dense_e()[0, 0] - u) < 1e-15
    z = SpectralPoint(0.2)
    cd = char_det(op, z)
    assert abs(cd.value - (z.z - u)) < 1e-14


def test_char_det_paths_agree():
    rng = np.random.default_rng(42)
    z = SpectralPoint(0.7)
    for _ in range(10):
        op = random_op(rng, 0, rng.integers(4, 14))
        dense = char_det(op, z, method="dense")
        banded = char_det(op, z, method="banded")
        assert abs(dense.value - banded.value) <= 1e-8 * abs(dense.value)


def test_char_det_at_origin_unimodular():
    rng = np.random.default_rng(3)
    op = random_op(rng, 0, 9)
    cd = char_det(op, SpectralPoint(0.0).from_z(1e-300 + 0j) if False else 0.0 + 0j)
    # phi(0) = det(-E); |det E| = 1 for the unitary window
    assert abs(abs(cd.value) - 1.0) < 1e-10
    dense = np.abs(np.linalg.det(op.dense_e()))
    assert abs(dense - 1.0) < 1e-10


def test_char_det_normalized_value():
    rng = np.random.default_rng(8)
    op = random_op(rng, 0, 5)
    z = SpectralPoint(1.9)
    cd = char_det(op, z)
    rho_prod = np.prod([op.rho_true(m) for m in range(0, 6)])
    assert abs(cd.normalized - cd.value / rho_prod) < 1e-12 * abs(cd.normalized)


# -- determinant-transfer relation ----------------------------------------------

def test_det_transfer_constant_small():
    alpha = constant_alpha(0.5)
    omega = Frequency(np.array([np.sqrt(2) - 1]), 1e-3, 2.0)
    rep = det_transfer_check(alpha, Phase([0.3]), omega, SpectralPoint(0.0), 2)
    assert rep.residual < 1e-9
    assert not rep.degree_flag


def test_det_transfer_harmonic():
    alpha = single_harmonic(0.5, [1])
    omega = Frequency(np.array([np.sqrt(2) - 1]), 1e-3, 2.0)
    rep = det_transfer_check(alpha, Phase([0.3]), omega, SpectralPoint(1.1), 6)
    assert rep.residual < 1e-8
    assert not rep.degree_flag


def test_det_transfer_degenerate_guard():
    omega = Frequency(np.array([0.3]), 1e-3, 2.0)
    with pytest.raises(DegenerateInput):
        det_transfer_check(constant_alpha(0.0), Phase([0.1]), omega, SpectralPoint(0.5), 4)


# -- Green's functions ------------------------------------------------------------

def _dense_green(op, z):
    return np.linalg.inv(op.dense_k(z))


def test_green_diagonal_entry_empty_prefactor():
    rng = np.random.default_rng(31)
    op = random_op(rng, 0, 7)
    z = SpectralPoint(0.5)
    mag, val = green_entry(op, 3, 3, z)
    g = _dense_green(op, z.z)
    assert abs(mag - abs(g[3, 3])) < 1e-9 * abs(g[3, 3])
    assert abs(val - g[3, 3]) < 1e-9 * abs(g[3, 3])


def test_green_free_interior():
    seq = np.zeros(9, dtype=complex)
    op = build_finite_cmv(seq, 0, 7, 1.0, 1.0)
    z = SpectralPoint(0.5)
    g = _dense_green(op, z.z)
    for j in range(0, 8):
        for k in range(j, 8):
            mag, val = green_entry(op, j, k, z)
            assert abs(mag - abs(g[j, k])) < 1e-9 * max(abs(g[j, k]), 1e-12)
            assert abs(val - g[j, k]) < 1e-9


def test_green_random_offdiagonal():
    rng = np.random.default_rng(77)
    op = random_op(rng, 0, 11)
    z = SpectralPoint(2.4)
    g = _dense_green(op, z.z)
    mag, val = green_entry(op, 2, 9, z)
    assert abs(val - g[2, 9]) < 1e-9 * np.abs(g).max()
    assert abs(mag - abs(g[2, 9])) < 1e-7 * max(abs(g[2, 9]), 1e-12)


def test_green_near_singular_guard():
    rng = np.random.default_rng(12)
    op = random_op(rng, 0, 9)
    w = np.linalg.eigvals(op.dense_e())
    z_on_spec = complex(w[0])
    with pytest.raises(NearSingular):
        green_entry(op, 1, 5, z_on_spec * (1 + 1e-15))


# -- Poisson reconstruction --------------------------------------------------------

def _strong():
    return builtin_model("strong2d")


def test_poisson_eigenvector_of_larger_window():
    alpha = _strong()
    big = finite_cmv_from_model(alpha, X0, OMEGA2, -20, 20, 1.0, 1.0)
    w, v = np.linalg.eig(big.dense_e())
    inner = finite_cmv_from_model(alpha, X0, OMEGA2, -8, 8, np.exp(0.35j), np.exp(1.2j))
    for col in range(6):
        z = w[col]
        u = v[:, col]
        res = poisson_residual(u, -20, inner, z, 0)
        assert res < 1e-7


@pytest.mark.parametrize("a,b", [(-8, 8), (-7, 7), (-8, 7), (-7, 8)])
def test_poisson_all_parities(a, b):
    alpha = _strong()
    big = finite_cmv_from_model(alpha, X0, OMEGA2, -20, 20, 1.0, 1.0)
    w, v = np.linalg.eig(big.dense_e())
    inner = finite_cmv_from_model(alpha, X0, OMEGA2, a, b, np.exp(0.35j), np.exp(1.2j))
    res = poisson_residual(v[:, 2], -20, inner, w[2], 0)
    assert res < 1e-7


def test_poisson_propagated_solution():
    # solution generated by the three-term recursion of (z L* - M) u = 0 on a
    # big window; rows strictly inside hold the true eigenvalue equation
    alpha = _strong()
    big = finite_cmv_from_model(alpha, X0, OMEGA2, -24, 24, 1.0, 1.0)
    thetas = np.angle(np.linalg.eigvals(big.dense_e())) % (2 * np.pi)
    # pick z on the circle away from the window spectrum (resonance-free)
    grid = np.linspace(0, 2 * np.pi, 4001)
    gaps = np.abs(np.exp(1j * grid)[:, None] - np.exp(1j * thetas)[None, :]).min(axis=1)
    z = complex(np.exp(1j * grid[int(np.argmax(gaps))]))
    ab = big.k_bands(z)
    n = big.dim
    diag, sup, sub = ab[1], ab[0], ab[2]
    u = np.zeros(n, dtype=complex)
    u[0], u[1] = 0.7 - 0.2j, 0.1 + 0.4j
    for i in range(1, n - 1):
        u[i + 1] = -(sub[i - 1] * u[i - 1] + diag[i] * u[i]) / sup[i + 1]
    u /= np.abs(u).max()
    inner = finite_cmv_from_model(alpha, X0, OMEGA2, -8, 8, 1.0, 1.0)
    res = poisson_residual(u, -24, inner, z, 0)
    assert res < 1e-6


def test_poisson_zero_solution():
    alpha = _strong()
    inner = finite_cmv_from_model(alpha, X0, OMEGA2, -5, 5, 1.0, 1.0)
    u = np.zeros(31, dtype=complex)
    assert poisson_residual(u, -15, inner, np.exp(0.4j), 0) == 0.0


# -- decay scan --------------------------------------------------------------------

def test_green_decay_scan_runs_on_free_model():
    rep = green_decay_scan(constant_alpha(0.0, d=2), OMEGA2, X0, 16, SpectralPoint(0.5), 0.5)
    assert rep.worst_ratio > 0
    assert rep.lambda_choice in ((0, 15), (1, 15))


def test_green_decay_scan_strong_model():
    alpha = _strong()
    rep = green_decay_scan(alpha, OMEGA2, Phase([0.61, 0.22]), 32, SpectralPoint(1.6), 0.5)
    assert rep.n == 32
    assert set(rep.per_lambda) == {(0, 31), (1, 31)}
    for j, k, ratio in rep.violating_pairs:
        assert ratio > 1.0
        assert abs(j - k) >= 8
