import numpy as np
import pytest

from cmvlab.cocycle import SpectralPoint
from cmvlab.model import builtin_model, constant_alpha
from cmvlab.cmvop import build_finite_cmv, finite_cmv_from_model
from cmvlab.spectral import (
    _dense_eigenpairs,
    double_resonance_gap,
    eigenphases,
    eigenvector_inverse_iteration,
    localization_fit,
    orbit_visit_count,
    visit_ladder,
)
from cmvlab.torus import Frequency, Phase

OMEGA2 = Frequency(np.array([np.sqrt(2) - 1, np.sqrt(3) - 1]), 1e-3, 3.0)
X0 = Phase(np.array([0.3, 0.14]))


def random_op(seed, a, b):
    rng = np.random.default_rng(seed)
    n = b - a + 2
    seq = 0.9 * np.sqrt(rng.uniform(size=n)) * np.exp(2j * np.pi * rng.uniform(size=n))
    beta = np.exp(2j * np.pi * rng.uniform())
    eta = np.exp(2j * np.pi * rng.uniform())
    return build_finite_cmv(seq, a, b, beta, eta)


def circ_dist(a, b):
    d = np.abs(a - b) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def test_single_site_eigenphase():
    phi0 = 1.1
    op = build_finite_cmv([1.0, -np.exp(-1j * phi0)], 0, 0, 1.0, -np.exp(-1j * phi0))
    thetas = eigenphases(op)
    assert thetas.shape == (1,)
    assert circ_dist(thetas[0], phi0) < 1e-10


def test_free_interior_matches_dense_roots():
    seq = np.zeros(9, dtype=complex)
    op = build_finite_cmv(seq, 0, 7, 1.0, 1.0)
    thetas = eigenphases(op)
    oracle, _ = _dense_eigenpairs(op)
    assert thetas.size == oracle.size
    assert circ_dist(np.sort(thetas), np.sort(oracle)).max() < 1e-8


def test_random_instances_match_dense_multisets():
    for seed in range(5):
        op = random_op(seed, 0, 11)
        thetas = eigenphases(op)
        oracle, _ = _dense_eigenpairs(op)
        assert thetas.size == 12
        assert circ_dist(np.sort(thetas), np.sort(oracle)).max() < 1e-7


def test_grid_size_precondition():
    op = random_op(1, 0, 7)
    with pytest.raises(ValueError):
        eigenphases(op, grid_size=4 * op.dim)


def test_inverse_iteration_single_site():
    phi0 = 0.35
    op = build_finite_cmv([1.0, -np.exp(-1j * phi0)], 0, 0, 1.0, -np.exp(-1j * phi0))
    pair = eigenvector_inverse_iteration(op, phi0)
    assert abs(abs(pair.vector[0]) - 1.0) < 1e-12
    assert pair.residual < 1e-10


def test_inverse_iteration_matches_dense_vectors():
    op = random_op(3, 0, 9)
    oracle_t, oracle_v = _dense_eigenpairs(op)
    for idx in (0, 4, 9):
        pair = eigenvector_inverse_iteration(op, oracle_t[idx])
        overlap = abs(np.vdot(pair.vector, oracle_v[:, idx])) / np.linalg.norm(oracle_v[:, idx])
        assert overlap > 1 - 1e-8
        assert pair.residual < 1e-8


def test_eigenvector_orthogonality():
    op = random_op(9, 0, 11)
    thetas = eigenphases(op)
    pairs = [eigenvector_inverse_iteration(op, t) for t in thetas]
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            if circ_dist(pairs[i].theta, pairs[j].theta) > 1e-6:
                assert abs(np.vdot(pairs[i].vector, pairs[j].vector)) < 1e-7


def test_k_residual_equivalence():
    # || (z L* - M) v || tracks || E v - z v || through the unitary factor
    op = random_op(5, 0, 9)
    thetas = eigenphases(op)
    pair = eigenvector_inverse_iteration(op, thetas[2])
    z = np.exp(1j * pair.theta)
    k_res = np.linalg.norm(op.dense_k(z) @ pair.vector)
    assert k_res < 1e-8


def test_localization_fit_planted_exponential():
    k = np.arange(64)
    v = np.exp(-0.5 * np.abs(k - 10).astype(float))
    fit = localization_fit(v)
    assert fit.center == 10
    assert abs(fit.rate - 0.5) < 1e-6
    assert fit.fit_quality > 1 - 1e-9


def test_localization_fit_uniform_vector():
    fit = localization_fit(np.ones(64))
    assert fit.rate == 0.0
    assert fit.fit_quality == 0.0


def test_localization_fit_short_vector_rejected():
    with pytest.raises(ValueError):
        localization_fit(np.ones(16))


def test_double_resonance_self_distance():
    op_a = finite_cmv_from_model(builtin_model("strong2d"), X0, OMEGA2, -1, 1, 1.0, 1.0)
    thetas = eigenphases(op_a)
    z = SpectralPoint(float(thetas[0]))
    rep = double_resonance_gap(builtin_model("strong2d"), OMEGA2, X0, z, 1)
    assert rep.gap < 1e-9
    assert rep.argmin_j == 1


def test_double_resonance_free_model_oracle():
    alpha = constant_alpha(0.0, d=2)
    z = SpectralPoint(0.9)
    rep = dr = double_resonance_gap(alpha, OMEGA2, X0, z, 4)
    for j, gap in rep.ladder:
        op = finite_cmv_from_model(alpha, X0, OMEGA2, -j, j, 1.0, 1.0)
        oracle, _ = _dense_eigenpairs(op)
        dist = np.abs(z.z - np.exp(1j * oracle)).min()
        assert abs(gap - dist) < 1e-8


def test_double_resonance_open_convention():
    alpha = builtin_model("strong2d")
    rep = double_resonance_gap(alpha, OMEGA2, X0, SpectralPoint(0.9), 4, convention="open")
    assert rep.convention == "open"
    assert all(j >= 1 for j, _ in rep.ladder)


def test_orbit_visits_trivial_indicators():
    count, frac = orbit_visit_count(lambda x: np.zeros(len(x), dtype=bool), X0, OMEGA2, 100)
    assert count == 0 and frac == 0.0
    count, frac = orbit_visit_count(lambda x: np.ones(len(x), dtype=bool), X0, OMEGA2, 100)
    assert count == 100 and frac == 1.0


def test_orbit_visits_equidistribution():
    # fraction of visits to a fixed box converges to its measure
    def box(x):
        return x[:, 0] < 0.3

    n = 20000
    count, frac = orbit_visit_count(box, X0, OMEGA2, n)
    se = np.sqrt(0.3 * 0.7 / n)
    assert abs(frac - 0.3) < 3 * se + 1.0 / n


def test_orbit_visits_scalar_fallback():
    count, _ = orbit_visit_count(lambda x: bool(x[0] < 0.5), X0, OMEGA2, 50)
    vec_count, _ = orbit_visit_count(lambda x: x[:, 0] < 0.5, X0, OMEGA2, 50)
    assert count == vec_count


def test_visit_ladder_full_set_exponent_one():
    rows, slope = visit_ladder(lambda x: np.ones(len(x), dtype=bool), X0, OMEGA2, [100, 1000, 10000])
    assert [c for _, c in rows] == [100, 1000, 10000]
    assert abs(slope - 1.0) < 1e-12
