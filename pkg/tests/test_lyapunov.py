import numpy as np
import pytest

from cmvlab.cocycle import ScaledMat2, SpectralPoint, szego_step, transfer_product
from cmvlab.errors import NotUnimodular
from cmvlab.lyapunov import (
    ap_check,
    birkhoff_lyapunov,
    constant_cocycle_exponent,
    finite_lyapunov,
    ldt_exceptional_indicator,
    ldt_ladder,
    ldt_measure,
    rate_table,
    sample_phases,
)
from cmvlab.model import builtin_model, constant_alpha, single_harmonic
from cmvlab.torus import Frequency, Phase

LOG_SQRT3 = float(np.log(np.sqrt(3.0)))
OMEGA2 = Frequency(np.array([np.sqrt(2) - 1, np.sqrt(3) - 1]), 1e-3, 3.0)
OMEGA1 = Frequency(np.array([np.sqrt(2) - 1]), 1e-3, 2.0)


def test_zero_model_exact_zero():
    est = finite_lyapunov(constant_alpha(0.0), OMEGA1, SpectralPoint(1.3), 50, 32, 9)
    assert abs(est.mean) < 1e-14
    assert est.stderr < 1e-14


def test_constant_closed_form():
    est = finite_lyapunov(constant_alpha(0.5), OMEGA1, SpectralPoint(0.0), 200, 1, 42)
    assert abs(est.mean - LOG_SQRT3) < 0.005


def test_constant_closed_form_general_trace():
    # |trace| > 2 branch of the closed form at a nonreal spectral point
    alpha = 0.62
    z = SpectralPoint(0.3)
    expect = constant_cocycle_exponent(alpha, z)
    assert expect > 0
    est = finite_lyapunov(constant_alpha(alpha), OMEGA1, z, 400, 1, 0)
    assert abs(est.mean - expect) < 5.0 / 400 + 3 * est.stderr


def test_subadditivity_same_seed():
    alpha = builtin_model("strong2d")
    for n in (10, 20, 40):
        small = finite_lyapunov(alpha, OMEGA2, SpectralPoint(1.6), n, 300, 7)
        big = finite_lyapunov(alpha, OMEGA2, SpectralPoint(1.6), 2 * n, 300, 7)
        assert big.mean <= small.mean + 3 * small.stderr


def test_determinism_bitwise():
    alpha = builtin_model("strong2d")
    a = finite_lyapunov(alpha, OMEGA2, SpectralPoint(0.9), 60, 100, 123)
    b = finite_lyapunov(alpha, OMEGA2, SpectralPoint(0.9), 60, 100, 123)
    assert a == b
    c = finite_lyapunov(alpha, OMEGA2, SpectralPoint(0.9), 60, 100, 124)
    assert c.mean != a.mean


def test_sample_phases_counter_based():
    a = sample_phases(2, 64, 5, 0)
    b = sample_phases(2, 64, 5, 0)
    assert np.array_equal(a, b)
    c = sample_phases(2, 64, 5, 1)
    assert not np.array_equal(a, c)


def test_birkhoff_zero_and_constant():
    assert birkhoff_lyapunov(constant_alpha(0.0), OMEGA1, SpectralPoint(0.7), Phase([0.2]), 500) < 1e-14
    val = birkhoff_lyapunov(constant_alpha(0.5), OMEGA1, SpectralPoint(0.0), Phase([0.4]), 10_000)
    assert abs(val - LOG_SQRT3) < 1e-3


def test_birkhoff_matches_phase_average():
    alpha = single_harmonic(0.5, [1, 1])
    x0 = Phase([0.13, 0.71])
    single = birkhoff_lyapunov(alpha, OMEGA2, SpectralPoint(1.1), x0, 100_000)
    averaged = finite_lyapunov(alpha, OMEGA2, SpectralPoint(1.1), 200, 2000, 31)
    assert abs(single - averaged.mean) < 0.02


def test_birkhoff_chunking_consistency():
    alpha = builtin_model("strong2d")
    x0 = Phase([0.37, 0.59])
    z = SpectralPoint(2.2)
    a = birkhoff_lyapunov(alpha, OMEGA2, z, x0, 3000, chunk=4096)
    b = birkhoff_lyapunov(alpha, OMEGA2, z, x0, 3000, chunk=117)
    assert abs(a - b) < 1e-9


def test_ldt_zero_model_everywhere_zero():
    for n in (10, 50):
        for tau in (0.1, 0.5, 0.9):
            rep = ldt_measure(constant_alpha(0.0), OMEGA1, SpectralPoint(0.4), n, tau, 200, 3)
            assert rep.measure_estimate == 0.0


def test_ldt_constant_model_no_phase_dependence():
    rep = ldt_measure(constant_alpha(0.5), OMEGA1, SpectralPoint(0.0), 100, 0.3, 500, 11)
    assert rep.measure_estimate == 0.0
    assert rep.deviation_threshold == pytest.approx(100**0.7)


def test_ldt_ladder_decreasing_strong_model():
    alpha = builtin_model("strong2d")
    reports = ldt_ladder(alpha, OMEGA2, SpectralPoint(1.6), [50, 100, 200], 0.3, 2000, 17)
    measures = [r.measure_estimate for r in reports]
    assert all(b <= a for a, b in zip(measures, measures[1:]))


def test_ldt_exceptional_indicator_consistency():
    alpha = builtin_model("strong2d")
    z = SpectralPoint(1.6)
    base = finite_lyapunov(alpha, OMEGA2, z, 50, 500, 2)
    ind = ldt_exceptional_indicator(alpha, OMEGA2, z, 50, 0.3, base.mean)
    phases = sample_phases(2, 500, 2)
    frac = float(np.mean(ind(phases)))
    rep = ldt_measure(alpha, OMEGA2, z, 50, 0.3, 500, 2, l_n=base.mean)
    assert frac == rep.measure_estimate


# -- avalanche principle -------------------------------------------------------

def test_ap_telescoping_diagonal_chain():
    mu = 100.0
    chain = [ScaledMat2(np.diag([mu, 1 / mu]).astype(complex)) for _ in range(5)]
    rep = ap_check(chain, mu, 10.0)
    assert rep.hyp1_ok and rep.hyp2_ok
    assert rep.residual < 1e-10
    assert rep.within_bound


def test_ap_constant_cocycle_blocks():
    z = SpectralPoint(0.0)
    length, m = 8, 6
    block = ScaledMat2.identity()
    for _ in range(length):
        block = szego_step(0.5, z) @ block
    mu = float(np.exp(block.log_norm()))
    rep = ap_check([block] * m, mu, 10.0)
    assert rep.hyp1_ok and rep.hyp2_ok
    assert rep.residual <= rep.bound


def test_ap_detects_broken_second_hypothesis():
    # expanding directions rotated to cross: the pair product has norm 1 while
    # each factor has norm mu, so the pairwise-alignment hypothesis fails
    mu = 50.0
    stretch = np.diag([mu, 1 / mu]).astype(complex)
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    a1 = ScaledMat2(rot @ stretch)
    a2 = ScaledMat2(stretch)
    assert abs(np.exp(ScaledMat2(a2.mat @ a1.mat, a2.log_scale + a1.log_scale).log_norm()) - 1.0) < 1e-9
    rep = ap_check([a1, a2], mu, 10.0)
    assert rep.hyp1_ok
    assert not rep.hyp2_ok
    assert not rep.within_bound


def test_ap_rejects_nonunimodular():
    good = ScaledMat2(np.diag([10.0, 0.1]).astype(complex))
    bad = ScaledMat2(np.diag([10.0, 0.2]).astype(complex))
    with pytest.raises(NotUnimodular):
        ap_check([good, bad], 10.0)


# -- rate table ----------------------------------------------------------------

def test_rate_table_zero_model():
    rows, coeff = rate_table(constant_alpha(0.0), OMEGA1, SpectralPoint(0.6), [10, 20, 40], 50, 1)
    assert all(abs(delta) < 1e-14 for _, delta in rows)
    assert abs(coeff) < 1e-14


def test_rate_table_constant_model():
    rows, _ = rate_table(constant_alpha(0.5), OMEGA1, SpectralPoint(0.0), [10, 20, 40, 80], 20, 5)
    for est, delta in rows:
        assert abs(est.mean - LOG_SQRT3) < 1e-12
        assert abs(delta) < 1e-12


def test_rate_table_monotone_strong_model():
    alpha = builtin_model("strong2d")
    rows, _ = rate_table(alpha, OMEGA2, SpectralPoint(1.6), [25, 50, 100, 200], 400, 9)
    for (small, _), (big, _) in zip(rows, rows[1:]):
        assert big.mean <= small.mean + 3 * small.stderr


def test_rate_table_rejects_unsorted():
    with pytest.raises(ValueError):
        rate_table(constant_alpha(0.0), OMEGA1, SpectralPoint(0.0), [10, 10], 5, 0)
