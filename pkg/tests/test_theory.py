import itertools
import math

import mpmath
import numpy as np
import pytest

from oracles import kappa_brute, random_basis, ric_brute
from reprocs.theory import (
    MAX_SUBSETS,
    TheoryConstants,
    alpha_add,
    alpha_del,
    cluster_condition,
    f_dec,
    f_inc,
    k_of_zeta,
    kappa_s,
    ric_delta_s,
    small_f_condition,
    xi0,
    zeta_cap,
    zeta_plus_sequence,
)

mpmath.mp.dps = 50


def test_k_of_zeta_examples():
    assert k_of_zeta(1.0, 1) == 1
    assert k_of_zeta(0.6, 1) == 2
    assert k_of_zeta(1e-4, 1) == 20
    exact = mpmath.ceil(mpmath.log(mpmath.mpf("6e-5")) / mpmath.log(mpmath.mpf("0.6")))
    assert int(exact) == 20


def test_k_of_zeta_matches_high_precision_grid():
    for c in (1, 2, 5):
        for zeta in (1e-2, 3.3e-4, 1e-6, 2.5e-9):
            ref = mpmath.ceil(mpmath.log(mpmath.mpf(0.6) * c * mpmath.mpf(zeta)) / mpmath.log(mpmath.mpf(0.6)))
            assert k_of_zeta(zeta, c) == max(1, int(ref))


def test_k_of_zeta_rejects_nonpositive():
    with pytest.raises(ValueError):
        k_of_zeta(0.0, 1)


def test_xi0_examples():
    assert xi0(0.0, 4, 10, 1.5) == pytest.approx(2 * 1.5)
    assert xi0(0.01, 0, 25, 3.0) == pytest.approx(0.1 * 5)
    assert xi0(1e-6, 1, 38, 1.0) == pytest.approx(1 + 1e-3 * (math.sqrt(38) + 1), abs=1e-12)
    assert xi0(1e-6, 1, 38, 1.0) == pytest.approx(1.007164, abs=5e-7)


def _alpha_add_mp(zeta, K, J, n, c, gn, gs, lm):
    z, lm = mpmath.mpf(zeta), mpmath.mpf(lm)
    log_term = mpmath.log(6 * K * J) + 11 * mpmath.log(n)
    tail = max(
        min(mpmath.mpf("1.2") ** (4 * K) * mpmath.mpf(gn) ** 4, mpmath.mpf(gs) ** 4),
        mpmath.mpf(16) / c**2,
        4 * (mpmath.mpf("0.186") * gn**2 + mpmath.mpf("0.0034") * gn + mpmath.mpf("2.3")) ** 2,
    )
    return int(mpmath.ceil(log_term * 8 * 24**2 / (z**2 * lm**2) * tail))


def _same_integer(got, ref):
    # above 2**50 a double cannot resolve the fractional part being rounded up
    if ref < 2**50:
        assert got == ref
    else:
        assert abs(got - ref) <= 1e-14 * ref


def test_alpha_add_high_precision_oracle():
    args = dict(zeta=1e-3, K=2, J=1, n=256, c=1, gamma_new=1.0, gamma_star=2.0, lambda_minus=1.0)
    assert alpha_add(**args) == _alpha_add_mp(1e-3, 2, 1, 256, 1, 1.0, 2.0, 1.0)
    for zeta, K, gn in [(1e-2, 5, 3.0), (5e-4, 7, 0.5), (2e-3, 1, 10.0)]:
        got = alpha_add(zeta, K, 2, 1000, 2, gn, 20.0, 0.7)
        ref = _alpha_add_mp(zeta, K, 2, 1000, 2, gn, 20.0, 0.7)
        _same_integer(got, ref)


def test_alpha_add_simplified_dominates():
    for gs in (2.5, 10.0, 400.0):
        for gn in (0.5, 1.0, 2.0):
            for K in (1, 4, 20):
                args = (1e-3, K, 2, 512, 1, gn, gs, 0.5)
                assert alpha_add(*args, simplified=True) >= alpha_add(*args)


def test_alpha_add_decreasing_in_zeta_and_lambda():
    zetas = [1e-4, 3e-4, 1e-3, 3e-3]
    vals = [alpha_add(z, 3, 2, 256, 1, 1.0, 5.0, 1.0) for z in zetas]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    lams = [0.1, 0.5, 1.0, 4.0]
    vals = [alpha_add(1e-3, 3, 2, 256, 1, 1.0, 5.0, lm) for lm in lams]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def _alpha_del_mp(zeta, vt, J, n, r, gs, lm, phi=mpmath.mpf("1.1732")):
    z = mpmath.mpf(zeta)
    b7 = (mpmath.sqrt(r) * gs + phi * mpmath.sqrt(z)) ** 2
    log_term = mpmath.log(6 * vt * J) + 11 * mpmath.log(n)
    return int(mpmath.ceil(log_term * 800 / (z * lm) ** 2 * max(mpmath.mpf("4.2") ** 2, 4 * b7**2)))


def test_alpha_del_oracle_and_monotonicity():
    _same_integer(alpha_del(1e-3, 3, 2, 256, 10, 2.0, 1.0), _alpha_del_mp(1e-3, 3, 2, 256, 10, 2.0, 1.0))
    _same_integer(alpha_del(1e-2, 1, 1, 64, 1, 0.1, 0.5), _alpha_del_mp(1e-2, 1, 1, 64, 1, 0.1, 0.5))
    vals = [alpha_del(z, 3, 2, 256, 10, 2.0, 1.0) for z in (1e-4, 1e-3, 1e-2)]
    assert vals[0] > vals[1] > vals[2]
    vals = [alpha_del(1e-3, 3, 2, 256, 10, 2.0, lm) for lm in (0.1, 1.0, 10.0)]
    assert vals[0] > vals[1] > vals[2]


def test_calculators_reject_bad_inputs():
    with pytest.raises(ValueError):
        alpha_add(0, 1, 1, 10, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        alpha_del(1e-3, 0, 1, 10, 1, 1, 1)
    with pytest.raises(ValueError):
        xi0(-1, 1, 1, 1)


def test_zeta_cap_terms():
    assert zeta_cap(10, 1.0) == pytest.approx(1e-6)
    assert zeta_cap(10, 1e5) == pytest.approx(1.5e-4 / (100 * 1e5))
    assert zeta_cap(10, 1.0, gamma_star=400) == pytest.approx(1 / (1000 * 400**2))


def test_zeta_sequence_basic():
    cst = TheoryConstants(zeta=zeta_cap(10, 100), r=10, c=1, f=100)
    seq = zeta_plus_sequence(cst)
    assert seq[0] == 1.0
    assert len(seq) == k_of_zeta(cst.zeta, 1) + 1
    assert seq[1] < 0.5985
    assert all(a >= b for a, b in zip(seq.values, seq.values[1:]))
    assert cst.admissible()


def test_zeta_sequence_negative_denominator_names_k():
    cst = TheoryConstants(zeta=1e-3, r=10, c=1, f=1e5, r0=100, kappa_s_plus=0.9)
    with pytest.raises(ValueError, match="k=1"):
        zeta_plus_sequence(cst)


def test_zeta_sequence_independent_recursion():
    # second evaluation of the recursion in mpmath
    r, c, f = 40, 5, 1e5
    zeta = zeta_cap(r, f)
    cst = TheoryConstants(zeta=zeta, r=r, c=c, f=f)
    seq = zeta_plus_sequence(cst)
    z, kap, phi, g = (mpmath.mpf(v) for v in (zeta, 0.15, 1.1735, math.sqrt(2)))
    zs = r * z
    root = mpmath.sqrt(1 - zs**2)
    C = 2 * kap * phi / root + phi
    Cp = phi**2 + 2 * phi / root + 1 + phi + kap * phi / root + kap * phi**2 / root
    Ct = phi**2 + kap * phi**2 / root
    prev = mpmath.mpf(1)
    for k in range(1, len(seq)):
        b = C * kap * g * prev + Ct * kap**2 * g * prev**2 + Cp * f * zs**2
        prev = (b + c * z / 8) / (1 - zs**2 - zs**2 * f - c * z / 8 - b)
        assert seq[k] == pytest.approx(float(prev), rel=1e-12)


def test_f_inc_f_dec_monotone():
    args = dict(kappa_se=0.15, kappa_sd=0.3, r=10, c=1, zeta=1e-6, f=100)
    grid = [0.0, 0.1, 0.5, 1.0, 2.0, 7.2]
    for g, g2 in zip(grid, grid[1:]):
        for h in (0.0, 0.2, 0.34):
            assert f_inc(g, h, **args) <= f_inc(g2, h, **args)
            assert f_dec(g, h, **args) >= f_dec(g2, h, **args)
    for h, h2 in zip(grid[:3], grid[1:4]):
        assert f_inc(1.0, h, **args) <= f_inc(1.0, h2, **args)
        assert f_dec(1.0, h, **args) >= f_dec(1.0, h2, **args)


def test_f_inc_scripted_oracle():
    g, h, ke, kd, r, c, z, f, p = 2.0, 0.3, 0.15, 0.33, 12, 2, 1e-5, 50.0, 1.1732
    first = max(3 * ke * kd * p * g, ke * p * h)
    second = (ke * p + ke * (1 + 2 * p) * (r * z) ** 2 / math.sqrt(1 - (r * z) ** 2)) * h
    third = (r**2 / (r + c) * z + 4 * r * z * ke * p + 2 * (r + c) * z * (1 + ke**2) * p**2) * f
    ref = (r + c) * z * (first + second + third + 0.2 / (r + c))
    assert f_inc(g, h, ke, kd, r, c, z, f) == pytest.approx(ref, rel=1e-14)
    dec = 1 - h - 0.2 * z - r**2 * z**2 * f - r**2 * z**2 - ref
    assert f_dec(g, h, ke, kd, r, c, z, f) == pytest.approx(dec, rel=1e-14)


def test_small_f_condition_is_h_zero_cluster_form():
    ke, ks, r, c, z = 0.15, 0.3, 10, 1, 1e-6
    for f in (1.5, 3.0, 30.0, 1e4):
        kd = ks + r * z
        inc = f_inc(f, 0.0, ke, kd, r, c, z, f)
        dec = f_dec(f, 0.0, ke, kd, r, c, z, f)
        assert small_f_condition(r, ke, ks, r, c, z, f) == (inc <= dec * r * z)
    # the cluster condition with one cluster (c_min = r_j, g = f, h = 0) is the strict form
    assert cluster_condition(1.5, 0.0, r, ke, ks, r, c, z, 1.5) == (
        f_dec(1.5, 0, ke, ks + r * z, r, c, z, 1.5) - f_inc(1.5, 0, ke, ks + r * z, r, c, z, 1.5) / (r * z) > 0
    )


def test_kappa_examples():
    e1 = np.zeros(20)
    e1[0] = 1
    for s in (1, 2, 5):
        assert kappa_s(e1, s) == pytest.approx(1.0)
    ones = np.ones(16) / 4
    for s in (1, 2, 3, 4):
        assert kappa_s(ones, s) == pytest.approx(math.sqrt(s / 16), abs=1e-12)
        assert kappa_s(ones, s, mode="bound") == pytest.approx(math.sqrt(s / 16), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_kappa_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    B = random_basis(rng, 10, int(rng.integers(1, 4)))
    for s in (1, 2, 3):
        assert kappa_s(B, s) == pytest.approx(kappa_brute(B, s), abs=1e-12)


def test_kappa_monotone_in_s_and_columns():
    rng = np.random.default_rng(11)
    for _ in range(10):
        B = random_basis(rng, 9, 3)
        ks = [kappa_s(B, s) for s in range(1, 5)]
        assert all(a <= b + 1e-12 for a, b in zip(ks, ks[1:]))
        for s in (1, 2, 3):
            assert kappa_s(B[:, :2], s) <= kappa_s(B, s) + 1e-12
            assert kappa_s(B, s) <= kappa_s(B, s, mode="bound") + 1e-12


def test_kappa_guard():
    with pytest.raises(ValueError, match="bound"):
        kappa_s(np.ones((200, 1)), 6)
    assert math.comb(200, 6) > MAX_SUBSETS
    assert kappa_s(np.ones((200, 1)), 6, mode="bound") == pytest.approx(math.sqrt(6 / 200))


def test_ric_examples():
    rng = np.random.default_rng(3)
    Q = random_basis(rng, 12, 5)
    assert ric_delta_s(Q, 3) == pytest.approx(0.0, abs=1e-12)
    for seed in range(4):
        Psi = np.random.default_rng(seed).standard_normal((8, 8)) / math.sqrt(8)
        assert ric_delta_s(Psi, 2) == pytest.approx(ric_brute(Psi, 2), abs=1e-12)


def test_ric_of_projector_is_kappa_squared():
    rng = np.random.default_rng(9)
    for _ in range(10):
        P = random_basis(rng, 10, 2)
        Phi = np.eye(10) - P @ P.T
        for s in (1, 2, 3):
            assert abs(ric_delta_s(Phi, s) - kappa_s(P, s) ** 2) <= 1e-10


def test_subset_guard_counts():
    # C(n, s) at the guard boundary is accepted by the enumerator
    n = next(n for n in itertools.count(10) if math.comb(n, 3) > MAX_SUBSETS) - 1
    assert math.comb(n, 3) <= MAX_SUBSETS
