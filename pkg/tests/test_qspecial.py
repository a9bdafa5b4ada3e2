import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shs6v import qspecial as qs


def test_pochhammer_cases():
    # empty product
    assert qs.q_pochhammer(0.7, 2.0, 0) == 1.0
    # direct product: (1-2)(1-6) = 5
    assert qs.q_pochhammer(2.0, 3.0, 2) == pytest.approx(5.0, abs=1e-14)
    # negative order is the reciprocal form
    v = qs.q_pochhammer(0.3, 2.0, -2)
    assert v == pytest.approx(1.0 / ((1 - 0.3 / 4) * (1 - 0.3 / 2)), rel=1e-14)


def test_pochhammer_reciprocity():
    # (a;q)_{-n} * (a q^-n; q)_n = 1
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = float(rng.uniform(-3, 3))
        q = float(rng.uniform(1.1, 3.0))
        n = int(rng.integers(1, 6))
        lhs = qs.q_pochhammer(a, q, -n) * qs.q_pochhammer(a * q**-n, q, n)
        assert lhs == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-2, 2), q=st.floats(1.05, 3.0),
       m=st.integers(-5, 5), n=st.integers(-5, 5))
def test_pochhammer_concatenation(a, q, m, n):
    # (a;q)_{m+n} = (a;q)_m (a q^m; q)_n whenever all factors are regular;
    # skip draws with a near-vanishing factor, where the finite-precision
    # comparison is ill-conditioned
    if min(abs(1.0 - a * q**j) for j in range(-10, 10)) < 1e-3:
        return
    try:
        lhs = qs.q_pochhammer(a, q, m + n)
        rhs = qs.q_pochhammer(a, q, m) * qs.q_pochhammer(a * q**m, q, n)
    except ZeroDivisionError:
        return
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_pochhammer_pole_raises():
    # a q^(n+k) = 1 for some k in the reciprocal branch
    with pytest.raises(ZeroDivisionError):
        qs.q_pochhammer(2.0, 2.0, -1)


def test_q_bracket_values():
    for q in (1.3, 2.0, 7.5):
        assert qs.q_bracket(1, q) == pytest.approx(1.0)
    assert qs.q_bracket(2, 2.0) == pytest.approx(2.5)
    assert qs.q_bracket(3, 1) == 3
    # q -> 1 limit approached continuously
    assert qs.q_bracket(4, 1.0000001) == pytest.approx(4.0, abs=1e-5)


def test_q_binomial():
    assert qs.q_binomial(4, 2, 1.7) == pytest.approx(
        qs.q_factorial(4, 1.7) / qs.q_factorial(2, 1.7) ** 2)
    assert qs.q_binomial(3, 5, 2.0) == 0


def naive_reg_4phi3(n, a, b, q, z):
    """Independent double-loop oracle: products built term by term."""
    total = 0.0
    for k in range(n + 1):
        t = z**k
        for i in range(k):
            t *= (1 - q**-n * q**i) / (1 - q * q**i)
        for ai in a:
            for i in range(k):
                t *= 1 - ai * q**i
        for bi in b:
            for i in range(n - k):
                t *= 1 - bi * q**k * q**i
        total += t
    return total


def test_reg_4phi3_n0_is_one():
    assert qs.reg_4phi3(0, (2.0, 3.0, 4.0), (5.0, 6.0, 7.0), 2.0, 1.0) == 1.0


def test_reg_4phi3_n1_spot():
    q, a, b = 2.0, (2.0, 3.0, 4.0), (5.0, 6.0, 7.0)
    got = qs.reg_4phi3(1, a, b, q, 1.0)
    want = naive_reg_4phi3(1, a, b, q, 1.0)
    assert got == pytest.approx(want, rel=1e-13)


def test_reg_4phi3_vs_naive_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(0, 7))
        q = float(rng.uniform(1.1, 2.5))
        a = tuple(rng.uniform(-2, 2, 3))
        b = tuple(rng.uniform(-2, 2, 3))
        z = float(rng.uniform(-2, 2))
        got = qs.reg_4phi3(n, a, b, q, z)
        want = naive_reg_4phi3(n, a, b, q, z)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_q_binomial_identity_grid():
    # finite sum equals the telescoped product over a (q, I, z) grid
    for q in (1.2, 1.7, 2.5, 4.0):
        for I in (1, 2, 3, 5):
            nu = q**-I
            for z in (-1.5, -0.3, 0.2, 0.7, 3.0):
                s = qs.q_binomial_series(nu, q, z, I)
                t = qs.q_binomial_telescoped(nu, q, z, I)
                assert s == pytest.approx(t, rel=1e-11, abs=1e-11)


def test_extended_precision_path():
    import mpmath as mp

    got = qs.with_extended(qs.q_pochhammer, 0.35, 1.75, 5, dps=40)
    with mp.workdps(40):
        want = qs.q_pochhammer(mp.mpf(0.35), mp.mpf(1.75), 5)
        assert mp.almosteq(got, want)
    # duck typing: the double path agrees with the extended one
    assert float(got) == pytest.approx(qs.q_pochhammer(0.35, 1.75, 5), rel=1e-14)
