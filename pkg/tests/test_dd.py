import mpmath as mp
import numpy as np
import pytest

from shs6v import dd


def _to_mp(x: dd.DD):
    return mp.mpf(float(np.asarray(x.hi).ravel()[0])) + \
        mp.mpf(float(np.asarray(x.lo).ravel()[0]))


@pytest.mark.parametrize("op", ["add", "mul", "div"])
def test_dd_ops_vs_mpmath(op):
    rng = np.random.default_rng(1)
    with mp.workdps(50):
        for _ in range(300):
            a_hi = rng.normal()
            a_lo = a_hi * 1e-17 * rng.normal()
            b_hi = rng.normal() or 0.5
            b_lo = b_hi * 1e-17 * rng.normal()
            A = dd.DD(np.float64(a_hi), np.float64(a_lo))
            B = dd.DD(np.float64(b_hi), np.float64(b_lo))
            am, bm = mp.mpf(a_hi) + mp.mpf(a_lo), mp.mpf(b_hi) + mp.mpf(b_lo)
            if op == "add":
                got, want = _to_mp(A + B), am + bm
            elif op == "mul":
                got, want = _to_mp(A * B), am * bm
            else:
                got, want = _to_mp(A / B), am / bm
            assert abs(got - want) <= mp.mpf(1e-30) * max(1, abs(want))


def test_roots_of_unity_accuracy():
    n = 256
    ru = dd.roots_of_unity(n)
    with mp.workdps(50):
        for j in (0, 1, 31, 64, 65, 128, 200, 255):
            th = 2 * mp.pi * j / n
            er = abs(_to_mp(ru.re[j]) - mp.cos(th))
            ei = abs(_to_mp(ru.im[j]) - mp.sin(th))
            assert max(er, ei) < mp.mpf(1e-31)


def test_power_table():
    z = dd.DDC.from_complex(np.array([1.7 * np.exp(1j * 0.3)]))
    tab = dd.ddc_power_table(z, -12, 12)
    zc = complex(1.7 * np.exp(1j * 0.3))
    with mp.workdps(50):
        zm = mp.mpc(zc.real, zc.imag)
        for m in (-12, -3, 0, 5, 12):
            got = mp.mpc(_to_mp(tab[m].re), 0) + mp.mpc(0, 1) * _to_mp(tab[m].im)
            # both limbs carry information: ~31 digits with a few ulps per
            # multiply in the chain
            assert abs(got - zm**m) < mp.mpf(1e-29) * abs(zm**m)


def test_pairwise_sum():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(37, 5))
    z = dd.DDC(dd.DD(x), dd.DD(np.zeros_like(x)))
    s = dd.ddc_sum(z, axis=0)
    assert np.allclose(s.re.to_float(), x.sum(axis=0), atol=1e-12)
    # compensated: summing 1 + 1e-20 * ones recovers the tiny part
    tiny = dd.DDC(dd.DD(np.full(1000, 1e-20)), dd.DD(np.zeros(1000)))
    tot = dd.ddc_sum(tiny + dd.DDC.from_complex(np.zeros(1000)), axis=0)
    assert tot.re.to_float() == pytest.approx(1e-17, rel=1e-10)
