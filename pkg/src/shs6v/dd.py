"""Vectorized double-double (~31 significant digits) real and complex
arithmetic over numpy arrays.

The contour quadratures extract Laurent coefficients whose absolute error
scales like eps * R**|exponent|; double precision cannot deliver the
acceptance tolerances at the exponent ranges the pair kernel needs, so the
quadrature engine runs on these compensated types.  Only rational operations
and integer powers are required by the integrands; the one transcendental
need, roots of unity, is built from an exact-argument Taylor expansion so
node phases are accurate to ~1e-32.

Algorithms are the standard error-free transforms (Dekker split, Knuth
two-sum); mpmath serves as the correctness oracle in the test suite.
"""

from __future__ import annotations

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1

# pi to double-double precision
PI_HI = 3.141592653589793
PI_LO = 1.2246467991473532e-16


def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _quick_two_sum(a, b):
    # requires |a| >= |b| elementwise
    s = a + b
    err = b - (s - a)
    return s, err


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


class DD:
    """A double-double scalar or ndarray: value = hi + lo."""

    __slots__ = ("hi", "lo")

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        self.lo = (np.zeros_like(self.hi) if lo is None
                   else np.asarray(lo, dtype=np.float64))

    @staticmethod
    def zeros(shape):
        return DD(np.zeros(shape), np.zeros(shape))

    def copy(self):
        return DD(self.hi.copy(), self.lo.copy())

    def to_float(self):
        return self.hi + self.lo

    def __add__(self, other):
        if not isinstance(other, DD):
            other = DD(other)
        s1, s2 = _two_sum(self.hi, other.hi)
        t1, t2 = _two_sum(self.lo, other.lo)
        s2 = s2 + t1
        s1, s2 = _quick_two_sum(s1, s2)
        s2 = s2 + t2
        s1, s2 = _quick_two_sum(s1, s2)
        return DD(s1, s2)

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __sub__(self, other):
        if not isinstance(other, DD):
            other = DD(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, DD):
            other = DD(other)
        p1, p2 = _two_prod(self.hi, other.hi)
        p2 = p2 + (self.hi * other.lo + self.lo * other.hi)
        p1, p2 = _quick_two_sum(p1, p2)
        return DD(p1, p2)

    def __truediv__(self, other):
        if not isinstance(other, DD):
            other = DD(other)
        q1 = self.hi / other.hi
        r = self - other * DD(q1)
        q2 = r.hi / other.hi
        r = r - other * DD(q2)
        q3 = r.hi / other.hi
        s1, s2 = _quick_two_sum(q1, q2)
        s2 = s2 + q3
        s1, s2 = _quick_two_sum(s1, s2)
        return DD(s1, s2)

    __radd__ = __add__

    def __rsub__(self, other):
        return DD(other) - self

    __rmul__ = __mul__

    def __rtruediv__(self, other):
        return DD(other) / self

    def __getitem__(self, idx):
        return DD(self.hi[idx], self.lo[idx])

    @property
    def shape(self):
        return self.hi.shape


class DDC:
    """A double-double complex scalar or ndarray."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        self.re = re if isinstance(re, DD) else DD(re)
        self.im = (im if isinstance(im, DD) else
                   DD(im) if im is not None else DD.zeros(self.re.shape))

    @staticmethod
    def from_complex(z):
        z = np.asarray(z, dtype=np.complex128)
        return DDC(DD(z.real.copy()), DD(z.imag.copy()))

    @staticmethod
    def ones(shape):
        return DDC(DD(np.ones(shape)), DD(np.zeros(shape)))

    def to_complex(self):
        return self.re.to_float() + 1j * self.im.to_float()

    def __add__(self, other):
        other = _as_ddc(other)
        return DDC(self.re + other.re, self.im + other.im)

    def __neg__(self):
        return DDC(-self.re, -self.im)

    def __sub__(self, other):
        other = _as_ddc(other)
        return DDC(self.re - other.re, self.im - other.im)

    def __mul__(self, other):
        other = _as_ddc(other)
        return DDC(self.re * other.re - self.im * other.im,
                   self.re * other.im + self.im * other.re)

    def __truediv__(self, other):
        other = _as_ddc(other)
        den = other.re * other.re + other.im * other.im
        re = (self.re * other.re + self.im * other.im) / den
        im = (self.im * other.re - self.re * other.im) / den
        return DDC(re, im)

    __radd__ = __add__

    def __rsub__(self, other):
        return _as_ddc(other) - self

    __rmul__ = __mul__

    def __rtruediv__(self, other):
        return _as_ddc(other) / self

    def __getitem__(self, idx):
        return DDC(self.re[idx], self.im[idx])

    @property
    def shape(self):
        return self.re.shape

    def abs2_float(self):
        """|z|^2 rounded to double; used for pole-distance checks only."""
        return (self.re * self.re + self.im * self.im).to_float()


def _as_ddc(x):
    if isinstance(x, DDC):
        return x
    if isinstance(x, DD):
        return DDC(x)
    if isinstance(x, complex) or (isinstance(x, np.ndarray)
                                  and np.iscomplexobj(x)):
        return DDC.from_complex(x)
    return DDC(DD(x))


_TRIG_TERMS = 24


def _trig_coeffs():
    """Double-double Taylor coefficients (-1)^k/(2k+1)! and (-1)^k/(2k)!,
    built by exact-integer divisions so both limbs are meaningful."""
    sin_c = [DD(np.float64(1.0))]
    cos_c = [DD(np.float64(1.0))]
    for k in range(1, _TRIG_TERMS + 1):
        sin_c.append(sin_c[-1] / float(2 * k * (2 * k + 1)) * -1.0)
        cos_c.append(cos_c[-1] / float((2 * k - 1) * 2 * k) * -1.0)
    return sin_c, cos_c


_SIN_C, _COS_C = None, None


def _dd_sincos_reduced(x: DD):
    """sin and cos of a DD array with entries in [0, pi/2], by Taylor series
    with double-double coefficients (x**(2k)/(2k)! < 1e-36 at pi/2 for the
    chosen order)."""
    global _SIN_C, _COS_C
    if _SIN_C is None:
        _SIN_C, _COS_C = _trig_coeffs()
    x2 = x * x
    sin_acc = DD(np.zeros(x.shape))
    cos_acc = DD(np.zeros(x.shape))
    for k in range(_TRIG_TERMS, -1, -1):
        sin_acc = sin_acc * x2 + _SIN_C[k]
        cos_acc = cos_acc * x2 + _COS_C[k]
    return x * sin_acc, cos_acc


def roots_of_unity(n: int):
    """exp(2*pi*i*j/n) for j = 0..n-1 as a DDC array, phases good to ~1e-32.

    Each angle is reduced exactly by quadrant (n is required to be a multiple
    of 4) before the Taylor evaluation; no repeated multiplication is used,
    so there is no error accumulation in j.
    """
    if n % 4 != 0:
        raise ValueError("roots_of_unity wants n divisible by 4")
    j = np.arange(n)
    quad = (4 * j) // n
    jr = j - quad * (n // 4)  # residual index within the quadrant
    # theta_r = (pi/2) * (4*jr/n) computed in dd: pi * (2*jr) / n
    half_pi = DD(np.full(n, PI_HI / 2), np.full(n, PI_LO / 2))
    frac = DD(4.0 * jr) / DD(float(n))
    theta = half_pi * frac
    s, c = _dd_sincos_reduced(theta)
    # rotate by the quadrant: (c, s) * i^quad
    re = DD(np.where(quad == 0, c.hi, np.where(quad == 1, -s.hi,
            np.where(quad == 2, -c.hi, s.hi))),
            np.where(quad == 0, c.lo, np.where(quad == 1, -s.lo,
            np.where(quad == 2, -c.lo, s.lo))))
    im = DD(np.where(quad == 0, s.hi, np.where(quad == 1, c.hi,
            np.where(quad == 2, -s.hi, -c.hi))),
            np.where(quad == 0, s.lo, np.where(quad == 1, c.lo,
            np.where(quad == 2, -s.lo, -c.lo))))
    return DDC(re, im)


def ddc_power_table(z: DDC, lo: int, hi: int):
    """{m: z**m} for integer m in [lo, hi], built by successive multiplies."""
    out = {0: DDC.ones(z.shape)}
    acc = DDC.ones(z.shape)
    for m in range(1, hi + 1):
        acc = acc * z
        out[m] = acc
    if lo < 0:
        inv = DDC.ones(z.shape) / z
        acc = DDC.ones(z.shape)
        for m in range(1, -lo + 1):
            acc = acc * inv
            out[-m] = acc
    return {m: v for m, v in out.items() if lo <= m <= hi}


def ddc_sum(z: DDC, axis: int):
    """Sum of a DDC array along one axis by pairwise halving (log-depth,
    fully vectorized; odd tails are peeled off and folded back at the end)."""
    cur = z
    tails = []
    nd = len(z.shape)
    while cur.shape[axis] > 1:
        n = cur.shape[axis]
        if n % 2:
            last = [slice(None)] * nd
            last[axis] = n - 1
            tails.append(cur[tuple(last)])
            n -= 1
        half = n // 2
        lo = [slice(None)] * nd
        hi = [slice(None)] * nd
        lo[axis] = slice(0, half)
        hi[axis] = slice(half, n)
        cur = cur[tuple(lo)] + cur[tuple(hi)]
    idx = [slice(None)] * nd
    idx[axis] = 0
    out = cur[tuple(idx)]
    for t in tails:
        out = out + t
    return out
