"""q-deformed arithmetic: Pochhammer symbols, symmetric q-integers and the
regularized terminating basic hypergeometric sum behind the general vertex
weight.

Everything here is written in plain Python arithmetic on purpose: the same
code runs on floats, complex numbers and mpmath types, so an extended
precision evaluation is just a matter of passing mpmath inputs (see
:func:`with_extended`).  All products are multiplicative recursions; no logs
are taken, so signs survive q > 1 where individual factors alternate.
"""

from __future__ import annotations

from typing import Sequence


def q_pochhammer(a, q, n: int):
    """(a; q)_n for any integer n.

    n > 0: prod_{i=1..n} (1 - a q^(i-1));  n = 0: 1;
    n < 0: prod_{k=0..-n-1} (1 - a q^(n+k))^(-1).

    Raises ZeroDivisionError when a reciprocal factor vanishes; callers in
    the kernel code treat that as a pole/contour collision signal.
    """
    one = 1 + 0 * (a + q)  # unit in the operand type
    if n == 0:
        return one
    if n > 0:
        out = one
        f = a
        for _ in range(n):
            out = out * (1 - f)
            f = f * q
        return out
    # n < 0: reciprocal product starting at a*q^n
    out = one
    f = a * q**n
    for _ in range(-n):
        factor = 1 - f
        if factor == 0:
            raise ZeroDivisionError(
                f"q_pochhammer pole: (1 - a q^k) = 0 for a={a}, q={q}, n={n}"
            )
        out = out / factor
        f = f * q
    return out


def q_bracket(n: int, q):
    """Symmetric q-integer [n]_q = (q^n - q^-n)/(q - q^-1); [n]_1 = n."""
    if q == 1:
        return n
    return (q**n - q ** (-n)) / (q - 1 / q)


def q_factorial(n: int, q):
    """[n]_q! = [1]_q [2]_q ... [n]_q."""
    if n < 0:
        raise ValueError(f"q_factorial of negative n={n}")
    out = 1 + 0 * q
    for i in range(1, n + 1):
        out = out * q_bracket(i, q)
    return out


def q_binomial(n: int, k: int, q):
    """Symmetric q-binomial [n choose k]_q."""
    if k < 0 or k > n:
        return 0 * q
    return q_factorial(n, q) / (q_factorial(k, q) * q_factorial(n - k, q))


def reg_4phi3(n: int, a: Sequence, b: Sequence, q, z):
    """Regularized terminating series with three upper and three lower
    parameters:

        sum_{k=0}^{n} z^k (q^-n; q)_k / (q; q)_k
                      * prod_i (a_i; q)_k (b_i q^k; q)_{n-k}.

    Terms are built by multiplicative recursion; when a ratio denominator
    vanishes the affected term is recomputed from scratch (zero factors are
    legitimate there, only the recursion shortcut breaks).
    """
    if n < 0:
        raise ValueError(f"reg_4phi3 needs n >= 0, got {n}")
    if len(a) != 3 or len(b) != 3:
        raise ValueError("reg_4phi3 expects exactly three a's and three b's")

    def term(k: int):
        t = z**k * q_pochhammer(q ** (-n), q, k) / q_pochhammer(q, q, k)
        for ai in a:
            t = t * q_pochhammer(ai, q, k)
        for bi in b:
            t = t * q_pochhammer(bi * q**k, q, n - k)
        return t

    total = term(0)
    t = total
    for k in range(n):
        # ratio term(k+1)/term(k); the shortcut is abandoned (and the term
        # rebuilt from scratch) when a ratio denominator is at or near zero,
        # where division would amplify the roundoff of an almost-vanishing
        # factor such as (1 - q^-m q^m)
        num = z * (1 - q ** (k - n))
        den = 1 - q ** (k + 1)
        ok = t != 0
        if ok:
            for ai, bi in zip(a, b):
                num = num * (1 - ai * q**k)
                dfac = 1 - bi * q**k
                if abs(dfac) < 1e-6:
                    ok = False
                    break
                den = den * dfac
        if ok:
            t = t * num / den
        else:
            t = term(k + 1)
        total = total + t
    return total


def q_binomial_series(nu, q, z, I: int):
    """sum_{n=0}^{I} (nu; q)_n / (q; q)_n * z^n, evaluated termwise.

    With nu = q**(-I) this finite sum telescopes to the product
    prod_{k=0}^{I-1} (1 - nu z q^k): the ratio of the two infinite
    Pochhammers in the textbook statement collapses to the I leftover
    factors, which is the only form that makes sense for q > 1 (the
    infinite products themselves diverge termwise there).
    """
    out = 1 + 0 * (q + z)
    t = out
    for n in range(I):
        t = t * z * (1 - nu * q**n) / (1 - q ** (n + 1))
        out = out + t
    return out


def q_binomial_telescoped(nu, q, z, I: int):
    """prod_{k=0}^{I-1} (1 - nu z q^k), the telescoped right side of the
    finite q-binomial identity at nu = q**(-I)."""
    out = 1 + 0 * (q + z)
    f = nu * z
    for _ in range(I):
        out = out * (1 - f)
        f = f * q
    return out


def with_extended(fn, *args, dps: int = 34, **kwargs):
    """Re-run a q-special evaluation in mpmath arbitrary precision.

    Floats among the positional arguments are promoted to mp floats; the
    result is returned as an mpmath value.  Used as a cross-check oracle for
    the double-precision paths.
    """
    import mpmath as mp

    with mp.workdps(dps):
        conv = [mp.mpf(x) if isinstance(x, float) else x for x in args]
        return fn(*conv, **kwargs)
