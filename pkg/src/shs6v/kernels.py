"""Exact transition kernels by contour quadrature: the tilted one-particle
walk and its integral kernel, the two-particle reversed-process probability
(product term, coupled term and the analytic residue term), the tilted pair
kernel, and the steepest-descent contour diagnostics.

Numerical scheme.  After regrouping, every integrand is a rational function
times an integer power of z, so values are Laurent coefficients extracted by
the trapezoid rule on circles (which is a DFT and converges geometrically).
Extracting the coefficient of z^m on a circle of radius R amplifies roundoff
by R^max(m,0); the pair formula forces R a few units wide, so the pair
quadrature runs on double-double arithmetic (~1e-31) with per-query error
bounds, and an mpmath tier is available as a cross-check.  Fractional powers
never appear: the tilted lattice offsets cancel the z^mu(k) factors exactly,
and integrality of every exponent is asserted before quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import dd
from .errors import (DegenerateTilt, ParameterError, PoleOnContour,
                     QuadratureNotConverged)
from .params import ModelParams

INT_TOL = 1e-6
DD_EPS = 1e-30  # conservative per-op double-double roundoff scale


# ---------------------------------------------------------------------------
# tilted one-particle walk
# ---------------------------------------------------------------------------

def step_tilt(params: ModelParams, rho: float, k: int) -> Tuple[float, float]:
    """Normalizing and centering parameters (lambda(k), mu(k)) of the tilted
    walk at time k; both are J-periodic in k."""
    q, nu = params.q, params.nu
    a = params.alpha_t(k)
    qr = q**rho
    num = 1.0 + a - qr * (a + nu)
    den = 1.0 + a * q - qr * (a * q + nu)
    if den == 0.0 or num == 0.0:
        raise DegenerateTilt(f"tilt denominator vanished at k={k}")
    lam = num / den
    mu = a * (1.0 - q) * (1.0 - nu) * qr / (den * num)
    return lam, mu


class TiltFrame:
    """Per-step tilt parameters with cumulative products/sums.

    lam_hat(t) = prod_{k<t} lambda(k) (kept in log space), mu_hat(t) =
    sum_{k<t} mu(k); the drifting lattice at time t is Z - mu_hat(t).
    """

    def __init__(self, params: ModelParams, rho: float):
        if not (0.0 < rho < params.I):
            raise ParameterError(f"rho must lie in (0, {params.I})")
        self.params = params
        self.rho = rho
        J = params.J
        self.lam = np.array([step_tilt(params, rho, k)[0] for k in range(J)])
        self.mu = np.array([step_tilt(params, rho, k)[1] for k in range(J)])
        if np.any(self.lam <= 0):
            raise DegenerateTilt("negative tilt normalizer")
        self._loglam = np.log(self.lam)
        self._cum_loglam = np.concatenate([[0.0], np.cumsum(self._loglam)])
        self._cum_mu = np.concatenate([[0.0], np.cumsum(self.mu)])

    def lam_k(self, k: int) -> float:
        return float(self.lam[self.params.mod(k)])

    def mu_k(self, k: int) -> float:
        return float(self.mu[self.params.mod(k)])

    def log_lam_hat(self, t: int) -> float:
        J = self.params.J
        full, r = divmod(t, J)
        return full * float(self._cum_loglam[J]) + float(self._cum_loglam[r])

    def lam_hat_ratio(self, t: int, s: int) -> float:
        return math.exp(self.log_lam_hat(t) - self.log_lam_hat(s))

    def mu_hat(self, t: int) -> float:
        J = self.params.J
        full, r = divmod(t, J)
        return full * float(self._cum_mu[J]) + float(self._cum_mu[r])

    def lattice_coord(self, x: float, t: int) -> int:
        """Map x in the drifted lattice at time t to its integer label."""
        m = x + self.mu_hat(t)
        mi = round(m)
        if abs(m - mi) > INT_TOL:
            raise ParameterError(
                f"{x} is not on the drifted lattice at t={t} (offset {m - mi:.2e})")
        return int(mi)

    def lattice_point(self, n: int, t: int) -> float:
        return n - self.mu_hat(t)


def step_pmf(frame: TiltFrame, t: int, tail: float = 1e-18):
    """pmf of the tilted one-step displacement R(t), supported on
    {n - mu(t) : n >= 0}: returns (n values, probabilities, tail bound).

    n = 0 carries lambda(t)(1 + q alpha(t))/(1 + alpha(t)); n >= 1 carries
    lambda(t) * alpha(t)(1-q)/(1+alpha(t)) * (1-theta) theta^(n-1) q^(rho n).
    """
    p = frame.params
    q, nu = p.q, p.nu
    a = p.alpha_t(t)
    lam = frame.lam_k(t)
    theta = (nu + a) / (1.0 + a)
    ratio = theta * q**frame.rho
    if not (0.0 <= ratio < 1.0):
        raise ParameterError(f"tilted tail ratio {ratio} not in [0,1)")
    jump = lam * a * (1.0 - q) / (1.0 + a)
    head = lam * (1.0 + q * a) / (1.0 + a)
    probs = [head]
    term = jump * (1.0 - theta) / theta * ratio  # n = 1 value
    n = 1
    while term > tail * (1.0 - ratio) and n < 100000:
        probs.append(term)
        term *= ratio
        n += 1
    tail_bound = term / (1.0 - ratio)
    return np.arange(len(probs)), np.array(probs), tail_bound


# ---------------------------------------------------------------------------
# integrand families
# ---------------------------------------------------------------------------

class KernelFamily:
    """Coefficient pack for the kernel integrands.

    Each one-step factor is W_k(z) = (c1 z + c0)/(d1 z + d0); the pair
    coupling is F(z1, z2) = num/den with num = a00 + a01 z2 + a10 z1 +
    a11 z1 z2 and den the same with z1 and z2 swapped.  ``rho`` switches
    between the plain reversed-process kernel and the tilted one.
    """

    def __init__(self, params: ModelParams, rho: Optional[float] = None):
        self.params = params
        self.rho = rho
        q, nu = params.q, params.nu
        g = q ** (-rho) if rho is not None else 1.0
        self.g = g
        J = params.J
        self.w_coeffs = []
        for k in range(J):
            a = params.alpha_t(k)
            self.w_coeffs.append(((1.0 + a * q) * g, -(nu + a * q),
                                  (1.0 + a) * g, -(nu + a)))
        self.a00 = q * nu - nu
        self.a01 = (nu - q) * g
        self.a10 = (1.0 - q * nu) * g
        self.a11 = (q - 1.0) * g * g
        self.frame = TiltFrame(params, rho) if rho is not None else None

    def poles(self) -> np.ndarray:
        """Poles of the one-step factors: -d0/d1 per step."""
        return np.array([-d0 / d1 for (_, _, d1, d0) in self.w_coeffs])

    def B(self, z, t: int, s: int):
        """prod_{k=s}^{t-1} W_k(z) via period powers; works on complex
        arrays and on DDC arrays alike."""
        J = self.params.J
        full, r = divmod(t - s, J)
        one = (dd.DDC.ones(z.shape) if isinstance(z, dd.DDC)
               else np.ones(np.shape(z), dtype=complex))
        period = one
        for (c1, c0, d1, d0) in self.w_coeffs:
            period = period * ((z * c1 + c0) / (z * d1 + d0))
        out = _int_pow(period, full, one)
        for k in range(s + J * full, t):
            (c1, c0, d1, d0) = self.w_coeffs[self.params.mod(k)]
            out = out * ((z * c1 + c0) / (z * d1 + d0))
        return out

    def F(self, z1, z2):
        num = self.a00 + z2 * self.a01 + z1 * self.a10 + z1 * z2 * self.a11
        den = self.a00 + z1 * self.a01 + z2 * self.a10 + z1 * z2 * self.a11
        return num / den

    def s_map(self, z2):
        """z1 root of the coupling denominator for given z2."""
        return -(self.a00 + z2 * self.a10) / (self.a01 + z2 * self.a11)

    def p_map(self, z1):
        """z2 root of the coupling denominator for given z1 (inverse of
        s_map)."""
        return -(self.a00 + z1 * self.a01) / (self.a10 + z1 * self.a11)

    def residue_factor(self, z2):
        """Residue of F(., z2) in its first argument at s_map(z2):
        num(s(z2), z2) / d(den)/dz1."""
        s = self.s_map(z2)
        num = self.a00 + z2 * self.a01 + s * self.a10 + s * z2 * self.a11
        dden = self.a01 + z2 * self.a11
        return num / dden

    def tilt_scalar(self, t: int, s: int) -> float:
        if self.frame is None:
            return 1.0
        return self.frame.lam_hat_ratio(t, s)

    def drift(self, t: int, s: int) -> float:
        if self.frame is None:
            return 0.0
        return self.frame.mu_hat(t) - self.frame.mu_hat(s)

    def c_weight(self, equal: bool) -> float:
        q, nu = self.params.q, self.params.nu
        return (1.0 - q * nu) / ((1.0 + q) * (1.0 - nu)) if equal else 1.0


def _int_pow(base, n: int, one):
    out = one
    b = base
    k = n
    while k > 0:
        if k & 1:
            out = out * b
        b = b * b
        k >>= 1
    return out


def residue_F(z2: complex, params: ModelParams,
              rho: Optional[float] = None) -> complex:
    """Analytic residue factor of the pair coupling at its first-variable
    pole, as a plain complex number (the caller multiplies the remaining
    integrand factors)."""
    fam = KernelFamily(params, rho)
    return complex(fam.residue_factor(complex(z2)))


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

VALID_KINDS = ("circle", "shifted_circle", "clipped_shifted", "implicit_product")


@dataclass
class ContourSpec:
    """A quadrature contour: circles for kernel evaluation, shifted/clipped
    circles and the implicit product-modulus curve for diagnostics."""

    kind: str = "circle"
    radius: float = 1.0
    center: float = 0.0
    nodes: int = 256

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ParameterError(f"unknown contour kind {self.kind!r}")
        n = self.nodes
        if n < 64 or (n & (n - 1)) != 0:
            raise ParameterError("nodes must be a power of two, at least 64")


@dataclass
class KernelQuery:
    """A pair transition request: start pair (x1 <= x2) at time s' = s,
    target pair (y1 <= y2) at time t, on the plain or drifted lattice."""

    x1: float
    x2: float
    y1: float
    y2: float
    t: int
    s: int
    tilted: bool = False

    def __post_init__(self):
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ParameterError("pair coordinates must be ordered")
        if self.t < self.s:
            raise ParameterError("need t >= s")


def _pick_radius(fam: KernelFamily, t: int, s: int, exp_budget: int,
                 n_probe: int = 512) -> float:
    """Smallest circle radius R enclosing the rational poles with the
    coupling image s(C_R) strictly inside C_R, subject to the double-double
    error budget R**exp_budget * DD_EPS <= 1e-9.

    The admissibility sweep follows the 2 x max(1, poles, sup |s|) sizing
    rule, shrunk to the smallest valid radius so coefficient extraction
    stays within the precision budget.
    """
    poles = np.abs(fam.poles())
    r_lo = 1.05 * max(1.0, poles.max())
    r_cap = math.exp(math.log(1e-9 / DD_EPS) / max(exp_budget, 1))
    theta = np.linspace(0.0, 2 * np.pi, n_probe, endpoint=False)
    best = None
    for r in np.geomspace(r_lo, max(40.0, 2 * r_lo), 220):
        z = r * np.exp(1j * theta)
        s_img = fam.s_map(z)
        if np.any(~np.isfinite(s_img)):
            continue
        if np.abs(s_img).max() < 0.80 * r:
            best = 1.05 * r  # safety margin for the coarse probe
            break
    if best is None:
        raise PoleOnContour("no admissible contour radius found")
    if best > r_cap:
        raise QuadratureNotConverged(
            f"admissible radius {best:.3g} exceeds the precision budget cap "
            f"{r_cap:.3g} for exponent range {exp_budget}; reduce the query "
            f"range or use the mpmath tier")
    return best


def _dd_nodes(radius: float, n: int) -> dd.DDC:
    return dd.roots_of_unity(n) * dd.DDC(dd.DD(np.full(n, radius)))


# ---------------------------------------------------------------------------
# single-contour coefficients (one-particle kernel)
# ---------------------------------------------------------------------------

def _coeffs_single(fam: KernelFamily, t: int, s: int, m_lo: int, m_hi: int,
                   nodes: int, radius: Optional[float] = None) -> np.ndarray:
    """Laurent coefficients (1/N) sum B(z_j) z_j^m for m in [m_lo, m_hi],
    float64 path on a tight circle just outside the poles."""
    poles = np.abs(fam.poles())
    r = radius if radius is not None else max(1.2, 1.25 * poles.max())
    th = 2 * np.pi * np.arange(nodes) / nodes
    z = r * np.exp(1j * th)
    B = fam.B(z, t, s)
    out = np.empty(m_hi - m_lo + 1)
    # c_m = (1/N) sum B_j z_j^m = r^m * ifft-style sum
    phase = np.exp(1j * th)
    acc = B * phase**m_lo
    for i, m in enumerate(range(m_lo, m_hi + 1)):
        out[i] = (acc.mean()).real * r**m
        acc = acc * phase
    return out


def one_particle_kernel(params: ModelParams, t: int, s: int, x: float, *,
                        rho: Optional[float] = None, nodes: int = 64,
                        tol: float = 1e-11, max_nodes: int = 65536
                        ) -> Tuple[float, int]:
    """Kernel of the (tilted, when rho is given) one-particle walk: the
    probability of displacement x between times s and t, with node doubling
    until two successive evaluations agree to ``tol``.

    Returns (value, nodes_used)."""
    fam = KernelFamily(params, rho)
    mm = x + fam.drift(t, s)
    m = round(mm)
    if abs(mm - m) > INT_TOL:
        raise ParameterError(f"x={x} is not on the displacement lattice for (t,s)")
    scl = fam.tilt_scalar(t, s)
    prev = None
    n = nodes
    while n <= max_nodes:
        val = scl * float(_coeffs_single(fam, t, s, m, m, n)[0])
        if prev is not None and abs(val - prev) < tol:
            return val, n
        prev = val
        n *= 2
    raise QuadratureNotConverged(
        f"one-particle kernel did not stabilize below {tol} by {max_nodes} nodes")


def one_particle_coeffs(params: ModelParams, t: int, s: int,
                        m_lo: int, m_hi: int, *, rho: Optional[float] = None,
                        nodes: int = 512, tol: float = 1e-11) -> np.ndarray:
    """Batch of one-particle kernel values for integer lattice displacements
    m in [m_lo, m_hi] (tilted when rho is given), with a doubling check."""
    fam = KernelFamily(params, rho)
    scl = fam.tilt_scalar(t, s)
    a = _coeffs_single(fam, t, s, m_lo, m_hi, nodes)
    b = _coeffs_single(fam, t, s, m_lo, m_hi, 2 * nodes)
    if np.max(np.abs(a - b)) > tol:
        raise QuadratureNotConverged("single-contour coefficients not converged")
    return scl * b


# ---------------------------------------------------------------------------
# pair kernel (double-double quadrature)
# ---------------------------------------------------------------------------

class PairKernelBatch:
    """Evaluates the two-particle reversed kernel (or its tilted version)
    for many coordinate pairs at fixed (t, s).

    The kernel is c(y) * [T1 - T2 + T3]: a product of one-particle kernels,
    a coupled double integral, and the analytic residue of the coupled
    integrand at the first-variable pole of the coupling.  Coefficients for
    whole exponent ranges are extracted in one pass.
    """

    def __init__(self, params: ModelParams, t: int, s: int, *,
                 rho: Optional[float] = None,
                 a_range: Tuple[int, int] = (-24, 24),
                 b_range: Tuple[int, int] = (-24, 24),
                 m_range: Optional[Tuple[int, int]] = None,
                 nodes: int = 512, radius: Optional[float] = None,
                 conv_tol: float = 1e-11,
                 joint_budget: Optional[int] = None):
        if params.I < 2:
            raise ParameterError(
                "the two-particle integral kernel requires I >= 2 (the "
                "analytic continuation behind it fails at I = 1)")
        self.params = params
        self.fam = KernelFamily(params, rho)
        self.t, self.s = t, s
        self.a_range, self.b_range = a_range, b_range
        if m_range is None:
            m_range = (min(a_range[0], b_range[0]), max(a_range[1], b_range[1]))
        self.m_range = m_range
        # precision budget: roundoff scales like DD_EPS * R**(a+b) and the
        # pair exponents satisfy a + b = (x1+x2) - (y1+y2) + 2*drift, so the
        # joint bound is what matters (b <= a always)
        if joint_budget is None:
            joint_budget = max(a_range[1], 0) + max(b_range[1], 0)
        self.joint_budget = joint_budget
        self.radius = radius if radius is not None else _pick_radius(
            self.fam, t, s, joint_budget)
        self.nodes = nodes
        self.tilt2 = self.fam.tilt_scalar(t, s) ** 2
        self.drift = self.fam.drift(t, s)
        self.c_eq = self.fam.c_weight(True)
        n1 = max(512, nodes)
        t1a = _coeffs_single(self.fam, t, s, m_range[0], m_range[1], n1)
        t1b = _coeffs_single(self.fam, t, s, m_range[0], m_range[1], 2 * n1)
        if np.max(np.abs(t1a - t1b)) > conv_tol:
            raise QuadratureNotConverged("product-term coefficients not converged")
        self.T1 = t1b
        if nodes < 128:
            raise ParameterError("pair kernel needs at least 128 nodes")
        cA, errA = self._coupled(nodes // 2)
        cA2, errB = self._coupled(nodes)
        diff = np.max(np.abs(cA - cA2))
        if diff > conv_tol:
            cA3, errB = self._coupled(2 * nodes)
            diff = np.max(np.abs(cA2 - cA3))
            if diff > conv_tol:
                raise QuadratureNotConverged(
                    f"pair kernel coefficients moved {diff:.2e} under doubling")
            cA2 = cA3
        self.coupled = cA2  # T2 - T3, combined in double-double arithmetic
        self.quad_error = errB + diff

    def _coupled(self, n: int):
        fam = self.fam
        a_lo, a_hi = self.a_range
        b_lo, b_hi = self.b_range
        R = self.radius
        z = _dd_nodes(R, n)
        B = fam.B(z, self.t, self.s)
        zc = z.to_complex()
        # pole-on-contour guard: coupling image and rational poles
        s_img = fam.s_map(zc)
        for p in fam.poles():
            if np.min(np.abs(s_img - p)) < 1e-8:
                raise PoleOnContour("coupling image touches a kernel pole")
        if np.min(np.abs(np.abs(s_img) - R)) < 1e-8:
            raise PoleOnContour("coupling pole sits on the contour")
        z1 = dd.DDC(dd.DD(z.re.hi[:, None], z.re.lo[:, None]),
                    dd.DD(z.im.hi[:, None], z.im.lo[:, None]))
        z2 = dd.DDC(dd.DD(z.re.hi[None, :], z.re.lo[None, :]),
                    dd.DD(z.im.hi[None, :], z.im.lo[None, :]))
        F = fam.F(z1, z2)
        B1 = dd.DDC(dd.DD(B.re.hi[:, None], B.re.lo[:, None]),
                    dd.DD(B.im.hi[:, None], B.im.lo[:, None]))
        B2 = dd.DDC(dd.DD(B.re.hi[None, :], B.re.lo[None, :]),
                    dd.DD(B.im.hi[None, :], B.im.lo[None, :]))
        M = F * B1 * B2
        pow1 = dd.ddc_power_table(z, a_lo, a_hi)
        # the coupled term T2 and its residue companion T3 are individually
        # large and cancel to the tiny principal part; both are reduced and
        # subtracted in double-double before any rounding to double
        s_nodes = fam.s_map(z)
        Bs = fam.B(s_nodes, self.t, self.s)
        RF = fam.residue_factor(z)
        res_base = RF * Bs * B
        pow_s = dd.ddc_power_table(s_nodes, a_lo - 1, a_hi - 1)
        C = np.empty((a_hi - a_lo + 1, b_hi - b_lo + 1))
        Ys = {}
        for a in range(a_lo, a_hi + 1):
            pa = pow1[a]
            va = dd.DDC(dd.DD(pa.re.hi[:, None], pa.re.lo[:, None]),
                        dd.DD(pa.im.hi[:, None], pa.im.lo[:, None]))
            Ys[a] = dd.ddc_sum(M * va, axis=0)  # length-n over z2 nodes
        pow2 = pow1  # same contour for both variables
        inv_n = 1.0 / n
        for ai, a in enumerate(range(a_lo, a_hi + 1)):
            # combine the double-integral column with the residue integrand
            # before reducing, so their near-cancellation happens in dd
            va = Ys[a] * (inv_n * inv_n) - (res_base * pow_s[a - 1]) * inv_n
            for bi, b in enumerate(range(b_lo, b_hi + 1)):
                C[ai, bi] = float(dd.ddc_sum(va * pow2[b], axis=0).re.to_float())
        # crude magnitude-based roundoff estimate
        mmax = np.max(np.abs(M.to_complex()))
        smax = np.max(np.abs(s_nodes.to_complex()))
        amp = (R ** max(a_hi, 0) * R ** max(b_hi, 0)
               + max(smax, 1.0) ** max(a_hi - 1, 0) * R ** max(b_hi, 0))
        err = DD_EPS * max(mmax, 1.0) * amp * n
        return C, err

    def value(self, x1: float, x2: float, y1: float, y2: float) -> float:
        """Kernel value; coordinates live on the plain lattice (untilted) or
        on the drifted lattices of times t and s (tilted)."""
        if x1 > x2 or y1 > y2:
            raise ParameterError("pair coordinates must be ordered")
        d = self.drift
        m1 = _as_int((x1 - y1) + d)
        m2 = _as_int((x2 - y2) + d)
        a = _as_int((x2 - y1) + d)
        b = _as_int((x1 - y2) + d)
        a_lo, b_lo = self.a_range[0], self.b_range[0]
        m_lo = self.m_range[0]
        if not (self.a_range[0] <= a <= self.a_range[1]
                and self.b_range[0] <= b <= self.b_range[1]
                and self.m_range[0] <= m1 <= self.m_range[1]
                and self.m_range[0] <= m2 <= self.m_range[1]):
            raise ParameterError(
                f"query exponents ({m1},{m2},{a},{b}) outside the prepared "
                f"ranges; rebuild the batch with wider ranges")
        if max(a, 0) + max(b, 0) > self.joint_budget:
            raise QuadratureNotConverged(
                f"query exponent sum {max(a, 0) + max(b, 0)} exceeds the "
                f"precision budget {self.joint_budget}; use the mpmath tier")
        t1 = self.T1[m1 - m_lo] * self.T1[m2 - m_lo]
        c = self.c_eq if y1 == y2 else 1.0
        return c * self.tilt2 * (t1 - self.coupled[a - a_lo, b - b_lo])


def _as_int(x: float) -> int:
    m = round(x)
    if abs(x - m) > INT_TOL:
        raise ParameterError(f"exponent {x} is not an integer")
    return int(m)


def two_particle_reversed(params: ModelParams, x: Sequence[float],
                          y: Sequence[float], t: int, s: int, *,
                          batch: Optional[PairKernelBatch] = None) -> float:
    """Transition probability of the reversed two-particle location process
    from ordered pair x at time s to ordered pair y at time t."""
    if batch is None:
        lo = min(int(x[0] - y[1]) - 2, -6)
        hi = max(int(x[1] - y[0]) + 2, 6)
        batch = PairKernelBatch(params, t, s, a_range=(lo, hi),
                                b_range=(lo, hi))
    return batch.value(x[0], x[1], y[0], y[1])


def tilted_V(params: ModelParams, x: Sequence[float], y: Sequence[float],
             t: int, s: int, rho: Optional[float] = None, *,
             batch: Optional[PairKernelBatch] = None) -> float:
    """The tilted pair kernel on the drifted lattices."""
    if rho is None:
        rho = params.rho
    if batch is None:
        fr = TiltFrame(params, rho)
        d = fr.mu_hat(t) - fr.mu_hat(s)
        lo = int(math.floor(x[0] - y[1] + d)) - 2
        hi = int(math.ceil(x[1] - y[0] + d)) + 2
        batch = PairKernelBatch(params, t, s, rho=rho,
                                a_range=(min(lo, -4), max(hi, 4)),
                                b_range=(min(lo, -4), max(hi, 4)))
    return batch.value(x[0], x[1], y[0], y[1])


def pair_kernel_mp(params: ModelParams, x: Sequence[float], y: Sequence[float],
                   t: int, s: int, *, rho: Optional[float] = None,
                   nodes: int = 128, dps: Optional[int] = None,
                   radius: Optional[float] = None) -> float:
    """mpmath evaluation of the pair kernel for one query; the extended
    precision cross-check path."""
    import mpmath as mp

    fam = KernelFamily(params, rho)
    d = fam.drift(t, s)
    m1 = _as_int(x[0] - y[0] + d)
    m2 = _as_int(x[1] - y[1] + d)
    a = _as_int(x[1] - y[0] + d)
    b = _as_int(x[0] - y[1] + d)
    R = radius if radius is not None else _pick_radius(
        fam, t, s, max(a, 0) + max(b, 0))
    if dps is None:
        dps = int(20 + (max(a, 0) + max(b, 0) + 2) * math.log10(R) + 10)
    with mp.workdps(dps):
        pi2 = 2 * mp.pi
        els = []
        for j in range(nodes):
            els.append(R * mp.e ** (1j * pi2 * j / nodes))

        def Bmp(z):
            out = mp.mpc(1)
            J = params.J
            full, r = divmod(t - s, J)
            per = mp.mpc(1)
            for (c1, c0, d1, d0) in fam.w_coeffs:
                per *= (c1 * z + c0) / (d1 * z + d0)
            out *= per ** full
            for k in range(s + J * full, t):
                (c1, c0, d1, d0) = fam.w_coeffs[params.mod(k)]
                out *= (c1 * z + c0) / (d1 * z + d0)
            return out

        def Fmp(z1, z2):
            num = fam.a00 + fam.a01 * z2 + fam.a10 * z1 + fam.a11 * z1 * z2
            den = fam.a00 + fam.a01 * z1 + fam.a10 * z2 + fam.a11 * z1 * z2
            return num / den

        Bv = [Bmp(z) for z in els]
        T1a = sum(Bv[j] * els[j] ** m1 for j in range(nodes)) / nodes
        T1b = sum(Bv[j] * els[j] ** m2 for j in range(nodes)) / nodes
        T2 = mp.mpc(0)
        for j in range(nodes):
            for k in range(nodes):
                T2 += Fmp(els[j], els[k]) * Bv[j] * Bv[k] \
                    * els[j] ** a * els[k] ** b
        T2 /= nodes * nodes
        T3 = mp.mpc(0)
        for k in range(nodes):
            z2 = els[k]
            sm = -(fam.a00 + fam.a10 * z2) / (fam.a01 + fam.a11 * z2)
            rf = (fam.a00 + fam.a01 * z2 + fam.a10 * sm + fam.a11 * sm * z2) \
                / (fam.a01 + fam.a11 * z2)
            T3 += rf * Bmp(sm) * sm ** (a - 1) * Bv[k] * z2 ** b
        T3 /= nodes
        c = fam.c_weight(y[0] == y[1])
        val = c * fam.tilt_scalar(t, s) ** 2 * (T1a * T1b - T2 + T3)
        return float(mp.re(val))


# ---------------------------------------------------------------------------
# steepest-descent diagnostics
# ---------------------------------------------------------------------------

def _limit_symbols(I: int, J: int, b: float):
    c1 = J * b - (J - 1)
    c0 = (I + J) * b - (I + J - 1)
    d0 = I * b - (I - 1)

    def D_abs(z):
        return np.abs(z) ** (J / I) * np.abs((c1 * z - c0) / (z - d0))

    def p_star(z):
        return ((I + 1) * z - 1.0) / (z + (I - 1))

    def s_star(z):
        return ((I - 1) * z + 1.0) / (I + 1 - z)

    def H_abs(z):
        return D_abs(z) * D_abs(p_star(z))

    return D_abs, p_star, s_star, H_abs


def contour_M(I: int, theta: np.ndarray) -> np.ndarray:
    return 1.0 / (I + 1) + (I / (I + 1)) * np.exp(1j * theta)


def contour_M_u(I: int, u: float, n: int) -> np.ndarray:
    """Boundary of {|z - 1/(I+1)| <= I/(I+1) + u} intersected with the unit
    disk: the enlarged-circle arc inside the disk plus the unit-circle arc
    inside the enlarged circle."""
    c = 1.0 / (I + 1)
    r = I / (I + 1) + u
    th = np.linspace(-np.pi, np.pi, n, endpoint=False)
    arc1 = c + r * np.exp(1j * th)
    arc1 = arc1[np.abs(arc1) <= 1.0]
    circ = np.exp(1j * th)
    arc2 = circ[np.abs(circ - c) <= r]
    return np.concatenate([arc1, arc2])


def quartic_radius(I: int, theta: np.ndarray, *, tol: float = 1e-14,
                   coeffs: Optional[Sequence[float]] = None) -> np.ndarray:
    """Positive radius r(theta) solving the product-modulus quartic

        a0 r^4 + a1 r^3 cos(theta) + a2 r^2 + a3 r cos(theta) + a4 = 0

    by bisection (the limit coefficients are ((I+1)^4, 2(I+1)^3, 0,
    -2 I^2 (I+1), -I^4), whose positive root is I/(I+1) for every theta)."""
    if coeffs is None:
        coeffs = ((I + 1.0) ** 4, 2.0 * (I + 1.0) ** 3, 0.0,
                  -2.0 * I**2 * (I + 1.0), -float(I) ** 4)
    a0, a1, a2, a3, a4 = coeffs
    ct = np.cos(theta)

    def P(r):
        return a0 * r**4 + a1 * r**3 * ct + a2 * r**2 + a3 * r * ct + a4

    lo = np.zeros_like(ct)
    hi = np.full_like(ct, 2.0)
    while np.min(P(hi)) <= 0:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = P(mid) > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def sd_diagnostics(I: int, J: int, b: float, contour_kind: str = "shifted_circle",
                   n_theta: int = 10000, theta_min: float = 1e-2,
                   u: Optional[float] = None) -> Dict:
    """Numeric checks of the descent-contour inequalities in the limit:
    max |D*| and |H*| on the requested contour away from z = 1, the
    product-modulus identity |z p*(z)| = 1 on the shifted circle, the
    explicit |D*| formula on the unit circle, and the positive quartic root.
    """
    D_abs, p_star, s_star, H_abs = _limit_symbols(I, J, b)
    th = np.linspace(-np.pi, np.pi, n_theta, endpoint=False)
    th = th[np.abs(th) >= theta_min]
    if contour_kind == "shifted_circle":
        z = contour_M(I, th)
    elif contour_kind == "clipped_shifted":
        if u is None:
            u = 1.0 / (8 * I)
        z = contour_M_u(I, u, n_theta)
        z = z[np.abs(z - 1.0) >= theta_min]  # exclude a neighborhood of 1
    elif contour_kind == "circle":
        z = np.exp(1j * th)
    elif contour_kind == "implicit_product":
        r = quartic_radius(I, th)
        z = 1.0 / (I + 1) + r * np.exp(1j * th)
    else:
        raise ParameterError(f"unknown diagnostic contour {contour_kind!r}")
    zM = contour_M(I, th)
    prod_dev = float(np.max(np.abs(np.abs(zM * p_star(zM)) - 1.0)))
    # explicit unit-circle formula for |D*|^2
    d0 = I * b - (I - 1)
    num = 2 * J * (1 - b) * (1 - np.cos(th)) * ((I + J) * b - (I + J - 2))
    den = 1 + d0**2 - 2 * d0 * np.cos(th)
    formula = 1.0 - num / den
    direct = D_abs(np.exp(1j * th)) ** 2
    r_root = quartic_radius(I, th)
    return {
        "max_D": float(np.max(D_abs(z))),
        "max_H": float(np.max(H_abs(z))),
        "product_identity_dev": prod_dev,
        "unit_circle_formula_dev": float(np.max(np.abs(formula - direct))),
        "quartic_root_dev": float(np.max(np.abs(r_root - I / (I + 1.0)))),
        "contour_kind": contour_kind,
        "n_points": int(len(z)),
    }
