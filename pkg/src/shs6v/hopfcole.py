"""Exponential transform of the height field on the drifting lattice, its
discrete stochastic-heat-equation decomposition, exact martingale and
quadratic-variation identity checks, and near-stationary initial-data
diagnostics.

The transformed field Z(t, x) = lam_hat(t) q^(-(N(t, x + mu_hat(t)) -
rho (x + mu_hat(t)))) lives on x in Z - mu_hat(t) and satisfies

    Z(t+1, x - mu(t)) = (p(t+1, t) * Z(t))(x - mu(t)) + M(t, x)

with the tilted-walk kernel p and a martingale increment M that has two
equal expressions (heat-kernel residual and flux form); their agreement and
the closed-form conditional quadratic variation are checked by exhaustive
one-step enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .dynamics import HeightField, enumerate_step
from .errors import KernelMismatch, ParameterError
from .kernels import TiltFrame, step_pmf
from .params import ModelParams

M_EXPR_TOL = 1e-8


@dataclass
class ZField:
    """log-space storage of the transformed field on a window of the
    drifted lattice (positivity lets identity checks exponentiate locally
    without under/overflow at large |x|)."""

    t: int
    frame: TiltFrame
    x_left_int: int          # leftmost integer site y = x + mu_hat(t)
    logz: np.ndarray         # log Z at consecutive integer sites
    base_N: float            # N(t, x_left_int - 1)
    heights: Optional[HeightField] = None

    @property
    def width(self) -> int:
        return len(self.logz)

    def logZ_int(self, y: int) -> float:
        """log Z at the integer site label y (= x + mu_hat(t)); sites left
        of the window use the flat analytic continuation (empty exterior)."""
        i = y - self.x_left_int
        lnq = math.log(self.frame.params.q)
        if i < 0:
            return (self.frame.log_lam_hat(self.t)
                    - (self.base_N - self.frame.rho * y) * lnq)
        if i >= self.width:
            raise ParameterError(f"site {y} right of the transformed window")
        return float(self.logz[i])

    def Z_int(self, y: int) -> float:
        return math.exp(self.logZ_int(y))

    def Z(self, x: float) -> float:
        return self.Z_int(self.frame.lattice_coord(x, self.t))


def z_transform(heights: HeightField, frame: TiltFrame) -> ZField:
    """Build the transformed field from a height field at time t."""
    t = heights.t
    lnq = math.log(frame.params.q)
    rho = frame.rho
    Ns = heights.N_array()
    ys = heights.x_left + np.arange(len(Ns))
    logz = frame.log_lam_hat(t) - (Ns - rho * ys) * lnq
    return ZField(t=t, frame=frame, x_left_int=heights.x_left, logz=logz,
                  base_N=heights.base, heights=heights)


def heat_convolution(z: ZField, x_int: int, tail: float = 1e-18) -> float:
    """(p(t+1, t) * Z(t)) at the drifted point x - mu(t), addressed by the
    integer site x_int = x + mu_hat(t): sum_n P(R(t) = n - mu(t)) Z(t, x-n)."""
    ns, probs, _ = step_pmf(z.frame, z.t, tail)
    tot = 0.0
    for n, p in zip(ns, probs):
        tot += p * z.Z_int(x_int - int(n))
    return tot


def theta_pair(z: ZField, x_int: int) -> Tuple[float, float]:
    """The two factors of the one-step conditional variance at a site:
    Theta1 = q lam(t) Z - p*Z, Theta2 = -lam(t) Z + p*Z."""
    q = z.frame.params.q
    lam = z.frame.lam_k(z.t)
    Zx = z.Z_int(x_int)
    conv = heat_convolution(z, x_int)
    return q * lam * Zx - conv, -lam * Zx + conv


def tau_coefficient(params: ModelParams, rho: float, s: int) -> float:
    """Limit coefficient of the quadratic variation density at phase s:
    rho(I-rho)/I^2 * (b(I+2m+1)-(I+2m-1)) / (b(I+2m)-(I+2m-2)), m = s mod J;
    J-periodic in s."""
    I, b = params.I, params.b
    m = params.mod(s)
    return (rho * (I - rho) / I**2
            * (b * (I + 2 * m + 1) - (I + 2 * m - 1))
            / (b * (I + 2 * m) - (I + 2 * m - 2)))


@dataclass
class MartingaleDecomp:
    """One-step decomposition at a set of sites: the martingale increment in
    both forms, the variance factors and their algebraic identity residual."""

    t: int
    sites: np.ndarray
    M: np.ndarray
    M_flux_form: np.ndarray
    Theta1: np.ndarray
    Theta2: np.ndarray
    theta_sum_residual: float
    tau: float


def she_decompose(z_t: ZField, z_t1: ZField) -> MartingaleDecomp:
    """Decompose an observed one-step transition into heat-kernel prediction
    plus martingale increment, cross-checking the flux form of M.

    Raises KernelMismatch when the two expressions for M disagree beyond
    1e-8 (a kernel or dynamics bug)."""
    if z_t1.t != z_t.t + 1:
        raise ParameterError("need consecutive fields")
    if z_t.heights is None or z_t1.heights is None:
        raise ParameterError("fields must carry their height windows")
    fr = z_t.frame
    t = z_t.t
    params = fr.params
    q = params.q
    lam = fr.lam_k(t)
    margin = 2
    ys = np.arange(z_t.x_left_int + margin, z_t.x_left_int + z_t.width - margin)
    M = np.empty(len(ys))
    M2 = np.empty(len(ys))
    T1 = np.empty(len(ys))
    T2 = np.empty(len(ys))
    N_t = z_t.heights
    N_t1 = z_t1.heights
    EK = _flux_mean_window(z_t)
    for i, y in enumerate(ys):
        conv = heat_convolution(z_t, int(y))
        M[i] = z_t1.Z_int(int(y)) - conv
        K = N_t.N(int(y)) - N_t1.N(int(y))
        M2[i] = lam * (q - 1.0) * z_t.Z_int(int(y)) * (K - EK[y - z_t.x_left_int])
        T1[i] = q * lam * z_t.Z_int(int(y)) - conv
        T2[i] = -lam * z_t.Z_int(int(y)) + conv
    if np.max(np.abs(M - M2)) > M_EXPR_TOL:
        raise KernelMismatch(
            f"martingale expressions disagree by {np.max(np.abs(M - M2)):.2e}")
    resid = float(np.max(np.abs(T1 + T2 - (q - 1.0) * lam
                                * np.exp(z_t.logz[margin:-margin]))))
    return MartingaleDecomp(t=t, sites=ys, M=M, M_flux_form=M2,
                            Theta1=T1, Theta2=T2, theta_sum_residual=resid,
                            tau=tau_coefficient(params, fr.rho, t))


def _flux_mean_window(z: ZField) -> np.ndarray:
    """E[K(t, y) | F(t)] at every window site, from the closed-form chain
    E[K(y)] = mean_B(eta_y) + E[B'-B](eta_y) * E[K(y-1)] (exact for a
    left-finite window)."""
    params = z.frame.params
    t = z.t
    a = params.alpha_t(t)
    q, nu = params.q, params.nu
    eta = z.heights.eta
    out = np.empty(len(eta))
    prev = 0.0
    for i, m in enumerate(eta):
        mB = a * (1.0 - q**m) / (1.0 + a)
        diff = (nu + a) * q**m / (1.0 + a)  # E[B' - B] at occupancy m
        prev = mB + diff * prev
        out[i] = prev
    return out


# ---------------------------------------------------------------------------
# exact one-step identity checks
# ---------------------------------------------------------------------------

def martingale_identity_check(params: ModelParams, rho: float,
                              init: Sequence[int], t: int = 0, *,
                              sites: Optional[Sequence[int]] = None,
                              prune: float = 1e-18) -> Dict:
    """E[M(t, x) | F(t)] = 0 and the conditional quadratic-variation identity
    by exhaustive expansion of the one-step environment on the window.

    ``init`` is the left-finite occupancy window at integer sites starting
    at 0 (with its own right buffer); returns the worst absolute gaps.
    """
    frame = TiltFrame(params, rho)
    q = params.q
    lam = frame.lam_k(t)
    a_t = params.alpha_t(t)
    heights = HeightField(t=t, x_left=0, base=0.0,
                          eta=np.asarray(init, dtype=np.int64))
    z_t = z_transform(heights, frame)
    law = enumerate_step(init, params, a_t, 1, prune=prune)
    if sites is None:
        sites = range(0, len(init) // 2)
    sites = np.asarray(list(sites), dtype=np.int64)
    conv = {int(y): heat_convolution(z_t, int(y)) for y in sites}
    lam1 = frame.log_lam_hat(t + 1)
    lnq = math.log(q)
    # per-branch Z(t+1, .) and M
    Ms = {int(y): [] for y in sites}
    probs = []
    for cfg, p in law.probs.items():
        probs.append(p)
        cum = np.cumsum(cfg)
        for y in sites:
            N1 = float(cum[int(y)])
            z1 = math.exp(lam1 - (N1 - frame.rho * y) * lnq)
            Ms[int(y)].append(z1 - conv[int(y)])
    probs = np.asarray(probs)
    mean_gap = 0.0
    for y in sites:
        mean_gap = max(mean_gap, abs(float(np.dot(probs, Ms[int(y)]))))
    # quadratic variation: E[M(x1) M(x2)] vs the closed form
    ratio = q**rho * (params.nu + a_t) / (1.0 + a_t)
    qv_gap = 0.0
    for i1, y1 in enumerate(sites):
        m1 = np.asarray(Ms[int(y1)])
        t1, t2 = theta_pair(z_t, int(y1))
        for y2 in sites[i1:]:
            lhs = float(np.dot(probs, m1 * np.asarray(Ms[int(y2)])))
            rhs = ratio ** (int(y2) - int(y1)) * t1 * t2
            qv_gap = max(qv_gap, abs(lhs - rhs))
    return {"mean_gap": mean_gap, "qv_gap": qv_gap,
            "missing_mass": law.missing, "sites": sites.tolist()}


def one_step_relation_check(z_t: ZField, z_t1: ZField) -> float:
    """Exactness of Z(t+1, x - mu(t)) = lam(t) Z(t, x) q^K(t, y): returns the
    largest absolute log-residual over interior sites."""
    fr = z_t.frame
    t = z_t.t
    lnq = math.log(fr.params.q)
    worst = 0.0
    for y in range(z_t.x_left_int, z_t.x_left_int + z_t.width):
        K = z_t.heights.N(y) - z_t1.heights.N(y)
        lhs = z_t1.logZ_int(y)
        rhs = math.log(fr.lam_k(t)) + z_t.logZ_int(y) + K * lnq
        worst = max(worst, abs(lhs - rhs))
    return worst


def gradient_identity_check(z: ZField) -> Dict:
    """Samplewise residual of the slope identity
    eps^-1/2 (Z(t,x+1) - Z(t,x)) = (rho - eta~_{x+1}) Z(t,x) + err, with
    |err| <= Z * sqrt(eps) * d^2 e^(|d| sqrt(eps)) / 2 at d = rho - eta~."""
    params = z.frame.params
    eps = params.epsilon
    se = math.sqrt(eps)
    rho = z.frame.rho
    worst = 0.0
    bound = 0.0
    for i in range(z.width - 1):
        y = z.x_left_int + i
        Zx = z.Z_int(y)
        d = rho - float(z.heights.eta[i + 1])
        resid = abs((z.Z_int(y + 1) - Zx) / se - d * Zx)
        lim = Zx * se * d * d * math.exp(abs(d) * se) / 2.0
        worst = max(worst, resid - lim)
        bound = max(bound, lim / max(Zx, 1e-300))
    return {"excess_over_bound": worst, "max_bound": bound}


# ---------------------------------------------------------------------------
# near-stationary diagnostics and the small-eps trend surrogate
# ---------------------------------------------------------------------------

def near_stationary_check(params: ModelParams, kind: str = "product_pi_rho",
                          n: int = 4, a: float = 0.45, *,
                          replicas: int = 4000, seed: int = 11,
                          xmax: Optional[int] = None) -> Dict:
    """Empirical moment envelopes of the initial transformed field.

    Fits C, u with ||Z(0,x)||_n <= C e^(u eps |x|) over |x| <= xmax and the
    increment envelope C' (eps |x-x'|)^a e^(u eps(|x|+|x'|)); reports the
    fitted constants (a diagnostic, not a pass/fail gate).
    """
    from .dynamics import ensemble_initial

    eps = params.epsilon
    rho = params.rho
    if xmax is None:
        xmax = int(1.0 / eps)
    lnq = math.sqrt(eps)
    half = xmax
    width = 2 * half + 1
    if kind == "flat":
        vals = np.full((1, width), int(round(rho)), dtype=np.int64)
    else:
        vals = ensemble_initial(kind, -half, width, replicas, params, seed=seed)
    xs = np.arange(-half, half + 1)
    N = np.cumsum(vals, axis=1) - np.cumsum(vals, axis=1)[:, [half]]
    logZ = -(N - rho * xs[None, :]) * lnq
    Z = np.exp(logZ)
    norms = (np.mean(Z**n, axis=0)) ** (1.0 / n)
    C = float(norms[half]) * 1.000001
    with np.errstate(divide="ignore", invalid="ignore"):
        us = np.log(norms / C) / (eps * np.abs(xs))
    u_fit = float(np.nanmax(np.where(np.abs(xs) > 0, us, -np.inf)))
    u_fit = max(u_fit, 0.0)
    # increments at a spread of lags
    lags = [1, 2, 4, 8, 16, max(1, half // 4), max(1, half // 2)]
    c_inc = 0.0
    for lag in sorted(set(lags)):
        dz = np.abs(Z[:, lag:] - Z[:, :-lag])
        nrm = (np.mean(dz**n, axis=0)) ** (1.0 / n)
        envelope = ((eps * lag) ** a
                    * np.exp(u_fit * eps * (np.abs(xs[lag:]) + np.abs(xs[:-lag]))))
        c_inc = max(c_inc, float(np.max(nrm / envelope)))
    return {"C": C, "u": u_fit, "C_increment": c_inc, "n": n, "a": a,
            "xmax": xmax, "passes": bool(np.isfinite(c_inc))}


def qv_trend(params: ModelParams, rho: float, *, steps: int = 10000,
             width: int = 96, seed: int = 5, x_star: int = 0) -> float:
    """Time-average of | eps^-1 Theta1 Theta2 - tau(t) Z^2 | / Z^2 at the
    drift-compensated site, along one stationary trajectory: the qualitative
    small-eps surrogate (expected to shrink as eps decreases)."""
    from .dynamics import (RandomEnvironment, ensemble_initial,
                           ensemble_step_unfused)

    eps = params.epsilon
    frame = TiltFrame(params, rho)
    env = RandomEnvironment(params, seed)
    x_left = -width // 3
    vals = ensemble_initial("product_pi_rho", x_left, width, 64, params,
                            seed=seed)
    acc = 0.0
    cnt = 0
    for t in range(steps):
        mu_hat = frame.mu_hat(t)
        y_site = x_star + int(math.floor(mu_hat))  # x* - mu_hat + floor(mu_hat)
        i = y_site - x_left
        if not (2 <= i < width - 2):
            break
        lam = frame.lam_k(t)
        q = params.q
        ns, probs, _ = step_pmf(frame, t, 1e-14)
        # vectorized p*Z over replicas at the compensated site
        R = vals.shape[0]
        cumN = np.cumsum(vals, axis=1)
        lognorm = -(cumN[:, i] - rho * y_site) * math.sqrt(eps)
        Zx = np.exp(lognorm)  # relative Z with a common tilt factor dropped
        conv = np.zeros(R)
        for nn, pp in zip(ns, probs):
            j = i - int(nn)
            if j >= 0:
                Nj = cumN[:, j]
                yj = y_site - int(nn)
            else:
                Nj = np.zeros(R)
                yj = y_site - int(nn)
            conv += pp * np.exp(-(Nj - rho * yj) * math.sqrt(eps))
        t1 = q * lam * Zx - conv
        t2 = -lam * Zx + conv
        tau = tau_coefficient(params, rho, t)
        acc += float(np.mean(np.abs(t1 * t2 / eps - tau * Zx**2) / Zx**2))
        cnt += 1
        ensemble_step_unfused(vals, t, env, x_left, boundary="absorb")
    return acc / max(cnt, 1)
