"""The one-parameter stationary family: the fugacity solver, single-site
marginal pmf, exact stationarity and flux-law checks, and the scaling-theory
observables (steady current, integrated covariance, limit coefficients).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import BracketError
from .params import ModelParams
from .qspecial import q_pochhammer

CHI_RESIDUAL_TOL = 1e-13


@dataclass
class StationaryDist:
    """Single-site stationary marginal on {0, .., I} with mean rho."""

    rho: float
    chi: float
    pmf: np.ndarray
    mean: float
    variance: float


def _occupation_sum(params: ModelParams, chi: float) -> float:
    """sum_{i=1..I} chi / (chi - q^i); decreasing in chi on (-inf, 0)."""
    q = params.q
    return float(sum(chi / (chi - q**i) for i in range(1, params.I + 1)))


def solve_chi(params: ModelParams, rho: float) -> float:
    """The unique negative fugacity with mean occupation rho.

    Bisection on the monotone map chi -> sum_i chi/(chi - q^i), which runs
    from 0 (chi -> 0-) to I (chi -> -inf), then two Newton polish steps using
    the closed-form derivative.
    """
    if not (0.0 < rho < params.I):
        raise BracketError(f"rho must lie in (0, {params.I}), got {rho}")
    q = params.q
    lo_mag, hi_mag = 1e-12, 1.0
    while _occupation_sum(params, -hi_mag) < rho:
        hi_mag *= 2.0
        if hi_mag > 1e18:
            raise BracketError("failed to bracket the fugacity")
    a, b = -hi_mag, -lo_mag  # sum(a) >= rho >= sum(b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if _occupation_sum(params, mid) >= rho:
            a = mid
        else:
            b = mid
        if abs(b - a) < 1e-16 * max(1.0, abs(a)):
            break
    chi = 0.5 * (a + b)
    for _ in range(2):  # Newton polish; d/dchi sum = sum -q^i/(chi-q^i)^2
        f = _occupation_sum(params, chi) - rho
        df = float(sum(-(q**i) / (chi - q**i) ** 2 for i in range(1, params.I + 1)))
        if df != 0:
            step = f / df
            if chi - step < 0:
                chi -= step
    assert abs(_occupation_sum(params, chi) - rho) <= CHI_RESIDUAL_TOL
    return chi


def pi_rho(params: ModelParams, chi: float) -> StationaryDist:
    """The stationary single-site pmf for a given fugacity.

    pmf(i) is proportional to (nu; q)_i / (q; q)_i * chi^i, normalized by the
    explicit finite sum over i = 0..I (the infinite-product normalizer of the
    textbook form diverges termwise for q > 1; the finite sum is its exact
    telescoped equivalent).
    """
    q, nu, I = params.q, params.nu, params.I
    w = np.empty(I + 1)
    for i in range(I + 1):
        w[i] = q_pochhammer(nu, q, i) / q_pochhammer(q, q, i) * chi**i
    pmf = w / w.sum()
    mean = float(np.dot(np.arange(I + 1), pmf))
    var_formula = mean - float(sum(chi**2 / (q**i - chi) ** 2
                                   for i in range(1, I + 1)))
    return StationaryDist(rho=mean, chi=chi, pmf=pmf, mean=mean,
                          variance=var_formula)


def flux_bernoulli_mean(params: ModelParams, chi: float, t: int) -> float:
    """Mean of the one-line flux across any edge under the product measure:
    alpha(t) chi / (1 + alpha(t) chi)."""
    a = params.alpha_t(t)
    return a * chi / (1.0 + a * chi)


# ---------------------------------------------------------------------------
# scaling-theory observables
# ---------------------------------------------------------------------------

def _mu_tilt(params: ModelParams, rho: float) -> float:
    """Centering parameter of the tilted one-particle walk over one period."""
    from .kernels import TiltFrame
    return TiltFrame(params, rho).mu_hat(params.J)


def steady_current_j(params: ModelParams, rho: Optional[float] = None) -> float:
    """Average steady-state current in the moving frame,
    eps^-1/2 * (sum_k alpha q^k chi / (1 + alpha q^k chi) - rho * mu)."""
    if rho is None:
        rho = params.rho
    eps = params.epsilon
    chi = solve_chi(params, rho)
    q, alpha = params.q, params.alpha
    s = sum(alpha * q**k * chi / (1.0 + alpha * q**k * chi)
            for k in range(params.J))
    mu = _mu_tilt(params, rho)
    return (s - rho * mu) / np.sqrt(eps)


def integrated_covariance_A(params: ModelParams,
                            rho: Optional[float] = None) -> float:
    """Integrated density covariance: the variance of the single-site
    stationary marginal."""
    if rho is None:
        rho = params.rho
    chi = solve_chi(params, rho)
    return pi_rho(params, chi).variance


def kpz_coefficients(params: ModelParams) -> Dict[str, float]:
    """Limit coefficients of the fluctuation equation:
    V* = ((I+J) b - (I+J-2)) / (I^2 (1-b)),  D* = rho (I-rho)/I * V*."""
    I, J, b, rho = params.I, params.J, params.b, params.rho
    v = ((I + J) * b - (I + J - 2)) / (I**2 * (1.0 - b))
    d = rho * (I - rho) / I * v
    return {"V_star": v, "D_star": d}


def current_second_derivative(params: ModelParams, rho: Optional[float] = None,
                              h: float = 1e-3) -> float:
    """j''(rho) by a central second difference with step ``h``."""
    if rho is None:
        rho = params.rho
    jm = steady_current_j(params, rho - h)
    j0 = steady_current_j(params, rho)
    jp = steady_current_j(params, rho + h)
    return (jp - 2.0 * j0 + jm) / h**2


# ---------------------------------------------------------------------------
# exact checks (enumeration based)
# ---------------------------------------------------------------------------

def one_step_marginal_check(params: ModelParams, rho: float, width: int = 4,
                            t: int = 0, prune: float = 1e-17) -> Dict:
    """Exactly propagate the product measure one step on a small window and
    compare every site marginal (and the flux law) against the stationary
    values.

    The window is made exact by injecting the incoming left-edge line as an
    independent Bernoulli with the stationary flux mean: under the product
    measure the flux entering from the (unmodelled) left half has exactly
    that law and is independent of the window sites, so the finite
    enumeration reproduces the two-sided model restricted to the window.
    """
    from itertools import product as iproduct

    from .dynamics import enumerate_step
    from .weights import build_table

    chi = solve_chi(params, rho)
    dist = pi_rho(params, chi)
    kflux = flux_bernoulli_mean(params, chi, t)
    alpha = params.alpha_t(t)
    buffer = max(8, int(np.ceil(np.log(1e-16) / np.log(params.theta_sup()))))
    table = build_table(params, alpha, 1, validate=False)
    I = params.I

    marg = np.zeros((width, I + 1))
    flux_edge = np.zeros(width + buffer + 1)
    total = 0.0
    missing = 0.0
    for cfg in iproduct(range(I + 1), repeat=width):
        p_cfg = float(np.prod(dist.pmf[list(cfg)]))
        if p_cfg == 0.0:
            continue
        vals = tuple(cfg) + (0,) * buffer
        law = enumerate_step(vals, params, alpha, 1, table=table,
                             left_flux_dist={0: 1.0 - kflux, 1: kflux},
                             prune=prune)
        missing += p_cfg * law.missing
        flux_edge += p_cfg * law.flux_marginals
        total += p_cfg
        for out, p in law.probs.items():
            for i in range(width):
                marg[i, out[i]] += p_cfg * p
    marg /= total
    gaps = np.abs(marg - dist.pmf[None, :])
    return {
        "site_marginal_gap": float(gaps.max()),
        "flux_mean_gap": float(abs(flux_edge[width] - kflux)),
        "flux_mean": float(flux_edge[width]),
        "flux_mean_expected": float(kflux),
        "missing_mass": missing,
        "marginals": marg,
        "pmf": dist.pmf,
    }
