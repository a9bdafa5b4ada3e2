"""Forward dynamics: sequential vertex updates (fused and unfused), the
Bernoulli-environment flux recursion, height fields, exact small-window
enumeration of one-step laws, and vectorized replica ensembles.

Update rule: sites are processed left to right; a site with occupancy m and
h incoming horizontal lines emits (i2, j2) with the vertex weights, the j2
lines carrying on to the next site.  For the unfused model (horizontal
capacity 1) the same step is equivalently a flux recursion driven by
independent Bernoulli variables B, B' keyed by (t, y): the carry bit K(y)
equals B(t,y,eta_y) when K(y-1) = 0 and B'(t,y,eta_y) when K(y-1) = 1.  Both
code paths below consume the identical per-(t, y) uniform, so they produce
identical sample paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import (ParameterError, StateSpaceTooLarge, TruncationError,
                     WindowOverflow)
from .params import ModelParams, certified_margin
from .rng import KIND_FLUX, KIND_INIT, CounterRng
from .weights import VertexWeightTable, build_table

LEFT_FINITE = "left_finite"
TRUNCATED = "truncated_bi_infinite"


@dataclass
class OccupancyWindow:
    """A finite window of site occupancies.

    In ``left_finite`` mode every site left of ``x_left`` is empty and the
    window is exact; in ``truncated_bi_infinite`` mode the window is the
    truncation of a two-sided configuration and only sites at least the
    certified margin away from the left edge carry exact statistics.
    """

    x_left: int
    values: np.ndarray
    boundary_mode: str = LEFT_FINITE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.ndim != 1:
            raise ParameterError("window values must be one-dimensional")
        if np.any(self.values < 0):
            raise ParameterError("occupancies must be nonnegative")
        if self.boundary_mode not in (LEFT_FINITE, TRUNCATED):
            raise ParameterError(f"unknown boundary mode {self.boundary_mode!r}")

    @property
    def width(self) -> int:
        return len(self.values)

    def particle_count(self) -> int:
        return int(self.values.sum())

    def copy(self) -> "OccupancyWindow":
        return OccupancyWindow(self.x_left, self.values.copy(), self.boundary_mode)


@dataclass
class HeightField:
    """N(t, x) on a window: ``base`` is N at ``x_left - 1`` and occupancies
    supply the increments N(t, x) - N(t, x-1) = eta_x."""

    t: int
    x_left: int
    base: float
    eta: np.ndarray
    flux_log: list = field(default_factory=list)

    def N(self, x: int) -> float:
        i = x - self.x_left
        if i < 0:
            return self.base
        if i >= len(self.eta):
            i = len(self.eta) - 1
        return self.base + float(self.eta[: i + 1].sum())

    def N_array(self) -> np.ndarray:
        return self.base + np.cumsum(self.eta)


class RandomEnvironment:
    """The independent Bernoulli field (B, B') behind the flux recursion.

    B(t,y,eta) has mean alpha(t)(1 - q^eta)/(1 + alpha(t)) and B'(t,y,eta)
    has mean (alpha(t) + nu q^eta)/(1 + alpha(t)).  A single uniform per
    (t, y[, lane]) is drawn and compared against whichever mean the incoming
    flux selects; with this monotone coupling B <= B' pathwise.
    """

    def __init__(self, params: ModelParams, seed: int):
        self.params = params
        self.rng = CounterRng(seed)
        self._powq = params.q ** np.arange(params.I + 1)

    def mean_B(self, t: int, eta) -> np.ndarray:
        a = self.params.alpha_t(t)
        return a * (1.0 - self._powq[eta]) / (1.0 + a)

    def mean_Bp(self, t: int, eta) -> np.ndarray:
        a = self.params.alpha_t(t)
        return (a + self.params.nu * self._powq[eta]) / (1.0 + a)

    def uniform(self, t: int, y, lane=0) -> np.ndarray:
        return self.rng.uniform(t, y, kind=KIND_FLUX, lane=lane)

    def draw_B_Bp(self, t: int, y, eta, lane=0):
        """The coupled pair (B, B') at one address."""
        u = self.uniform(t, y, lane=lane)
        return (u < self.mean_B(t, eta)).astype(np.int64), \
               (u < self.mean_Bp(t, eta)).astype(np.int64)


# ---------------------------------------------------------------------------
# single-trajectory steps
# ---------------------------------------------------------------------------

def step_unfused(state: OccupancyWindow, t: int, env: RandomEnvironment, *,
                 heights: Optional[HeightField] = None,
                 boundary: str = "error") -> OccupancyWindow:
    """One unfused step via the sequential vertex update.

    ``boundary`` controls the right edge: 'error' raises WindowOverflow when
    a line would exit (left-finite semantics), 'absorb' lets it leave (exact
    for in-window observables, since information travels left to right) and
    'ring' re-enters it on the left (a documented approximation used only
    for long stationary runs).
    """
    vals = state.values.copy()
    carry = 0
    exits = 0
    flux = np.zeros(state.width, dtype=np.int64)
    for i in range(state.width):
        y = state.x_left + i
        m = int(vals[i])
        if m == 0 and carry == 0:
            flux[i] = 0
            continue
        u = float(env.uniform(t, y))
        if carry == 0:
            out = 1 if u < float(env.mean_B(t, m)) else 0
        else:
            out = 1 if u < float(env.mean_Bp(t, m)) else 0
        vals[i] = m + carry - out
        carry = out
        flux[i] = out
    if carry:
        if boundary == "error":
            raise WindowOverflow(
                f"line exits right edge at t={t}; widen the window")
        if boundary == "absorb":
            exits = carry
        elif boundary == "ring":
            i = 0
            passes = 0
            while carry and passes < 4:
                y = state.x_left + i
                m = int(vals[i])
                u = float(env.uniform(t, y, lane=1 + passes))
                out = 1 if u < float(env.mean_Bp(t, m)) else 0
                vals[i] = m + carry - out
                carry = out
                i += 1
                if i == state.width:
                    i = 0
                    passes += 1
        else:
            raise ParameterError(f"unknown boundary policy {boundary!r}")
    new = OccupancyWindow(state.x_left, vals, state.boundary_mode)
    if heights is not None:
        heights.t = t + 1
        heights.eta = vals.copy()
        heights.flux_log.append(flux)
        # base is N at x_left - 1: unchanged, no flux enters from the left
    return new


def step_fused(state: OccupancyWindow, env: RandomEnvironment,
               table: VertexWeightTable, t_fused: int = 0, *,
               boundary: str = "error") -> OccupancyWindow:
    """One fused step: the same sequential rule with horizontal capacity
    J = table.J_used.  Outcomes within a row are ordered by descending j2
    (more lines carry on first) for the inverse-cdf draw."""
    J = table.J_used
    Ic = table.params.I
    vals = state.values.copy()
    carry = 0
    for i in range(state.width):
        y = state.x_left + i
        m = int(vals[i])
        if m == 0 and carry == 0:
            continue
        row = table.row(m, carry)
        outcomes = [(m + carry - j2, j2)
                    for j2 in range(min(J, m + carry), -1, -1)
                    if 0 <= m + carry - j2 <= Ic]
        u = float(env.uniform(t_fused, y))
        acc = 0.0
        out_i2, out_j2 = outcomes[-1]
        for i2, j2 in outcomes:
            acc += row[i2, j2]
            if u < acc:
                out_i2, out_j2 = i2, j2
                break
        vals[i] = out_i2
        carry = out_j2
    if carry:
        if boundary == "error":
            raise WindowOverflow("fused line(s) exit right edge; widen the window")
        if boundary != "absorb":
            raise ParameterError(f"unsupported boundary {boundary!r} for fused step")
    return OccupancyWindow(state.x_left, vals, state.boundary_mode)


def step_recursion(heights: HeightField, state: OccupancyWindow, t: int,
                   env: RandomEnvironment, *, tail_tol: float = 1e-12,
                   strict: bool = False) -> Tuple[HeightField, OccupancyWindow]:
    """One unfused step through the flux recursion on heights.

    Driven by the same (t, y) uniforms as :func:`step_unfused`, the sample
    paths coincide exactly.  In truncated mode the incoming flux at the left
    edge is the truncated sum, i.e. zero, and ``strict`` checks the window is
    wide enough for the requested tail tolerance.
    """
    if strict and state.boundary_mode == TRUNCATED:
        margin = certified_margin(env.params, tail_tol)
        if state.width < margin:
            raise TruncationError(
                f"window width {state.width} below certified margin {margin}")
    eta = state.values
    K = np.zeros(state.width, dtype=np.int64)
    prev = 0  # incoming flux at the left edge of the window
    for i in range(state.width):
        y = state.x_left + i
        m = int(eta[i])
        if m == 0 and prev == 0:
            K[i] = 0
            continue
        u = float(env.uniform(t, y))
        if prev == 0:
            K[i] = 1 if u < float(env.mean_B(t, m)) else 0
        else:
            K[i] = 1 if u < float(env.mean_Bp(t, m)) else 0
        prev = K[i]
    if prev and state.boundary_mode == LEFT_FINITE:
        raise WindowOverflow("flux exits right edge; widen the window")
    new_eta = eta.copy()
    new_eta[0] -= K[0]
    new_eta[1:] += K[:-1] - K[1:]
    new_heights = HeightField(t=t + 1, x_left=heights.x_left,
                              base=heights.base, eta=new_eta,
                              flux_log=heights.flux_log + [K])
    return new_heights, OccupancyWindow(state.x_left, new_eta, state.boundary_mode)


# ---------------------------------------------------------------------------
# exact one-step enumeration
# ---------------------------------------------------------------------------

MAX_ENUM_SITES = 600
MAX_ENUM_PARTICLES = 14


@dataclass
class StepLaw:
    """Exact one-step distribution over output windows.

    ``probs`` maps output tuples (same length as the input) to exact
    probabilities; ``missing`` is the recorded mass of pruned branches plus
    lines that left the window; ``flux_marginals[i]`` is the probability that
    a line crosses the left edge of site index i (index n = exits)."""

    probs: Dict[tuple, float]
    missing: float
    flux_marginals: np.ndarray


def enumerate_step(values: Sequence[int], params: ModelParams, alpha: float,
                   J_mode: int = 1, *, table: Optional[VertexWeightTable] = None,
                   left_flux_dist: Optional[Dict[int, float]] = None,
                   prune: float = 1e-17) -> StepLaw:
    """Exact one-step law of the sequential update on a window.

    The window ``values`` must include enough empty right buffer that the
    missing (pruned plus exited) mass stays below the caller's tolerance;
    the geometric carry decay ratio is (nu + alpha)/(1 + alpha) per empty
    site.  ``left_flux_dist`` optionally injects incoming lines at the left
    edge (used by the exact stationarity checks); default is no line.
    """
    vals = tuple(int(v) for v in values)
    n = len(vals)
    if n > MAX_ENUM_SITES or sum(vals) > MAX_ENUM_PARTICLES:
        raise StateSpaceTooLarge(
            f"enumeration window too large: {n} sites, {sum(vals)} particles")
    if table is None:
        table = build_table(params, alpha, J_mode, validate=False)
    Ic = params.I
    J = table.J_used
    # native branch lists: branches[m][h] = [(i2, j2, w), ...], nonzero only
    branches = [[[] for _ in range(J + 1)] for _ in range(Ic + 1)]
    for m in range(Ic + 1):
        for h in range(J + 1):
            for j2 in range(min(J, m + h), -1, -1):
                i2 = m + h - j2
                if 0 <= i2 <= Ic:
                    w = float(table.entries[m, h, i2, j2])
                    if w > 0.0:
                        branches[m][h].append((i2, j2, w))
    # next occupied site at or after i (for carry-free fast-forwarding)
    nxt = [n] * (n + 1)
    for i in range(n - 1, -1, -1):
        nxt[i] = i if vals[i] > 0 else nxt[i + 1]
    probs: Dict[tuple, float] = {}
    missing = 0.0
    flux_marg = np.zeros(n + 1)
    out = [0] * n

    def rec(i: int, carry: int, p: float):
        nonlocal missing
        if p < prune:
            missing += p
            return
        if carry > 0:
            flux_marg[i] += p
        else:
            i = nxt[i]  # out[] is zero on skipped sites by invariant
        if i == n:
            if carry > 0:
                missing += p  # lines exit the buffer: recorded, not emitted
                return
            key = tuple(out)
            probs[key] = probs.get(key, 0.0) + p
            return
        for (i2, j2, w) in branches[vals[i]][carry]:
            out[i] = i2
            rec(i + 1, j2, p * w)
        out[i] = 0  # restore the all-zero invariant for fast-forwarding

    if left_flux_dist is None:
        rec(0, 0, 1.0)
    else:
        for k, pk in left_flux_dist.items():
            if pk > 0:
                rec(0, int(k), pk)
    return StepLaw(probs=probs, missing=missing, flux_marginals=flux_marg)


def enumerate_multistep_unfused(values: Sequence[int], params: ModelParams,
                                t0: int, steps: int, *,
                                prune: float = 1e-17) -> StepLaw:
    """Exact law of ``steps`` consecutive unfused updates in one pass.

    Works on the flux representation: the joint state swept left to right is
    the vector of per-step carry bits (K_s(y))_s, and at each site the bits
    update in step order through the occupancy ladder
    eta_{s+1} = eta_s + in_s - out_s with the environment means of step
    t0 + s.  No intermediate configuration distributions are materialized,
    which keeps multi-step composition exact and fast.
    """
    vals = tuple(int(v) for v in values)
    n = len(vals)
    if n > MAX_ENUM_SITES or sum(vals) > MAX_ENUM_PARTICLES:
        raise StateSpaceTooLarge(
            f"enumeration window too large: {n} sites, {sum(vals)} particles")
    q, nu, Ic = params.q, params.nu, params.I
    powq = [q**m for m in range(Ic + 1)]
    pB = []   # pB[s][m]  = P(out = 1 | in = 0, occupancy m) at step t0+s
    pBp = []  # pBp[s][m] = P(out = 1 | in = 1, occupancy m)
    for s in range(steps):
        a = params.alpha_t(t0 + s)
        pB.append([a * (1.0 - powq[m]) / (1.0 + a) for m in range(Ic + 1)])
        pBp.append([(a + nu * powq[m]) / (1.0 + a) for m in range(Ic + 1)])
    nxt = [n] * (n + 1)
    for i in range(n - 1, -1, -1):
        nxt[i] = i if vals[i] > 0 else nxt[i + 1]
    zero_carry = (0,) * steps
    probs: Dict[tuple, float] = {}
    missing = 0.0
    out = [0] * n

    def site_outcomes(m0: int, carry: tuple):
        """All (final occupancy, out-carry vector, prob) at one site."""
        acc = [(m0, [], 1.0)]
        for s in range(steps):
            inc = carry[s]
            nxt_acc = []
            for (m, outs, p) in acc:
                eta = m  # occupancy seen by step s at this site
                p1 = pBp[s][eta] if inc else pB[s][eta]
                if p1 > 0.0:
                    nxt_acc.append((m + inc - 1, outs + [1], p * p1))
                if p1 < 1.0:
                    nxt_acc.append((m + inc, outs + [0], p * (1.0 - p1)))
            acc = nxt_acc
        return acc

    def rec(i: int, carry: tuple, p: float):
        nonlocal missing
        if p < prune:
            missing += p
            return
        if carry == zero_carry:
            i = nxt[i]
        if i == n:
            if carry != zero_carry:
                missing += p
                return
            key = tuple(out)
            probs[key] = probs.get(key, 0.0) + p
            return
        for (mf, outs, w) in site_outcomes(vals[i], carry):
            out[i] = mf
            rec(i + 1, tuple(outs), p * w)
        out[i] = 0

    rec(0, zero_carry, 1.0)
    return StepLaw(probs=probs, missing=missing,
                   flux_marginals=np.zeros(n + 1))


def evolve_exact(values: Sequence[int], params: ModelParams,
                 alphas: Iterable[float], J_mode: int = 1, *,
                 prune: float = 1e-17) -> StepLaw:
    """Compose exact one-step laws over successive rapidities.

    Returns the final distribution over windows together with the cumulative
    missing mass."""
    dist = {tuple(int(v) for v in values): 1.0}
    missing = 0.0
    table_cache: Dict[float, VertexWeightTable] = {}
    law_cache: Dict[Tuple[float, tuple], StepLaw] = {}
    for a in alphas:
        if a not in table_cache:
            table_cache[a] = build_table(params, a, J_mode, validate=False)
        table = table_cache[a]
        new: Dict[tuple, float] = {}
        for cfg, p in dist.items():
            key = (a, cfg)
            law = law_cache.get(key)
            if law is None:
                law = enumerate_step(cfg, params, a, J_mode, table=table,
                                     prune=prune)
                law_cache[key] = law
            missing += p * law.missing
            for ocfg, op in law.probs.items():
                w = p * op
                if w > 0:
                    new[ocfg] = new.get(ocfg, 0.0) + w
        dist = new
    return StepLaw(probs=dist, missing=missing,
                   flux_marginals=np.zeros(len(values) + 1))


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def make_initial(kind: str, x_left: int, width: int, params: ModelParams, *,
                 seed: int = 0, pmf: Optional[np.ndarray] = None,
                 density: Optional[int] = None,
                 custom: Optional[Sequence[int]] = None,
                 boundary_mode: str = LEFT_FINITE,
                 lane=0) -> OccupancyWindow:
    """Deterministic or sampled initial occupancies with a recorded seed.

    kinds: 'product_pi_rho' (iid single-site stationary marginals; pmf may
    be supplied or is solved from params.scaled), 'step' (empty left of 0,
    product marginals from 0 onward), 'flat' (constant integer density) and
    'custom'.
    """
    rng = CounterRng(seed)
    if kind == "custom":
        if custom is None:
            raise ParameterError("custom initial data needs values")
        return OccupancyWindow(x_left, np.asarray(custom, dtype=np.int64),
                               boundary_mode)
    if kind == "flat":
        c = int(density or 0)
        if not (0 <= c <= params.I):
            raise ParameterError(f"flat density {c} outside 0..{params.I}")
        return OccupancyWindow(x_left, np.full(width, c, dtype=np.int64),
                               boundary_mode)
    if kind in ("product_pi_rho", "step"):
        if pmf is None:
            from .stationary import pi_rho, solve_chi
            chi = solve_chi(params, params.rho)
            pmf = pi_rho(params, chi).pmf
        cdf = np.cumsum(pmf)
        sites = x_left + np.arange(width)
        u = rng.uniform(0, sites, kind=KIND_INIT, lane=lane)
        vals = np.searchsorted(cdf, u, side="right").astype(np.int64)
        vals = np.minimum(vals, params.I)
        if kind == "step":
            vals[sites < 0] = 0
        return OccupancyWindow(x_left, vals, boundary_mode)
    raise ParameterError(f"unknown initial kind {kind!r}")


# ---------------------------------------------------------------------------
# replica ensembles (vectorized across independent copies)
# ---------------------------------------------------------------------------

def ensemble_initial(kind: str, x_left: int, width: int, replicas: int,
                     params: ModelParams, *, seed: int = 0,
                     pmf: Optional[np.ndarray] = None) -> np.ndarray:
    """(replicas, width) initial occupancies, replica r drawn on lane r."""
    if kind == "flat":
        return np.zeros((replicas, width), dtype=np.int64)
    if pmf is None:
        from .stationary import pi_rho, solve_chi
        chi = solve_chi(params, params.rho)
        pmf = pi_rho(params, chi).pmf
    rng = CounterRng(seed)
    cdf = np.cumsum(pmf)
    sites = x_left + np.arange(width)
    lanes = np.arange(replicas)
    u = rng.uniform(0, sites[None, :], kind=KIND_INIT, lane=lanes[:, None])
    vals = np.searchsorted(cdf, u.ravel(), side="right").reshape(replicas, width)
    return np.minimum(vals, params.I).astype(np.int64)


def ensemble_step_unfused(vals: np.ndarray, t: int, env: RandomEnvironment,
                          x_left: int, *, boundary: str = "absorb",
                          flux_out: Optional[np.ndarray] = None) -> np.ndarray:
    """One unfused step applied to every replica row of ``vals`` in place.

    Replica r consumes the uniform at lane r, address (t, y); if ``flux_out``
    is given (replicas, width) it receives the per-site carry bits."""
    R, W = vals.shape
    lanes = np.arange(R)
    a = env.params.alpha_t(t)
    powq = env.params.q ** np.arange(env.params.I + 1)
    mB_tab = a * (1.0 - powq) / (1.0 + a)
    mBp_tab = (a + env.params.nu * powq) / (1.0 + a)
    carry = np.zeros(R, dtype=np.int64)
    for i in range(W):
        y = x_left + i
        m = vals[:, i]
        active = (m > 0) | (carry > 0)
        if not active.any():
            if flux_out is not None:
                flux_out[:, i] = 0
            continue
        u = env.uniform(t, y, lane=lanes)
        thr = np.where(carry == 0, mB_tab[m], mBp_tab[m])
        out = ((u < thr) & active).astype(np.int64)
        vals[:, i] = m + carry - out
        carry = out
        if flux_out is not None:
            flux_out[:, i] = out
    if boundary == "error" and carry.any():
        raise WindowOverflow("a replica line exits the right edge")
    return carry  # exit indicator per replica


def ensemble_step_fused(vals: np.ndarray, t_fused: int,
                        env: RandomEnvironment, x_left: int,
                        table: VertexWeightTable, *,
                        boundary: str = "absorb") -> np.ndarray:
    """One fused step for every replica row; outcome order is j2 descending."""
    R, W = vals.shape
    J = table.J_used
    Ic = table.params.I
    lanes = np.arange(R)
    # per (m, h): ordered outcome lists and cdf
    n_out = J + 1
    cdf = np.zeros((Ic + 1, J + 1, n_out))
    out_j2 = np.zeros((Ic + 1, J + 1, n_out), dtype=np.int64)
    for m in range(Ic + 1):
        for h in range(J + 1):
            acc = 0.0
            k = 0
            last = 0
            for j2 in range(min(J, m + h), -1, -1):
                i2 = m + h - j2
                if i2 < 0 or i2 > Ic:
                    continue
                acc += table.entries[m, h, i2, j2]
                cdf[m, h, k] = acc
                out_j2[m, h, k] = j2
                last = j2
                k += 1
            for kk in range(k, n_out):  # padding repeats the last outcome
                cdf[m, h, kk] = 2.0
                out_j2[m, h, kk] = last
    carry = np.zeros(R, dtype=np.int64)
    for i in range(W):
        y = x_left + i
        m = vals[:, i]
        active = (m > 0) | (carry > 0)
        if not active.any():
            continue
        u = env.uniform(t_fused, y, lane=lanes)
        c = cdf[m, carry]          # (R, n_out)
        idx = (u[:, None] >= c).sum(axis=1)
        idx = np.minimum(idx, n_out - 1)
        j2 = out_j2[m, carry, idx]
        j2 = np.where(active, j2, 0)
        vals[:, i] = m + carry - j2
        carry = j2
    if boundary == "error" and carry.any():
        raise WindowOverflow("a replica line exits the right edge")
    return carry
