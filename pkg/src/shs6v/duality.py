"""Duality functionals, the reversed location process with its exact
truncated kernels, and two-sided verification of the duality identities in
both exact (enumeration) and Monte Carlo modes.

The reversed process is the space mirror of the left-finite model: a
configuration of k particles at positions y1 <= ... <= yk jumps left, and
its one-step law is obtained by running the ordinary sequential update on
the mirrored occupancies.  All right-hand sides below are truncated sums
over the reversed kernel with the pruned mass propagated into the reported
tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import (OccupancyWindow, RandomEnvironment, enumerate_step,
                       evolve_exact)
from .errors import ParameterError
from .params import ModelParams
from .qspecial import q_bracket
from .rng import KIND_REVERSED
from .kernels import TiltFrame

# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------


def _counts(window: Sequence[int], x_left: int, y: int, base: float = 0.0) -> float:
    """N(y) = base + number of particles at sites <= y inside the window."""
    i = y - x_left
    if i < 0:
        return base
    i = min(i, len(window) - 1)
    return base + float(np.sum(np.asarray(window[: i + 1])))


def _eta_at(window: Sequence[int], x_left: int, y: int) -> int:
    i = y - x_left
    if 0 <= i < len(window):
        return int(window[i])
    return 0


def functional_H(window: Sequence[int], x_left: int, ys: Sequence[int],
                 q: float, base: float = 0.0) -> float:
    """prod_i q^(-N(y_i)) for a particle configuration."""
    return float(np.prod([q ** (-_counts(window, x_left, y, base)) for y in ys]))


def functional_G(window: Sequence[int], x_left: int, y1: int, y2: int,
                 q: float, I: int, base: float = 0.0) -> float:
    """Two-location duality functional with q^(1/2)-brackets.

    Equal locations use the doubled-weight branch; distinct locations carry
    the [I-1]/[I] prefactor.  For I = 1 the equal branch vanishes
    identically through the [I-1-eta] factor.
    """
    if y1 > y2:
        raise ParameterError("need y1 <= y2")
    r = math.sqrt(q)
    if y1 == y2:
        eta = _eta_at(window, x_left, y1)
        return (q ** (-2 * _counts(window, x_left, y1, base))
                * q_bracket(I - eta, r) * q_bracket(I - 1 - eta, r)
                * q ** eta)
    e1 = _eta_at(window, x_left, y1)
    e2 = _eta_at(window, x_left, y2)
    return (q_bracket(I - 1, r) / q_bracket(I, r)
            * q ** (-_counts(window, x_left, y1, base))
            * q ** (-_counts(window, x_left, y2, base))
            * q_bracket(I - e1, r) * q_bracket(I - e2, r)
            * q ** (0.5 * e1) * q ** (0.5 * e2))


def functional_Dtilde(window: Sequence[int], x_left: int, y1: int, y2: int,
                      params: ModelParams, base: float = 0.0) -> float:
    """The height-anchored two-location functional at a fixed time."""
    return functional_G(window, x_left, y1, y2, params.q, params.I, base)


def functional_D_tilted(window: Sequence[int], x_left: int, y1: int, y2: int,
                        params: ModelParams, frame: TiltFrame, t: int,
                        base: float = 0.0) -> float:
    """Tilted two-location functional built from the drifted-lattice field
    Z(t, .) and the shifted occupancies; y1 <= y2 live on the drifted
    lattice of time t."""
    if y1 > y2:
        raise ParameterError("need y1 <= y2")
    q, I = params.q, params.I
    r = math.sqrt(q)
    rho = frame.rho
    mu_hat = frame.mu_hat(t)
    lam_log = frame.log_lam_hat(t)

    def Z(x):
        yy = x + mu_hat
        n = _counts(window, x_left, int(round(yy)), base)
        return math.exp(lam_log) * q ** (-(n - rho * yy))

    def eta_t(x):
        return _eta_at(window, x_left, int(round(x + mu_hat)))

    if y1 == y2:
        e = eta_t(y1)
        return Z(y1) ** 2 * q_bracket(I - e, r) * q_bracket(I - 1 - e, r) * q ** e
    e1, e2 = eta_t(y1), eta_t(y2)
    return (q_bracket(I - 1, r) / q_bracket(I, r) * Z(y1) * Z(y2)
            * q_bracket(I - e1, r) * q_bracket(I - e2, r)
            * q ** (0.5 * e1) * q ** (0.5 * e2))


def g_factor_bound(params: ModelParams) -> float:
    """sup over occupancies of the bracket-and-power factors in the
    two-location functional; used for truncation-tail bookkeeping."""
    q, I = params.q, params.I
    r = math.sqrt(q)
    vals = [abs(q_bracket(I - e, r)) * q ** (0.5 * e) for e in range(I + 1)]
    m = max(vals)
    return max(1.0, m * m)


# ---------------------------------------------------------------------------
# reversed location process
# ---------------------------------------------------------------------------


def _validate_weyl(params: ModelParams, ys: Sequence[int]):
    ys = list(ys)
    if any(ys[i] > ys[i + 1] for i in range(len(ys) - 1)):
        raise ParameterError("positions must be nondecreasing")
    for y in set(ys):
        if ys.count(y) > params.I:
            raise ParameterError(
                f"cluster of {ys.count(y)} particles exceeds capacity I={params.I}")


def _mirror_config(ys: Sequence[int], buffer: int) -> Tuple[np.ndarray, int]:
    """Occupancies of the mirrored configuration, origin at the leftmost
    mirrored particle; returns (values-with-buffer, x_left)."""
    us = sorted(-y for y in ys)
    width = us[-1] - us[0] + 1 + buffer
    vals = np.zeros(width, dtype=np.int64)
    for u in us:
        vals[u - us[0]] += 1
    return vals, us[0]


def _positions_from_config(cfg: Sequence[int], x_left: int) -> Tuple[int, ...]:
    out: List[int] = []
    for i, m in enumerate(cfg):
        out.extend([x_left + i] * int(m))
    return tuple(out)


class ReversedChain:
    """Exact truncated kernels of the k-particle reversed location process.

    One-step laws are computed by mirrored sequential enumeration, cached on
    the gap signature of the configuration (translation invariance), and
    composed step by step; the pruned mass is accumulated and reported.
    """

    def __init__(self, params: ModelParams, tail: float = 1e-14):
        self.params = params
        self.tail = tail
        theta = params.theta_sup()
        self.buffer = max(6, math.ceil(math.log(tail) / math.log(theta)) + 4)
        self._laws: Dict[Tuple[int, Tuple[int, ...]], Dict] = {}

    def one_step_law(self, t: int, gaps: Tuple[int, ...]) -> Dict:
        """Law of the mirrored-displacement vector for a configuration with
        the given consecutive gaps (g_i = y_{i+1} - y_i), at time t.

        Keys are displacement tuples (d_1..d_k) meaning the reversed
        particles move y_i -> y_i - d_i; values are probabilities.
        """
        key = (self.params.mod(t), gaps)
        cached = self._laws.get(key)
        if cached is not None:
            return cached
        ys = [0]
        for g in gaps:
            ys.append(ys[-1] + g)
        vals, x_left = _mirror_config(ys, self.buffer)
        law = enumerate_step(vals, self.params, self.params.alpha_t(t), 1,
                             prune=self.tail * 1e-3)
        k = len(ys)
        out: Dict[Tuple[int, ...], float] = {}
        missing = law.missing
        for cfg, p in law.probs.items():
            us = _positions_from_config(cfg, x_left)
            if len(us) != k:
                missing += p
                continue
            # mirrored particle j moved u_j -> u'_j; reversed particle i
            # (sorted ascending) is the mirror of mirrored particle k+1-i
            base_us = sorted(-y for y in ys)
            ds = tuple(us[k - 1 - i] - base_us[k - 1 - i] for i in range(k))
            out[ds] = out.get(ds, 0.0) + p
        out["__missing__"] = missing
        self._laws[key] = out
        return out

    def kernel(self, start: Sequence[int], t: int, s: int
               ) -> Tuple[Dict[Tuple[int, ...], float], float]:
        """Truncated kernel from positions ``start`` at time s to time t:
        a dict over end positions plus the accumulated missing mass."""
        _validate_weyl(self.params, start)
        dist: Dict[Tuple[int, ...], float] = {tuple(int(y) for y in start): 1.0}
        missing = 0.0
        for k in range(s, t):
            new: Dict[Tuple[int, ...], float] = {}
            for pos, p in dist.items():
                gaps = tuple(pos[i + 1] - pos[i] for i in range(len(pos) - 1))
                gaps = tuple(min(g, self.buffer + 2) for g in gaps)
                law = self.one_step_law(k, gaps)
                missing += p * law["__missing__"]
                for ds, lp in law.items():
                    if ds == "__missing__":
                        continue
                    npos = tuple(pos[i] - ds[i] for i in range(len(pos)))
                    w = p * lp
                    new[npos] = new.get(npos, 0.0) + w
            dist = new
        return dist, missing


def reversed_step(ys: Sequence[int], t: int, env: RandomEnvironment,
                  buffer: int = 80) -> Tuple[int, ...]:
    """Sample one reversed-process step: mirror, run the sequential update
    with the reversed stream, mirror back (order is preserved)."""
    _validate_weyl(env.params, ys)
    vals, x_left = _mirror_config(ys, buffer)
    carry = 0
    out = vals.copy()
    a = env.params.alpha_t(t)
    for i in range(len(vals)):
        m = int(out[i])
        if m == 0 and carry == 0:
            continue
        u = float(env.rng.uniform(t, x_left + i, kind=KIND_REVERSED))
        if carry == 0:
            o = 1 if u < float(env.mean_B(t, m)) else 0
        else:
            o = 1 if u < float(env.mean_Bp(t, m)) else 0
        out[i] = m + carry - o
        carry = o
    if carry:
        raise ParameterError("reversed step buffer too small")
    us = _positions_from_config(out, x_left)
    return tuple(sorted(-u for u in us))


# ---------------------------------------------------------------------------
# two-sided verification
# ---------------------------------------------------------------------------


@dataclass
class DualityReport:
    mode: str
    method: str
    lhs: float
    rhs: float
    gap: float
    tail_mass: float
    sigma: float = 0.0

    def as_dict(self) -> Dict:
        return {"mode": self.mode, "method": self.method, "lhs": self.lhs,
                "rhs": self.rhs, "gap": self.gap, "tail_mass": self.tail_mass,
                "sigma": self.sigma}


def _forward_distribution(params: ModelParams, init: Sequence[int],
                          steps: int, s0: int = 0, prune: float = 1e-17):
    alphas = [params.alpha_t(k) for k in range(s0, s0 + steps)]
    return evolve_exact(init, params, alphas, 1, prune=prune)


def verify_duality(params: ModelParams, mode: str, init: Sequence[int],
                   x_left: int, steps: int, *, ys: Sequence[int],
                   method: str = "exact", rho: Optional[float] = None,
                   replicas: int = 10**6, seed: int = 7,
                   tail: float = 1e-14) -> DualityReport:
    """Evaluate both sides of a duality identity after ``steps`` steps from
    a fixed left-finite configuration.

    modes: 'H_k' (product functional at the positions ``ys``), 'G_2'
    (two-location functional), 'tilt_Z' (drifted-lattice two-point moment)
    and 'tilt_D' (tilted two-location functional).  The left side is an
    exact forward enumeration (or a Monte Carlo average); the right side
    sums the reversed kernel against the functional at time 0, with the
    truncated mass turned into a reported tolerance.
    """
    q, I = params.q, params.I
    init = tuple(int(v) for v in init)
    chain = ReversedChain(params, tail)
    t = steps
    frame = TiltFrame(params, rho) if rho is not None else None

    if mode in ("H_k", "G_2"):
        pos = tuple(int(y) for y in ys)
        _validate_weyl(params, pos)

        def lhs_fn(cfg):
            if mode == "H_k":
                return functional_H(cfg, x_left, pos, q)
            return functional_G(cfg, x_left, pos[0], pos[1], q, I)

        def rhs_fn(xs):
            if mode == "H_k":
                return functional_H(init, x_left, xs, q)
            return functional_G(init, x_left, xs[0], xs[1], q, I)

        kern, missing = chain.kernel(pos, t, 0)
        rhs = sum(p * rhs_fn(xs) for xs, p in kern.items())
        bound = missing * (1.0 if mode == "H_k" else g_factor_bound(params))
        if method == "exact":
            law = _forward_distribution(params, init, steps)
            lhs = sum(p * lhs_fn(cfg) for cfg, p in law.probs.items())
            tailm = bound + law.missing * (1.0 if mode == "H_k"
                                           else g_factor_bound(params))
            return DualityReport(mode, method, lhs, rhs, abs(lhs - rhs), tailm)
        lhs, sig = _mc_forward(params, init, x_left, steps, lhs_fn,
                               replicas, seed)
        return DualityReport(mode, method, lhs, rhs, abs(lhs - rhs),
                             bound, sig)

    if mode in ("tilt_Z", "tilt_D"):
        if frame is None:
            raise ParameterError("tilted modes need rho")
        mu_t, mu_0 = frame.mu_hat(t), frame.mu_hat(0)
        x1, x2 = ys  # drifted-lattice coordinates at time t
        x1i = frame.lattice_coord(x1, t)
        x2i = frame.lattice_coord(x2, t)
        lam_t = math.exp(frame.log_lam_hat(t))
        rho_ = frame.rho

        def Z_of(cfg, x_int, th):
            n = _counts(cfg, x_left, x_int)
            lam = math.exp(frame.log_lam_hat(th))
            return lam * q ** (-(n - rho_ * x_int))

        def lhs_fn(cfg):
            if mode == "tilt_Z":
                return Z_of(cfg, x1i, t) * Z_of(cfg, x2i, t)
            return functional_D_tilted(cfg, x_left, x1, x2, params, frame, t)

        kern, missing = chain.kernel((x1i, x2i), t, 0)
        rhs = 0.0
        for (u1, u2), p in kern.items():
            y1 = frame.lattice_point(u1, 0)
            y2 = frame.lattice_point(u2, 0)
            V = (lam_t ** 2 * q ** (rho_ * ((x1 - y1) + (x2 - y2)
                                            + 2.0 * (mu_t - mu_0))) * p)
            if mode == "tilt_Z":
                rhs += V * Z_of(init, u1, 0) * Z_of(init, u2, 0)
            else:
                rhs += V * functional_D_tilted(init, x_left, y1, y2,
                                               params, frame, 0)
        fac = (1.0 if mode == "tilt_Z" else g_factor_bound(params))
        bound = missing * lam_t**2 * q ** (rho_ * (x1i + x2i)) * fac
        if method == "exact":
            law = _forward_distribution(params, init, steps)
            lhs = sum(p * lhs_fn(cfg) for cfg, p in law.probs.items())
            tailm = bound + law.missing * lam_t**2 * q ** (rho_ * (x1i + x2i)) * fac
            return DualityReport(mode, method, lhs, rhs, abs(lhs - rhs), tailm)
        lhs, sig = _mc_forward(params, init, x_left, steps, lhs_fn,
                               replicas, seed)
        return DualityReport(mode, method, lhs, rhs, abs(lhs - rhs),
                             bound, sig)

    raise ParameterError(f"unknown duality mode {mode!r}")


def _mc_forward(params: ModelParams, init: Sequence[int], x_left: int,
                steps: int, fn, replicas: int, seed: int,
                chunk: int = 200000) -> Tuple[float, float]:
    """Monte Carlo mean and standard error of a configuration functional of
    the forward dynamics, vectorized across replicas."""
    from .dynamics import ensemble_step_unfused

    buffer = 0  # caller's init already carries the right buffer
    total = 0.0
    total2 = 0.0
    n = 0
    env = RandomEnvironment(params, seed)
    done = 0
    while done < replicas:
        m = min(chunk, replicas - done)
        vals = np.tile(np.asarray(init, dtype=np.int64), (m, 1))
        env_c = RandomEnvironment(params, seed)
        env_c.rng = env.rng.derive(done + 1)
        for k in range(steps):
            ensemble_step_unfused(vals, k, env_c, x_left, boundary="error")
        f = np.array([fn(tuple(row)) for row in vals])
        total += float(f.sum())
        total2 += float((f * f).sum())
        n += m
        done += m
    mean = total / n
    var = max(total2 / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)
