"""Vertex weight evaluation: the general fused weight matrix, its J = 1
closed form, stochasticity validation and dense tables for the enumeration
oracles.

A vertex takes i1 lines from the south and j1 from the west and emits i2 to
the north and j2 to the east; weights vanish unless i1 + j1 = i2 + j2 (line
conservation) and, in the admissible region, each (i1, j1) row is a
probability vector over (i2, j2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StochasticityError
from .params import ModelParams
from .qspecial import q_pochhammer, reg_4phi3

log = logging.getLogger(__name__)

ROW_SUM_HARD = 1e-8
ROW_SUM_WARN = 1e-10
NEG_CLIP = 1e-12


def _l_general_core(q, nu, alpha, J: int, i1: int, j1: int, i2: int, j2: int):
    """The general weight in whatever arithmetic (float/complex/mpmath) the
    inputs carry.  The prefactor's quarter-integer q-powers are assembled as
    one integer exponent of q**(1/4) to avoid pow() drift across factors."""
    e4 = ((2 * j1 - j1 * j1) - (2 * j2 - j2 * j2) + i1 * i1 + i2 * i2
          + 2 * (i2 * (j2 - 1) + i1 * j1))
    q4 = q ** 0.25
    pref = q4 ** e4
    pref = pref * nu ** (j1 - i2) * alpha ** (j2 - j1 + i2)
    pref = pref * q_pochhammer(-alpha / nu, q, j2 - i1)
    den = (q_pochhammer(q, q, i2)
           * q_pochhammer(-alpha, q, i2 + j2)
           * q_pochhammer(q ** (J + 1 - j1), q, j1 - j2))
    if den == 0:
        raise ZeroDivisionError("weight denominator vanished")
    phi = reg_4phi3(i2,
                    (q ** (-i1), -alpha * q**J, -q * nu / alpha),
                    (nu, q ** (1 + j2 - i1), q ** (J + 1 - i2 - j2)),
                    q, q)
    return pref / den * phi


def l_general(params: ModelParams, alpha: float, J: int,
              i1: int, j1: int, i2: int, j2: int, *,
              validate: bool = False):
    """General fused vertex weight with horizontal capacity J and rapidity
    ``alpha`` (which may be a rotated alpha(t) rather than params.alpha).

    Rapidities of the form alpha = -q**-l are removable singularities of the
    closed formula (a reciprocal factor blows up against a vanishing sum);
    those points are evaluated by a high-precision complex step off the real
    axis, which turns the 0/0 into an ordinary quotient.
    """
    if validate:
        params.require_condition1()
    Ic = params.I
    if not (0 <= i1 <= Ic and 0 <= i2 <= Ic and 0 <= j1 <= J and 0 <= j2 <= J):
        raise ParameterError(
            f"vertex indices out of range: ({i1},{j1};{i2},{j2}) with I={Ic}, J={J}")
    if i1 + j1 != i2 + j2:
        return 0.0
    q = params.q
    nu = params.nu
    try:
        return _l_general_core(q, nu, alpha, J, i1, j1, i2, j2)
    except ZeroDivisionError:
        import mpmath as mp
        with mp.workdps(60):
            val = _l_general_core(mp.mpf(q), mp.mpf(nu),
                                  mp.mpc(alpha, mp.mpf(10) ** -30),
                                  J, i1, j1, i2, j2)
            return float(mp.re(val))


def l_j1(params: ModelParams, alpha_t: float,
         m: int, j1: int, i2: int, j2: int) -> float:
    """J = 1 closed-form weights.

    Nonzero entries from occupancy m with incoming line j1:
      (m,0) -> (m,0):   (1 + alpha q^m) / (1 + alpha)
      (m,0) -> (m-1,1): alpha (1 - q^m) / (1 + alpha)
      (m,1) -> (m+1,0): (1 - nu q^m)    / (1 + alpha)
      (m,1) -> (m,1):   (alpha + nu q^m)/ (1 + alpha)
    """
    Ic = params.I
    if not (0 <= m <= Ic and j1 in (0, 1) and j2 in (0, 1) and 0 <= i2 <= Ic):
        raise ParameterError(f"indices out of range: ({m},{j1};{i2},{j2})")
    if m + j1 != i2 + j2:
        return 0.0
    q, nu, a = params.q, params.nu, alpha_t
    den = 1.0 + a
    if j1 == 0:
        if j2 == 0:  # i2 == m
            return (1.0 + a * q**m) / den
        return a * (1.0 - q**m) / den  # i2 == m-1
    if j2 == 0:  # i2 == m+1
        return (1.0 - nu * q**m) / den
    return (a + nu * q**m) / den  # i2 == m


@dataclass
class VertexWeightTable:
    """Dense weight cache indexed [i1, j1, i2, j2]; rows are renormalized
    probability vectors when built under the admissible parameters."""

    params: ModelParams
    alpha_used: float
    J_used: int
    entries: np.ndarray = field(repr=False)
    max_row_dev: float = 0.0

    def row(self, i1: int, j1: int) -> np.ndarray:
        return self.entries[i1, j1]

    def weight(self, i1: int, j1: int, i2: int, j2: int) -> float:
        return float(self.entries[i1, j1, i2, j2])


def build_table(params: ModelParams, alpha: float, J: int, *,
                validate: bool = True) -> VertexWeightTable:
    """Evaluate the full dense table and validate row stochasticity.

    Row sums deviating from 1 by more than 1e-8 raise; beyond 1e-10 warn.
    Negative-by-roundoff entries within 1e-12 are clipped to zero and the
    row renormalized (logged), so enumeration oracles see exact probability
    vectors.
    """
    if validate:
        params.require_condition1()
    Ic = params.I
    ent = np.zeros((Ic + 1, J + 1, Ic + 1, J + 1))
    for i1 in range(Ic + 1):
        for j1 in range(J + 1):
            for i2 in range(Ic + 1):
                j2 = i1 + j1 - i2
                if 0 <= j2 <= J:
                    ent[i1, j1, i2, j2] = l_general(params, alpha, J, i1, j1, i2, j2)
    max_dev = 0.0
    for i1 in range(Ic + 1):
        for j1 in range(J + 1):
            row = ent[i1, j1]
            neg = row < 0
            if np.any(neg):
                worst = row[neg].min()
                if validate and worst < -NEG_CLIP:
                    raise StochasticityError(
                        f"negative weight {worst:.3e} in row ({i1},{j1})",
                        row=(i1, j1), deviation=worst)
                if worst < 0:
                    log.info("clipping %d tiny negative weights in row (%d,%d)",
                             int(neg.sum()), i1, j1)
                    row[neg & (row > -NEG_CLIP)] = 0.0
            s = row.sum()
            dev = abs(s - 1.0)
            max_dev = max(max_dev, dev)
            if validate:
                if dev > ROW_SUM_HARD:
                    raise StochasticityError(
                        f"row ({i1},{j1}) sums to {s!r}, off by {dev:.3e}",
                        row=(i1, j1), deviation=dev)
                if dev > ROW_SUM_WARN:
                    log.warning("row (%d,%d) sum deviation %.3e", i1, j1, dev)
                if s > 0:
                    row /= s  # renormalize after clipping
    return VertexWeightTable(params=params, alpha_used=alpha, J_used=J,
                             entries=ent, max_row_dev=max_dev)


def build_j1_table(params: ModelParams, alpha_t: float) -> VertexWeightTable:
    """Dense J = 1 table straight from the closed forms."""
    Ic = params.I
    ent = np.zeros((Ic + 1, 2, Ic + 1, 2))
    for m in range(Ic + 1):
        for j1 in (0, 1):
            for i2 in range(Ic + 1):
                j2 = m + j1 - i2
                if j2 in (0, 1):
                    ent[m, j1, i2, j2] = l_j1(params, alpha_t, m, j1, i2, j2)
    return VertexWeightTable(params=params, alpha_used=alpha_t, J_used=1,
                             entries=ent)
