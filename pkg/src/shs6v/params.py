"""Model parameter pack and the admissible-parameter predicate.

The model is driven by a vertical spin I, a horizontal spin J, an asymmetry
q > 1 and a rapidity alpha < 0, with nu always derived as q**(-I).  In the
weakly asymmetric regime the natural inputs are (b, rho, epsilon) with
q = exp(sqrt(epsilon)) and alpha solving b = (1 + alpha*q)/(1 + alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParameterError

NU_TOL = 1e-13


@dataclass(frozen=True)
class ScaledMode:
    """Weakly asymmetric inputs: b, density rho and the small parameter."""

    b: float
    rho: float
    epsilon: float


@dataclass(frozen=True)
class ModelParams:
    """Generic parameter pack (q, I, J, alpha) with nu = q**(-I) derived.

    ``scaled`` is set when the instance was built through :func:`scaled_params`
    and carries (b, rho, epsilon); plain instances leave it None.
    """

    q: float
    I: int
    J: int
    alpha: float
    nu: float = field(init=False)
    scaled: Optional[ScaledMode] = None

    def __post_init__(self):
        if self.q <= 0:
            raise ParameterError(f"q must be positive, got {self.q}")
        if self.I < 1 or self.J < 1:
            raise ParameterError(f"spins must be >= 1, got I={self.I}, J={self.J}")
        object.__setattr__(self, "nu", self.q ** (-self.I))
        assert abs(self.nu * self.q**self.I - 1.0) <= NU_TOL

    # -- admissibility -----------------------------------------------------

    def condition1_holds(self) -> bool:
        """True iff (q, alpha) lie in the stochastic region.

        Requires q > 1 and -q**-(I+J-1) < alpha < 0: exactly the region where
        every vertex weight of the rotating-rapidity family alpha(t) is a
        probability.  (At the left endpoint the weight 1 + alpha*q^(I+J-1)
        vanishes; beyond it weights go negative.)
        """
        if self.q <= 1.0:
            return False
        lo = -self.q ** (-(self.I + self.J - 1))
        return lo < self.alpha < 0.0

    def require_condition1(self):
        if not self.condition1_holds():
            lo = -self.q ** (-(self.I + self.J - 1))
            raise ParameterError(
                f"not in the stochastic region: need q > 1 and "
                f"{lo:.6g} < alpha < 0, got q={self.q}, alpha={self.alpha}"
            )

    # -- rotating rapidity -------------------------------------------------

    def mod(self, t: int) -> int:
        """t mod J, the phase of the rapidity rotation."""
        return t - self.J * (t // self.J)

    def alpha_t(self, t: int) -> float:
        """alpha(t) = alpha * q**mod(t)."""
        return self.alpha * self.q ** self.mod(t)

    def theta(self, t: int) -> float:
        """(nu + alpha(t)) / (1 + alpha(t)): geometric tail ratio at time t."""
        a = self.alpha_t(t)
        return (self.nu + a) / (1.0 + a)

    def theta_sup(self) -> float:
        """sup over t of the geometric tail ratio; < 1 under condition 1."""
        return max(self.theta(t) for t in range(self.J))

    def influence_ratio(self) -> float:
        """q**I * theta_sup, the per-site leftward influence bound (< 1)."""
        return self.q**self.I * self.theta_sup()

    @property
    def rho(self) -> float:
        if self.scaled is None:
            raise ParameterError("rho is only defined in scaled mode")
        return self.scaled.rho

    @property
    def epsilon(self) -> float:
        if self.scaled is None:
            raise ParameterError("epsilon is only defined in scaled mode")
        return self.scaled.epsilon

    @property
    def b(self) -> float:
        if self.scaled is None:
            return (1.0 + self.alpha * self.q) / (1.0 + self.alpha)
        return self.scaled.b


def alpha_from_b(b: float, q: float) -> float:
    """Solve b = (1 + alpha*q) / (1 + alpha) for alpha."""
    if q == b:
        raise ParameterError("q == b makes alpha undefined")
    return (b - 1.0) / (q - b)


def scaled_params(I: int, J: int, b: float, rho: float, epsilon: float,
                  validate: bool = True) -> ModelParams:
    """Build parameters in the weakly asymmetric regime.

    q = exp(sqrt(epsilon)) and alpha is solved from b.  For admissibility,
    b must lie in ((I+J-2)/(I+J-1), 1) and rho in (0, I); for epsilon small
    enough this lands alpha in the stochastic region, which is checked.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    b_lo = (I + J - 2) / (I + J - 1)
    if validate and not (b_lo < b < 1.0):
        raise ParameterError(f"b must lie in ({b_lo:.6g}, 1), got {b}")
    if validate and not (0.0 < rho < I):
        raise ParameterError(f"rho must lie in (0, {I}), got {rho}")
    q = math.exp(math.sqrt(epsilon))
    alpha = alpha_from_b(b, q)
    p = ModelParams(q=q, I=I, J=J, alpha=alpha,
                    scaled=ScaledMode(b=b, rho=rho, epsilon=epsilon))
    if validate:
        p.require_condition1()
    return p


def certified_margin(params: ModelParams, tol: float = 1e-12) -> int:
    """Sites from a truncation edge beyond which height values are certified.

    The influence of a left cutoff decays per site like q**I * theta < 1;
    this returns the distance at which that bound drops below ``tol``.
    """
    r = params.influence_ratio()
    if not (0.0 < r < 1.0):
        raise ParameterError(f"influence ratio {r} not in (0,1); check parameters")
    return max(1, math.ceil(math.log(tol) / math.log(r)))
